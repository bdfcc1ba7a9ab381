import time

import numpy as np
import pytest

from .utils_for_tests import solver_approx, tight_approx
from structwdro.cases.benchmarks import piecewise_linear_true
from structwdro.core.distributions import (
    Coupling,
    DiscreteDistribution,
    TransportCost,
    expected_transport_bound,
    make_distribution,
    mixture,
    normalized_mixture_product_distance,
    product_power,
    wasserstein_1d,
    wasserstein_exact,
)
from structwdro.core.errors import (
    CapExceeded,
    DimensionMismatch,
    NegativeWeight,
    NotAProbabilityVector,
    ZeroTotalMass,
)


def random_distribution(rng, n_atoms, dimension):
    atoms = rng.uniform(-2.0, 2.0, size=(n_atoms, dimension))
    return make_distribution(atoms, rng.dirichlet(np.ones(n_atoms)))


class TestMakeDistribution:
    def test_nominal(self):
        P = make_distribution([-1.0, 1.0], [0.25, 0.75])
        assert P.n_atoms == 2
        assert P.dimension == 1
        assert P.weights == tight_approx([0.25, 0.75])
        assert P.mean() == tight_approx([0.5])

    def test_point_mass(self):
        P = make_distribution([0.0], [1.0])
        assert P.n_atoms == 1
        assert P.atoms[0, 0] == 0.0

    def test_duplicates_merged(self):
        P = make_distribution([0.0, 0.0], [0.5, 0.5])
        assert P.n_atoms == 1
        assert P.weights == tight_approx([1.0])

    def test_errors(self):
        with pytest.raises(NegativeWeight):
            make_distribution([0.0, 1.0], [-0.5, 1.5])
        with pytest.raises(ZeroTotalMass):
            make_distribution([0.0, 1.0], [0.0, 0.0])
        with pytest.raises(DimensionMismatch):
            make_distribution([0.0, 1.0], [1.0])
        with pytest.raises(NotAProbabilityVector):
            make_distribution([0.0, 1.0], [0.5, 0.6])

    def test_rescaled_within_tolerance(self):
        P = make_distribution([0.0, 1.0], [0.5, 0.5 + 1.0e-10])
        assert P.weights.sum() == tight_approx(1.0)

    def test_immutable(self):
        P = make_distribution([0.0, 1.0], [0.5, 0.5])
        with pytest.raises(ValueError):
            P.weights[0] = 1.0

    def test_dict_round_trip(self):
        P = make_distribution([[0.0, 1.0], [2.0, 3.0]], [0.3, 0.7])
        assert DiscreteDistribution.from_dict(P.to_dict()) == P


class TestTransportCost:
    @pytest.mark.parametrize("norm_kind", ["l1", "l2", "linf"])
    def test_metric_properties(self, norm_kind):
        rng = np.random.default_rng(1)
        cost = TransportCost(norm_kind, 2)
        x, y = rng.normal(size=(2, 2))
        assert cost(x, x) == 0.0
        assert cost(x, y) == tight_approx(cost(y, x))

    @pytest.mark.parametrize("norm_kind", ["l1", "l2", "linf"])
    def test_lift_is_block_sum(self, norm_kind):
        rng = np.random.default_rng(2)
        cost = TransportCost(norm_kind, 2)
        lifted = cost.lift(3)
        x, y = rng.normal(size=(2, 6))
        blocks = [slice(2 * i, 2 * i + 2) for i in range(3)]
        expected = sum(cost(x[block], y[block]) for block in blocks)
        assert lifted(x, y) == tight_approx(expected)
        assert lifted.pairwise(x[np.newaxis], y[np.newaxis])[0, 0] == tight_approx(
            expected
        )

    def test_dual_norm(self):
        assert TransportCost("l1", 1).dual_norm == "linf"
        assert TransportCost("linf", 1).dual_norm == "l1"
        assert TransportCost("l2", 1).dual_norm == "l2"

    def test_bad_norm(self):
        with pytest.raises(ValueError):
            TransportCost("l3", 1)


class TestProductAndMixture:
    def test_uniform_product(self):
        P = make_distribution([-1.0, 1.0], [0.5, 0.5])
        Q = product_power(P, 2, cap=100)
        assert Q.atoms.tolist() == [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]]
        assert Q.weights == tight_approx([0.25] * 4)

    def test_weighted_product(self):
        P = make_distribution([-1.0, 1.0], [0.25, 0.75])
        Q = product_power(P, 2, cap=100)
        assert Q.weights == tight_approx([0.0625, 0.1875, 0.1875, 0.5625])

    def test_point_mass_power(self):
        Q = product_power(make_distribution([0.0], [1.0]), 3, cap=100)
        assert Q.n_atoms == 1
        assert Q.atoms.tolist() == [[0.0, 0.0, 0.0]]

    def test_cap(self):
        P = make_distribution([-1.0, 0.0, 1.0], [0.2, 0.3, 0.5])
        with pytest.raises(CapExceeded) as excinfo:
            product_power(P, 5, cap=100)
        assert excinfo.value.size == 243
        assert excinfo.value.cap == 100

    def test_mixture(self):
        mixed = mixture(
            [
                (0.5, make_distribution([0.0], [1.0])),
                (0.5, make_distribution([2.0], [1.0])),
            ]
        )
        assert sorted(mixed.atoms[:, 0].tolist()) == [0.0, 2.0]
        assert mixed.weights == tight_approx([0.5, 0.5])

    def test_mixture_of_products(self):
        mixed = mixture(
            [
                (0.5, product_power(make_distribution([0.0], [1.0]), 2, 10)),
                (0.5, product_power(make_distribution([2.0], [1.0]), 2, 10)),
            ]
        )
        assert mixed.atoms.tolist() == [[0.0, 0.0], [2.0, 2.0]]

    def test_identity_mixture(self):
        P = make_distribution([-1.0, 1.0], [0.25, 0.75])
        assert mixture([(1.0, P)]) == P

    def test_mixture_errors(self):
        P = make_distribution([0.0], [1.0])
        Q = make_distribution([[0.0, 0.0]], [1.0])
        with pytest.raises(DimensionMismatch):
            mixture([(0.5, P), (0.5, Q)])
        with pytest.raises(NotAProbabilityVector):
            mixture([(0.5, P), (0.6, P)])


class TestWasserstein:
    def test_true_vs_nominal(self):
        P_true = DiscreteDistribution.from_dict(piecewise_linear_true)
        nominal = make_distribution([-1.0, 1.0], [0.25, 0.75])
        start = time.perf_counter()
        value, plan = wasserstein_exact(P_true, nominal, TransportCost("l2", 1))
        elapsed = time.perf_counter() - start
        assert value == pytest.approx(0.19, abs=1.0e-9)
        costs = TransportCost("l2", 1).pairwise(P_true.atoms, nominal.atoms)
        assert plan.value(costs) == (
            pytest.approx(0.19, abs=1.0e-9)
        )
        # generous bound, the LP itself takes well under a millisecond
        assert elapsed < 1.0

    def test_self_distance_is_zero(self):
        P = make_distribution([[0.0, 1.0], [2.0, -1.0]], [0.4, 0.6])
        value, plan = wasserstein_exact(P, P, TransportCost("l1", 2))
        assert value == 0.0
        assert plan.plan == tight_approx(np.diag([0.4, 0.6]))

    def test_forced_coupling(self):
        P = product_power(make_distribution([0.0], [1.0]), 2, 10)
        Q = make_distribution([[1.0, 1.0]], [1.0])
        value, _ = wasserstein_exact(P, Q, TransportCost("l2", 1).lift(2))
        assert value == tight_approx(2.0)

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        P = random_distribution(rng, 3, 2)
        Q = random_distribution(rng, 4, 2)
        cost = TransportCost("l2", 2)
        assert wasserstein_exact(P, Q, cost)[0] == solver_approx(
            wasserstein_exact(Q, P, cost)[0], 1.0e-9
        )

    def test_dimension_mismatch(self):
        P = make_distribution([0.0], [1.0])
        Q = make_distribution([[0.0, 0.0]], [1.0])
        with pytest.raises(DimensionMismatch):
            wasserstein_exact(P, Q, TransportCost("l2", 1))

    @pytest.mark.parametrize("norm_kind", ["l1", "l2", "linf"])
    def test_one_dimensional_path(self, norm_kind):
        rng = np.random.default_rng(4)
        for _ in range(10):
            P = random_distribution(rng, rng.integers(1, 6), 1)
            Q = random_distribution(rng, rng.integers(1, 6), 1)
            lp_value, _ = wasserstein_exact(P, Q, TransportCost(norm_kind, 1))
            assert wasserstein_1d(P, Q) == pytest.approx(lp_value, abs=1.0e-9)

    def test_product_identity(self):
        rng = np.random.default_rng(5)
        for k in range(50):
            norm_kind = ("l1", "l2", "linf")[k % 3]
            dimension = 1 + k % 2
            M = 2 + (k // 3) % 2
            P = random_distribution(rng, rng.integers(1, 5), dimension)
            Q = random_distribution(rng, rng.integers(1, 5), dimension)
            cost = TransportCost(norm_kind, dimension)
            single, _ = wasserstein_exact(P, Q, cost)
            lifted, _ = wasserstein_exact(
                product_power(P, M, 1000), product_power(Q, M, 1000), cost.lift(M)
            )
            assert lifted == pytest.approx(M * single, abs=1.0e-6)

    def test_coupling_marginals_checked(self):
        P = make_distribution([0.0, 1.0], [0.5, 0.5])
        with pytest.raises(NotAProbabilityVector):
            Coupling(np.array([[0.5, 0.0], [0.5, 0.0]]), P, P)


class TestMixtureProductDistance:
    def test_point_mass_nominal(self):
        nu = [
            (0.5, make_distribution([0.0], [1.0])),
            (0.5, make_distribution([2.0], [1.0])),
        ]
        nominal = make_distribution([1.0], [1.0])
        cost = TransportCost("l2", 1)
        for M in (1, 2, 3):
            assert normalized_mixture_product_distance(
                nu, nominal, M, cost, cap=1000
            ) == solver_approx(1.0, 1.0e-8)

    def test_mixture_of_point_masses(self):
        nu = [
            (0.5, make_distribution([-1.0], [1.0])),
            (0.5, make_distribution([1.0], [1.0])),
        ]
        nominal = make_distribution([-1.0, 1.0], [0.5, 0.5])
        cost = TransportCost("l2", 1)
        assert normalized_mixture_product_distance(
            nu, nominal, 1, cost, cap=1000
        ) == pytest.approx(0.0, abs=1.0e-8)
        assert normalized_mixture_product_distance(
            nu, nominal, 2, cost, cap=1000
        ) == pytest.approx(0.5, abs=1.0e-8)

    def test_nondecreasing_and_bounded(self):
        rng = np.random.default_rng(6)
        cost = TransportCost("l2", 1)
        for _ in range(20):
            n_components = rng.integers(1, 4)
            nu_weights = rng.dirichlet(np.ones(n_components))
            nu = [
                (w, random_distribution(rng, rng.integers(1, 4), 1)) for w in nu_weights
            ]
            nominal = random_distribution(rng, 2, 1)
            bound = expected_transport_bound(nu, nominal, cost)
            values = [
                normalized_mixture_product_distance(nu, nominal, M, cost, cap=100000)
                for M in range(1, 5)
            ]
            for earlier, later in zip(values[:-1], values[1:]):
                assert later >= earlier - 1.0e-7
            assert values[-1] <= bound + 1.0e-7
