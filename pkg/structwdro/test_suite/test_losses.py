from itertools import permutations

import numpy as np
import pytest

from .utils_for_tests import tight_approx
from structwdro.cases.benchmarks import (
    outer_dro_instance,
    outer_G,
    outer_g0,
    outer_W,
    piecewise_linear_vertices,
)
from structwdro.core.conic import ConicProgram
from structwdro.core.errors import (
    CapExceeded,
    DimensionMismatch,
    EmptyPolytope,
    EmptyTheta,
    PreconditionError,
    UnboundedPolytope,
)
from structwdro.core.losses import (
    MembershipBlocks,
    ParametricPolyhedralLoss,
    PolyhedralLoss,
    QuadraticExampleLoss,
    conjugate_eval,
    conjugate_membership_blocks,
    eval_sym_lift,
    sym_lift,
)


@pytest.fixture
def piecewise_linear():
    return PolyhedralLoss.from_vertices(piecewise_linear_vertices, 1, 2)


class TestPolyhedralLoss:
    def test_eval(self, piecewise_linear):
        assert piecewise_linear.eval([1.0, 1.0]) == -3.0
        assert piecewise_linear.eval([1.0, 0.0]) == -5.0
        assert piecewise_linear.eval([0.0, 0.0]) == 0.0

    def test_eval_many(self, piecewise_linear):
        X = np.array([[1.0, 1.0], [1.0, 0.0], [-1.0, -1.0]])
        assert piecewise_linear.eval_many(X) == tight_approx([-3.0, -5.0, -7.0])

    def test_dimension_mismatch(self, piecewise_linear):
        with pytest.raises(DimensionMismatch):
            piecewise_linear.eval([1.0, 2.0, 3.0])
        with pytest.raises(DimensionMismatch):
            PolyhedralLoss.from_vertices([[1.0, 2.0]], 1, 2)

    def test_concave(self, piecewise_linear):
        rng = np.random.default_rng(20)
        for _ in range(100):
            x, y = rng.normal(scale=3.0, size=(2, 2))
            t = rng.uniform()
            chord = t * piecewise_linear.eval(x) + (1 - t) * piecewise_linear.eval(y)
            assert piecewise_linear.eval(t * x + (1 - t) * y) >= chord - 1.0e-9

    def test_unbounded_rejected(self):
        # h_1 <= 1 alone leaves H unbounded
        with pytest.raises(UnboundedPolytope):
            PolyhedralLoss.from_halfspaces([[1.0, 0.0]], [1.0], 1, 1)

    def test_empty_rejected(self):
        with pytest.raises(EmptyPolytope):
            PolyhedralLoss.from_halfspaces(
                [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
                [-1.0, -1.0, 1.0, 1.0],
                1,
                1,
            )

    def test_symmetry(self, piecewise_linear):
        assert not piecewise_linear.is_symmetric()
        symmetric = PolyhedralLoss.from_vertices(
            [[2.0, 5.0, 0.0], [5.0, 2.0, 0.0]], 1, 2
        )
        assert symmetric.is_symmetric()

    def test_dict_round_trip(self, piecewise_linear):
        again = PolyhedralLoss.from_dict(piecewise_linear.to_dict(), 1, 2)
        assert again.vertices() == tight_approx(piecewise_linear.vertices())

    def test_halfspace_vertex_equivalence(self):
        loss = PolyhedralLoss.from_halfspaces(outer_W, outer_G[:, 0] + outer_g0, 1, 2)
        as_vertices = PolyhedralLoss.from_vertices(loss.vertices(), 1, 2)
        W, g = as_vertices.to_halfspaces()
        back = PolyhedralLoss.from_halfspaces(W, g, 1, 2)
        rng = np.random.default_rng(21)
        for x in rng.normal(scale=2.0, size=(50, 2)):
            assert as_vertices.eval(x) == pytest.approx(loss.eval(x), abs=1.0e-9)
            assert back.eval(x) == pytest.approx(loss.eval(x), abs=1.0e-9)

    @pytest.mark.parametrize(
        "H",
        [
            piecewise_linear_vertices,
            [[1.0, -2.0, 0.5]],
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, -1.0, 1.0]],
        ],
    )
    def test_halfspaces_of_flat_vertex_sets(self, H):
        # a segment, a point and a triangle in R^3
        loss = PolyhedralLoss.from_vertices(H, 1, 2)
        W, g = loss.to_halfspaces()
        assert np.all(W @ np.asarray(H).T <= g[:, np.newaxis] + 1.0e-9)
        back = PolyhedralLoss.from_halfspaces(W, g, 1, 2)
        assert back.vertices().shape[0] == len(H)
        rng = np.random.default_rng(22)
        for x in rng.normal(scale=2.0, size=(50, 2)):
            assert back.eval(x) == pytest.approx(loss.eval(x), abs=1.0e-9)

    def test_vertices_of_simplex(self):
        # at theta = 1 H is a tetrahedron
        loss = PolyhedralLoss.from_halfspaces(outer_W, outer_G[:, 0] + outer_g0, 1, 2)
        assert loss.vertices().shape == (4, 3)

    def test_enumeration_limit_falls_back_to_lp(self):
        k = 9
        W = np.vstack([np.eye(k), -np.eye(k)])
        g = np.ones(2 * k)
        loss = PolyhedralLoss.from_halfspaces(W, g, 4, 2)
        with pytest.raises(CapExceeded):
            loss.vertices()
        x = np.arange(8.0)
        # min over the box [-1, 1]^9 of h^T [x; 1]
        assert loss.eval(x) == pytest.approx(-np.sum(np.abs(x)) - 1.0, abs=1.0e-9)


class TestParametricLoss:
    def test_at(self):
        ploss, _, _, _ = outer_dro_instance()
        frozen = ploss.at(1.0)
        assert frozen.g == tight_approx([0.0, 1.0, -0.5, 1.0])
        assert ploss.eval(1.0, [0.3, -0.2]) == tight_approx(frozen.eval([0.3, -0.2]))

    def test_empty_for_small_theta(self):
        ploss, _, _, _ = outer_dro_instance()
        with pytest.raises(EmptyPolytope):
            ploss.at(-1.0)

    def test_outside_box(self):
        ploss, _, _, _ = outer_dro_instance()
        with pytest.raises(PreconditionError):
            ploss.at(4.0)

    def test_empty_box(self):
        with pytest.raises(EmptyTheta):
            outer_dro_instance(theta_lower=1.0, theta_upper=-1.0)

    def test_empty_everywhere(self):
        with pytest.raises(EmptyPolytope):
            outer_dro_instance(theta_lower=-3.0, theta_upper=-1.0)

    def test_dict_round_trip(self):
        ploss, _, _, _ = outer_dro_instance()
        again = ParametricPolyhedralLoss.from_dict(ploss.to_dict(), 1, 2)
        assert again.W == tight_approx(ploss.W)
        assert again.theta_lower == tight_approx(ploss.theta_lower)
        assert again.theta_upper == tight_approx(ploss.theta_upper)


class TestExampleLosses:
    @pytest.mark.parametrize(
        "tag,expected",
        [
            ("variance", 0.5 * (2.0 - 3.0) ** 2),
            ("neg_product", -6.0),
            ("symmetrization", -2.0 * 4.0 - 2.0 * 6.0),
            ("cubic", 2.0 * 9.0),
        ],
    )
    def test_values(self, tag, expected):
        loss = QuadraticExampleLoss(tag)
        assert loss.eval([2.0, 3.0]) == tight_approx(expected)
        assert loss.eval_many([[2.0, 3.0]]) == tight_approx([expected])

    def test_unknown(self):
        with pytest.raises(ValueError):
            QuadraticExampleLoss("quartic")


class TestSymLift:
    def test_two_term_average(self, piecewise_linear):
        assert eval_sym_lift(piecewise_linear, 2, [1.0, 0.0]) == tight_approx(-1.5)

    def test_diagonal(self, piecewise_linear):
        assert eval_sym_lift(piecewise_linear, 2, [0.7, 0.7]) == tight_approx(
            piecewise_linear.eval([0.7, 0.7])
        )

    def test_affine(self):
        loss = PolyhedralLoss.from_vertices([[1.0, 0.0, 0.0]], 1, 2)
        x = np.array([1.0, 2.0, 6.0])
        assert eval_sym_lift(loss, 3, x) == tight_approx(3.0)

    def test_black_box(self):
        x = np.array([1.0, 2.0, 3.0])
        value = sym_lift(lambda y: y[0] * y[1] ** 2, 2, 1, 3, x)
        expected = np.mean([x[i] * x[j] ** 2 for i, j in permutations(range(3), 2)])
        assert value == tight_approx(expected)

    def test_precondition(self, piecewise_linear):
        with pytest.raises(PreconditionError):
            eval_sym_lift(piecewise_linear, 1, [1.0])

    def test_cap(self, piecewise_linear):
        with pytest.raises(CapExceeded):
            eval_sym_lift(piecewise_linear, 20, np.zeros(20), cap=100)

    def test_permutation_invariance(self, piecewise_linear):
        rng = np.random.default_rng(22)
        for _ in range(20):
            x = rng.normal(size=4)
            perm = rng.permutation(4)
            assert eval_sym_lift(piecewise_linear, 4, x[perm]) == pytest.approx(
                eval_sym_lift(piecewise_linear, 4, x), abs=1.0e-10
            )


class TestConjugate:
    abs_vertices = [[1.0, 0.0], [-1.0, 0.0]]

    def test_abs(self):
        assert conjugate_eval(self.abs_vertices, [0.0]) == pytest.approx(0.0, abs=1e-12)
        assert conjugate_eval(self.abs_vertices, [0.5]) == pytest.approx(0.0, abs=1e-12)
        assert conjugate_eval(self.abs_vertices, [2.0]) == np.inf

    def test_fenchel_young(self):
        rng = np.random.default_rng(23)
        V = rng.normal(size=(5, 3))

        def f(x):
            return np.max(V[:, :-1] @ x + V[:, -1])

        for _ in range(50):
            # points in the conjugate domain are convex combinations of the slopes
            z = rng.dirichlet(np.ones(5)) @ V[:, :-1]
            x = rng.normal(size=2)
            assert f(x) + conjugate_eval(V, z) >= z @ x - 1.0e-9


class TestMembershipBlocks:
    def test_square_lift(self, piecewise_linear):
        blocks = conjugate_membership_blocks(piecewise_linear, 2)
        assert len(blocks.tuples) == 2
        blocks = MembershipBlocks(piecewise_linear, 2, identity_only=True)
        assert blocks.tuples == [(0, 1)]
        assert blocks.coefficient == 1.0

        program = ConicProgram()
        z_rows, b_indices = blocks.add_to(program)
        # z = a
        assert [idx.tolist() for idx, _ in z_rows] == [[0], [1]]
        assert len(b_indices) == 1

    def test_lift_to_three(self, piecewise_linear):
        blocks = MembershipBlocks(piecewise_linear, 3)
        assert len(blocks.tuples) == 6
        assert blocks.coefficient == tight_approx(1.0 / 6.0)
        # a, b and two convex combination weights per tuple
        assert blocks.n_variables == 6 * 5

        program = ConicProgram()
        z_rows, b_indices = blocks.add_to(program)
        assert program.n_vars == 30
        assert len(b_indices) == 6
        # every block of z collects one a-component from each tuple using it
        assert [len(idx) for idx, _ in z_rows] == [4, 4, 4]

    def test_halfspace_rows(self):
        ploss, _, _, _ = outer_dro_instance()
        frozen = ploss.at(1.0)
        blocks = MembershipBlocks(frozen, 2)
        assert blocks.representation == "halfspaces"
        program = ConicProgram()
        blocks.add_to(program)
        A, b = program.inequality_matrix()
        A = A.toarray()
        assert A.shape == (8, 6)
        assert A[:4, :3] == tight_approx(-outer_W)
        assert b[:4] == tight_approx(frozen.g)

    def test_parametric_needs_theta(self):
        ploss, _, _, _ = outer_dro_instance()
        blocks = MembershipBlocks(ploss, 2)
        with pytest.raises(PreconditionError):
            blocks.add_to(ConicProgram())
