"""
Independent reference values for the relaxation programs

* closed-form values of the worked one-dimensional examples (:class:`ReferenceCase`)
* the semi-infinite dual, computed class by class with an outer line search over the
  transport multiplier (:func:`semi_infinite_dual`)
* a primal lower bound from weights on a finite grid (:func:`grid_primal_lower_bound`)
* exact values along the witness sequence of the divergent cubic example
  (:func:`divergence_witness`)
"""

from fractions import Fraction
from itertools import product
import math
import warnings

import numpy as np
from scipy.optimize import minimize_scalar

from .combinatorics import (
    DEFAULT_CAP,
    canonical_selector,
    enumerate_classes,
    enumerate_tuples,
)
from .conic import ConicProgram, SolveStatus, solve
from .distributions import make_distribution, wasserstein_exact
from .errors import (
    CapExceeded,
    EmptyGrid,
    NumericalFailure,
    OutOfDomain,
    PreconditionError,
    SolverFailure,
)

# Absolute tolerance on the minimiser for all scalar infima
scalar_xatol = 1.0e-10


def scalar_infimum(function, pole):
    """
    Infimum over mu > pole of a function that is unimodal there and tends to +inf at
    the pole

    The upper end of the bracket is found by doubling the distance from the pole
    until the function increases; the minimum is then located with bounded Brent
    (golden-section steps with parabolic interpolation) to ``scalar_xatol``.
    """
    step = 1.0
    previous = function(pole + step)
    for _ in range(200):
        current = function(pole + 2.0 * step)
        if current >= previous:
            break
        step *= 2.0
        previous = current
    else:
        raise OutOfDomain("Scalar infimum has no bracket, function seems unbounded")
    res = minimize_scalar(
        function,
        bounds=(pole, pole + 2.0 * step),
        method="bounded",
        options={"xatol": scalar_xatol, "maxiter": 2000},
    )
    return float(min(res.fun, previous))


def _conservatism_U(rho, M):
    return scalar_infimum(
        lambda mu: 2.0 * rho * mu + 2.0 * mu / (4.0 * mu**2 - 1.0), 0.5
    )


def _symmetrization_S(rho, M):
    return -2.0 * (1.0 - min(math.sqrt(rho), 1.0)) ** 2


def _symmetrization_U(rho, M):
    return scalar_infimum(
        lambda mu: 2.0 * rho * mu + 2.0 * mu * (1.0 - mu) / (mu * (mu + 2.0) - 1.0),
        math.sqrt(2.0) - 1.0,
    )


def _symmetrization_U_sym(rho, M):
    r = min(rho, 0.5)
    return 2.0 * (2.0 * math.sqrt(2.0 * r) - 2.0 * r - 1.0)


def lifted_objective(mu, rho, M):
    """
    The function of the multiplier whose infimum over mu > 1/(M(M-1)) is the lifted
    bound of the -x1*x2 example
    """
    return M * (rho - 1.0) * mu + (M - 1) * M**2 * mu**2 / ((M - 1) * M * mu - 1.0) * (
        1.0 - 1.0 / ((M - 1) * (1.0 + M * mu))
    )


def _lifted_U_M_sym(rho, M):
    return scalar_infimum(lambda mu: lifted_objective(mu, rho, M), 1.0 / (M * (M - 1)))


def _lifted_bound(rho, M):
    return (math.sqrt(rho) + 1.0) ** 2 / (M - 1)


class ReferenceCase:
    """
    Closed-form values for one worked example

    Parameters
    ----------
    name : str
    loss : str
        Tag of the matching :class:`~structwdro.core.losses.QuadraticExampleLoss`
    nominal : tuple of (atoms, weights)
    quantities : dict
        Name -> function of (rho, M)
    default : str
        Quantity returned when none is requested
    needs_M : set of str
        Quantities that depend on the lifting level
    provenance : str
    """

    N = 2

    def __init__(self, name, loss, nominal, quantities, default, needs_M, provenance):
        self.name = name
        self.loss = loss
        self.nominal = nominal
        self.quantities = quantities
        self.default = default
        self.needs_M = set(needs_M)
        self.provenance = provenance

    def nominal_distribution(self):
        return make_distribution(*self.nominal)

    def value(self, rho, M=None, quantity=None):
        quantity = self.default if quantity is None else quantity
        if quantity not in self.quantities:
            raise OutOfDomain(
                f"Case {self.name} has no quantity {quantity}, expected one of "
                f"{list(self.quantities)}"
            )
        if not (np.isfinite(rho) and rho > 0.0):
            raise OutOfDomain(f"Case {self.name} needs rho > 0, got {rho}")
        if quantity in self.needs_M:
            if M is None or M < self.N:
                raise OutOfDomain(
                    f"Quantity {quantity} of case {self.name} needs M >= {self.N}"
                )
        return float(self.quantities[quantity](rho, M))

    def values(self, rho, M=None):
        """
        All quantities that are defined for these arguments
        """
        return {
            quantity: self.value(rho, M, quantity)
            for quantity in self.quantities
            if M is not None or quantity not in self.needs_M
        }

    def __repr__(self):
        return f"ReferenceCase({self.name})"


_square_cost = "c(x, y) = |x - y|^2 on the real line, N = 2"

reference_cases = {
    case.name: case
    for case in (
        ReferenceCase(
            "variance",
            "variance",
            ([0.0], [1.0]),
            {"S": lambda rho, M: rho, "U": lambda rho, M: 2.0 * rho},
            "S",
            (),
            f"loss (x1 - x2)^2 / 2, nominal delta_0, {_square_cost}. The structured "
            "value is the largest variance in the ball, attained by "
            "(delta_{-sqrt(rho)} + delta_{sqrt(rho)}) / 2; the unstructured bound "
            "doubles it.",
        ),
        ReferenceCase(
            "conservatism",
            "neg_product",
            ([-1.0, 1.0], [0.5, 0.5]),
            {"S": lambda rho, M: 0.0, "U": _conservatism_U},
            "U",
            (),
            f"loss -x1 x2, nominal (delta_{{-1}} + delta_1) / 2, {_square_cost}. "
            "Structured value -(E P)^2 has supremum 0; the unstructured bound is "
            "inf_{mu > 1/2} 2 rho mu + 2 mu / (4 mu^2 - 1) and grows linearly in rho.",
        ),
        ReferenceCase(
            "symmetrization",
            "symmetrization",
            ([-1.0, 1.0], [0.5, 0.5]),
            {
                "S": _symmetrization_S,
                "U": _symmetrization_U,
                "U_sym": _symmetrization_U_sym,
            },
            "U_sym",
            (),
            f"loss -2 x1^2 - 2 x1 x2, nominal (delta_{{-1}} + delta_1) / 2, "
            f"{_square_cost}. S = -2 (1 - min(sqrt(rho), 1))^2, "
            "U = inf_{mu > sqrt(2) - 1} 2 rho mu + 2 mu (1 - mu) / (mu (mu + 2) - 1), "
            "U_sym = 2 (2 sqrt(2 min(rho, 1/2)) - 2 min(rho, 1/2) - 1).",
        ),
        ReferenceCase(
            "lifted",
            "neg_product",
            ([-1.0, 1.0], [0.5, 0.5]),
            {
                "S": lambda rho, M: 0.0,
                "U_M_sym": _lifted_U_M_sym,
                "bound": _lifted_bound,
            },
            "U_M_sym",
            ("U_M_sym", "bound"),
            f"loss -x1 x2 as in the conservatism case, {_square_cost}. The lifted "
            "bound at level M is the infimum over mu > 1/(M(M-1)) of "
            "M (rho - 1) mu + (M-1) M^2 mu^2 / ((M-1) M mu - 1) "
            "(1 - 1 / ((M-1)(1 + M mu))), at most (sqrt(rho) + 1)^2 / (M - 1).",
        ),
        ReferenceCase(
            "infinite_gap",
            "cubic",
            ([0.0], [1.0]),
            {"S": lambda rho, M: rho**1.5, "U_M_sym": lambda rho, M: math.inf},
            "S",
            ("U_M_sym",),
            f"loss x1 x2^2, nominal delta_0, {_square_cost}. S = rho^(3/2) at "
            "delta_{sqrt(rho)}, while every lifted bound is +inf.",
        ),
    )
}


def get_reference_case(name):
    try:
        return reference_cases[name]
    except KeyError:
        raise OutOfDomain(
            f"Unknown reference case '{name}', expected one of {list(reference_cases)}"
        ) from None


def reference_value(case, rho, M=None, quantity=None):
    """
    Closed-form value of ``quantity`` (the case's default if not given) for the
    reference case ``case`` (a ReferenceCase or its name)
    """
    if isinstance(case, str):
        case = get_reference_case(case)
    return case.value(rho, M, quantity)


fixture_rhos = (0.25, 0.5, 1.0)
fixture_Ms = (2, 3, 5, 10, 20)


def reference_records(rhos=fixture_rhos, Ms=fixture_Ms):
    """
    Every closed-form value over the grid ``rhos`` x ``Ms``, as a dict
    case name -> list of {"rho", "M", "quantity", "value"} records. Quantities that do
    not depend on M are listed once per rho with M = None.
    """
    records = {}
    for name, case in reference_cases.items():
        rows = []
        for rho in rhos:
            for quantity in case.quantities:
                levels = Ms if quantity in case.needs_M else (None,)
                for M in levels:
                    rows.append(
                        {
                            "rho": rho,
                            "M": M,
                            "quantity": quantity,
                            "value": case.value(rho, M, quantity),
                        }
                    )
        records[name] = rows
    return records


class WitnessValues:
    """
    Exact transport budget and objective of one witness mixture
    """

    def __init__(self, n, M, transport, objective):
        self.n = n
        self.M = M
        self.transport = transport
        self.objective = objective

    def __repr__(self):
        return (
            f"WitnessValues(n={self.n}, M={self.M}, transport={self.transport}, "
            f"objective={self.objective})"
        )


def divergence_witness(rho, n, M=2):
    """
    Evaluate (1 - rho/n^2) delta_0^M + (rho/n^2) delta_n^M for the loss x1 x2^2 with
    nominal delta_0 and cost |x - y|^2, in exact rational arithmetic

    The transport cost to delta_0^M is M rho for every n, so the mixture is feasible
    for the lifted problem at level M, while the symmetrised lifted loss integrates to
    rho n.
    """
    rho = Fraction(rho)
    if rho <= 0 or n < 1:
        raise OutOfDomain(f"Need rho > 0 and n >= 1, got rho={rho}, n={n}")
    if M < 2:
        raise OutOfDomain(f"Need M >= 2, got {M}")
    mass = rho / (n * n)
    if mass > 1:
        raise OutOfDomain(f"rho / n^2 = {mass} is not a probability")
    atoms = [(1 - mass, (Fraction(0),) * M), (mass, (Fraction(n),) * M)]
    tuples = list(enumerate_tuples(M, 2))

    def lifted_loss(x):
        return sum(x[i] * x[j] ** 2 for i, j in tuples) / len(tuples)

    transport = sum(w * sum(x_i**2 for x_i in x) for w, x in atoms)
    objective = sum(w * lifted_loss(x) for w, x in atoms)
    return WitnessValues(n, M, transport, objective)


class _InnerSupremum:
    """
    sup_x l_sym(x) - mu sum_j ||x_j - xi_j|| as a conic program for one class
    representative xi; built once, re-solved for each mu
    """

    def __init__(self, loss, M, xi, norm_kind, tuples_index, coefficient, vertices):
        n = loss.n
        program = ConicProgram("semi-infinite inner")
        x = program.add_variables(n * M, name="x")
        t = program.add_variables(len(tuples_index), name="t")
        s = program.add_variables(M, lower=0.0, name="s")
        program.add_objective(t, -coefficient)
        for k, index in enumerate(tuples_index):
            for h in vertices:
                # t_l <= a^T x_l + b
                program.add_inequality(
                    np.append(x[index], t[k]), np.append(-h[:-1], 1.0), h[-1]
                )
        for j in range(M):
            rows = [(np.array([x[j * n + i]]), np.array([1.0])) for i in range(n)]
            program.add_cone(norm_kind, rows, s[j], offset=-xi[j * n : (j + 1) * n])
        self.program = program
        self.s = s

    def __call__(self, mu, tolerance, iteration_limit):
        self.program.set_objective(self.s, mu)
        try:
            result = solve(
                self.program, tolerance=tolerance, iteration_limit=iteration_limit
            )
        except NumericalFailure:
            # x = xi is always feasible; an unclassified program sits on the
            # unbounded side of the finiteness threshold
            return math.inf
        if result.status is SolveStatus.UNBOUNDED:
            return math.inf
        if not result.optimal:
            raise SolverFailure(f"Inner supremum not solved: status {result.status}")
        return -result.value


def semi_infinite_dual(
    instance, M, mu_grid=16, *, cap=DEFAULT_CAP, tolerance=1.0e-9, iteration_limit=10000
):
    """
    The lifted bound at level M computed from its semi-infinite dual

    inf_{mu >= 0} M rho mu + sum_classes weight * phi_mu(xi_class), with phi_mu the
    supremum of the symmetrised lifted loss minus mu times the lifted transport cost
    from xi. phi_mu is permutation invariant, so one representative per class is
    enough. phi_mu is +inf below a threshold that is located by bisection on
    [0, mu_max]; above it, the convex outer function is sampled on ``mu_grid`` points
    and refined with bounded Brent.
    """
    if instance.parametric:
        raise PreconditionError("Freeze theta with loss.at(theta) first")
    loss = instance.loss
    if M < loss.N:
        raise PreconditionError(f"Need M >= N, got M={M}, N={loss.N}")
    nominal = instance.nominal
    classes = [
        c
        for c in enumerate_classes(nominal.n_atoms, M, weights=nominal.weights, cap=cap)
        if c.weight > 0.0
    ]
    tuples = enumerate_tuples(M, loss.N, cap)
    size = len(classes) * len(tuples) * loss.vertices().shape[0]
    if size > cap:
        raise CapExceeded("semi-infinite dual rows", size, cap)
    n = loss.n
    tuples_index = [
        (np.asarray(l)[:, np.newaxis] * n + np.arange(n)).ravel() for l in tuples
    ]
    V = loss.vertices()
    inner = [
        _InnerSupremum(
            loss,
            M,
            nominal.atoms[list(canonical_selector(c))].ravel(),
            instance.cost.norm_kind,
            tuples_index,
            tuples.coefficient,
            V,
        )
        for c in classes
    ]
    weights = np.array([c.weight for c in classes])

    def outer(mu):
        total = M * instance.radius * mu
        for w, phi in zip(weights, inner):
            value = phi(mu, tolerance, iteration_limit)
            if not np.isfinite(value):
                return math.inf
            total += w * value
        return total

    dual = instance.cost.dual_norm
    order = {"l1": 1, "l2": 2, "linf": np.inf}[dual]
    mu_max = max(
        float(np.linalg.norm(h[:-1].reshape(loss.N, n), ord=order, axis=1).max())
        for h in V
    )

    if np.isfinite(outer(0.0)) or mu_max == 0.0:
        mu_low = 0.0
    else:
        lo, hi = 0.0, mu_max
        while hi - lo > scalar_xatol * max(1.0, mu_max):
            mid = 0.5 * (lo + hi)
            if np.isfinite(outer(mid)):
                hi = mid
            else:
                lo = mid
        mu_low = hi
    if mu_max <= mu_low:
        return outer(mu_low)

    grid = np.linspace(mu_low, mu_max, max(mu_grid, 3))
    values = np.array([outer(mu) for mu in grid])
    k = int(np.argmin(values))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(
        outer,
        bounds=(a, b),
        method="bounded",
        options={"xatol": scalar_xatol, "maxiter": 500},
    )
    return float(min(values[k], res.fun))


def _polynomial_line_search(function, degree, t_max):
    """
    Maximise a polynomial of known degree on [0, t_max] from degree + 1 samples
    """
    if t_max <= 0.0:
        return 0.0, function(0.0)
    samples = np.linspace(0.0, t_max, degree + 1)
    values = np.array([function(t) for t in samples])
    coefficients = np.polynomial.polynomial.polyfit(samples, values, degree)
    candidates = [0.0, t_max]
    if degree >= 2:
        for root in np.polynomial.polynomial.polyroots(
            np.polynomial.polynomial.polyder(coefficients)
        ):
            if abs(root.imag) < 1.0e-12 and 0.0 < root.real < t_max:
                candidates.append(float(root.real))
    best = max(candidates, key=lambda t: function(t))
    return best, function(best)


class _GridProblem:
    def __init__(self, nominal, rho, cost, loss, N, grid, cap):
        self.nominal = nominal
        self.rho = rho
        self.cost = cost
        self.N = N
        self.grid = grid
        K = grid.shape[0]
        if K**N > cap:
            raise CapExceeded("grid loss tensor", K**N, cap)
        points = np.array(
            [
                np.concatenate([grid[i] for i in index])
                for index in product(range(K), repeat=N)
            ]
        )
        if hasattr(loss, "eval_many"):
            values = np.asarray(loss.eval_many(points), dtype=float)
        else:
            values = np.array([loss(x) for x in points])
        self.tensor = values.reshape((K,) * N)
        self.point_mass = nominal.n_atoms == 1
        self.pair_costs = cost.pairwise(grid, nominal.atoms)
        # transport cost of each grid point to a point-mass nominal
        self.linear_cost = self.pair_costs[:, 0]

    def objective(self, w):
        value = self.tensor
        for _ in range(self.N):
            value = value @ w
        return float(value)

    def distance(self, w):
        if self.point_mass:
            return float(self.linear_cost @ w)
        support = w > 0.0
        P = make_distribution(self.grid[support], w[support] / w[support].sum())
        return wasserstein_exact(P, self.nominal, self.cost)[0]

    def feasible(self, w):
        return self.distance(w) <= self.rho + 1.0e-12

    def max_step(self, w, direction, t_max):
        """
        Largest t in [0, t_max] with w + t direction inside the ball

        For a multi-atom nominal this is one linear program over the transport plan
        and t together.
        """
        if self.point_mass:
            slope = float(self.linear_cost @ direction)
            slack = self.rho - float(self.linear_cost @ w)
            if slope <= 0.0:
                return t_max
            return max(0.0, min(t_max, slack / slope))
        if self.feasible(w + t_max * direction):
            return t_max
        t = self._step_program(w, direction, t_max)
        if self.feasible(w + t * direction):
            return t
        # solver tolerance left the endpoint just outside the ball
        lo, hi = 0.0, t
        for _ in range(20):
            mid = 0.5 * (lo + hi)
            if self.feasible(w + mid * direction):
                lo = mid
            else:
                hi = mid
        return lo

    def _step_program(self, w, direction, t_max):
        K, m = self.pair_costs.shape
        program = ConicProgram("grid step")
        plan = program.add_variables(K * m, lower=0.0, name="plan")
        t = program.add_variables(1, lower=0.0, upper=t_max, name="t")
        program.add_objective(t, -1.0)
        for i in range(K):
            program.add_equality(
                np.append(plan[i * m : (i + 1) * m], t),
                np.append(np.ones(m), -direction[i]),
                w[i],
            )
        for j in range(m):
            program.add_equality(plan[j::m], 1.0, self.nominal.weights[j])
        program.add_inequality(plan, self.pair_costs.ravel(), self.rho)
        result = solve(program)
        if not result.optimal:
            return 0.0
        return float(min(t_max, max(0.0, result.x[t[0]])))

    def snap(self):
        """
        Nominal mass moved to the nearest grid points
        """
        w = np.zeros(self.grid.shape[0])
        nearest = np.argmin(self.cost.pairwise(self.nominal.atoms, self.grid), axis=1)
        np.add.at(w, nearest, self.nominal.weights)
        return w

    def ascend(self, w, max_sweeps):
        value = self.objective(w)
        K = len(w)
        for _ in range(max_sweeps):
            improved = False
            for i in range(K):
                for j in range(K):
                    if i == j or w[j] <= 0.0:
                        continue
                    direction = np.zeros(K)
                    direction[i] = 1.0
                    direction[j] = -1.0
                    t_max = self.max_step(w, direction, w[j])
                    t, new_value = _polynomial_line_search(
                        lambda t: self.objective(w + t * direction), self.N, t_max
                    )
                    if new_value > value + 1.0e-14:
                        w = w + t * direction
                        w[j] = max(w[j], 0.0)
                        value = new_value
                        improved = True
            if not improved:
                break
        return w, value


def grid_primal_lower_bound(
    nominal,
    rho,
    cost,
    loss,
    N,
    grid,
    restarts=4,
    seed=0,
    *,
    max_sweeps=200,
    cap=DEFAULT_CAP,
):
    """
    Lower bound on the structured worst-case expectation from distributions supported
    on ``grid``

    Maximises E_{P^N}[loss] over weights on the grid subject to W_c(P, nominal) <= rho
    by pairwise mass transfers with exact polynomial line searches, started from the
    nominal snapped to the grid and from ``restarts`` random feasible points. The
    problem is non-convex, so only the best value found is returned.

    With a single-atom nominal the ball constraint is linear in the weights and each
    transfer is cheap. Otherwise every transfer that leaves the ball solves a
    transport problem plus one linear program for the step length, so a sweep costs
    about K^2 small linear programs for K grid points.

    Raises
    ------
    EmptyGrid
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise EmptyGrid("The grid has no points")
    if grid.ndim == 1:
        grid = grid[:, np.newaxis]
    problem = _GridProblem(nominal, rho, cost, loss, N, grid, cap)

    start = problem.snap()
    starts = []
    if problem.feasible(start):
        starts.append(start)
    else:
        warnings.warn("The nominal snapped to the grid is outside the ball")

    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        target = rng.dirichlet(np.ones(grid.shape[0]))
        if problem.feasible(target):
            starts.append(target)
        elif starts:
            # shrink towards the snapped nominal until inside the ball
            t = problem.max_step(starts[0], target - starts[0], 1.0)
            starts.append(starts[0] + t * (target - starts[0]))

    if not starts:
        warnings.warn("No feasible starting point on the grid")
        return -math.inf
    return max(problem.ascend(w, max_sweeps)[1] for w in starts)
