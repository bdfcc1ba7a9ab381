"""
Assembly of the finite convex programs bounding the worst-case expected loss over the
structured Wasserstein ball {P^N : W_c(P, nominal) <= rho}:

* the symmetrised lifted relaxation at level M (:func:`build_relaxation`)
* the unstructured bound over the ball of radius N rho around nominal^N
  (:func:`build_unstructured`)
* the multitransport bound with one multiplier per block
  (:func:`build_multitransport`)
* the outer minimisation over a decision theta (:func:`build_outer_dro`)

All programs are minimisations. The multiplier of the transport budget is ``mu``; the
class epigraph variables are ``sigma``.
"""

import csv
import io
import time
import warnings

import func_timeout
import numpy as np

from ..utils.parallel_map import ParallelMap
from .combinatorics import DEFAULT_CAP, canonical_selector, enumerate_classes
from .conic import ConicProgram, SolveStatus, solve
from .distributions import DiscreteDistribution, TransportCost, product_power
from .errors import (
    CapExceeded,
    DimensionMismatch,
    InstanceFormatError,
    PreconditionError,
    StructWDROError,
)
from .losses import MembershipBlocks, ParametricPolyhedralLoss, PolyhedralLoss

# Status of an outer point whose minimiser could not be evaluated at level M_max
PROXY_FAILED = "ProxyFailed"


class UQInstance:
    """
    Worst-case expectation problem sup_{P : W_c(P, nominal) <= radius} E_{P^N}[loss]

    Parameters
    ----------
    nominal : DiscreteDistribution
    radius : float
    cost : TransportCost
        Ground cost on one block, power 1
    loss : PolyhedralLoss or ParametricPolyhedralLoss
    """

    def __init__(self, nominal, radius, cost, loss):
        if radius < 0.0:
            raise PreconditionError(f"radius must be non-negative, got {radius}")
        if loss.n != nominal.dimension:
            raise DimensionMismatch(
                f"loss blocks have dimension {loss.n}, nominal has dimension "
                f"{nominal.dimension}"
            )
        if cost.total_dimension != nominal.dimension:
            raise DimensionMismatch(
                f"cost acts on dimension {cost.total_dimension}, nominal has dimension "
                f"{nominal.dimension}"
            )
        if cost.power != 1:
            raise PreconditionError("Programs are only built for costs c = ||x - y||")
        self.nominal = nominal
        self.radius = float(radius)
        self.cost = cost
        self.loss = loss

    @property
    def N(self):
        return self.loss.N

    @property
    def n(self):
        return self.loss.n

    @property
    def parametric(self):
        return isinstance(self.loss, ParametricPolyhedralLoss)

    def with_radius(self, radius):
        return UQInstance(self.nominal, radius, self.cost, self.loss)

    def to_dict(self):
        return {
            "nominal": self.nominal.to_dict(),
            "radius": self.radius,
            "norm": self.cost.norm_kind,
            "N": self.N,
            "loss": self.loss.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            nominal = DiscreteDistribution.from_dict(data["nominal"])
            N = int(data["N"])
            n = nominal.dimension
            loss_data = dict(data["loss"])
            if "theta" in data:
                loss_data.update(data["theta"])
            if "G" in loss_data:
                loss = ParametricPolyhedralLoss.from_dict(loss_data, n, N)
            else:
                loss = PolyhedralLoss.from_dict(loss_data, n, N)
            cost = TransportCost(data.get("norm", "l2"), n)
            return cls(nominal, float(data["radius"]), cost, loss)
        except KeyError as err:
            raise InstanceFormatError(f"Instance is missing the entry {err}") from err
        except (TypeError, ValueError) as err:
            if isinstance(err, StructWDROError):
                raise
            raise InstanceFormatError(f"Malformed instance: {err}") from err

    def __repr__(self):
        return (
            f"UQInstance(n_atoms={self.nominal.n_atoms}, radius={self.radius}, "
            f"norm={self.cost.norm_kind}, N={self.N})"
        )


def nominal_expectation(instance, cap=DEFAULT_CAP):
    """
    E_{nominal^N}[loss], the common value of all bounds at radius 0
    """
    if instance.parametric:
        raise PreconditionError("Freeze theta with loss.at(theta) first")
    product = product_power(instance.nominal, instance.N, cap)
    return float(product.weights @ instance.loss.eval_many(product.atoms))


def _add_sigma_row(program, sigma, xi, z_rows, b_indices, coefficient):
    """
    0 <= sigma + z^T xi + coefficient * sum(b)
    """
    indices = [np.array([sigma])]
    coefficients = [np.array([-1.0])]
    for x_k, (idx, coef) in zip(xi, z_rows):
        indices.append(idx)
        coefficients.append(-x_k * coef)
    indices.append(b_indices)
    coefficients.append(np.full(len(b_indices), -coefficient))
    program.add_inequality(np.concatenate(indices), np.concatenate(coefficients), 0.0)


def _add_cones(program, dual_kind, z_rows, n, bounds):
    for j, bound in enumerate(bounds):
        program.add_cone(dual_kind, z_rows[j * n : (j + 1) * n], bound)


def _check_size(what, size, cap):
    if size > cap:
        raise CapExceeded(what, size, cap)


def build_relaxation(
    instance, M, *, selectors=None, representation=None, cap=DEFAULT_CAP
):
    """
    Program whose optimal value is the symmetrised lifted bound at level M

    Parameters
    ----------
    instance : UQInstance
    M : int
        Lifting level, at least N
    selectors : list of tuple, optional
        One member per multi-index class (in the order of
        :func:`~structwdro.core.combinatorics.enumerate_classes`); the sorted
        representative by default. The optimal value does not depend on the choice.
    representation : str, optional
        Force "vertices" or "halfspaces" for the membership constraints
    cap : int
        Limit on the number of scalar variables

    Returns
    -------
    ConicProgram
    """
    if instance.parametric:
        raise PreconditionError(
            "Use build_outer_dro for a parametric loss, or freeze theta first"
        )
    if M < instance.N:
        raise PreconditionError(f"Need M >= N, got M={M}, N={instance.N}")
    program = ConicProgram(f"relaxation M={M}")
    mu = program.add_variables(1, lower=0.0, name="mu")
    program.add_objective(mu, M * instance.radius)
    _add_lifted_classes(program, instance, M, mu, selectors, representation, cap)
    return program


def _add_lifted_classes(
    program, instance, M, mu, selectors, representation, cap, theta=None
):
    loss = instance.loss
    nominal = instance.nominal
    blocks = MembershipBlocks(loss, M, representation, cap)
    classes = enumerate_classes(
        nominal.n_atoms, M, weights=nominal.weights, cap=cap
    )
    _check_size(
        "relaxation program",
        program.n_vars + len(classes) * (1 + blocks.n_variables),
        cap,
    )
    if selectors is not None and len(selectors) != len(classes):
        raise DimensionMismatch(
            f"Got {len(selectors)} selectors for {len(classes)} classes"
        )

    sigma = program.add_variables(len(classes), name="sigma")
    program.add_objective(sigma, [c.weight for c in classes])
    for k, index_class in enumerate(classes):
        if selectors is None:
            selector = canonical_selector(index_class)
        else:
            selector = tuple(selectors[k])
            if sorted(selector) != list(index_class.representative):
                raise PreconditionError(
                    f"selector {selector} is not a member of {index_class}"
                )
        xi = nominal.atoms[list(selector)].ravel()
        z_rows, b_indices = blocks.add_to(program, theta)
        _add_cones(program, instance.cost.dual_norm, z_rows, instance.n, [mu[0]] * M)
        _add_sigma_row(program, sigma[k], xi, z_rows, b_indices, blocks.coefficient)


def _build_product_program(instance, name, per_block_multipliers, representation, cap):
    if instance.parametric:
        raise PreconditionError("Freeze theta with loss.at(theta) first")
    N = instance.N
    blocks = MembershipBlocks(
        instance.loss, N, representation, cap, identity_only=True
    )
    _check_size("product distribution", instance.nominal.n_atoms**N, cap)
    product = product_power(instance.nominal, N, cap)
    _check_size(
        f"{name} program", N + product.n_atoms * (1 + blocks.n_variables), cap
    )

    program = ConicProgram(name)
    if per_block_multipliers:
        mu = program.add_variables(N, lower=0.0, name="mu")
        program.add_objective(mu, instance.radius)
        bounds = list(mu)
    else:
        mu = program.add_variables(1, lower=0.0, name="mu")
        program.add_objective(mu, N * instance.radius)
        bounds = [mu[0]] * N
    sigma = program.add_variables(product.n_atoms, name="sigma")
    program.add_objective(sigma, product.weights)
    for i, xi in enumerate(product.atoms):
        z_rows, b_indices = blocks.add_to(program)
        _add_cones(program, instance.cost.dual_norm, z_rows, instance.n, bounds)
        _add_sigma_row(program, sigma[i], xi, z_rows, b_indices, 1.0)
    return program


def build_unstructured(instance, *, representation=None, cap=DEFAULT_CAP):
    """
    Program for the bound over all distributions on the N-fold product space within
    transport distance N rho of nominal^N
    """
    return _build_product_program(instance, "unstructured", False, representation, cap)


def build_multitransport(instance, *, representation=None, cap=DEFAULT_CAP):
    """
    Program for the bound with a separate transport budget rho per block, one
    multiplier mu_i per block
    """
    return _build_product_program(instance, "multitransport", True, representation, cap)


def build_outer_dro(ploss, nominal, rho, cost, N, M, *, cap=DEFAULT_CAP):
    """
    Joint program over (theta, mu, sigma, a, b) whose optimum is
    min_theta (lifted bound at level M for the loss with theta frozen)

    The ``theta`` block of the solution holds the minimiser.
    """
    if not isinstance(ploss, ParametricPolyhedralLoss):
        raise PreconditionError("build_outer_dro needs a ParametricPolyhedralLoss")
    if ploss.N != N:
        raise DimensionMismatch(f"loss has N={ploss.N}, expected {N}")
    instance = UQInstance(nominal, rho, cost, ploss)
    if M < N:
        raise PreconditionError(f"Need M >= N, got M={M}, N={N}")
    program = ConicProgram(f"outer M={M}")
    theta = program.add_variables(ploss.n_theta, name="theta")
    program.set_bounds(theta, ploss.theta_lower, ploss.theta_upper)
    mu = program.add_variables(1, lower=0.0, name="mu")
    program.add_objective(mu, M * instance.radius)
    _add_lifted_classes(program, instance, M, mu, None, None, cap, theta=theta)
    return program


class ProgramSolution:
    """
    SolveResult together with the program it came from, giving access to named
    variable blocks
    """

    def __init__(self, program, result):
        self.program = program
        self.result = result

    @property
    def value(self):
        return self.result.value

    @property
    def status(self):
        return self.result.status

    def variable(self, name):
        if self.result.x is None:
            return None
        return self.result.x[self.program.blocks[name]]

    @property
    def mu(self):
        return self.variable("mu")

    @property
    def theta(self):
        return self.variable("theta")

    def __repr__(self):
        return f"ProgramSolution(status={self.status}, value={self.value})"


def solve_program(program, tolerance=1.0e-9, iteration_limit=10000):
    """
    Solve a program built by this module

    An infeasible program means the worst-case expectation is +inf and is reported
    with value +inf. An unbounded program would mean an empty ambiguity set and is
    reported with value -inf and a warning.
    """
    result = solve(program, tolerance=tolerance, iteration_limit=iteration_limit)
    if result.status is SolveStatus.UNBOUNDED:
        warnings.warn(f"Program {program.name} is unbounded below")
    return ProgramSolution(program, result)


class RelaxationPoint:
    """
    One solved (or failed) level of a sweep
    """

    def __init__(
        self,
        M,
        value,
        status,
        *,
        n_vars=0,
        n_rows=0,
        solve_ms=0.0,
        theta=None,
        proxy=None,
    ):
        self.M = M
        self.value = value
        self.status = status
        self.n_vars = n_vars
        self.n_rows = n_rows
        self.solve_ms = solve_ms
        self.theta = theta
        self.proxy = proxy

    @property
    def solved(self):
        return self.status == str(SolveStatus.OPTIMAL)

    def as_row(self, timing=True):
        row = {
            "M": self.M,
            "value": repr(float(self.value)),
            "status": self.status,
            "n_vars": self.n_vars,
            "n_rows": self.n_rows,
            "solve_ms": f"{self.solve_ms:.3f}" if timing else "0",
        }
        if self.theta is not None:
            row["theta"] = " ".join(repr(float(t)) for t in np.atleast_1d(self.theta))
        if self.proxy is not None:
            row["proxy"] = repr(float(self.proxy))
        return row

    def to_dict(self):
        result = {
            "M": self.M,
            "value": float(self.value),
            "status": self.status,
            "n_vars": self.n_vars,
            "n_rows": self.n_rows,
            "solve_ms": self.solve_ms,
        }
        if self.theta is not None:
            result["theta"] = [float(t) for t in np.atleast_1d(self.theta)]
        if self.proxy is not None:
            result["proxy"] = float(self.proxy)
        return result

    def __repr__(self):
        return f"RelaxationPoint(M={self.M}, value={self.value}, status={self.status})"


class RelaxationCurve:
    """
    Sweep results ordered by M
    """

    columns = ["M", "value", "status", "n_vars", "n_rows", "solve_ms"]

    def __init__(self, points, tolerance=1.0e-9):
        self.points = sorted(points, key=lambda p: p.M)
        self.tolerance = tolerance

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    @property
    def Ms(self):
        return [p.M for p in self.points]

    @property
    def values(self):
        return np.array([p.value for p in self.points])

    def solved_points(self):
        return [p for p in self.points if p.solved]

    def is_nonincreasing(self, tolerance=None):
        """
        Whether the solved values never increase with M by more than ``tolerance``
        (ten times the solver tolerance, relative to the value, by default)
        """
        if tolerance is None:
            tolerance = 10.0 * self.tolerance
        values = [p.value for p in self.solved_points()]
        return all(
            later <= earlier + tolerance * max(1.0, abs(earlier))
            for earlier, later in zip(values[:-1], values[1:])
        )

    def to_csv(self, extra_columns=(), timing=True):
        """
        CSV text with a header row, '.' decimal separator and one row per point
        """
        columns = list(self.columns) + list(extra_columns)
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for point in self.points:
            writer.writerow(point.as_row(timing))
        return out.getvalue()

    def to_dict(self):
        return {"points": [p.to_dict() for p in self.points]}

    def __repr__(self):
        return f"RelaxationCurve(Ms={self.Ms})"


def _timed_solve(program, tolerance, iteration_limit, point_timeout):
    start = time.perf_counter()
    if point_timeout is None:
        solution = solve_program(program, tolerance, iteration_limit)
    else:
        solution = func_timeout.func_timeout(
            point_timeout,
            solve_program,
            args=(program, tolerance, iteration_limit),
        )
    return solution, 1.0e3 * (time.perf_counter() - start)


def _failed_point(M, err):
    if isinstance(err, func_timeout.FunctionTimedOut):
        status = "Timeout"
    else:
        status = type(err).__name__
    return RelaxationPoint(M, np.nan, status)


def _relaxation_point(M, *, context):
    instance = context["instance"]
    try:
        program = build_relaxation(instance, M, cap=context["cap"])
        solution, solve_ms = _timed_solve(
            program,
            context["tolerance"],
            context["iteration_limit"],
            context["point_timeout"],
        )
    except (StructWDROError, func_timeout.FunctionTimedOut) as err:
        warnings.warn(f"Level M={M} failed: {err}")
        return _failed_point(M, err)
    return RelaxationPoint(
        M,
        solution.value,
        str(solution.status),
        n_vars=program.n_vars,
        n_rows=program.n_rows,
        solve_ms=solve_ms,
    )


def sweep_relaxation(
    instance,
    M_range,
    *,
    tolerance=1.0e-9,
    iteration_limit=10000,
    cap=DEFAULT_CAP,
    jobs=1,
    point_timeout=None,
):
    """
    Solve the lifted relaxation for each M in ``M_range``

    Failures at one level (cap exceeded, solver failure, timeout) are recorded in the
    curve with the error name as status and do not stop the sweep.

    Returns
    -------
    RelaxationCurve
    """
    M_range = sorted(set(M_range))
    if not M_range:
        raise PreconditionError("M_range is empty")
    context = {
        "instance": instance,
        "cap": cap,
        "tolerance": tolerance,
        "iteration_limit": iteration_limit,
        "point_timeout": point_timeout,
    }
    with ParallelMap(jobs, context=context) as parallel_map:
        points = parallel_map(_relaxation_point, [(M,) for M in M_range])
    curve = RelaxationCurve(points, tolerance)
    if not curve.is_nonincreasing():
        warnings.warn(
            f"Relaxation values are not nonincreasing in M within {10 * tolerance}: "
            f"{curve.values}"
        )
    return curve


def _outer_point(M, *, context):
    ploss = context["ploss"]
    try:
        program = build_outer_dro(
            ploss,
            context["nominal"],
            context["rho"],
            context["cost"],
            ploss.N,
            M,
            cap=context["cap"],
        )
        solution, solve_ms = _timed_solve(
            program,
            context["tolerance"],
            context["iteration_limit"],
            context["point_timeout"],
        )
    except (StructWDROError, func_timeout.FunctionTimedOut) as err:
        warnings.warn(f"Level M={M} failed: {err}")
        return _failed_point(M, err)
    return RelaxationPoint(
        M,
        solution.value,
        str(solution.status),
        n_vars=program.n_vars,
        n_rows=program.n_rows,
        solve_ms=solve_ms,
        theta=solution.theta,
    )


class OuterDROCurve(RelaxationCurve):
    """
    Outer sweep: per M the minimiser theta*_M, the relaxed optimum and the proxy value
    (the relaxation at level M_max evaluated at theta*_M)
    """

    columns = ["M", "theta", "value", "proxy", "status", "n_vars", "n_rows", "solve_ms"]

    def __init__(self, points, M_max, tolerance=1.0e-9):
        super().__init__(points, tolerance)
        self.M_max = M_max

    @property
    def proxies(self):
        return np.array(
            [np.nan if p.proxy is None else p.proxy for p in self.points]
        )

    def best_M(self):
        """
        Smallest M whose proxy is within ten times the solver tolerance of the
        smallest proxy among the solved points
        """
        candidates = [
            p
            for p in self.solved_points()
            if p.proxy is not None and np.isfinite(p.proxy)
        ]
        if not candidates:
            return None
        best = min(p.proxy for p in candidates)
        slack = 10.0 * self.tolerance * max(1.0, abs(best))
        return min(p.M for p in candidates if p.proxy <= best + slack)

    def to_dict(self):
        result = super().to_dict()
        result["M_max"] = self.M_max
        result["M_star"] = self.best_M()
        return result


def sweep_outer_dro(
    ploss,
    nominal,
    rho,
    cost,
    M_range,
    *,
    M_max=None,
    tolerance=1.0e-9,
    iteration_limit=10000,
    cap=DEFAULT_CAP,
    jobs=1,
    point_timeout=None,
):
    """
    Solve the outer program for each M in ``M_range`` and evaluate each minimiser with
    the level-``M_max`` relaxation, the best available proxy for the true worst-case
    value at that decision

    Returns
    -------
    OuterDROCurve
    """
    M_range = sorted(set(M_range))
    if not M_range:
        raise PreconditionError("M_range is empty")
    if M_max is None:
        M_max = M_range[-1]
    context = {
        "ploss": ploss,
        "nominal": nominal,
        "rho": rho,
        "cost": cost,
        "cap": cap,
        "tolerance": tolerance,
        "iteration_limit": iteration_limit,
        "point_timeout": point_timeout,
    }
    with ParallelMap(jobs, context=context) as parallel_map:
        points = parallel_map(_outer_point, [(M,) for M in M_range])

    for point in points:
        if not point.solved:
            continue
        try:
            theta = np.clip(point.theta, ploss.theta_lower, ploss.theta_upper)
            frozen = UQInstance(nominal, rho, cost, ploss.at(theta))
            proxy = solve_program(
                build_relaxation(frozen, M_max, cap=cap), tolerance, iteration_limit
            )
        except StructWDROError as err:
            warnings.warn(f"Proxy at M={point.M} failed: {err}")
            point.status = PROXY_FAILED
            continue
        point.proxy = proxy.value

    curve = OuterDROCurve(points, M_max, tolerance)
    if not curve.is_nonincreasing():
        warnings.warn(
            f"Outer values are not nonincreasing in M within {10 * tolerance}: "
            f"{curve.values}"
        )
    return curve
