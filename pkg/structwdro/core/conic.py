"""
Linear programs with optional norm-cone blocks, and the solvers used for them.

A :class:`ConicProgram` is assembled incrementally by the program builders. Before
solving, every cone block is *lowered*: :math:`\\ell_\\infty` and :math:`\\ell_1`
blocks, and Euclidean blocks of length one, become ordinary linear rows. Pure linear
programs are handed to HiGHS through :func:`scipy.optimize.linprog`; programs that
still contain genuine second-order cones are solved with the primal-dual interior
point method of :func:`cvxopt.solvers.conelp`.
"""

from enum import Enum
import time
import warnings

import numpy as np
from scipy import sparse
from scipy.linalg import qr
from scipy.optimize import linprog

from .errors import DimensionMismatch, NotAProbabilityVector, NumericalFailure

NORM_KINDS = ("l1", "l2", "linf")

# Dual of the norm used in the transport cost c(x, y) = ||x - y||
DUAL_NORM = {"l1": "linf", "l2": "l2", "linf": "l1"}

# Pure LPs up to this many columns are solved with the dual simplex, bigger ones let
# HiGHS pick its algorithm
DENSE_SIMPLEX_LIMIT = 2000

# Smallest feasibility tolerance HiGHS accepts
_HIGHS_MIN_TOLERANCE = 1.0e-10

# cvxopt stalls with status "unknown" below this
_CVXOPT_MIN_TOLERANCE = 1.0e-8

# Smallest objective decrease, over the unit box, accepted as an unbounded ray
_RAY_TOLERANCE = 1.0e-9


class SolveStatus(Enum):
    OPTIMAL = "Optimal"
    UNBOUNDED = "Unbounded"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"

    def __str__(self):
        return self.value


class ConeBlock:
    """
    Constraint ``||F x + f||_kind <= x[bound]``

    Parameters
    ----------
    kind : str
        One of "l1", "l2", "linf"
    rows : list of (indices, coefficients)
        One sparse row of F per component of the normed vector
    bound : int
        Index of the scalar bounding variable
    offset : array-like, optional
        The constant vector f, zero by default
    """

    def __init__(self, kind, rows, bound, offset=None):
        if kind not in NORM_KINDS:
            raise ValueError(f"Unrecognised norm kind '{kind}', expected {NORM_KINDS}")
        self.kind = kind
        self.rows = [
            (np.asarray(idx, dtype=int), np.asarray(coef, dtype=float))
            for idx, coef in rows
        ]
        self.bound = int(bound)
        if offset is None:
            self.offset = np.zeros(len(self.rows))
        else:
            self.offset = np.asarray(offset, dtype=float)
            if self.offset.shape != (len(self.rows),):
                raise DimensionMismatch(
                    f"Cone offset has shape {self.offset.shape}, expected "
                    f"({len(self.rows)},)"
                )

    def __len__(self):
        return len(self.rows)

    def __repr__(self):
        return f"ConeBlock(kind={self.kind}, size={len(self)}, bound={self.bound})"


class ConicProgram:
    """
    Minimise ``c^T x + constant`` over variables with simple bounds, subject to linear
    equality rows, linear ``<=`` rows and norm-cone blocks.

    Variables are created in blocks by :meth:`add_variables`; a block can be given a
    name so that its values can be looked up in a solution.
    """

    def __init__(self, name="program"):
        self.name = name
        self.n_vars = 0
        self.objective_constant = 0.0
        self.blocks = {}
        self.cones = []

        self._c = []
        self._lower = []
        self._upper = []
        self._eq_rows = []
        self._eq_rhs = []
        self._ub_rows = []
        self._ub_rhs = []

    def add_variables(self, count, *, lower=-np.inf, upper=np.inf, name=None):
        """
        Append ``count`` variables and return their indices as an integer array
        """
        start = self.n_vars
        self.n_vars += count
        self._c.extend([0.0] * count)
        self._lower.extend([float(lower)] * count)
        self._upper.extend([float(upper)] * count)
        indices = np.arange(start, start + count)
        if name is not None:
            if name in self.blocks:
                raise ValueError(f"Variable block '{name}' already exists")
            self.blocks[name] = indices
        return indices

    def set_bounds(self, indices, lower, upper):
        for i, lo, hi in zip(
            np.atleast_1d(indices),
            np.broadcast_to(lower, np.shape(np.atleast_1d(indices))),
            np.broadcast_to(upper, np.shape(np.atleast_1d(indices))),
        ):
            self._lower[i] = float(lo)
            self._upper[i] = float(hi)

    def add_objective(self, indices, coefficients):
        for i, coef in zip(
            np.atleast_1d(indices),
            np.broadcast_to(coefficients, np.shape(np.atleast_1d(indices))),
        ):
            self._c[i] += float(coef)

    def set_objective(self, indices, coefficients):
        """
        Overwrite the objective coefficients of ``indices``
        """
        for i, coef in zip(
            np.atleast_1d(indices),
            np.broadcast_to(coefficients, np.shape(np.atleast_1d(indices))),
        ):
            self._c[i] = float(coef)

    def add_equality(self, indices, coefficients, rhs):
        self._eq_rows.append(self._row(indices, coefficients))
        self._eq_rhs.append(float(rhs))

    def add_inequality(self, indices, coefficients, rhs):
        """
        Add the row ``sum(coefficients * x[indices]) <= rhs``
        """
        self._ub_rows.append(self._row(indices, coefficients))
        self._ub_rhs.append(float(rhs))

    def add_cone(self, kind, rows, bound, offset=None):
        self.cones.append(ConeBlock(kind, rows, bound, offset))
        return self.cones[-1]

    @staticmethod
    def _row(indices, coefficients):
        idx = np.atleast_1d(np.asarray(indices, dtype=int))
        coef = np.broadcast_to(np.asarray(coefficients, dtype=float), idx.shape)
        return idx, np.array(coef)

    @property
    def n_eq(self):
        return len(self._eq_rows)

    @property
    def n_ub(self):
        return len(self._ub_rows)

    @property
    def n_rows(self):
        return self.n_eq + self.n_ub + sum(len(cone) for cone in self.cones)

    @property
    def objective(self):
        return np.array(self._c)

    @property
    def lower(self):
        return np.array(self._lower)

    @property
    def upper(self):
        return np.array(self._upper)

    def equality_matrix(self):
        return _stack_rows(self._eq_rows, self.n_vars), np.array(self._eq_rhs)

    def inequality_matrix(self):
        return _stack_rows(self._ub_rows, self.n_vars), np.array(self._ub_rhs)

    def validate(self):
        """
        Check that every row and cone only refers to existing variables
        """
        for kind, rows in (("equality", self._eq_rows), ("inequality", self._ub_rows)):
            for k, (idx, _) in enumerate(rows):
                if idx.size and (idx.min() < 0 or idx.max() >= self.n_vars):
                    raise IndexError(f"{kind} row {k} refers to a missing variable")
        for k, cone in enumerate(self.cones):
            if not 0 <= cone.bound < self.n_vars:
                raise IndexError(
                    f"cone {k} has bound variable {cone.bound} out of range"
                )
            for idx, _ in cone.rows:
                if idx.size and (idx.min() < 0 or idx.max() >= self.n_vars):
                    raise IndexError(f"cone {k} refers to a missing variable")
        if np.any(self.lower > self.upper):
            raise ValueError("A variable has lower bound greater than its upper bound")
        return self

    def lowered(self):
        return _LoweredProgram(self)

    def to_lp_string(self):
        """
        Write the program in CPLEX LP format, for cross-checks with external solvers.

        Linear cone blocks are written in lowered form. Second-order cones are written
        as quadratic constraints on auxiliary variables.
        """
        low = self.lowered()

        def name(j):
            return f"x{j}"

        def expression(idx, coef):
            terms = [f"{c:+.17g} {name(j)}" for j, c in zip(idx, coef) if c != 0.0]
            return " ".join(terms) if terms else "0 x0"

        lines = [f"\\ {self.name}", "Minimize"]
        c_idx = np.flatnonzero(low.c)
        lines.append(" obj: " + expression(c_idx, low.c[c_idx]))
        lines.append("Subject To")
        for label, matrix, rhs, sense in (
            ("e", low.A_eq, low.b_eq, "="),
            ("u", low.A_ub, low.b_ub, "<="),
        ):
            matrix = matrix.tocsr()
            for k in range(matrix.shape[0]):
                row = matrix.getrow(k)
                lines.append(
                    f" {label}{k}: {expression(row.indices, row.data)} {sense} "
                    f"{rhs[k]:.17g}"
                )
        n_aux = low.n_vars
        for k, (F, f, bound) in enumerate(low.soc_blocks):
            aux = []
            for r in range(F.shape[0]):
                row = F.getrow(r)
                lines.append(
                    f" q{k}_{r}: {expression(row.indices, row.data)} - {name(n_aux)} = "
                    f"{-f[r]:.17g}"
                )
                aux.append(name(n_aux))
                n_aux += 1
            squares = " + ".join(f"{a} ^2" for a in aux)
            lines.append(f" q{k}: [ {squares} - {name(bound)} ^2 ] <= 0")
        lines.append("Bounds")
        for j in range(n_aux):
            lo = low.lower[j] if j < low.n_vars else -np.inf
            hi = low.upper[j] if j < low.n_vars else np.inf
            if np.isinf(lo) and np.isinf(hi):
                lines.append(f" {name(j)} free")
            else:
                lo_s = "-inf" if np.isinf(lo) else f"{lo:.17g}"
                hi_s = "+inf" if np.isinf(hi) else f"{hi:.17g}"
                lines.append(f" {lo_s} <= {name(j)} <= {hi_s}")
        lines.append("End")
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return (
            f"ConicProgram(name={self.name}, n_vars={self.n_vars}, n_eq={self.n_eq}, "
            f"n_ub={self.n_ub}, n_cones={len(self.cones)})"
        )


def _stack_rows(rows, n_cols):
    if not rows:
        return sparse.csr_matrix((0, n_cols))
    row_index = np.concatenate(
        [np.full(len(idx), k, dtype=int) for k, (idx, _) in enumerate(rows)]
    )
    col_index = np.concatenate([idx for idx, _ in rows])
    values = np.concatenate([coef for _, coef in rows])
    return sparse.coo_matrix(
        (values, (row_index, col_index)), shape=(len(rows), n_cols)
    ).tocsr()


class _LoweredProgram:
    """
    ConicProgram with all linear-representable cone blocks turned into rows. Auxiliary
    variables needed by l1 blocks are appended after the program's own variables.
    """

    def __init__(self, program):
        program.validate()
        self.n_program_vars = program.n_vars
        c = list(program.objective)
        lower = list(program.lower)
        upper = list(program.upper)

        A_eq, self.b_eq = program.equality_matrix()
        A_ub, b_ub = program.inequality_matrix()

        ub_rows = []
        ub_rhs = []
        self.soc_blocks = []
        n_vars = program.n_vars
        for cone in program.cones:
            t = cone.bound
            if cone.kind == "linf" or (cone.kind == "l2" and len(cone) == 1):
                for (idx, coef), f in zip(cone.rows, cone.offset):
                    ub_rows.append((np.append(idx, t), np.append(coef, -1.0)))
                    ub_rhs.append(-f)
                    ub_rows.append((np.append(idx, t), np.append(-coef, -1.0)))
                    ub_rhs.append(f)
            elif cone.kind == "l1":
                s = np.arange(n_vars, n_vars + len(cone))
                n_vars += len(cone)
                c.extend([0.0] * len(cone))
                lower.extend([0.0] * len(cone))
                upper.extend([np.inf] * len(cone))
                for (idx, coef), f, s_r in zip(cone.rows, cone.offset, s):
                    ub_rows.append((np.append(idx, s_r), np.append(coef, -1.0)))
                    ub_rhs.append(-f)
                    ub_rows.append((np.append(idx, s_r), np.append(-coef, -1.0)))
                    ub_rhs.append(f)
                ub_rows.append((np.append(s, t), np.append(np.ones(len(s)), -1.0)))
                ub_rhs.append(0.0)
            else:
                self.soc_blocks.append(
                    (_stack_rows(cone.rows, program.n_vars), cone.offset, t)
                )

        self.n_vars = n_vars
        self.c = np.array(c)
        self.constant = program.objective_constant
        self.lower = np.array(lower)
        self.upper = np.array(upper)

        def widen(matrix):
            matrix = matrix.tocsr()
            return sparse.csr_matrix(
                (matrix.data, matrix.indices, matrix.indptr),
                shape=(matrix.shape[0], n_vars),
            )

        self.A_eq = widen(A_eq)
        self.A_ub = sparse.vstack([widen(A_ub), _stack_rows(ub_rows, n_vars)]).tocsr()
        self.b_ub = np.concatenate([b_ub, np.array(ub_rhs)])
        self.soc_blocks = [
            (widen(F), f, t) for F, f, t in self.soc_blocks
        ]


class SolveResult:
    """
    Outcome of :func:`solve`

    Attributes
    ----------
    status : SolveStatus
    value : float
        Optimal objective value (including the constant term). ``-inf`` when
        unbounded, ``+inf`` when infeasible, ``nan`` on an iteration limit.
    x : numpy.ndarray or None
        Primal point restricted to the program's own variables
    dual_bound : float or None
        Objective value of the dual certificate, when available
    ray : numpy.ndarray or None
        Improving direction d with c^T d < 0, attached when unbounded
    iterations : int
    wall_time : float
        Seconds
    backend : str
    """

    def __init__(
        self,
        status,
        value,
        *,
        x=None,
        dual_bound=None,
        ray=None,
        iterations=0,
        wall_time=0.0,
        backend="",
        message="",
    ):
        self.status = status
        self.value = value
        self.x = x
        self.dual_bound = dual_bound
        self.ray = ray
        self.iterations = iterations
        self.wall_time = wall_time
        self.backend = backend
        self.message = message

    @property
    def optimal(self):
        return self.status is SolveStatus.OPTIMAL

    def __repr__(self):
        return (
            f"SolveResult(status={self.status}, value={self.value}, "
            f"iterations={self.iterations}, backend={self.backend})"
        )


def solve(program, tolerance=1.0e-9, iteration_limit=10000):
    """
    Solve a :class:`ConicProgram`

    Parameters
    ----------
    program : ConicProgram
    tolerance : float
        Feasibility and optimality tolerance passed to the backend
    iteration_limit : int

    Returns
    -------
    SolveResult

    Raises
    ------
    NumericalFailure
        When the backend gives up for numerical reasons
    """
    start = time.perf_counter()
    lowered = program.lowered()
    if lowered.soc_blocks:
        result = _solve_cvxopt(lowered, tolerance, iteration_limit)
    else:
        result = _solve_highs(lowered, tolerance, iteration_limit)
    if result.x is not None:
        result.x = result.x[: lowered.n_program_vars]
    if result.ray is not None:
        result.ray = result.ray[: lowered.n_program_vars]
    result.wall_time = time.perf_counter() - start
    return result


def _highs_options(tolerance, iteration_limit):
    tol = max(float(tolerance), _HIGHS_MIN_TOLERANCE)
    return {
        "primal_feasibility_tolerance": tol,
        "dual_feasibility_tolerance": tol,
        "maxiter": int(iteration_limit),
        "presolve": True,
    }


def _linprog(c, A_ub, b_ub, A_eq, b_eq, lower, upper, tolerance, iteration_limit):
    method = "highs-ds" if len(c) <= DENSE_SIMPLEX_LIMIT else "highs"
    return linprog(
        c,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=b_eq if A_eq.shape[0] else None,
        bounds=np.column_stack((lower, upper)),
        method=method,
        options=_highs_options(tolerance, iteration_limit),
    )


def _solve_highs(low, tolerance, iteration_limit):
    res = _linprog(
        low.c,
        low.A_ub,
        low.b_ub,
        low.A_eq,
        low.b_eq,
        low.lower,
        low.upper,
        tolerance,
        iteration_limit,
    )
    iterations = int(getattr(res, "nit", 0) or 0)

    if res.status == 0:
        return SolveResult(
            SolveStatus.OPTIMAL,
            float(res.fun) + low.constant,
            x=np.asarray(res.x),
            dual_bound=_highs_dual_bound(res, low),
            iterations=iterations,
            backend="highs",
            message=res.message,
        )
    if res.status == 1:
        return SolveResult(
            SolveStatus.ITERATION_LIMIT,
            np.nan,
            iterations=iterations,
            backend="highs",
            message=res.message,
        )
    if res.status in (2, 3):
        # HiGHS may only know "infeasible or unbounded", so decide with a
        # feasibility problem
        feasibility = _linprog(
            np.zeros_like(low.c),
            low.A_ub,
            low.b_ub,
            low.A_eq,
            low.b_eq,
            low.lower,
            low.upper,
            tolerance,
            iteration_limit,
        )
        if feasibility.status == 2:
            return SolveResult(
                SolveStatus.INFEASIBLE,
                np.inf,
                iterations=iterations,
                backend="highs",
                message=res.message,
            )
        if feasibility.status != 0:
            raise NumericalFailure(
                f"Could not classify program after status {res.status}: "
                f"{feasibility.message}"
            )
        ray = _improving_ray(low, tolerance, iteration_limit)
        if ray is None:
            raise NumericalFailure(
                "Program reported unbounded but no improving ray was found"
            )
        return SolveResult(
            SolveStatus.UNBOUNDED,
            -np.inf,
            x=np.asarray(feasibility.x),
            ray=ray,
            iterations=iterations,
            backend="highs",
            message=res.message,
        )
    raise NumericalFailure(f"HiGHS failed with status {res.status}: {res.message}")


def _highs_dual_bound(res, low):
    bound = low.constant
    if low.A_eq.shape[0]:
        bound += float(np.dot(low.b_eq, res.eqlin.marginals))
    if low.A_ub.shape[0]:
        bound += float(np.dot(low.b_ub, res.ineqlin.marginals))
    finite = np.isfinite(low.lower)
    bound += float(np.dot(low.lower[finite], np.asarray(res.lower.marginals)[finite]))
    finite = np.isfinite(low.upper)
    bound += float(np.dot(low.upper[finite], np.asarray(res.upper.marginals)[finite]))
    return bound


def _improving_ray(low, tolerance, iteration_limit):
    """
    Find d in the recession cone of the feasible set with c^T d < 0, scaled so that
    c^T d = -1

    The search is over the box |d_i| <= 1, so a direction that improves the
    objective only slowly is still found.
    """
    lower = np.where(np.isfinite(low.lower), 0.0, -1.0)
    upper = np.where(np.isfinite(low.upper), 0.0, 1.0)
    res = _linprog(
        low.c,
        low.A_ub,
        np.zeros(low.A_ub.shape[0]),
        low.A_eq,
        np.zeros(low.A_eq.shape[0]),
        lower,
        upper,
        tolerance,
        iteration_limit,
    )
    if res.status == 0 and res.fun < -_RAY_TOLERANCE:
        return np.asarray(res.x) / -res.fun
    return None


def _independent_rows(A, b):
    """
    Drop linearly dependent equality rows, which cvxopt does not accept
    """
    if A.shape[0] == 0:
        return A, b
    dense = A.toarray()
    _, R, pivots = qr(dense.T, mode="economic", pivoting=True)
    diagonal = np.abs(np.diag(R))
    if diagonal.size == 0:
        return A[:0], b[:0]
    rank = int(np.sum(diagonal > 1.0e-10 * max(diagonal.max(), 1.0)))
    keep = np.sort(pivots[:rank])
    return A[keep], b[keep]


def _to_cvxopt(matrix, n_cols):
    from cvxopt import spmatrix

    matrix = matrix.tocoo()
    return spmatrix(
        matrix.data.tolist(),
        matrix.row.tolist(),
        matrix.col.tolist(),
        (matrix.shape[0], n_cols),
    )


def _solve_cvxopt(low, tolerance, iteration_limit):
    from cvxopt import matrix, solvers

    n = low.n_vars

    # Linear part G_l x <= h_l: inequality rows and finite variable bounds
    bound_rows = []
    bound_rhs = []
    for j in np.flatnonzero(np.isfinite(low.lower)):
        bound_rows.append((np.array([j]), np.array([-1.0])))
        bound_rhs.append(-low.lower[j])
    for j in np.flatnonzero(np.isfinite(low.upper)):
        bound_rows.append((np.array([j]), np.array([1.0])))
        bound_rhs.append(low.upper[j])
    G_blocks = [low.A_ub, _stack_rows(bound_rows, n)]
    h_blocks = [low.b_ub, np.array(bound_rhs)]

    # Second-order cones: s = h - G x with s_0 = t and s_r = F_r x + f_r
    cone_dims = []
    for F, f, t in low.soc_blocks:
        t_row = sparse.csr_matrix(([-1.0], ([0], [t])), shape=(1, n))
        G_blocks.append(sparse.vstack([t_row, -F]))
        h_blocks.append(np.concatenate([[0.0], f]))
        cone_dims.append(F.shape[0] + 1)
    G = sparse.vstack(G_blocks).tocsr()
    h = np.concatenate(h_blocks)
    n_linear = low.A_ub.shape[0] + len(bound_rows)

    A, b = _independent_rows(low.A_eq, low.b_eq)

    # cvxopt needs rank([G; A]) = n, so variables that appear nowhere are removed
    used = np.asarray(
        (abs(G).sum(axis=0) + (abs(A).sum(axis=0) if A.shape[0] else 0)) > 0
    ).ravel()
    if np.any(low.c[~used] != 0.0):
        ray = np.zeros(n)
        j = np.flatnonzero((~used) & (low.c != 0.0))[0]
        ray[j] = -1.0 / low.c[j]
        return SolveResult(
            SolveStatus.UNBOUNDED, -np.inf, ray=ray, backend="cvxopt"
        )
    columns = np.flatnonzero(used)

    tol = max(float(tolerance), _CVXOPT_MIN_TOLERANCE)
    options = {
        "show_progress": False,
        "abstol": tol,
        "reltol": tol,
        "feastol": tol,
        "maxiters": int(iteration_limit),
    }
    try:
        sol = solvers.conelp(
            matrix(low.c[columns]),
            _to_cvxopt(G[:, columns], len(columns)),
            matrix(h),
            {"l": n_linear, "q": cone_dims, "s": []},
            _to_cvxopt(A[:, columns], len(columns)) if A.shape[0] else None,
            matrix(b) if A.shape[0] else None,
            options=options,
        )
    except (ArithmeticError, ValueError) as err:
        raise NumericalFailure(f"cvxopt failed: {err}") from err

    def expand(vector):
        full = np.zeros(n)
        full[columns] = np.array(vector).ravel()
        return full

    iterations = int(sol.get("iterations", 0))
    status = sol["status"]
    if status == "optimal":
        return SolveResult(
            SolveStatus.OPTIMAL,
            float(sol["primal objective"]) + low.constant,
            x=expand(sol["x"]),
            dual_bound=float(sol["dual objective"]) + low.constant,
            iterations=iterations,
            backend="cvxopt",
        )
    if status == "primal infeasible":
        return SolveResult(
            SolveStatus.INFEASIBLE, np.inf, iterations=iterations, backend="cvxopt"
        )
    if status == "dual infeasible":
        return SolveResult(
            SolveStatus.UNBOUNDED,
            -np.inf,
            ray=expand(sol["x"]),
            iterations=iterations,
            backend="cvxopt",
        )
    # status "unknown": accept a slightly inaccurate optimum, otherwise report why
    gap = sol.get("relative gap")
    pinf = sol.get("primal infeasibility")
    dinf = sol.get("dual infeasibility")
    if (
        sol.get("x") is not None
        and gap is not None
        and pinf is not None
        and dinf is not None
        and max(abs(gap), pinf, dinf) <= 1.0e-7
    ):
        warnings.warn(
            f"cvxopt stopped early with relative gap {gap:.3g}; accepting the point"
        )
        return SolveResult(
            SolveStatus.OPTIMAL,
            float(sol["primal objective"]) + low.constant,
            x=expand(sol["x"]),
            dual_bound=float(sol["dual objective"]) + low.constant,
            iterations=iterations,
            backend="cvxopt",
        )
    if iterations >= iteration_limit:
        return SolveResult(
            SolveStatus.ITERATION_LIMIT, np.nan, iterations=iterations, backend="cvxopt"
        )
    raise NumericalFailure(
        f"cvxopt stopped after {iterations} iterations without a usable point"
    )


def solve_transport(costs, supply, demand, tolerance=1.0e-9, iteration_limit=100000):
    """
    Solve the discrete optimal transport problem

    minimise sum_ij costs[i, j] plan[i, j]  subject to  row sums = supply,
    column sums = demand, plan >= 0.

    Returns
    -------
    value : float
    plan : numpy.ndarray
    """
    costs = np.asarray(costs, dtype=float)
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    if costs.ndim != 2 or costs.shape != (len(supply), len(demand)):
        raise DimensionMismatch(
            f"costs have shape {costs.shape} but marginals have lengths "
            f"{len(supply)} and {len(demand)}"
        )
    for label, weights in (("supply", supply), ("demand", demand)):
        if abs(weights.sum() - 1.0) > 1.0e-9:
            raise NotAProbabilityVector(
                f"{label} sums to {weights.sum()}, expected 1 within 1e-9"
            )
    supply = supply / supply.sum()
    demand = demand / demand.sum()

    m, n = costs.shape
    A_eq = sparse.vstack(
        [
            sparse.kron(sparse.eye(m), np.ones((1, n))),
            sparse.kron(np.ones((1, m)), sparse.eye(n)),
        ]
    ).tocsr()
    res = linprog(
        costs.ravel(),
        A_eq=A_eq,
        b_eq=np.concatenate([supply, demand]),
        bounds=(0.0, None),
        method="highs-ds",
        options=_highs_options(tolerance, iteration_limit),
    )
    if res.status != 0:
        raise NumericalFailure(f"Transport problem not solved: {res.message}")
    plan = np.maximum(np.asarray(res.x).reshape(m, n), 0.0)
    return float(res.fun), plan
