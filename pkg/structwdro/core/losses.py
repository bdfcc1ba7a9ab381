"""
Concave piecewise-affine losses l(x) = min_{h in H} h^T [x; 1] over a polytope H, their
symmetrised lifts and the conjugate-membership blocks used to assemble the relaxation
programs.
"""

from functools import cached_property
from itertools import combinations, permutations
import math

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .combinatorics import DEFAULT_CAP, enumerate_tuples, scatter_indices
from .errors import (
    CapExceeded,
    DimensionMismatch,
    EmptyPolytope,
    EmptyTheta,
    InstanceFormatError,
    PreconditionError,
    UnboundedPolytope,
)

# Largest halfspace description converted to vertices by basis enumeration
max_enumeration_rows = 16
max_enumeration_width = 8

vertex_tolerance = 1.0e-9


def _solve_lp(c, W, g, bounds=(None, None)):
    return linprog(c, A_ub=W, b_ub=g, bounds=bounds, method="highs")


def _check_recession_cone(W):
    """
    Raise UnboundedPolytope unless {d : W d <= 0} = {0}
    """
    k = W.shape[1]
    for i in range(k):
        for sign in (1.0, -1.0):
            c = np.zeros(k)
            c[i] = -sign
            res = _solve_lp(c, W, np.zeros(W.shape[0]), bounds=(-1.0, 1.0))
            if res.status == 0 and -res.fun > vertex_tolerance:
                raise UnboundedPolytope(
                    f"Polytope {{h : W h <= g}} is unbounded in coordinate {i}"
                )


def _check_nonempty(W, g):
    res = _solve_lp(np.zeros(W.shape[1]), W, g)
    if res.status == 2:
        raise EmptyPolytope("Polytope {h : W h <= g} is empty")


def _enumerate_vertices(W, g):
    m, k = W.shape
    if m > max_enumeration_rows or k > max_enumeration_width:
        raise CapExceeded(
            "vertex enumeration",
            math.comb(m, k),
            math.comb(max_enumeration_rows, max_enumeration_width),
        )
    found = []
    for rows in combinations(range(m), k):
        rows = list(rows)
        A = W[rows]
        if np.linalg.cond(A) > 1.0e12:
            continue
        h = np.linalg.solve(A, g[rows])
        if np.all(W @ h <= g + vertex_tolerance * (1.0 + np.abs(g))) and not any(
            np.allclose(h, v, atol=vertex_tolerance) for v in found
        ):
            found.append(h)
    if not found:
        raise EmptyPolytope("No vertices found for {h : W h <= g}")
    return np.array(found)


class PolyhedralLoss:
    """
    l(x) = min_{h in H} h^T [x; 1] for x in R^{nN}

    H is given either by its vertices or as {h : W h <= g}; build with
    :meth:`from_vertices` or :meth:`from_halfspaces`.

    Parameters
    ----------
    n : int
        Dimension of one block (the dimension of the nominal distribution)
    N : int
        Number of blocks
    """

    def __init__(self, n, N, *, H=None, W=None, g=None):
        self.n = int(n)
        self.N = int(N)
        width = self.n * self.N + 1
        if (H is None) == (W is None):
            raise ValueError("Give exactly one of H or (W, g)")
        if H is not None:
            H = np.atleast_2d(np.asarray(H, dtype=float))
            if H.shape[1] != width or H.shape[0] < 1:
                raise DimensionMismatch(
                    f"H has shape {H.shape}, expected (k, {width}) with k >= 1"
                )
            H.setflags(write=False)
            self.representation = "vertices"
            self._H = H
            self.W = None
            self.g = None
        else:
            W = np.atleast_2d(np.asarray(W, dtype=float))
            g = np.asarray(g, dtype=float).ravel()
            if W.shape[1] != width or W.shape[0] != g.shape[0]:
                raise DimensionMismatch(
                    f"W has shape {W.shape} and g has shape {g.shape}, expected "
                    f"(m, {width}) and (m,)"
                )
            _check_nonempty(W, g)
            _check_recession_cone(W)
            W.setflags(write=False)
            g.setflags(write=False)
            self.representation = "halfspaces"
            self._H = None
            self.W = W
            self.g = g

    @classmethod
    def from_vertices(cls, H, n, N):
        return cls(n, N, H=H)

    @classmethod
    def from_halfspaces(cls, W, g, n, N):
        return cls(n, N, W=W, g=g)

    @property
    def dimension(self):
        return self.n * self.N

    @cached_property
    def _vertices(self):
        if self._H is not None:
            return self._H
        H = _enumerate_vertices(self.W, self.g)
        H.setflags(write=False)
        return H

    def vertices(self):
        return self._vertices

    def to_halfspaces(self):
        """
        (W, g) with H = {h : W h <= g}

        Vertex sets that are not full-dimensional are described within their affine
        hull: the facets of the hull in hull coordinates, plus each equation of the
        affine hull as a pair of opposite inequalities.
        """
        if self.W is not None:
            return self.W, self.g
        H = self._H
        centre = H.mean(axis=0)
        _, s, Vt = np.linalg.svd(H - centre)
        rank = int(np.sum(s > vertex_tolerance * max(1.0, np.abs(H).max())))
        basis, normals = Vt[:rank], Vt[rank:]
        W = [normals, -normals]
        g = [normals @ centre, -normals @ centre]
        if rank == 1:
            p = (H - centre) @ basis[0]
            W.append(np.vstack([basis[0], -basis[0]]))
            g.append([basis[0] @ centre + p.max(), -(basis[0] @ centre + p.min())])
        elif rank > 1:
            try:
                hull = ConvexHull((H - centre) @ basis.T)
            except (QhullError, ValueError) as err:
                raise PreconditionError(
                    f"Cannot form halfspaces from the vertex set: {err}"
                ) from err
            rows = hull.equations[:, :-1] @ basis
            W.append(rows)
            g.append(rows @ centre - hull.equations[:, -1])
        return np.vstack(W), np.concatenate(g)

    def _check_point(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.dimension:
            raise DimensionMismatch(
                f"Point has dimension {x.shape[0]}, loss expects {self.dimension}"
            )
        return x

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        x = self._check_point(x)
        try:
            H = self._vertices
        except CapExceeded:
            return float(_solve_lp(np.append(x, 1.0), self.W, self.g).fun)
        return float(np.min(H[:, :-1] @ x + H[:, -1]))

    def eval_many(self, X):
        """
        Evaluate at each row of X
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dimension:
            raise DimensionMismatch(
                f"Points have dimension {X.shape[1]}, loss expects {self.dimension}"
            )
        try:
            H = self._vertices
        except CapExceeded:
            return np.array([self.eval(x) for x in X])
        return np.min(X @ H[:, :-1].T + H[:, -1], axis=1)

    def permute_blocks(self, h, perm):
        """
        Apply the block permutation ``perm`` to the a-part of h = [a; b]
        """
        h = np.asarray(h, dtype=float)
        a = h[..., :-1].reshape(h.shape[:-1] + (self.N, self.n))
        a = a[..., list(perm), :].reshape(h.shape[:-1] + (self.dimension,))
        return np.concatenate([a, h[..., -1:]], axis=-1)

    def is_symmetric(self, tolerance=1.0e-9):
        """
        Whether l is invariant under permutations of its N blocks
        """
        H = self._vertices
        for perm in permutations(range(self.N)):
            moved = self.permute_blocks(H, perm)
            for h in moved:
                if not np.any(np.all(np.abs(H - h) <= tolerance, axis=1)):
                    return False
        return True

    def to_dict(self):
        if self.representation == "vertices":
            return {"type": "vertices", "H": self._H.tolist()}
        return {"type": "halfspaces", "W": self.W.tolist(), "g": self.g.tolist()}

    @classmethod
    def from_dict(cls, data, n, N):
        try:
            kind = data["type"]
            if kind == "vertices":
                return cls.from_vertices(data["H"], n, N)
            if kind == "halfspaces":
                return cls.from_halfspaces(data["W"], data["g"], n, N)
        except (KeyError, TypeError) as err:
            raise InstanceFormatError(f"Malformed loss description: {err}") from err
        raise InstanceFormatError(
            f"Unrecognised loss type '{kind}', expected 'vertices' or 'halfspaces'"
        )

    def __repr__(self):
        return (
            f"PolyhedralLoss(n={self.n}, N={self.N}, "
            f"representation={self.representation})"
        )


class ParametricPolyhedralLoss:
    """
    l(theta, x) = min_{h in H(theta)} h^T [x; 1] with
    H(theta) = {h : W h <= G theta + g0} and theta in the box
    [theta_lower, theta_upper]

    The recession cone of H(theta) does not depend on theta, so boundedness is checked
    once. H(theta) may be empty for part of the box, but not for all of it.
    """

    def __init__(self, W, G, g0, theta_lower, theta_upper, n, N):
        self.n = int(n)
        self.N = int(N)
        W = np.atleast_2d(np.asarray(W, dtype=float))
        g0 = np.asarray(g0, dtype=float).ravel()
        theta_lower = np.atleast_1d(np.asarray(theta_lower, dtype=float))
        theta_upper = np.atleast_1d(np.asarray(theta_upper, dtype=float))
        G = np.asarray(G, dtype=float).reshape(W.shape[0], -1)
        width = self.n * self.N + 1
        if W.shape[1] != width or g0.shape[0] != W.shape[0]:
            raise DimensionMismatch(
                f"W has shape {W.shape} and g0 has shape {g0.shape}, expected "
                f"(m, {width}) and (m,)"
            )
        if not (G.shape[1] == theta_lower.shape[0] == theta_upper.shape[0]):
            raise DimensionMismatch(
                f"G has {G.shape[1]} columns but the theta box has "
                f"{theta_lower.shape[0]} and {theta_upper.shape[0]} bounds"
            )
        if np.any(theta_lower > theta_upper):
            raise EmptyTheta(
                f"Decision box is empty: lower {theta_lower} > upper {theta_upper}"
            )
        _check_recession_cone(W)

        # Some theta in the box must give a nonempty H(theta)
        p = G.shape[1]
        res = linprog(
            np.zeros(width + p),
            A_ub=np.hstack([W, -G]),
            b_ub=g0,
            bounds=[(None, None)] * width + list(zip(theta_lower, theta_upper)),
            method="highs",
        )
        if res.status == 2:
            raise EmptyPolytope("H(theta) is empty for every theta in the box")

        for array in (W, G, g0, theta_lower, theta_upper):
            array.setflags(write=False)
        self.W = W
        self.G = G
        self.g0 = g0
        self.theta_lower = theta_lower
        self.theta_upper = theta_upper

    @property
    def n_theta(self):
        return self.G.shape[1]

    @property
    def dimension(self):
        return self.n * self.N

    def g(self, theta):
        return self.G @ np.atleast_1d(np.asarray(theta, dtype=float)) + self.g0

    def at(self, theta):
        """
        The PolyhedralLoss with theta frozen
        """
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if np.any(theta < self.theta_lower - 1.0e-12) or np.any(
            theta > self.theta_upper + 1.0e-12
        ):
            raise PreconditionError(f"theta={theta} is outside the decision box")
        return PolyhedralLoss.from_halfspaces(self.W, self.g(theta), self.n, self.N)

    def eval(self, theta, x):
        return self.at(theta).eval(x)

    def to_dict(self):
        return {
            "type": "halfspaces",
            "W": self.W.tolist(),
            "G": self.G.tolist(),
            "g0": self.g0.tolist(),
            "theta_box": [
                [lo, hi] for lo, hi in zip(self.theta_lower, self.theta_upper)
            ],
        }

    @classmethod
    def from_dict(cls, data, n, N):
        try:
            box = np.asarray(data["theta_box"], dtype=float).reshape(-1, 2)
            return cls(data["W"], data["G"], data["g0"], box[:, 0], box[:, 1], n, N)
        except (KeyError, TypeError) as err:
            raise InstanceFormatError(
                f"Malformed parametric loss description: {err}"
            ) from err

    def __repr__(self):
        return (
            f"ParametricPolyhedralLoss(n={self.n}, N={self.N}, "
            f"n_theta={self.n_theta})"
        )


class QuadraticExampleLoss:
    """
    Closed-form quadratic and cubic example losses on R^2 (n=1, N=2)

    Evaluation only, these are never assembled into programs.
    """

    tags = {
        "variance": lambda x1, x2: 0.5 * (x1 - x2) ** 2,
        "neg_product": lambda x1, x2: -x1 * x2,
        "symmetrization": lambda x1, x2: -2.0 * x1**2 - 2.0 * x1 * x2,
        "cubic": lambda x1, x2: x1 * x2**2,
    }

    n = 1
    N = 2
    dimension = 2

    def __init__(self, tag):
        if tag not in self.tags:
            raise ValueError(
                f"Unrecognised example loss '{tag}', expected one of {list(self.tags)}"
            )
        self.tag = tag
        self._function = self.tags[tag]

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != 2:
            raise DimensionMismatch(f"Point has dimension {x.shape[0]}, expected 2")
        return float(self._function(x[0], x[1]))

    def eval_many(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self._function(X[:, 0], X[:, 1])

    def __repr__(self):
        return f"QuadraticExampleLoss({self.tag})"


def _tuple_index_array(M, N, n, cap):
    tuples = enumerate_tuples(M, N, cap)
    return tuples, np.array([scatter_indices(l, n) for l in tuples], dtype=int)


def sym_lift(loss, N, n, M, x, cap=DEFAULT_CAP):
    """
    ((M - N)!/M!) sum_l loss(x_l) over the non-repeating N-tuples l of range(M)

    ``loss`` is any callable on R^{nN}; if it has an ``eval_many`` method that is used
    to evaluate all tuples at once.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != n * M:
        raise DimensionMismatch(f"Point has dimension {x.shape[0]}, expected {n * M}")
    _, index = _tuple_index_array(M, N, n, cap)
    if hasattr(loss, "eval_many"):
        values = loss.eval_many(x[index])
    else:
        values = np.array([loss(x[i]) for i in index])
    return float(np.mean(values))


def eval_sym_lift(loss, M, x, cap=DEFAULT_CAP):
    if M < loss.N:
        raise PreconditionError(f"Need M >= N, got M={M}, N={loss.N}")
    return sym_lift(loss, loss.N, loss.n, M, x, cap)


def conjugate_eval(f_vertices, z):
    """
    Conjugate f*(z) of the convex function f(x) = max_{h in H'} h^T [x; 1], where H' is
    the convex hull of the rows of ``f_vertices``

    f*(z) = -max{b : [z; b] in H'}, which is +inf when z is outside the projection of H'
    """
    V = np.atleast_2d(np.asarray(f_vertices, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if V.shape[1] != z.shape[0] + 1:
        raise DimensionMismatch(
            f"Vertices have width {V.shape[1]}, expected {z.shape[0] + 1}"
        )
    k = V.shape[0]
    A_eq = np.vstack([V[:, :-1].T, np.ones((1, k))])
    b_eq = np.append(z, 1.0)
    res = linprog(-V[:, -1], A_eq=A_eq, b_eq=b_eq, bounds=(0.0, None), method="highs")
    if res.status == 2:
        return np.inf
    return float(res.fun)


class MembershipBlocks:
    """
    Conjugate-membership variables for one multi-index class of the symmetrised lift
    of ``loss`` to M blocks

    For each non-repeating tuple l there are variables a_l in R^{nN} and b_l with
    [a_l; b_l] in -H. The class vector z = coef * sum_l E_l^T a_l is never a variable:
    :attr:`z_rows` after :meth:`add_to` holds one sparse row per component of z.

    Parameters
    ----------
    loss : PolyhedralLoss or ParametricPolyhedralLoss
    M : int
    representation : str, optional
        "vertices" or "halfspaces". Defaults to the loss's own representation.
    cap : int
    identity_only : bool, optional
        Use the single tuple (0, ..., N-1) with coefficient 1 instead of all tuples
    """

    def __init__(
        self, loss, M, representation=None, cap=DEFAULT_CAP, *, identity_only=False
    ):
        if M < loss.N:
            raise PreconditionError(f"Need M >= N, got M={M}, N={loss.N}")
        self.loss = loss
        self.M = M
        self.parametric = isinstance(loss, ParametricPolyhedralLoss)
        if self.parametric:
            if representation not in (None, "halfspaces"):
                raise PreconditionError(
                    "A parametric loss only has a halfspace representation"
                )
            representation = "halfspaces"
        elif representation is None:
            representation = loss.representation
        if representation not in ("vertices", "halfspaces"):
            raise ValueError(f"Unrecognised representation '{representation}'")
        self.representation = representation
        if identity_only:
            # the unsymmetrised loss: one tuple, only meaningful for M = N
            if M != loss.N:
                raise PreconditionError("identity_only needs M = N")
            self.tuples = [tuple(range(M))]
            self.index = [np.arange(loss.dimension)]
            self.coefficient = 1.0
        else:
            self.tuples, self.index = _tuple_index_array(M, loss.N, loss.n, cap)
            self.coefficient = self.tuples.coefficient

        if self.parametric:
            self._W, self._g = loss.W, loss.g0
        elif representation == "halfspaces":
            self._W, self._g = loss.to_halfspaces()
        else:
            self._V = loss.vertices()

    @property
    def variables_per_tuple(self):
        width = self.loss.dimension + 1
        if self.representation == "vertices":
            return width + self._V.shape[0]
        return width

    @property
    def n_variables(self):
        return len(self.tuples) * self.variables_per_tuple

    def add_to(self, program, theta=None):
        """
        Add the variables and membership constraints of one class to ``program``

        Parameters
        ----------
        program : ConicProgram
        theta : array of int, optional
            Indices of the decision variables, required for a parametric loss

        Returns
        -------
        z_rows : list of (indices, coefficients)
            z[k] = sum(coefficients * x[indices]) for k in range(nM)
        b_indices : numpy.ndarray
            Indices of the b_l, entering the sigma row with weight ``coefficient``
        """
        if self.parametric and theta is None:
            raise PreconditionError("Parametric loss needs the theta variable indices")
        width = self.loss.dimension + 1
        z_parts = [[] for _ in range(self.loss.n * self.M)]
        b_indices = []
        for index in self.index:
            ab = program.add_variables(width)
            a, b = ab[:-1], ab[-1]
            b_indices.append(b)
            for position, variable in zip(index, a):
                z_parts[position].append(variable)

            if self.representation == "vertices":
                V = self._V
                lam = program.add_variables(V.shape[0], lower=0.0)
                program.add_equality(lam, np.ones(V.shape[0]), 1.0)
                # [a; b] = -sum_v lam_v v
                for r in range(width):
                    program.add_equality(
                        np.append(lam, ab[r]), np.append(V[:, r], 1.0), 0.0
                    )
            else:
                # -W [a; b] <= g, or -W [a; b] - G theta <= g0
                for r in range(self._W.shape[0]):
                    if self.parametric:
                        program.add_inequality(
                            np.concatenate([ab, theta]),
                            np.concatenate([-self._W[r], -self.loss.G[r]]),
                            self._g[r],
                        )
                    else:
                        program.add_inequality(ab, -self._W[r], self._g[r])

        z_rows = [
            (np.array(part, dtype=int), np.full(len(part), self.coefficient))
            for part in z_parts
        ]
        return z_rows, np.array(b_indices, dtype=int)


def conjugate_membership_blocks(loss, M, representation=None, cap=DEFAULT_CAP):
    """
    Variable and constraint blocks of the conjugate of the symmetrised lift of
    ``loss`` to M blocks, for one multi-index class
    """
    return MembershipBlocks(loss, M, representation, cap)
