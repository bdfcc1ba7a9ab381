"""
Finitely supported probability measures, their product powers and mixtures, and exact
Wasserstein distances for ground costs built from a norm of the difference.
"""

from itertools import product
import math

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import wasserstein_distance

from .conic import DUAL_NORM, NORM_KINDS, solve_transport
from .errors import (
    CapExceeded,
    DimensionMismatch,
    InstanceFormatError,
    NegativeWeight,
    NotAProbabilityVector,
    ZeroTotalMass,
)

# Atoms closer than this in every coordinate are merged
atom_tolerance = 1.0e-12

# Total mass within this distance of one is rescaled, otherwise it is an error
mass_tolerance = 1.0e-9

_cdist_metric = {"l1": "cityblock", "l2": "euclidean", "linf": "chebyshev"}
_ord = {"l1": 1, "l2": 2, "linf": np.inf}


def _as_atom_array(atoms):
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim == 1:
        # list of scalars is a list of 1d points
        atoms = atoms[:, np.newaxis]
    if atoms.ndim != 2:
        raise DimensionMismatch(
            f"atoms should be a list of points, got array with shape {atoms.shape}"
        )
    return atoms


class DiscreteDistribution:
    """
    Probability measure sum_i weights[i] * delta(atoms[i])

    Use :func:`make_distribution` to build one from user input; the constructor only
    checks consistency and does not merge duplicate atoms.

    Parameters
    ----------
    atoms : array-like, shape (n_atoms, dimension)
    weights : array-like, shape (n_atoms,)
    """

    def __init__(self, atoms, weights):
        atoms = _as_atom_array(atoms)
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or atoms.shape[0] != weights.shape[0]:
            raise DimensionMismatch(
                f"{atoms.shape[0]} atoms but weights have shape {weights.shape}"
            )
        if atoms.shape[0] == 0:
            raise DimensionMismatch("A distribution needs at least one atom")
        if np.any(weights < 0.0):
            raise NegativeWeight(f"Negative weight in {weights}")
        if abs(weights.sum() - 1.0) > mass_tolerance:
            raise NotAProbabilityVector(
                f"weights sum to {weights.sum()}, expected 1 within {mass_tolerance}"
            )
        atoms.setflags(write=False)
        weights.setflags(write=False)
        self.atoms = atoms
        self.weights = weights

    @property
    def n_atoms(self):
        return self.atoms.shape[0]

    @property
    def dimension(self):
        return self.atoms.shape[1]

    def mean(self):
        return self.weights @ self.atoms

    def expectation(self, function):
        """
        Integral of ``function`` (called on one atom at a time) with respect to this
        distribution
        """
        return float(
            sum(w * function(x) for x, w in zip(self.atoms, self.weights) if w > 0.0)
        )

    def to_dict(self):
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data):
        try:
            return make_distribution(data["atoms"], data["weights"])
        except (KeyError, TypeError) as err:
            raise InstanceFormatError(
                f"A distribution needs 'atoms' and 'weights' entries: {err}"
            ) from err

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms) and np.array_equal(
            self.weights, other.weights
        )

    def __repr__(self):
        return (
            f"DiscreteDistribution(n_atoms={self.n_atoms}, dimension={self.dimension})"
        )


def make_distribution(atoms, weights):
    """
    Create a DiscreteDistribution, rescaling the weights to unit mass and merging
    atoms that coincide within ``atom_tolerance``

    Raises
    ------
    DimensionMismatch, NegativeWeight, ZeroTotalMass, NotAProbabilityVector
    """
    atoms = _as_atom_array(atoms)
    weights = np.asarray(weights, dtype=float).ravel()
    if atoms.shape[0] != weights.shape[0]:
        raise DimensionMismatch(
            f"Got {atoms.shape[0]} atoms but {weights.shape[0]} weights"
        )
    if atoms.shape[0] == 0:
        raise DimensionMismatch("A distribution needs at least one atom")
    if np.any(weights < 0.0):
        raise NegativeWeight(f"Negative weight in {weights}")
    total = weights.sum()
    if total == 0.0:
        raise ZeroTotalMass("Weights sum to zero")
    if abs(total - 1.0) > mass_tolerance:
        raise NotAProbabilityVector(
            f"weights sum to {total}, expected 1 within {mass_tolerance}"
        )
    weights = weights / total

    kept_atoms = []
    kept_weights = []
    for x, w in zip(atoms, weights):
        if kept_atoms:
            close = np.all(
                np.abs(np.array(kept_atoms) - x) <= atom_tolerance, axis=1
            ).nonzero()[0]
            if close.size:
                kept_weights[close[0]] += w
                continue
        kept_atoms.append(x)
        kept_weights.append(w)

    return DiscreteDistribution(np.array(kept_atoms), np.array(kept_weights))


class TransportCost:
    """
    Ground cost c(x, y) = sum_j ||x_j - y_j||^power over ``blocks`` coordinate blocks
    of size ``dimension``

    ``lift(M)`` gives the cost on M-fold products, which is again a sum over blocks.

    Parameters
    ----------
    norm_kind : str
        "l1", "l2" or "linf"
    dimension : int
        Size of one coordinate block
    blocks : int, optional
    power : int, optional
        1 or 2. Program builders only accept ``power=1``.
    """

    def __init__(self, norm_kind, dimension, blocks=1, power=1):
        if norm_kind not in NORM_KINDS:
            raise ValueError(
                f"Unrecognised norm kind '{norm_kind}', expected one of {NORM_KINDS}"
            )
        if dimension < 1 or blocks < 1:
            raise ValueError("dimension and blocks must be positive")
        if power not in (1, 2):
            raise ValueError(f"power must be 1 or 2, got {power}")
        self.norm_kind = norm_kind
        self.dimension = int(dimension)
        self.blocks = int(blocks)
        self.power = int(power)

    @property
    def total_dimension(self):
        return self.dimension * self.blocks

    @property
    def dual_norm(self):
        return DUAL_NORM[self.norm_kind]

    def lift(self, M):
        return TransportCost(
            self.norm_kind, self.dimension, self.blocks * M, self.power
        )

    def norm(self, v):
        v = np.asarray(v, dtype=float).ravel()
        return float(np.linalg.norm(v, ord=_ord[self.norm_kind]))

    def __call__(self, x, y):
        diff = (np.asarray(x, dtype=float) - np.asarray(y, dtype=float)).reshape(
            self.blocks, self.dimension
        )
        return float(
            np.sum(np.linalg.norm(diff, ord=_ord[self.norm_kind], axis=1) ** self.power)
        )

    def pairwise(self, X, Y):
        """
        Matrix of costs between the rows of X and the rows of Y
        """
        X = _as_atom_array(X)
        Y = _as_atom_array(Y)
        for Z in (X, Y):
            if Z.shape[1] != self.total_dimension:
                raise DimensionMismatch(
                    f"Points have dimension {Z.shape[1]}, cost expects "
                    f"{self.total_dimension}"
                )
        result = np.zeros((X.shape[0], Y.shape[0]))
        for j in range(self.blocks):
            block = slice(j * self.dimension, (j + 1) * self.dimension)
            result += (
                cdist(X[:, block], Y[:, block], metric=_cdist_metric[self.norm_kind])
                ** self.power
            )
        return result

    def __eq__(self, other):
        if not isinstance(other, TransportCost):
            return NotImplemented
        return (self.norm_kind, self.dimension, self.blocks, self.power) == (
            other.norm_kind,
            other.dimension,
            other.blocks,
            other.power,
        )

    def __repr__(self):
        return (
            f"TransportCost(norm_kind={self.norm_kind}, dimension={self.dimension}, "
            f"blocks={self.blocks}, power={self.power})"
        )


class Coupling:
    """
    Transport plan between two distributions

    Parameters
    ----------
    plan : array-like, shape (P.n_atoms, Q.n_atoms)
    P, Q : DiscreteDistribution
        The marginals, checked to within 1e-8
    """

    marginal_tolerance = 1.0e-8

    def __init__(self, plan, P, Q):
        plan = np.asarray(plan, dtype=float)
        if plan.shape != (P.n_atoms, Q.n_atoms):
            raise DimensionMismatch(
                f"plan has shape {plan.shape}, expected {(P.n_atoms, Q.n_atoms)}"
            )
        if np.any(plan < 0.0):
            raise NegativeWeight("Transport plan has negative entries")
        if np.max(np.abs(plan.sum(axis=1) - P.weights)) > self.marginal_tolerance or (
            np.max(np.abs(plan.sum(axis=0) - Q.weights)) > self.marginal_tolerance
        ):
            raise NotAProbabilityVector("Transport plan marginals do not match")
        plan.setflags(write=False)
        self.plan = plan
        self.P = P
        self.Q = Q

    def value(self, costs):
        return float(np.sum(self.plan * costs))

    def __repr__(self):
        return f"Coupling(shape={self.plan.shape})"


def product_power(P, M, cap):
    """
    The M-fold product measure P x ... x P, with atoms in lexicographic order of the
    atom index tuples

    Raises
    ------
    CapExceeded
        If P.n_atoms**M is larger than ``cap``
    """
    if M < 1:
        raise ValueError(f"M must be positive, got {M}")
    size = P.n_atoms**M
    if size > cap:
        raise CapExceeded("product distribution", size, cap)
    index = np.array(list(product(range(P.n_atoms), repeat=M)), dtype=int)
    atoms = P.atoms[index].reshape(size, M * P.dimension)
    weights = np.prod(P.weights[index], axis=1)
    # exact product weights can drift from unit mass by rounding only
    return DiscreteDistribution(atoms, weights / weights.sum())


def mixture(components):
    """
    sum_k weight_k * P_k for a list of ``(weight_k, P_k)`` pairs
    """
    if len(components) == 0:
        raise NotAProbabilityVector("A mixture needs at least one component")
    mixing = np.array([w for w, _ in components], dtype=float)
    if np.any(mixing < 0.0) or abs(mixing.sum() - 1.0) > mass_tolerance:
        raise NotAProbabilityVector(
            f"Mixture weights {mixing} are not a probability vector"
        )
    dimensions = {P.dimension for _, P in components}
    if len(dimensions) != 1:
        raise DimensionMismatch(f"Mixture components have dimensions {dimensions}")
    atoms = np.concatenate([P.atoms for _, P in components])
    weights = np.concatenate([w * P.weights for w, P in components])
    return make_distribution(atoms, weights)


def _check_dimensions(P, Q, cost):
    if P.dimension != Q.dimension:
        raise DimensionMismatch(
            f"Distributions have dimensions {P.dimension} and {Q.dimension}"
        )
    if cost.total_dimension != P.dimension:
        raise DimensionMismatch(
            f"Cost acts on dimension {cost.total_dimension}, distributions have "
            f"dimension {P.dimension}"
        )


def wasserstein_exact(P, Q, cost, tolerance=1.0e-9):
    """
    Optimal transport cost between P and Q, solved as a linear program

    Returns
    -------
    value : float
    plan : Coupling
    """
    _check_dimensions(P, Q, cost)
    if P == Q:
        return 0.0, Coupling(np.diag(P.weights), P, Q)
    value, plan = solve_transport(
        cost.pairwise(P.atoms, Q.atoms), P.weights, Q.weights, tolerance=tolerance
    )
    return max(value, 0.0), Coupling(plan, P, Q)


def wasserstein_1d(P, Q):
    """
    Transport cost |x - y| between one-dimensional distributions, from the sorted
    monotone coupling
    """
    if P.dimension != 1 or Q.dimension != 1:
        raise DimensionMismatch("wasserstein_1d needs one-dimensional distributions")
    return float(
        wasserstein_distance(P.atoms[:, 0], Q.atoms[:, 0], P.weights, Q.weights)
    )


def normalized_mixture_product_distance(nu, nominal, M, cost, cap):
    """
    (1/M) W_{c^M}(sum_k nu_k P_k^M, nominal^M)

    ``nu`` is a list of ``(weight, DiscreteDistribution)`` pairs. The value is
    nondecreasing in M and bounded by sum_k nu_k W_c(P_k, nominal).
    """
    mixed = mixture([(w, product_power(P, M, cap)) for w, P in nu])
    target = product_power(nominal, M, cap)
    size = mixed.n_atoms * target.n_atoms
    if size > cap:
        raise CapExceeded("transport plan", size, cap)
    value, _ = wasserstein_exact(mixed, target, cost.lift(M))
    return value / M


def expected_transport_bound(nu, nominal, cost):
    """
    sum_k nu_k W_c(P_k, nominal), the limit bound for
    :func:`normalized_mixture_product_distance`
    """
    return math.fsum(w * wasserstein_exact(P, nominal, cost)[0] for w, P in nu)
