"""
Index bookkeeping for symmetrised lifts

Tuples and atom indices are 0-based throughout.
"""

from collections import Counter
from itertools import combinations_with_replacement, permutations
import math

import numpy as np

from .errors import CapExceeded, DimensionMismatch, PreconditionError

# Default limit on the number of scalar variables (and on intermediate enumerations)
DEFAULT_CAP = 5_000_000


def n_tuples(M, N):
    """
    Number of non-repeating N-tuples from range(M), M!/(M-N)!
    """
    return math.perm(M, N)


def n_classes(n_atoms, M):
    """
    Number of multisets of size M from n_atoms symbols
    """
    return math.comb(M + n_atoms - 1, M)


class TupleSet:
    """
    All injective maps range(N) -> range(M), in lexicographic order

    The set is not stored; iterating regenerates it.
    """

    def __init__(self, M, N):
        self.M = M
        self.N = N

    def __len__(self):
        return n_tuples(self.M, self.N)

    def __iter__(self):
        return permutations(range(self.M), self.N)

    @property
    def coefficient(self):
        """
        (M - N)! / M!, the weight of each tuple in the symmetrised lift
        """
        return 1.0 / len(self)

    def __repr__(self):
        return f"TupleSet(M={self.M}, N={self.N})"


def enumerate_tuples(M, N, cap=DEFAULT_CAP):
    if not 1 <= N <= M:
        raise PreconditionError(f"Need 1 <= N <= M, got N={N}, M={M}")
    size = n_tuples(M, N)
    if size > cap:
        raise CapExceeded("tuple set", size, cap)
    return TupleSet(M, N)


class MultiIndexClass:
    """
    A permutation class of atom-index tuples in range(n_atoms)**M

    Attributes
    ----------
    representative : tuple of int
        Sorted (nondecreasing) member of the class
    size : int
        Number of distinct members, M! / prod(multiplicity!)
    weight : float
        Probability of the class under the product of the nominal distribution
    """

    def __init__(self, representative, weights):
        self.representative = tuple(sorted(representative))
        counts = Counter(self.representative)
        M = len(self.representative)
        self.size = math.factorial(M) // math.prod(
            math.factorial(c) for c in counts.values()
        )
        self.weight = float(self.size) * math.prod(
            float(weights[i]) for i in self.representative
        )

    @property
    def M(self):
        return len(self.representative)

    def __repr__(self):
        return (
            f"MultiIndexClass(representative={self.representative}, size={self.size}, "
            f"weight={self.weight})"
        )


def enumerate_classes(n_atoms, M, *, weights=None, cap=DEFAULT_CAP):
    """
    One MultiIndexClass per multiset of size M, ordered lexicographically by
    representative

    Parameters
    ----------
    n_atoms : int
    M : int
    weights : array-like, optional
        Atom probabilities of the nominal distribution, uniform if not given
    cap : int
    """
    if n_atoms < 1 or M < 1:
        raise PreconditionError(f"Need n_atoms >= 1 and M >= 1, got {n_atoms}, {M}")
    size = n_classes(n_atoms, M)
    if size > cap:
        raise CapExceeded("multi-index class list", size, cap)
    if weights is None:
        weights = np.full(n_atoms, 1.0 / n_atoms)
    elif len(weights) != n_atoms:
        raise DimensionMismatch(f"Got {len(weights)} weights for {n_atoms} atoms")
    return [
        MultiIndexClass(rep, weights)
        for rep in combinations_with_replacement(range(n_atoms), M)
    ]


def canonical_selector(index_class):
    return tuple(sorted(index_class.representative))


def class_members(index_class):
    """
    All distinct members of the class, in lexicographic order
    """
    counts = Counter(index_class.representative)
    symbols = sorted(counts)
    M = index_class.M
    members = []

    def extend(prefix):
        if len(prefix) == M:
            members.append(tuple(prefix))
            return
        for s in symbols:
            if counts[s] > 0:
                counts[s] -= 1
                prefix.append(s)
                extend(prefix)
                prefix.pop()
                counts[s] += 1

    extend([])
    return members


def random_member(index_class, rng):
    """
    A uniformly random member of the class, drawn with the numpy Generator ``rng``
    """
    return tuple(int(i) for i in rng.permutation(index_class.representative))


def scatter_indices(l, n):
    """
    Positions in R^{nM} of the N blocks of a vector in R^{nN} placed at block
    positions ``l``
    """
    return (np.asarray(l, dtype=int)[:, np.newaxis] * n + np.arange(n)).ravel()


def scatter(l, a, n, M):
    """
    E_l^T a: put block k of ``a`` at block position l[k] of a zero vector in R^{nM}
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (n * len(l),):
        raise DimensionMismatch(f"a has shape {a.shape}, expected ({n * len(l)},)")
    if max(l) >= M:
        raise DimensionMismatch(f"tuple {l} does not fit in {M} blocks")
    result = np.zeros(n * M)
    result[scatter_indices(l, n)] = a
    return result


def gather(l, x, n):
    """
    E_l x = (x_{l_0}, ..., x_{l_{N-1}})
    """
    return np.asarray(x, dtype=float)[scatter_indices(l, n)]
