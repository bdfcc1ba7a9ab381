from itertools import product
import math

import numpy as np
import pytest

from .utils_for_tests import tight_approx
from structwdro.core.combinatorics import (
    MultiIndexClass,
    canonical_selector,
    class_members,
    enumerate_classes,
    enumerate_tuples,
    gather,
    n_classes,
    random_member,
    scatter,
    scatter_indices,
)
from structwdro.core.errors import CapExceeded, DimensionMismatch, PreconditionError


class TestTuples:
    def test_three_choose_two(self):
        tuples = enumerate_tuples(3, 2)
        assert list(tuples) == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
        assert len(tuples) == 6
        assert tuples.coefficient == tight_approx(1.0 / 6.0)

    def test_square(self):
        assert list(enumerate_tuples(2, 2)) == [(0, 1), (1, 0)]

    def test_precondition(self):
        with pytest.raises(PreconditionError):
            enumerate_tuples(2, 3)

    def test_cap(self):
        with pytest.raises(CapExceeded):
            enumerate_tuples(10, 3, cap=100)

    @pytest.mark.parametrize("M,N", [(2, 1), (4, 2), (5, 3), (6, 6)])
    def test_count(self, M, N):
        tuples = list(enumerate_tuples(M, N))
        assert len(tuples) == math.factorial(M) // math.factorial(M - N)
        assert all(len(set(l)) == N for l in tuples)


class TestClasses:
    def test_binomial_row(self):
        classes = enumerate_classes(2, 3)
        assert [c.size for c in classes] == [1, 3, 3, 1]
        assert [c.representative for c in classes] == [
            (0, 0, 0),
            (0, 0, 1),
            (0, 1, 1),
            (1, 1, 1),
        ]

    def test_class_weight(self):
        classes = enumerate_classes(2, 3, weights=[0.25, 0.75])
        assert classes[1].representative == (0, 0, 1)
        assert classes[1].weight == tight_approx(0.140625)

    def test_single_atom(self):
        classes = enumerate_classes(1, 5)
        assert len(classes) == 1
        assert classes[0].weight == tight_approx(1.0)

    def test_weights_and_sizes_sum(self):
        rng = np.random.default_rng(10)
        for n_atoms in range(1, 5):
            for M in range(1, 9):
                weights = rng.dirichlet(np.ones(n_atoms))
                classes = enumerate_classes(n_atoms, M, weights=weights)
                assert sum(c.weight for c in classes) == pytest.approx(1.0, abs=1.0e-9)
                assert sum(c.size for c in classes) == n_atoms**M
                assert len(classes) == n_classes(n_atoms, M)

    @pytest.mark.parametrize("n_atoms,M", [(2, 4), (3, 3), (3, 6), (4, 2)])
    def test_against_direct_enumeration(self, n_atoms, M):
        multisets = {tuple(sorted(i)) for i in product(range(n_atoms), repeat=M)}
        classes = enumerate_classes(n_atoms, M)
        assert len(classes) == len(multisets) == math.comb(M + n_atoms - 1, M)
        assert {c.representative for c in classes} == multisets

    def test_large_multinomial_is_exact(self):
        # 25! overflows 64-bit integers
        index_class = MultiIndexClass((0,) * 12 + (1,) * 13, [0.5, 0.5])
        assert index_class.size == math.comb(25, 12)

    def test_cap(self):
        with pytest.raises(CapExceeded):
            enumerate_classes(5, 20, cap=1000)


class TestSelectors:
    def test_canonical(self):
        assert canonical_selector(MultiIndexClass((0, 0, 1), [0.5, 0.5])) == (0, 0, 1)
        assert canonical_selector(MultiIndexClass((1, 1, 1), [0.5, 0.5])) == (1, 1, 1)
        assert canonical_selector(MultiIndexClass((1, 0, 0), [0.5, 0.5])) == (0, 0, 1)

    def test_members(self):
        members = class_members(MultiIndexClass((0, 0, 1), [0.5, 0.5]))
        assert members == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]
        for index_class in enumerate_classes(3, 4):
            assert len(class_members(index_class)) == index_class.size

    def test_random_member(self):
        rng = np.random.default_rng(11)
        index_class = MultiIndexClass((0, 1, 1, 2), [0.2, 0.3, 0.5])
        members = set(class_members(index_class))
        for _ in range(20):
            assert random_member(index_class, rng) in members


class TestScatter:
    def test_swap(self):
        u, v = 3.0, 5.0
        assert scatter((1, 0), [u, v], 1, 2).tolist() == [v, u]

    def test_gap(self):
        assert scatter((0, 2), [3.0, 5.0], 1, 3).tolist() == [3.0, 0.0, 5.0]

    def test_identity_placement(self):
        assert scatter((0, 1), [3.0, 5.0], 1, 3).tolist() == [3.0, 5.0, 0.0]

    def test_blocks(self):
        assert scatter_indices((2, 0), 2).tolist() == [4, 5, 0, 1]

    def test_errors(self):
        with pytest.raises(DimensionMismatch):
            scatter((0, 1), [1.0, 2.0, 3.0], 1, 2)
        with pytest.raises(DimensionMismatch):
            scatter((0, 3), [1.0, 2.0], 1, 3)

    def test_adjoint(self):
        rng = np.random.default_rng(12)
        n, M = 2, 4
        for l in enumerate_tuples(M, 3):
            a = rng.normal(size=3 * n)
            x = rng.normal(size=M * n)
            assert scatter(l, a, n, M) @ x == pytest.approx(
                a @ gather(l, x, n), abs=1.0e-12
            )
