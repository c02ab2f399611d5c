"""Shared fixtures and matrix builders for the test suite"""

import numpy as np
import pytest

from modules.digraph import WeightedDigraph, random_digraph
from modules.matrix_core import Matrix


def complex_gaussian(seed, d):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))


def random_complex(seed, d, unit=False):
    A = Matrix(complex_gaussian(seed, d))
    return A.normalized() if unit else A


def random_real(seed, d, unit=False):
    A = Matrix(np.random.default_rng(seed).standard_normal((d, d)), real=True)
    return A.normalized() if unit else A


def random_unitary(seed, d):
    q, r = np.linalg.qr(complex_gaussian(seed, d))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_normal(seed, d):
    """U diag(z) U* with random unitary U and complex Gaussian z, unit norm"""
    u = random_unitary(seed, d)
    z = complex_gaussian(seed + 10_000, d)[0]
    return Matrix((u * z) @ u.conj().T).normalized()


def strictly_upper(seed, d):
    return Matrix(np.triu(np.random.default_rng(seed).standard_normal((d, d)), k=1), real=True)


@pytest.fixture
def jordan():
    """The unit-norm nilpotent [[0, 1], [0, 0]]"""
    return Matrix([[0.0, 1.0], [0.0, 0.0]], real=True)


@pytest.fixture
def three_cycle():
    return WeightedDigraph.from_edges(["1", "2", "3"], [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)])


@pytest.fixture
def small_fixture():
    """Seeded 6-node / 15-edge strongly connected digraph"""
    return random_digraph(6, 15, seed=7)


@pytest.fixture
def dag_fixture():
    return WeightedDigraph.from_edges(
        ["a", "b", "c", "d"],
        [(0, 1, 2.0), (0, 2, 0.5), (1, 2, 1.0), (1, 3, 3.0), (2, 3, 0.25)],
    )
