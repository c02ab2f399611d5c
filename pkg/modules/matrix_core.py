"""
Matrix Core Module
Dense complex/real matrices, the non-normal and unbalanced energies,
spectral quantities, structural predicates and random ensembles
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from config import NORMAL_TOL
from modules.errors import (
    DimensionMismatchError,
    EigenSolverError,
    InvalidMatrixError,
    ToleranceError,
)

logger = logging.getLogger(__name__)


class Matrix:
    """
    Immutable square matrix over C, or over R when realness_tag is set

    Real-tagged matrices are stored as float64 and every operation on them
    runs in real arithmetic, so their imaginary parts are exactly zero.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries, real=None):
        """
        Args:
            entries: d x d array-like of numbers
            real: force the realness tag; None infers it from the dtype
        """
        arr = np.array(entries)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise InvalidMatrixError(f"expected a non-empty square matrix, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.number):
            raise InvalidMatrixError(f"matrix entries must be numeric, got dtype {arr.dtype}")
        if not np.all(np.isfinite(arr)):
            raise InvalidMatrixError("matrix entries must be finite")

        if real is None:
            real = not np.iscomplexobj(arr)
        if real:
            if np.iscomplexobj(arr):
                if np.any(arr.imag != 0.0):
                    raise InvalidMatrixError("real-tagged matrix has non-zero imaginary parts")
                arr = arr.real
            arr = arr.astype(np.float64)
        else:
            arr = arr.astype(np.complex128)

        arr.setflags(write=False)
        self._entries = arr

    @property
    def entries(self):
        return self._entries

    @property
    def d(self):
        return self._entries.shape[0]

    @property
    def realness_tag(self):
        return self._entries.dtype == np.float64

    @property
    def H(self):
        """Conjugate transpose A*"""
        return Matrix(self._entries.conj().T)

    def frob_norm(self):
        return float(np.linalg.norm(self._entries))

    def normalized(self):
        norm = self.frob_norm()
        if norm == 0.0:
            raise InvalidMatrixError("cannot normalize the zero matrix")
        return Matrix(self._entries / norm)

    def __add__(self, other):
        return Matrix(self._entries + as_matrix(other).entries)

    def __sub__(self, other):
        return Matrix(self._entries - as_matrix(other).entries)

    def __neg__(self):
        return Matrix(-self._entries)

    def __mul__(self, scalar):
        return Matrix(self._entries * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return Matrix(self._entries @ as_matrix(other).entries)

    def __eq__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.realness_tag == other.realness_tag and np.array_equal(self._entries, other.entries)

    __hash__ = None

    def __repr__(self):
        kind = "real" if self.realness_tag else "complex"
        return f"Matrix(d={self.d}, {kind})"

    # JSON representation: {"d": int, "re": [[...]], "im": [[...]]}, "im" absent for real
    def to_json(self):
        obj = {"d": self.d, "re": self._entries.real.tolist()}
        if not self.realness_tag:
            obj["im"] = self._entries.imag.tolist()
        return obj

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise InvalidMatrixError("matrix JSON must be an object")
        for field in ("d", "re"):
            if field not in obj:
                raise InvalidMatrixError(f"matrix JSON is missing field '{field}'")
        d = obj["d"]
        if isinstance(d, bool) or not isinstance(d, int) or d < 1:
            raise InvalidMatrixError("field 'd' must be a positive integer")

        try:
            re = np.array(obj["re"], dtype=np.float64)
            im = np.array(obj["im"], dtype=np.float64) if "im" in obj else None
        except (TypeError, ValueError) as e:
            raise InvalidMatrixError(f"matrix JSON entries are not numeric: {e}")

        if re.shape != (d, d):
            raise InvalidMatrixError(f"field 're' must be {d}x{d}, got shape {re.shape}")
        if im is None:
            return cls(re, real=True)
        if im.shape != (d, d):
            raise InvalidMatrixError(f"field 'im' must be {d}x{d}, got shape {im.shape}")
        return cls(re + 1j * im, real=False)


def as_matrix(A):
    if isinstance(A, Matrix):
        return A
    return Matrix(A)


def _check_same_dim(A, B):
    if A.d != B.d:
        raise DimensionMismatchError(f"dimension mismatch: {A.d} vs {B.d}")


def read_matrix_json(path):
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidMatrixError(f"{path}: invalid JSON ({e})")
    return Matrix.from_json(obj)


def write_matrix_json(A, path):
    # json writes floats with repr(), which round-trips float64 exactly
    with open(path, "w", encoding="utf-8") as f:
        json.dump(as_matrix(A).to_json(), f, indent=2)


# ---------------------------------------------------------------------------
# Inner product, commutators, energies
# ---------------------------------------------------------------------------

def frob_inner(A, B):
    """Real Frobenius inner product <A, B> = Re tr(B* A)"""
    A, B = as_matrix(A), as_matrix(B)
    _check_same_dim(A, B)
    return float(np.vdot(B.entries, A.entries).real)


def commutator(A, B):
    """[A, B] = AB - BA"""
    A, B = as_matrix(A), as_matrix(B)
    _check_same_dim(A, B)
    a, b = A.entries, B.entries
    return Matrix(a @ b - b @ a)


def self_commutator(A):
    """[A, A*], the momentum map image (Hermitian, traceless)"""
    a = as_matrix(A).entries
    ah = a.conj().T
    return Matrix(a @ ah - ah @ a)


def non_normal_energy(A):
    """E(A) = ||[A, A*]||^2"""
    return float(np.sum(np.abs(self_commutator(A).entries) ** 2))


def diag_project(A):
    """Zero out every off-diagonal entry"""
    A = as_matrix(A)
    return Matrix(np.diag(np.diag(A.entries)), real=A.realness_tag)


def node_imbalances(A):
    """
    Squared row norm minus squared column norm, per index

    This is the (real) diagonal of [A, A*]; for the square-root matrix of a
    weighted digraph it is out-weight minus in-weight at each node.

    Returns:
        float64 vector of length d
    """
    sq = np.abs(as_matrix(A).entries) ** 2
    return sq.sum(axis=1) - sq.sum(axis=0)


def unbalanced_energy(A):
    """B(A) = ||diag([A, A*])||^2"""
    delta = node_imbalances(A)
    return float(delta @ delta)


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Spectrum:
    values: tuple

    def __len__(self):
        return len(self.values)

    def as_array(self):
        return np.array(self.values, dtype=np.complex128)

    def s_value(self):
        return float(np.sum(np.abs(self.as_array()) ** 2))


def spectrum(A):
    """
    Eigenvalues with multiplicity (LAPACK geev: balancing, Hessenberg
    reduction, shifted QR)

    Raises:
        EigenSolverError: QR iteration failed to converge
    """
    A = as_matrix(A)
    try:
        values = np.linalg.eigvals(A.entries)
    except np.linalg.LinAlgError as e:
        raise EigenSolverError(f"eigenvalue iteration did not converge: {e}")
    return Spectrum(tuple(complex(v) for v in values))


def spectral_s(A):
    """s(A) = sum |lambda_i|^2; vanishes exactly on nilpotents"""
    return spectrum(A).s_value()


def henrici_departure(A):
    """Hen(A) = ||A||^2 - s(A)"""
    A = as_matrix(A)
    return A.frob_norm() ** 2 - spectral_s(A)


def henrici_bound(A):
    """Upper bound ((d^3 - d)/12 * E(A))^(1/4) on the distance to the normal matrices"""
    A = as_matrix(A)
    d = A.d
    return float(((d ** 3 - d) / 12.0 * non_normal_energy(A)) ** 0.25)


# ---------------------------------------------------------------------------
# Structural predicates
# ---------------------------------------------------------------------------

def _check_tol(tol):
    if not tol > 0:
        raise ToleranceError(f"tolerance must be positive, got {tol}")


def is_normal(A, tol=NORMAL_TOL):
    _check_tol(tol)
    A = as_matrix(A)
    return non_normal_energy(A) <= tol ** 2 * A.frob_norm() ** 4


def is_balanced(A, tol=NORMAL_TOL):
    _check_tol(tol)
    A = as_matrix(A)
    return unbalanced_energy(A) <= tol ** 2 * A.frob_norm() ** 4


def is_nilpotent(A, tol=NORMAL_TOL):
    _check_tol(tol)
    A = as_matrix(A)
    return spectral_s(A) <= tol * A.frob_norm() ** 2


# ---------------------------------------------------------------------------
# Random ensembles
# ---------------------------------------------------------------------------

class EnsembleKind(str, Enum):
    COMPLEX_GINIBRE = "complex-ginibre"
    REAL_GINIBRE = "real-ginibre"
    NEAR_NORMAL = "near-normal"


@dataclass(frozen=True)
class RandomEnsembleSpec:
    """
    Seeded description of a random matrix

    The generator is numpy's PCG64 seeded with `seed`; experiments give each
    trial its own seed spawned from a master SeedSequence.
    """

    kind: EnsembleKind
    d: int
    seed: int
    normalize: bool = True
    sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EnsembleKind(self.kind))
        if self.d < 1:
            raise InvalidMatrixError(f"ensemble dimension must be positive, got {self.d}")
        if self.sigma < 0:
            raise InvalidMatrixError(f"sigma must be non-negative, got {self.sigma}")


def _complex_gaussian(rng, d):
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))


def random_matrix(spec):
    """
    Draw a matrix from a seeded ensemble

    complex-ginibre: real and imaginary parts i.i.d. N(0, 1)
    real-ginibre:    entries i.i.d. N(0, 1), real-tagged
    near-normal:     nearest normal matrix to a unit-norm complex Ginibre
                     draw, plus N(0, sigma) noise on real and imaginary parts

    Args:
        spec: RandomEnsembleSpec

    Returns:
        Matrix, unit Frobenius norm when spec.normalize is set
    """
    rng = np.random.default_rng(spec.seed)
    d = spec.d

    if spec.kind is EnsembleKind.REAL_GINIBRE:
        A = Matrix(rng.standard_normal((d, d)), real=True)
    elif spec.kind is EnsembleKind.COMPLEX_GINIBRE:
        A = Matrix(_complex_gaussian(rng, d))
    else:
        from modules.nearest_normal import nearest_normal

        base = Matrix(_complex_gaussian(rng, d)).normalized()
        center = nearest_normal(base).nearest
        if spec.sigma > 0:
            noise = spec.sigma * _complex_gaussian(rng, d)
            A = Matrix(center.entries + noise)
        else:
            A = center

    if spec.normalize:
        A = A.normalized()
    return A
