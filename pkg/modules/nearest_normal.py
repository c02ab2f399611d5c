"""
Nearest Normal Matrix Module
Jacobi-sweep baseline for the closest normal matrix to A

The closest normal matrix is U diag(U*AU) U* for the unitary U that
minimizes the off-diagonal energy of U*AU. Each plane rotation below solves
its 2x2 subproblem in closed form, so the off-diagonal energy never grows.
"""

import logging
from dataclasses import dataclass

import numpy as np

from config import JACOBI_MAX_SWEEPS, JACOBI_TOL
from modules.matrix_core import Matrix, as_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NearestNormalResult:
    nearest: Matrix
    distance_sq: float
    sweeps: int
    converged: bool


def off_diagonal_energy(b):
    return float(np.sum(np.abs(b) ** 2) - np.sum(np.abs(np.diag(b)) ** 2))


def plane_rotation(block):
    """
    Best 2x2 unitary for one (i, j) plane

    Maximizing |b_ii|^2 + |b_jj|^2 with the trace fixed is maximizing
    |u* N u| over unit u, N the traceless part of the block: the numerical
    radius of N. Its numerical range is an ellipse with foci at the
    eigenvalues +-lam, so the maximizer is the top eigenvector of the
    Hermitian part of e^{i theta} N with theta = -arg(lam).

    Args:
        block: 2x2 complex array [[b_ii, b_ij], [b_ji, b_jj]]

    Returns:
        (U2, gain) where gain is the increase of |b_ii|^2 + |b_jj|^2
    """
    alpha = 0.5 * (block[0, 0] - block[1, 1])
    n = np.array([[alpha, block[0, 1]], [block[1, 0], -alpha]])
    lam = np.sqrt(alpha * alpha + block[0, 1] * block[1, 0])

    rotated = np.exp(-1j * np.angle(lam)) * n
    hermitian = 0.5 * (rotated + rotated.conj().T)
    _, vecs = np.linalg.eigh(hermitian)
    u = vecs[:, -1]

    radius = abs(np.vdot(u, n @ u))
    # |b_ii|^2 + |b_jj|^2 = (|trace|^2 + 4 |(U*NU)_11|^2) / 2
    gain = 2.0 * (radius ** 2 - abs(alpha) ** 2)

    u2 = np.array([[u[0], -np.conj(u[1])], [u[1], np.conj(u[0])]])
    return u2, gain


def jacobi_sweep(b, q, scale):
    """
    One cyclic sweep over all planes i < j, in place on b (= Q* A Q) and q

    Returns:
        number of rotations applied
    """
    d = b.shape[0]
    applied = 0
    for i in range(d - 1):
        for j in range(i + 1, d):
            idx = [i, j]
            u2, gain = plane_rotation(b[np.ix_(idx, idx)])
            if gain <= 1e-15 * scale:
                continue
            b[:, idx] = b[:, idx] @ u2
            b[idx, :] = u2.conj().T @ b[idx, :]
            q[:, idx] = q[:, idx] @ u2
            applied += 1
    return applied


def nearest_normal(A, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """
    Approximate the closest normal matrix by Jacobi sweeps

    Args:
        A: square Matrix (real input is handled in complex arithmetic)
        tol: stop when a sweep lowers the off-diagonal energy by at most
             tol * ||A||^2
        max_sweeps: sweep cap

    Returns:
        NearestNormalResult; converged=False still gives an upper bound on
        the distance to the normal matrices
    """
    A = as_matrix(A)
    b = A.entries.astype(np.complex128)
    q = np.eye(A.d, dtype=np.complex128)
    scale = max(A.frob_norm() ** 2, np.finfo(float).tiny)

    off = off_diagonal_energy(b)
    sweeps = 0
    converged = off <= tol * scale

    while not converged and sweeps < max_sweeps:
        before = off
        applied = jacobi_sweep(b, q, scale)
        off = off_diagonal_energy(b)
        sweeps += 1
        logger.debug("sweep %d: off-diagonal energy %.6e (%d rotations)", sweeps, off, applied)
        if applied == 0 or before - off <= tol * scale:
            converged = True

    if not converged:
        logger.warning("nearest_normal: %d sweeps exhausted before stagnation", max_sweeps)

    nearest = Matrix((q * np.diag(b)) @ q.conj().T, real=False)
    distance_sq = float(np.sum(np.abs(A.entries - nearest.entries) ** 2))
    return NearestNormalResult(nearest=nearest, distance_sq=distance_sq, sweeps=sweeps, converged=converged)


# Test the module
if __name__ == "__main__":
    from modules.matrix_core import henrici_bound

    print("=" * 50)
    print("NEAREST NORMAL BASELINE")
    print("=" * 50)

    rng = np.random.default_rng(0)
    A = Matrix(rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))).normalized()
    result = nearest_normal(A)
    print(f"Sweeps:          {result.sweeps} (converged={result.converged})")
    print(f"Distance:        {np.sqrt(result.distance_sq):.6f}")
    print(f"Henrici bound:   {henrici_bound(A):.6f}")
