"""
Gradient Flows Module
Gradients of the non-normal energy E, the unbalanced energy B and their
restrictions to the unit Frobenius sphere, plus the descent integrator

Two integrators are available:
    orbit  (default) the gradient step written as a similarity,
           A <- e^{-4hC} A e^{4hC} with C = [A, A*], or
           a_ij <- a_ij * exp(-4h(d_i - d_j)) for the unbalanced energy.
           Spectrum, principal minors, realness, zeros and signs are kept
           up to rounding. The non-normal energy steps on a Schur form
           (see SchurFrame), which keeps the eigenvalues exact.
    euler  the plain step A <- A - h grad, with the unbalanced energy in
           the multiplicative form a_ij <- a_ij * (1 - 4h(d_i - d_j)),
           capped at EULER_MAX_STEP / ||A||^2. It does not keep the
           spectrum; unconstrained runs whose spectrum drifts past
           SPECTRUM_DRIFT_TOL carry a warning on the result.
Constrained kinds renormalize after every step.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.linalg import schur, solve_triangular
from scipy.optimize import linear_sum_assignment

import config
from modules.errors import DimensionMismatchError, NonFiniteFlowError, NotOnSphereError
from modules.matrix_core import (
    Matrix,
    as_matrix,
    commutator,
    frob_inner,
    is_nilpotent,
    node_imbalances,
    non_normal_energy,
    self_commutator,
    spectral_s,
    spectrum,
    unbalanced_energy,
)

logger = logging.getLogger(__name__)

SPHERE_INIT_TOL = 1e-12
NORM_GROWTH_SLACK = 1e-13


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------

def _require_unit_norm(A, tol=config.UNIT_NORM_TOL):
    norm = A.frob_norm()
    if abs(norm - 1.0) > tol:
        raise NotOnSphereError(f"expected a unit Frobenius norm matrix, got norm {norm:.17g}")


def grad_E(A):
    """Euclidean gradient of E: -4[A, [A, A*]]"""
    A = as_matrix(A)
    return -4.0 * commutator(A, self_commutator(A))


def grad_E_sphere(A):
    """Intrinsic gradient of E on the unit sphere: -4([A, [A, A*]] + E(A) A)"""
    A = as_matrix(A)
    _require_unit_norm(A)
    return Matrix(-4.0 * (commutator(A, self_commutator(A)).entries + non_normal_energy(A) * A.entries))


def _imbalance_gaps(A):
    delta = node_imbalances(A)
    return delta[:, None] - delta[None, :]


def grad_B(A):
    """
    Euclidean gradient of B, entrywise: 4 a_ij (d_i - d_j), d = node imbalances

    Computed entrywise so that structural zeros of A stay exactly zero.
    """
    A = as_matrix(A)
    return Matrix(4.0 * A.entries * _imbalance_gaps(A))


def grad_B_sphere(A):
    """Intrinsic gradient of B on the unit sphere, entrywise: 4 a_ij (d_i - d_j - B(A))"""
    A = as_matrix(A)
    _require_unit_norm(A)
    return Matrix(4.0 * A.entries * (_imbalance_gaps(A) - unbalanced_energy(A)))


def momentum_derivative_adjoint_check(A, B, C):
    """
    Evaluate both sides of the adjoint identity for the momentum map A -> [A, A*]

    Dmu(A)(B) = [B, A*] + [A, B*] and its adjoint Dmu(A)^v(C) = [C + C*, A].

    Args:
        A, B: matrices
        C: Hermitian traceless matrix

    Returns:
        (<Dmu(A)(B), C>, <B, [C + C*, A]>)
    """
    A, B, C = as_matrix(A), as_matrix(B), as_matrix(C)
    if not A.d == B.d == C.d:
        raise DimensionMismatchError("A, B and C must have the same dimension")
    d_mu = commutator(B, A.H) + commutator(A, B.H)
    adjoint = commutator(C + C.H, A)
    return frob_inner(d_mu, C), frob_inner(B, adjoint)


def spectrum_drift(A0, A1):
    """
    Largest eigenvalue displacement under the optimal matching

    The matching is the Hungarian assignment on the |lambda_i - mu_j| cost
    matrix; greedy matching breaks down on clustered spectra.
    """
    A0, A1 = as_matrix(A0), as_matrix(A1)
    if A0.d != A1.d:
        raise DimensionMismatchError(f"dimension mismatch: {A0.d} vs {A1.d}")
    lam = spectrum(A0).as_array()
    mu = spectrum(A1).as_array()
    cost = np.abs(lam[:, None] - mu[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------

class Energy(str, Enum):
    NON_NORMAL = "non-normal"
    UNBALANCED = "unbalanced"


class Integrator(str, Enum):
    ORBIT = "orbit"
    EULER = "euler"


@dataclass(frozen=True)
class FlowKind:
    energy: Energy
    constrained: bool = False

    def __post_init__(self):
        object.__setattr__(self, "energy", Energy(self.energy))

    @property
    def label(self):
        return f"{self.energy.value}{' (sphere)' if self.constrained else ''}"


@dataclass(frozen=True)
class ArmijoParams:
    shrink: float = config.ARMIJO_SHRINK
    slope: float = config.ARMIJO_SLOPE
    growth: float = config.ARMIJO_GROWTH

    def __post_init__(self):
        if not 0 < self.shrink < 1:
            raise ValueError(f"armijo shrink must lie in (0, 1), got {self.shrink}")
        if not 0 < self.slope < 1:
            raise ValueError(f"armijo slope must lie in (0, 1), got {self.slope}")
        if not self.growth > 1:
            raise ValueError(f"armijo growth must exceed 1, got {self.growth}")


@dataclass(frozen=True)
class FlowConfig:
    kind: FlowKind = FlowKind(Energy.NON_NORMAL)
    step_init: float = config.STEP_INIT
    armijo: ArmijoParams = field(default_factory=ArmijoParams)
    grad_tol: float = config.GRAD_TOL
    max_iters: int = config.MAX_ITERS
    record_every: int = config.RECORD_EVERY
    integrator: Integrator = Integrator(config.INTEGRATOR)
    max_backtracks: int = config.MAX_BACKTRACKS
    collapse_tol: float = config.COLLAPSE_TOL
    euler_max_step: float = config.EULER_MAX_STEP
    drift_tol: float = config.SPECTRUM_DRIFT_TOL

    def __post_init__(self):
        object.__setattr__(self, "integrator", Integrator(self.integrator))
        if not self.step_init > 0:
            raise ValueError(f"step_init must be positive, got {self.step_init}")
        if not self.euler_max_step > 0:
            raise ValueError(f"euler_max_step must be positive, got {self.euler_max_step}")
        if not self.grad_tol > 0:
            raise ValueError(f"grad_tol must be positive, got {self.grad_tol}")
        if self.max_iters < 1 or self.record_every < 1 or self.max_backtracks < 1:
            raise ValueError("max_iters, record_every and max_backtracks must be positive integers")


class TrajectorySample(NamedTuple):
    iter: int
    energy: float
    grad_norm: float
    frob_norm: float
    s_value: float


@dataclass(frozen=True)
class FlowAudit:
    """
    Structural checks on a finished run

    realness_preserved is structural: real-tagged inputs run in float64
    arithmetic throughout, so it reports whether the limit kept real
    storage rather than testing imaginary parts numerically.
    """
    spectrum_drift: float
    realness_preserved: bool
    zero_pattern_preserved: bool
    norm_drift: float


@dataclass(frozen=True)
class FlowResult:
    limit: Matrix
    iterations: int
    trajectory: Tuple[TrajectorySample, ...]
    converged: bool
    audit: FlowAudit
    warnings: Tuple[str, ...] = ()

    def summary(self):
        """JSON-ready description (the limit matrix is written separately)"""
        final = self.trajectory[-1]
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "energy": final.energy,
            "grad_norm": final.grad_norm,
            "frob_norm": final.frob_norm,
            "s_value": final.s_value,
            "audit": {
                "spectrum_drift": self.audit.spectrum_drift,
                "realness_preserved": self.audit.realness_preserved,
                "zero_pattern_preserved": self.audit.zero_pattern_preserved,
                "norm_drift": self.audit.norm_drift,
            },
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------------------
# Integrator
# ---------------------------------------------------------------------------

class SchurFrame:
    """
    Orbit steps of the non-normal energy carried out on a Schur form

    A = Q T Q* with T upper triangular (quasi-triangular for real input).
    E, its gradient norm, ||A|| and the spectrum are unitarily invariant, so
    the descent runs on T. The similarity P = e^{-4hC} is split as P = QR;
    the step becomes T <- R T R^-1 and the frame Q absorbs the unitary
    factor. R T R^-1 keeps the triangular pattern and the diagonal of T;
    the 1x1 diagonal entries are copied over exactly, so rounding never
    moves eigenvalues (a nilpotent start stays nilpotent and collapses to
    zero). The sphere retraction rescales them together with T.
    """

    def __init__(self, A0):
        t, q = schur(A0.entries, output="real" if A0.realness_tag else "complex")
        d = A0.d
        paired = np.diag(t, -1) != 0
        self.fixed_zeros = np.tril(np.ones((d, d), dtype=bool), -1)
        self.fixed_zeros[np.arange(1, d)[paired], np.arange(d - 1)[paired]] = False
        in_block = np.zeros(d, dtype=bool)
        in_block[:-1] |= paired
        in_block[1:] |= paired
        self.scalar_idx = np.flatnonzero(~in_block)
        self.basis = q
        self.T0 = Matrix(t, real=A0.realness_tag)

    def similarity_step(self, T, h):
        """
        Returns:
            (candidate ndarray, unitary factor), or a non-finite candidate
            and None when the exponential overflows
        """
        w, v = np.linalg.eigh(self_commutator(T).entries)
        with np.errstate(over="ignore", invalid="ignore"):
            p = (v * np.exp(-4.0 * h * w)) @ v.conj().T
        if not np.all(np.isfinite(p)):
            return p, None
        q, r = np.linalg.qr(p)
        # X R^-1 via R^T Y^T = X^T
        candidate = solve_triangular(r.T, (r @ T.entries).T, lower=True).T
        candidate[self.fixed_zeros] = 0.0
        candidate[self.scalar_idx, self.scalar_idx] = T.entries[self.scalar_idx, self.scalar_idx]
        return candidate, q

    def rotate(self, q):
        self.basis = self.basis @ q

    def lift(self, T):
        return Matrix(self.basis @ T.entries @ self.basis.conj().T, real=T.realness_tag)


class GradientFlow:
    """
    Armijo-backtracked gradient descent for one FlowKind

    Each accepted step satisfies f(A_new) <= f(A) - slope * h * ||g||^2, so
    the energy never increases. The trial step regrows by `growth` after an
    accepted step and shrinks by `shrink` on rejection.
    """

    def __init__(self, flow_config):
        self.config = flow_config
        self.kind = flow_config.kind

    def energy(self, A):
        if self.kind.energy is Energy.NON_NORMAL:
            return non_normal_energy(A)
        return unbalanced_energy(A)

    def gradient(self, A):
        if self.kind.energy is Energy.NON_NORMAL:
            return grad_E_sphere(A) if self.kind.constrained else grad_E(A)
        return grad_B_sphere(A) if self.kind.constrained else grad_B(A)

    def step_cap(self, A):
        """
        Largest admissible step

        Unbalanced kinds keep every multiplicative factor 1 - 4h(...)
        positive, so real entries never change sign. Euler steps are also
        held to euler_max_step / ||A||^2 so the iterates track the flow.
        """
        cap = np.inf
        if self.kind.energy is Energy.UNBALANCED:
            gaps = _imbalance_gaps(A)
            if self.kind.constrained:
                gaps = gaps - unbalanced_energy(A)
            active = np.abs(gaps[A.entries != 0])
            if active.size and active.max() > 0.0:
                cap = config.STEP_CAP_SAFETY / (4.0 * active.max())
        if self.config.integrator is Integrator.EULER:
            norm = A.frob_norm()
            if norm > 0.0:
                cap = min(cap, self.config.euler_max_step / norm ** 2)
        return cap

    def trial_point(self, A, g, h, frame=None):
        """
        Unnormalized candidate for step size h

        Returns:
            (ndarray, unitary factor or None); the array may contain
            non-finite values
        """
        a = A.entries
        if self.config.integrator is Integrator.EULER:
            if self.kind.energy is Energy.NON_NORMAL:
                return a - h * g.entries, None
            gaps = _imbalance_gaps(A)
            if self.kind.constrained:
                gaps = gaps - unbalanced_energy(A)
            return a * (1.0 - 4.0 * h * gaps), None

        if self.kind.energy is Energy.NON_NORMAL:
            return frame.similarity_step(A, h)
        with np.errstate(over="ignore", invalid="ignore"):
            # the -B(A) term of the sphere gradient is a global scale, absorbed by renormalization
            return a * np.exp(-4.0 * h * _imbalance_gaps(A)), None

    def _sample(self, iteration, A, energy, grad_norm):
        return TrajectorySample(iteration, energy, grad_norm, A.frob_norm(), spectral_s(A))

    def run(self, A0, callback=None):
        """
        Descend from A0 until the gradient test, collapse, stall or max_iters

        Args:
            A0: initial Matrix (unit norm for constrained kinds)
            callback: optional callable(iteration, Matrix) invoked at every
                      recorded sample, including the initial one

        Returns:
            FlowResult
        """
        cfg = self.config
        A0 = as_matrix(A0)
        warnings = []

        if self.kind.constrained:
            norm0 = A0.frob_norm()
            if abs(norm0 - 1.0) > SPHERE_INIT_TOL:
                raise NotOnSphereError(f"constrained flows start on the unit sphere, got norm {norm0:.17g}")
            if is_nilpotent(A0):
                message = "initial matrix is nilpotent; the constrained flow may stall at a nilpotent critical point"
                logger.warning(message)
                warnings.append(message)

        frame = None
        A = A0
        if self.kind.energy is Energy.NON_NORMAL and cfg.integrator is Integrator.ORBIT:
            frame = SchurFrame(A0)
            A = frame.T0

        def current(iteration, A):
            if frame is None:
                return A
            return A0 if iteration == 0 else frame.lift(A)

        norm0 = A0.frob_norm()
        h = cfg.step_init
        iterations = 0
        converged = False
        trajectory: List[TrajectorySample] = []

        energy = self.energy(A)
        if not np.isfinite(energy):
            raise NonFiniteFlowError("initial energy is not finite")

        while True:
            g = self.gradient(A)
            grad_norm = g.frob_norm()
            if not np.isfinite(grad_norm):
                raise NonFiniteFlowError(f"non-finite gradient at iteration {iterations}")

            if iterations % cfg.record_every == 0:
                trajectory.append(self._sample(iterations, A, energy, grad_norm))
                if callback is not None:
                    callback(iterations, current(iterations, A))

            norm = A.frob_norm()
            if grad_norm <= cfg.grad_tol * norm ** 3 or norm <= cfg.collapse_tol * norm0:
                converged = True
                break
            if iterations >= cfg.max_iters:
                break

            cap = self.step_cap(A)
            accepted = None
            for _ in range(cfg.max_backtracks):
                h = min(h, cap)
                candidate, rotation = self.trial_point(A, g, h, frame)
                if np.all(np.isfinite(candidate)):
                    raw_norm = float(np.linalg.norm(candidate))
                    if self.kind.constrained:
                        if raw_norm == 0.0:
                            h *= cfg.armijo.shrink
                            continue
                        candidate = candidate / raw_norm
                    trial = Matrix(candidate, real=A.realness_tag)
                    trial_energy = self.energy(trial)
                    decrease_ok = trial_energy <= energy - cfg.armijo.slope * h * grad_norm ** 2
                    # orbit steps on the sphere must not grow the norm, so s(A) never decreases
                    norm_ok = not (self.kind.constrained and cfg.integrator is Integrator.ORBIT and raw_norm > norm * (1.0 + NORM_GROWTH_SLACK))
                    if decrease_ok and norm_ok:
                        accepted = (trial, trial_energy, rotation)
                        break
                h *= cfg.armijo.shrink

            if accepted is None:
                logger.info("line search stalled at iteration %d (grad_norm %.3e)", iterations, grad_norm)
                break

            A, energy, rotation = accepted
            if rotation is not None:
                frame.rotate(rotation)
            iterations += 1
            h *= cfg.armijo.growth
            logger.debug("iter %d: energy %.6e grad %.3e step %.3e", iterations, energy, grad_norm, h)

        if trajectory[-1].iter != iterations:
            trajectory.append(self._sample(iterations, A, energy, grad_norm))
            if callback is not None:
                callback(iterations, current(iterations, A))

        if not converged:
            message = f"flow did not reach the gradient tolerance after {iterations} iterations"
            logger.warning(message)
            warnings.append(message)

        limit = current(iterations, A)
        audit = FlowAudit(
            spectrum_drift=spectrum_drift(A0, limit),
            realness_preserved=(not A0.realness_tag) or (limit.realness_tag and np.isrealobj(limit.entries)),
            zero_pattern_preserved=bool(np.all(limit.entries[A0.entries == 0] == 0)),
            norm_drift=abs(limit.frob_norm() - norm0),
        )
        # constrained flows rescale eigenvalues with the norm, so only unconstrained runs are held to the spectrum
        if not self.kind.constrained and audit.spectrum_drift > cfg.drift_tol * max(norm0, 1.0):
            message = (
                f"spectrum drifted by {audit.spectrum_drift:.3e} under the {cfg.integrator.value} integrator; "
                "eigenvalues and principal minors of the limit are not those of the input"
            )
            logger.warning(message)
            warnings.append(message)
        logger.info(
            "%s flow: %d iterations, energy %.3e, converged=%s",
            self.kind.label, iterations, energy, converged,
        )
        return FlowResult(
            limit=limit,
            iterations=iterations,
            trajectory=tuple(trajectory),
            converged=converged,
            audit=audit,
            warnings=tuple(warnings),
        )


def descend(A0, config=None, callback: Optional[Callable[[int, Matrix], None]] = None):
    """
    Run the gradient descent described by `config` from A0

    Args:
        A0: initial Matrix
        config: FlowConfig (defaults to the unconstrained non-normal flow)
        callback: optional callable(iteration, Matrix) at recorded samples

    Returns:
        FlowResult
    """
    return GradientFlow(config or FlowConfig()).run(A0, callback=callback)


# Test the module
if __name__ == "__main__":
    print("=" * 50)
    print("GRADIENT FLOW DEMO")
    print("=" * 50)

    rng = np.random.default_rng(0)
    A0 = Matrix(rng.standard_normal((5, 5)), real=True).normalized()
    for kind in (FlowKind(Energy.NON_NORMAL), FlowKind(Energy.NON_NORMAL, True), FlowKind(Energy.UNBALANCED, True)):
        result = descend(A0, FlowConfig(kind=kind))
        final = result.trajectory[-1]
        print(f"{kind.label:24s} iters={result.iterations:6d} energy={final.energy:.3e} "
              f"drift={result.audit.spectrum_drift:.1e} real={result.audit.realness_preserved}")
