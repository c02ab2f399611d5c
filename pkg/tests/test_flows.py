from itertools import combinations

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from conftest import complex_gaussian, random_complex, random_normal, random_real, random_unitary, strictly_upper
from modules.errors import NotOnSphereError
from modules.flows import (
    Energy,
    FlowConfig,
    FlowKind,
    Integrator,
    descend,
    grad_B,
    grad_B_sphere,
    grad_E,
    grad_E_sphere,
    momentum_derivative_adjoint_check,
    spectrum_drift,
)
from modules.matrix_core import (
    Matrix,
    henrici_departure,
    non_normal_energy,
    spectral_s,
    unbalanced_energy,
)

FD_STEP = 1e-5
TIGHT_TOL = 1e-12


def fd_gradient(f, A):
    """Central differences over the real and imaginary part of every entry"""
    a = A.entries.astype(np.complex128)
    g = np.zeros_like(a)
    for idx in np.ndindex(a.shape):
        for unit in (1.0, 1j):
            e = np.zeros_like(a)
            e[idx] = unit
            diff = (f(Matrix(a + FD_STEP * e)) - f(Matrix(a - FD_STEP * e))) / (2 * FD_STEP)
            g[idx] += diff * unit
    return g


def on_sphere(f):
    return lambda A: f(A.normalized())


def rel_err(approx, exact):
    return np.linalg.norm(approx - exact) / np.linalg.norm(exact)


def flow(kind, **overrides):
    return FlowConfig(kind=kind, **overrides)


UNCONSTRAINED_E = FlowKind(Energy.NON_NORMAL)
SPHERE_E = FlowKind(Energy.NON_NORMAL, constrained=True)


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------

def test_gradient_examples(jordan):
    assert_array_equal(grad_E(jordan).entries, [[0.0, 8.0], [0.0, 0.0]])
    assert_array_equal(grad_E_sphere(jordan).entries, 0.0)
    assert_array_equal(grad_B(jordan).entries, [[0.0, 8.0], [0.0, 0.0]])
    assert_array_equal(grad_B_sphere(jordan).entries, 0.0)
    assert non_normal_energy(jordan) == 2.0


def test_gradients_vanish_at_minimizers():
    A = random_normal(3, 5)
    assert grad_E(A).frob_norm() < 1e-14
    assert grad_E_sphere(A).frob_norm() < 1e-14
    assert grad_B(A).frob_norm() < 1e-14


def test_sphere_gradients_require_unit_norm():
    with pytest.raises(NotOnSphereError):
        grad_E_sphere(random_complex(1, 3))
    with pytest.raises(NotOnSphereError):
        grad_B_sphere(random_complex(1, 3))


@pytest.mark.parametrize("seed", range(50))
def test_gradients_match_finite_differences(seed):
    A = random_complex(seed, 5)
    U = A.normalized()
    assert rel_err(fd_gradient(non_normal_energy, A), grad_E(A).entries) < 1e-6
    assert rel_err(fd_gradient(unbalanced_energy, A), grad_B(A).entries) < 1e-6
    assert rel_err(fd_gradient(on_sphere(non_normal_energy), U), grad_E_sphere(U).entries) < 1e-6
    assert rel_err(fd_gradient(on_sphere(unbalanced_energy), U), grad_B_sphere(U).entries) < 1e-6


@pytest.mark.parametrize("seed", range(100))
def test_critical_points_are_minimizers(seed):
    A = random_normal(seed, 6) * 3.0 if seed % 2 else random_complex(seed, 6)
    scale = A.frob_norm()
    for energy, gradient in ((non_normal_energy, grad_E), (unbalanced_energy, grad_B)):
        critical = gradient(A).frob_norm() < 1e-10 * scale ** 3
        minimal = energy(A) < 1e-16 * scale ** 4
        assert critical == minimal


@pytest.mark.parametrize("seed", range(100))
def test_momentum_adjoint_identity(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 7))
    A = Matrix(complex_gaussian(seed, d))
    B = Matrix(complex_gaussian(seed + 1000, d))
    X = complex_gaussian(seed + 2000, d)
    H = X + X.conj().T
    C = Matrix(H - np.trace(H) / d * np.eye(d))
    lhs, rhs = momentum_derivative_adjoint_check(A, B, C)
    assert abs(lhs - rhs) < 1e-10


def test_momentum_adjoint_trivial_cases():
    C = Matrix(np.diag([1.0, -1.0]))
    assert momentum_derivative_adjoint_check(np.eye(2), random_complex(1, 2), C) == (0.0, 0.0)
    assert momentum_derivative_adjoint_check(random_complex(2, 2), np.zeros((2, 2)), C) == (0.0, 0.0)


def test_spectrum_drift_examples():
    A = random_complex(4, 6)
    U = random_unitary(5, 6)
    assert spectrum_drift(A, A) == 0.0
    assert spectrum_drift(A, Matrix(U @ A.entries @ U.conj().T)) < 1e-8
    assert spectrum_drift(np.diag([1.0, 2.0]), np.diag([2.0, 1.0])) == 0.0


# ---------------------------------------------------------------------------
# Descent
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(step_init=0.0)
    with pytest.raises(ValueError):
        FlowConfig(grad_tol=-1.0)
    with pytest.raises(ValueError):
        FlowConfig(integrator="leapfrog")
    with pytest.raises(ValueError):
        FlowConfig(euler_max_step=0.0)


def test_normal_input_is_a_fixed_point():
    A = Matrix([[0.0, 1.0], [-1.0, 0.0]])
    result = descend(A)
    assert result.iterations == 0
    assert result.converged
    assert result.limit == A


def test_nilpotent_collapses(jordan):
    result = descend(jordan)
    assert result.converged
    assert result.limit.frob_norm() < 1e-5


def test_energy_never_increases():
    result = descend(random_complex(8, 5), flow(UNCONSTRAINED_E, record_every=1))
    energies = [s.energy for s in result.trajectory]
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert result.trajectory[0].iter == 0
    assert result.trajectory[-1].iter == result.iterations


def test_callback_sees_recorded_iterations():
    seen = []
    result = descend(random_real(2, 4), flow(UNCONSTRAINED_E, record_every=5), callback=lambda k, A: seen.append(k))
    assert seen == [s.iter for s in result.trajectory]
    assert all(k % 5 == 0 for k in seen[:-1])


def _check_unconstrained_limit(A0):
    result = descend(A0, flow(UNCONSTRAINED_E, grad_tol=TIGHT_TOL, record_every=100))
    A = result.limit
    assert result.converged
    assert non_normal_energy(A) < 1e-18 * A0.frob_norm() ** 4
    assert spectrum_drift(A0, A) < 1e-5
    assert A0.frob_norm() ** 2 - A.frob_norm() ** 2 == pytest.approx(henrici_departure(A0), abs=1e-5)
    assert result.audit.realness_preserved
    assert not result.warnings
    return result


@pytest.mark.parametrize("seed", range(10))
def test_unconstrained_flow_limit(seed):
    _check_unconstrained_limit(random_complex(seed, 8))
    result = _check_unconstrained_limit(random_real(seed, 8))
    assert result.limit.realness_tag
    assert result.limit.entries.dtype == np.float64


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(10, 50))
def test_unconstrained_flow_limit_full(seed):
    _check_unconstrained_limit(random_complex(seed, 8))
    assert _check_unconstrained_limit(random_real(seed, 8)).limit.realness_tag


@pytest.mark.parametrize("seed", range(6))
def test_strictly_upper_triangular_collapses(seed):
    A0 = strictly_upper(seed, 6)
    result = descend(A0)
    assert result.converged
    assert result.limit.frob_norm() < 1e-5
    assert result.limit.frob_norm() < 1e-7 * A0.frob_norm()
    assert result.limit.realness_tag


@pytest.mark.parametrize("seed", range(3))
def test_orbit_flow_keeps_eigenvalues_to_rounding(seed):
    for A0 in (random_complex(seed, 6), random_real(seed, 6)):
        result = descend(A0)
        assert result.audit.spectrum_drift < 1e-9


def test_euler_integrator_reaches_a_normal_matrix():
    A0 = random_real(12, 4)
    result = descend(A0, flow(UNCONSTRAINED_E, integrator=Integrator.EULER, euler_max_step=0.1, grad_tol=TIGHT_TOL))
    assert result.converged
    assert non_normal_energy(result.limit) < 1e-16 * A0.frob_norm() ** 4
    assert result.limit.realness_tag


@pytest.mark.parametrize("seed", range(2))
def test_euler_step_cap_limits_spectrum_drift(seed):
    A0 = random_complex(seed, 8)
    capped = descend(A0, flow(UNCONSTRAINED_E, integrator=Integrator.EULER, euler_max_step=1e-3, max_iters=20_000))
    free = descend(A0, flow(UNCONSTRAINED_E, integrator=Integrator.EULER, euler_max_step=np.inf, grad_tol=TIGHT_TOL))
    assert capped.audit.spectrum_drift < free.audit.spectrum_drift
    assert any("spectrum drifted" in w for w in free.warnings)


def test_spectrum_drift_is_reported_on_the_result():
    result = descend(random_real(12, 4), flow(UNCONSTRAINED_E, integrator=Integrator.EULER, drift_tol=1e-300, max_iters=50))
    assert any("spectrum drifted" in w for w in result.warnings)
    assert "spectrum drifted" in " ".join(result.summary()["warnings"])


def sparse_nonnegative(seed, d):
    """Nonnegative matrix with about half its entries zero, a full diagonal and a d-cycle"""
    rng = np.random.default_rng(seed)
    a = np.abs(rng.standard_normal((d, d))) * (rng.random((d, d)) < 0.5)
    a[np.arange(d), (np.arange(d) + 1) % d] += 0.5
    a[np.diag_indices(d)] = np.abs(rng.standard_normal(d)) + 0.1
    return Matrix(a, real=True)


@pytest.mark.parametrize("seed", range(3))
def test_balancing_iterates_keep_zeros_signs_and_diagonal(seed):
    A0 = sparse_nonnegative(seed, 6)
    iterates = []
    descend(A0, flow(FlowKind(Energy.UNBALANCED), record_every=1, max_iters=2000), callback=lambda k, A: iterates.append(A.entries))
    assert len(iterates) > 2
    zeros = A0.entries == 0
    for a in iterates:
        assert np.all(a[zeros] == 0.0)
        assert np.all(a >= 0.0)
        assert_array_equal(np.diag(a), np.diag(A0.entries))


@pytest.mark.parametrize("seed", range(3))
def test_balancing_keeps_principal_minors(seed):
    d = 5
    A0 = sparse_nonnegative(seed, d)
    result = descend(A0, flow(FlowKind(Energy.UNBALANCED)))
    assert result.converged
    a0, a = A0.entries, result.limit.entries
    for size in range(1, d + 1):
        for idx in combinations(range(d), size):
            sub0, sub = a0[np.ix_(idx, idx)], a[np.ix_(idx, idx)]
            scale = max(1.0, float(np.prod(np.linalg.norm(sub, axis=1))), float(np.prod(np.linalg.norm(sub0, axis=1))))
            assert abs(np.linalg.det(sub) - np.linalg.det(sub0)) <= 1e-9 * scale



def _check_constrained_limit(A0):
    result = descend(A0, flow(SPHERE_E, grad_tol=TIGHT_TOL))
    A = result.limit
    assert result.converged
    assert abs(A.frob_norm() - 1.0) < 1e-12
    assert non_normal_energy(A) < 1e-16
    s = [sample.s_value for sample in result.trajectory]
    assert all(b >= a - 1e-8 for a, b in zip(s, s[1:]))
    assert spectral_s(A) >= spectral_s(A0) - 1e-8
    assert spectrum_drift(A0, A * np.sqrt(spectral_s(A0) / spectral_s(A))) < 1e-8


@pytest.mark.parametrize("seed", range(10))
def test_constrained_flow_limit(seed):
    _check_constrained_limit(random_complex(seed, 8, unit=True))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(10, 50))
def test_constrained_flow_limit_full(seed):
    _check_constrained_limit(random_complex(seed, 8, unit=True))


@pytest.mark.parametrize("seed", range(5))
def test_constrained_balancing_limit(seed):
    A0 = random_real(seed, 6, unit=True)
    result = descend(A0, flow(FlowKind(Energy.UNBALANCED, constrained=True), grad_tol=TIGHT_TOL))
    A = result.limit
    assert result.converged
    assert abs(A.frob_norm() - 1.0) < 1e-12
    assert unbalanced_energy(A) < 1e-16
    assert np.all(np.sign(A.entries) == np.sign(A0.entries))
    rescaled = A * np.sqrt(spectral_s(A0) / spectral_s(A))
    assert spectrum_drift(A0, rescaled) < 1e-5


def test_constrained_flow_requires_unit_norm():
    with pytest.raises(NotOnSphereError):
        descend(random_complex(0, 3), flow(SPHERE_E))


def test_constrained_flow_from_nilpotent_warns(jordan):
    result = descend(jordan, flow(SPHERE_E))
    assert result.iterations == 0
    assert any("nilpotent" in w for w in result.warnings)
    assert result.limit == jordan


def test_iteration_cap_reports_non_convergence():
    result = descend(random_complex(1, 6), flow(UNCONSTRAINED_E, max_iters=3))
    assert not result.converged
    assert result.iterations == 3
    assert result.warnings
    summary = result.summary()
    assert summary["iterations"] == 3
    assert summary["converged"] is False
