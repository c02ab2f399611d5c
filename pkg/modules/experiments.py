"""
Experiments Module
Seeded experiment harness: flow-limit vs. nearest-normal distance ratios,
the energy surface of [[0, x], [y, 0]], a path of normal limits between two
random matrices, the distance-to-energy correlation, and a balancing time
series

Every trial draws from its own PCG64 stream spawned from the master seed, so
results do not depend on how trials are scheduled across workers.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

import numpy as np

import config
from modules.digraph import balance, random_digraph
from modules.errors import ExperimentError
from modules.flows import Energy, FlowConfig, FlowKind, descend
from modules.matrix_core import (
    EnsembleKind,
    Matrix,
    RandomEnsembleSpec,
    non_normal_energy,
    random_matrix,
    spectral_s,
)
from modules.nearest_normal import nearest_normal

logger = logging.getLogger(__name__)

SURFACE_TOL = 1e-12


class ExperimentKind(str, Enum):
    RATIO_UNCONSTRAINED = "ratio-unconstrained"
    RATIO_CONSTRAINED = "ratio-constrained"
    ENERGY_SURFACE = "energy-surface"
    PATH_DEMO = "path-demo"
    BALANCE_DEMO = "balance-demo"
    DISTANCE_CORRELATION = "distance-correlation"


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: ExperimentKind
    d: int = config.EXPERIMENT_DIM
    trials: int = config.EXPERIMENT_TRIALS
    ensemble: EnsembleKind = EnsembleKind.COMPLEX_GINIBRE
    seed: int = config.EXPERIMENT_SEED
    sigma: float = config.NEAR_NORMAL_SIGMA
    workers: int = config.WORKERS

    def __post_init__(self):
        object.__setattr__(self, "experiment", ExperimentKind(self.experiment))
        object.__setattr__(self, "ensemble", EnsembleKind(self.ensemble))
        if self.trials < 1:
            raise ExperimentError(f"trials must be at least 1, got {self.trials}")
        if self.d < 1:
            raise ExperimentError(f"d must be at least 1, got {self.d}")
        if self.workers < 1:
            raise ExperimentError(f"workers must be at least 1, got {self.workers}")

    def ensemble_spec(self, seed):
        sigma = self.sigma if self.ensemble is EnsembleKind.NEAR_NORMAL else 0.0
        return RandomEnsembleSpec(self.ensemble, self.d, seed, normalize=True, sigma=sigma)


def trial_seeds(master_seed, trials):
    """One 64-bit seed per trial, spawned from a master SeedSequence"""
    children = np.random.SeedSequence(master_seed).spawn(trials)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def _fan_out(worker, jobs, workers):
    """Map worker over jobs, in a process pool when workers > 1, keeping job order"""
    if workers <= 1 or len(jobs) <= 1:
        return [worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, jobs))


# ---------------------------------------------------------------------------
# Ratio experiments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatioRecord:
    trial: int
    dist_baseline_sq: float
    dist_flow_sq: float
    ratio: float
    converged: bool = True


@dataclass(frozen=True)
class ExperimentResult:
    records: Tuple
    summary: dict


def _ratio_trial(job):
    trial, ensemble_spec, flow_config = job
    A0 = random_matrix(ensemble_spec)
    baseline = nearest_normal(A0)
    result = descend(A0, flow_config)
    dist_flow_sq = (result.limit - A0).frob_norm() ** 2
    ratio = dist_flow_sq / baseline.distance_sq if baseline.distance_sq > 0 else float("nan")
    return RatioRecord(trial, baseline.distance_sq, dist_flow_sq, ratio, result.converged)


def _ratio_summary(records, value="ratio"):
    good = [getattr(r, value) for r in records if r.converged]
    failures = len(records) - len(good)
    if not good:
        return {"min_ratio": None, "max_ratio": None, "mean_ratio": None, "failures": failures}
    return {
        "min_ratio": float(min(good)),
        "max_ratio": float(max(good)),
        "mean_ratio": float(np.mean(good)),
        "failures": failures,
    }


def run_ratio_experiment(spec, flow_config=None):
    """
    Compare the flow limit with the Jacobi nearest-normal baseline

    For each trial: draw a unit-norm A0, compute the baseline Ahat and the
    flow limit A_inf, and record ||A_inf - A0||^2 / ||Ahat - A0||^2.
    Non-converged trials are kept in the records but left out of the summary.

    Args:
        spec: ExperimentSpec with a ratio-* experiment
        flow_config: FlowConfig; its kind follows the experiment

    Returns:
        ExperimentResult with RatioRecord rows and the
        {min_ratio, max_ratio, mean_ratio, failures} summary

    Raises:
        ExperimentError: d = 1 (every 1x1 matrix is normal, so the ratio is undefined)
    """
    if spec.experiment not in (ExperimentKind.RATIO_UNCONSTRAINED, ExperimentKind.RATIO_CONSTRAINED):
        raise ExperimentError(f"{spec.experiment.value} is not a ratio experiment")
    if spec.d == 1:
        raise ExperimentError("ratio experiments need d >= 2: every 1x1 matrix is normal")

    constrained = spec.experiment is ExperimentKind.RATIO_CONSTRAINED
    flow_config = replace(flow_config or FlowConfig(), kind=FlowKind(Energy.NON_NORMAL, constrained))

    jobs = [(k, spec.ensemble_spec(seed), flow_config) for k, seed in enumerate(trial_seeds(spec.seed, spec.trials))]
    records = sorted(_fan_out(_ratio_trial, jobs, spec.workers), key=lambda r: r.trial)
    summary = _ratio_summary(records)
    logger.info(
        "%s (%s, d=%d, %d trials): ratio in [%s, %s], %d failures",
        spec.experiment.value, spec.ensemble.value, spec.d, spec.trials,
        summary["min_ratio"], summary["max_ratio"], summary["failures"],
    )
    return ExperimentResult(tuple(records), summary)


# ---------------------------------------------------------------------------
# Distance vs. energy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DistanceRecord:
    trial: int
    energy: float
    distance: float
    ratio: float
    converged: bool = True


def _distance_trial(job):
    trial, ensemble_spec, flow_config = job
    A0 = random_matrix(ensemble_spec)
    energy = non_normal_energy(A0)
    result = descend(A0, flow_config)
    distance = (result.limit - A0).frob_norm()
    ratio = distance / energy ** 0.25 if energy > 0 else 0.0
    return DistanceRecord(trial, energy, distance, ratio, result.converged)


def run_distance_correlation(spec, flow_config=None):
    """
    Distance travelled by the flow against E(A0)^(1/4)

    The distance ||A0 - A_inf|| is bounded by a constant times E(A0)^(1/4);
    each record carries that ratio.

    Returns:
        ExperimentResult with DistanceRecord rows; summary max_ratio/mean_ratio/failures
    """
    if spec.d == 1:
        raise ExperimentError("the distance correlation needs d >= 2")
    flow_config = replace(flow_config or FlowConfig(), kind=FlowKind(Energy.NON_NORMAL, False))
    jobs = [(k, spec.ensemble_spec(seed), flow_config) for k, seed in enumerate(trial_seeds(spec.seed, spec.trials))]
    records = sorted(_fan_out(_distance_trial, jobs, spec.workers), key=lambda r: r.trial)
    summary = _ratio_summary(records)
    del summary["min_ratio"]
    return ExperimentResult(tuple(records), summary)


# ---------------------------------------------------------------------------
# Energy surface
# ---------------------------------------------------------------------------

def surface_energy(x, y):
    """Closed form of E on [[0, x], [y, 0]]"""
    return 2.0 * (x * x - y * y) ** 2


def run_energy_surface(resolution, bounds=(-1.0, 1.0)):
    """
    Sample E over the real matrices [[0, x], [y, 0]] on a square grid

    Each value is computed with non_normal_energy on the assembled matrix
    and checked against 2(x^2 - y^2)^2.

    Args:
        resolution: points per axis, at least 2
        bounds: (low, high) for both x and y

    Returns:
        ExperimentResult with (x, y, E) rows and the largest deviation from
        the closed form in the summary
    """
    if resolution < 2:
        raise ExperimentError(f"resolution must be at least 2, got {resolution}")
    low, high = bounds
    if not low < high:
        raise ExperimentError(f"bounds must satisfy low < high, got {bounds}")
    axis = np.linspace(low, high, resolution)

    rows = []
    worst = 0.0
    for x in axis.tolist():
        for y in axis.tolist():
            energy = non_normal_energy(Matrix([[0.0, x], [y, 0.0]], real=True))
            expected = surface_energy(x, y)
            worst = max(worst, abs(energy - expected))
            rows.append((x, y, energy))

    if worst > SURFACE_TOL:
        logger.warning("energy surface deviates from the closed form by %.3e", worst)
    return ExperimentResult(tuple(rows), {"points": len(rows), "max_deviation": worst})


# ---------------------------------------------------------------------------
# Path demo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathSample:
    index: int
    t: float
    energy: float
    converged: bool
    perturbed: bool = False


@dataclass(frozen=True)
class PathDemoReport:
    samples: Tuple[PathSample, ...]
    skipped: Tuple[int, ...]
    max_step: float

    def summary(self):
        energies = [s.energy for s in self.samples]
        return {
            "samples": len(self.samples),
            "skipped": list(self.skipped),
            "max_energy": max(energies) if energies else None,
            "max_step": self.max_step,
        }


def _perturb_off_nilpotent(M, rng, real):
    """Nudge a near-nilpotent sample until s(M) clears the threshold, or give up"""
    d = M.d
    for _ in range(config.PERTURB_RETRIES):
        noise = rng.standard_normal((d, d))
        if not real:
            noise = noise + 1j * rng.standard_normal((d, d))
        M = Matrix(M.entries + 1e-3 * noise, real=real).normalized()
        if spectral_s(M) >= config.NILPOTENT_S_TOL:
            return M
    return None


def run_path_demo(seed_a, seed_b, samples, d=2, ensemble=EnsembleKind.COMPLEX_GINIBRE, flow_config=None):
    """
    Flow every point of a path between two unit-norm matrices to a normal limit

    The path is (1 - t) A + t B renormalized onto the sphere; samples that
    come near the nilpotent cone (s < NILPOTENT_S_TOL) are perturbed, and
    skipped if perturbation does not help. Each sample runs the constrained
    non-normal flow.

    Returns:
        PathDemoReport; max_step is the largest distance between consecutive
        limits, a continuity proxy for the path of limits
    """
    if samples < 2:
        raise ExperimentError(f"samples must be at least 2, got {samples}")
    if d < 2:
        raise ExperimentError(f"the path demo needs d >= 2, got {d}")

    ensemble = EnsembleKind(ensemble)
    flow_config = replace(flow_config or FlowConfig(), kind=FlowKind(Energy.NON_NORMAL, True))
    A = random_matrix(RandomEnsembleSpec(ensemble, d, seed_a))
    B = random_matrix(RandomEnsembleSpec(ensemble, d, seed_b))
    real = A.realness_tag
    rng = np.random.default_rng([seed_a, seed_b])

    points = []
    skipped = []
    for k, t in enumerate(np.linspace(0.0, 1.0, samples).tolist()):
        if k == 0:
            M = A
        elif k == samples - 1:
            M = B
        else:
            M = Matrix((1.0 - t) * A.entries + t * B.entries, real=real).normalized()
        perturbed = False
        if spectral_s(M) < config.NILPOTENT_S_TOL:
            M = _perturb_off_nilpotent(M, rng, real)
            perturbed = True
            if M is None:
                logger.warning("path sample %d stays near-nilpotent after %d retries; skipped", k, config.PERTURB_RETRIES)
                skipped.append(k)
                continue
        result = descend(M, flow_config)
        points.append((PathSample(k, t, non_normal_energy(result.limit), result.converged, perturbed), result.limit))

    steps = [(b - a).frob_norm() for (_, a), (_, b) in zip(points, points[1:])]
    report = PathDemoReport(tuple(p for p, _ in points), tuple(skipped), max(steps) if steps else 0.0)
    logger.info("path demo: %d limits, max step %.3e", len(points), report.max_step)
    return report


# ---------------------------------------------------------------------------
# Balancing time series
# ---------------------------------------------------------------------------

def run_balance_demo(n, m, seed, constrained=True, flow_config=None):
    """
    Edge weights of a random strongly connected digraph along its balancing flow

    Returns:
        ExperimentResult whose records are (iter, w_e1, w_e2, ...) rows in
        input edge order, with the column header in summary["header"]
    """
    G = random_digraph(n, m, seed, strongly_connected=True)
    pairs = [(s, d) for s, d, _ in G.edges]
    rows = []

    def record(iteration, weights):
        rows.append((iteration, *(float(weights[s, d]) for s, d in pairs)))

    _, report = balance(G, constrained=constrained, config=flow_config, callback=record)
    header = ["iter"] + [f"{G.node_labels[s]}->{G.node_labels[d]}" for s, d in pairs]
    summary = dict(report.to_json(), header=header)
    return ExperimentResult(tuple(rows), summary)
