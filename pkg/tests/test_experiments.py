import numpy as np
import pytest

from modules.data_logger import DataLogger, summary_path_for, write_grid_csv
from modules.errors import ExperimentError
from modules.experiments import (
    ExperimentKind,
    ExperimentSpec,
    run_balance_demo,
    run_distance_correlation,
    run_energy_surface,
    run_path_demo,
    run_ratio_experiment,
    surface_energy,
    trial_seeds,
)
from modules.matrix_core import EnsembleKind

RATIO_FLOOR = 1 - 1e-6
RATIO_ENVELOPE = 1.30
NEAR_NORMAL_CEILING = 1.06


def ratio_spec(kind=ExperimentKind.RATIO_UNCONSTRAINED, **overrides):
    fields = dict(experiment=kind, d=20, trials=4, seed=2024, workers=1)
    fields.update(overrides)
    return ExperimentSpec(**fields)


def test_spec_validation():
    with pytest.raises(ExperimentError):
        ratio_spec(trials=0)
    with pytest.raises(ExperimentError):
        ratio_spec(d=0)
    with pytest.raises(ValueError):
        ratio_spec(kind="surface-3d")


def test_ratio_experiment_rejects_d1():
    with pytest.raises(ExperimentError, match="d >= 2"):
        run_ratio_experiment(ratio_spec(d=1))


def test_trial_seeds_are_deterministic_and_distinct():
    seeds = trial_seeds(7, 50)
    assert seeds == trial_seeds(7, 50)
    assert len(set(seeds)) == 50
    assert trial_seeds(7, 60)[:50] == seeds


def _check_ratios(result, ceiling):
    assert result.summary["failures"] == 0
    for record in result.records:
        assert record.converged
        assert record.ratio == pytest.approx(record.dist_flow_sq / record.dist_baseline_sq)
        assert RATIO_FLOOR <= record.ratio <= ceiling
    assert result.summary["min_ratio"] <= result.summary["mean_ratio"] <= result.summary["max_ratio"]


@pytest.mark.parametrize("kind", [ExperimentKind.RATIO_UNCONSTRAINED, ExperimentKind.RATIO_CONSTRAINED])
@pytest.mark.parametrize("ensemble", [EnsembleKind.COMPLEX_GINIBRE, EnsembleKind.REAL_GINIBRE])
def test_ratio_envelope(kind, ensemble):
    _check_ratios(run_ratio_experiment(ratio_spec(kind, ensemble=ensemble)), RATIO_ENVELOPE)


@pytest.mark.parametrize("kind", [ExperimentKind.RATIO_UNCONSTRAINED, ExperimentKind.RATIO_CONSTRAINED])
def test_near_normal_ratios(kind):
    spec = ratio_spec(kind, ensemble=EnsembleKind.NEAR_NORMAL, sigma=0.0075)
    _check_ratios(run_ratio_experiment(spec), NEAR_NORMAL_CEILING)


@pytest.mark.slow
@pytest.mark.parametrize("kind", [ExperimentKind.RATIO_UNCONSTRAINED, ExperimentKind.RATIO_CONSTRAINED])
@pytest.mark.parametrize("ensemble", list(EnsembleKind))
def test_ratio_experiments_full(kind, ensemble):
    spec = ratio_spec(kind, ensemble=ensemble, trials=200, workers=4)
    ceiling = NEAR_NORMAL_CEILING if ensemble is EnsembleKind.NEAR_NORMAL else RATIO_ENVELOPE
    _check_ratios(run_ratio_experiment(spec), ceiling)


def test_ratio_output_is_byte_identical(tmp_path):
    paths = []
    for run in range(2):
        result = run_ratio_experiment(ratio_spec(d=4, trials=3))
        data_log = DataLogger(str(tmp_path / f"run{run}.csv"))
        data_log.log_records(result.records)
        data_log.log_summary(result.summary)
        data_log.finalize()
        paths.append(tmp_path / f"run{run}.csv")
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert paths[0].read_text().splitlines()[0] == "trial,dist_baseline_sq,dist_flow_sq,ratio,converged"
    summary = (tmp_path / "run0.summary.json").read_text()
    assert '"failures": 0' in summary


def test_workers_do_not_change_results():
    serial = run_ratio_experiment(ratio_spec(d=4, trials=4, workers=1))
    parallel = run_ratio_experiment(ratio_spec(d=4, trials=4, workers=2))
    assert serial.records == parallel.records


def test_energy_surface():
    result = run_energy_surface(21)
    assert result.summary["points"] == 21 * 21
    assert result.summary["max_deviation"] < 1e-12
    assert surface_energy(1.0, 0.0) == 2.0
    assert surface_energy(1.0, -1.0) == 0.0
    for x, y, energy in result.records:
        if x == y:
            assert energy == 0.0
    with pytest.raises(ExperimentError):
        run_energy_surface(1)
    with pytest.raises(ExperimentError, match="low < high"):
        run_energy_surface(5, bounds=(1.0, 1.0))


def test_energy_surface_bounds():
    result = run_energy_surface(3, bounds=(0.0, 2.0))
    assert [(x, y) for x, y, _ in result.records][:3] == [(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)]
    assert surface_energy(0.0, 2.0) == 32.0
    assert result.records[2][2] == pytest.approx(32.0, rel=1e-12)


@pytest.mark.parametrize("d", [2, 3])
def test_path_demo_limits_are_normal(d):
    report = run_path_demo(11, 12, 20, d=d)
    assert len(report.samples) + len(report.skipped) == 20
    assert not report.skipped
    for sample in report.samples:
        assert sample.converged
        assert sample.energy < 1e-10
    assert report.max_step > 0.0


def test_path_demo_with_two_samples():
    report = run_path_demo(1, 2, 2)
    assert [s.t for s in report.samples] == [0.0, 1.0]


def test_path_demo_validation():
    with pytest.raises(ExperimentError):
        run_path_demo(1, 2, 1)
    with pytest.raises(ExperimentError):
        run_path_demo(1, 2, 5, d=1)


def test_distance_correlation():
    spec = ExperimentSpec(ExperimentKind.DISTANCE_CORRELATION, d=6, trials=5, ensemble=EnsembleKind.NEAR_NORMAL, seed=3)
    result = run_distance_correlation(spec)
    assert result.summary["failures"] == 0
    for record in result.records:
        assert record.distance <= record.ratio * record.energy ** 0.25 + 1e-12
        assert record.ratio < 10.0


def test_distance_ratio_is_stable_across_seeds():
    maxima = []
    for seed in (3, 4, 5):
        spec = ExperimentSpec(ExperimentKind.DISTANCE_CORRELATION, d=6, trials=10, ensemble=EnsembleKind.NEAR_NORMAL, seed=seed)
        result = run_distance_correlation(spec)
        assert result.summary["failures"] == 0
        assert all(np.isfinite(record.ratio) for record in result.records)
        maxima.append(result.summary["max_ratio"])
    assert max(maxima) <= 4 * min(maxima)


def test_balance_demo_rows():
    result = run_balance_demo(6, 15, seed=7, constrained=True)
    header = result.summary["header"]
    assert header[0] == "iter"
    assert len(header) == 16
    assert result.records[0][0] == 0
    assert all(len(row) == 16 for row in result.records)
    assert result.summary["converged"]
    first, last = result.records[0], result.records[-1]
    assert sum(first[1:]) == pytest.approx(sum(last[1:]), rel=1e-10)


def test_data_logger_paths(tmp_path):
    out = str(tmp_path / "grid.csv")
    assert summary_path_for(out) == str(tmp_path / "grid.summary.json")
    data_log = DataLogger(out)
    data_log.log_table(["x", "y", "E"], [(0.0, 1.0, 2.0)])
    data_log.log_summary({"points": 1})
    written = data_log.finalize()
    assert written == [out, summary_path_for(out)]
    assert (tmp_path / "grid.csv").read_text() == "x,y,E\n0.0,1.0,2.0\n"


def test_grid_csv_matches_surface(tmp_path):
    result = run_energy_surface(3)
    path = tmp_path / "surface.csv"
    write_grid_csv(result.records, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,E"
    assert lines[1] == "-1.0,-1.0,0.0"
    assert len(lines) == 1 + 9
