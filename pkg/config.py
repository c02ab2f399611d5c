"""
Configuration settings for normalflow

Every value can be overridden from the environment (or a .env file in the
working directory) as NORMALFLOW_<NAME>, e.g. NORMALFLOW_GRAD_TOL=1e-12.
"""

import os

from dotenv import load_dotenv

load_dotenv()


def _env(name, default, cast=float):
    raw = os.getenv(f"NORMALFLOW_{name}")
    if raw is None or raw == "":
        return default
    return cast(raw)


# Gradient descent / line search
STEP_INIT = _env("STEP_INIT", 1e-2)          # first trial step size
ARMIJO_SHRINK = _env("ARMIJO_SHRINK", 0.5)   # backtracking factor in (0, 1)
ARMIJO_SLOPE = _env("ARMIJO_SLOPE", 1e-4)    # sufficient decrease constant in (0, 1)
ARMIJO_GROWTH = _env("ARMIJO_GROWTH", 1.5)   # step regrowth after an accepted step (> 1)
MAX_BACKTRACKS = _env("MAX_BACKTRACKS", 60, int)
STEP_CAP_SAFETY = _env("STEP_CAP_SAFETY", 0.9)  # fraction of 1/(4 max|di - dj|)

# Stopping
GRAD_TOL = _env("GRAD_TOL", 1e-10)           # relative to ||A||^3
MAX_ITERS = _env("MAX_ITERS", 1_000_000, int)
COLLAPSE_TOL = _env("COLLAPSE_TOL", 1e-8)    # ||A|| <= COLLAPSE_TOL * ||A0|| counts as reaching zero
RECORD_EVERY = _env("RECORD_EVERY", 1, int)
INTEGRATOR = os.getenv("NORMALFLOW_INTEGRATOR", "orbit")  # 'orbit' or 'euler'
EULER_MAX_STEP = _env("EULER_MAX_STEP", 1e-2)  # euler steps are capped at this / ||A||^2
SPECTRUM_DRIFT_TOL = _env("SPECTRUM_DRIFT_TOL", 1e-5)  # relative to ||A0||, unconstrained flows only

# Structural predicates
NORMAL_TOL = _env("NORMAL_TOL", 1e-8)
UNIT_NORM_TOL = _env("UNIT_NORM_TOL", 1e-10)

# Nearest normal baseline (Jacobi sweeps)
JACOBI_TOL = _env("JACOBI_TOL", 1e-14)       # relative off-diagonal stagnation per sweep
JACOBI_MAX_SWEEPS = _env("JACOBI_MAX_SWEEPS", 100, int)

# Experiments
EXPERIMENT_TRIALS = _env("EXPERIMENT_TRIALS", 200, int)
EXPERIMENT_DIM = _env("EXPERIMENT_DIM", 20, int)
EXPERIMENT_SEED = _env("EXPERIMENT_SEED", 20240101, int)
NEAR_NORMAL_SIGMA = _env("NEAR_NORMAL_SIGMA", 0.0075)
NILPOTENT_S_TOL = _env("NILPOTENT_S_TOL", 1e-6)  # path demo rejection threshold
PERTURB_RETRIES = _env("PERTURB_RETRIES", 5, int)
WORKERS = _env("WORKERS", 1, int)

# Graphs
EDGE_ZERO_RTOL = _env("EDGE_ZERO_RTOL", 1e-14)  # weights below this * total are reported as vanished

# Output
FLOAT_DIGITS = 17
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
