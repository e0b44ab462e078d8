# utils/config.py
import os
import logging
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# choice function evaluation
LOG_SPACE_MIN_D = 50
INPUT_TOLERANCE = 1e-12
ASYMPTOTIC_GRID_POINTS = 1001
# non-normative, calibrated: sup |log beta - log gamma| on [eps, 1] <= C * d^2 / (n * eps)
LOG_BOUND_CONSTANT = 1.0

# near fixed point and regime classification
DEFAULT_FLOOR = 1e-15
MAX_MU_TERMS = 1_000_000
CRITICAL_LOWER = 0.1
CRITICAL_UPPER = 10.0
DEAD_BAND = 0.05
K_MAX = 8
SUB_BETA_PRIME_CAP = 10.0
SUB_MU_MIN = 0.5
ALPHA_INFINITY_CUTOFF = 50.0

# integrators
DEFAULT_DT = 1e-3
BARRIER_TOLERANCE_FACTOR = 10.0
EXP_DRIFT_CLIP = 10.0
EXP_ARGUMENT_CAP = 700.0
NOISE_CHUNK = 256

# harness
KS_LEVEL = 0.01
COMPARISON_TIMES = (0.5, 1.0, 2.0)
COMPARISON_COORDS = (1, 2)
REPORT_SCHEMA = "jsq-compare/1"
TOLERANCE_NOTE = "All tolerances are calibrated regression bounds, not rates derived from the limit theorems."

# Named parameter-sequence rules, usable wherever a rule string is accepted
RULE_PRESETS = {
    "sub-loglog": ("log(n)", "1 - loglog(n)/log(n)^2"),
    "sub-ou": ("sqrt(n)/log(n)", "1 - log(n)^2/sqrt(n)"),
    "critical": ("sqrt(n)", "1 - log(sqrt(n))/sqrt(n)"),
    "super-halfin-whitt": ("n", "1 - 1/sqrt(n)"),
    "super-boundary": ("sqrt(n)*log(n)/2", "1 - 1/sqrt(n) - 2*loglog(n)/(sqrt(n)*log(n))"),
}


def load_worker_count():
    """Get the number of replicate worker processes from the environment."""
    raw = os.getenv("JSQ_WORKERS")
    if not raw:
        logging.debug("JSQ_WORKERS not set, running replicates in-process")
        return 1
    try:
        workers = int(raw)
    except ValueError:
        logging.error(f"JSQ_WORKERS must be an integer, got {raw!r}; using 1")
        return 1
    if workers < 1:
        logging.error(f"JSQ_WORKERS must be positive, got {workers}; using 1")
        return 1
    logging.info(f"Using {workers} replicate workers")
    return workers


def load_output_dir():
    """Get the default report directory, creating it when missing."""
    path = os.getenv("JSQ_OUTPUT_DIR", "results")
    os.makedirs(path, exist_ok=True)
    return path
