"""
Configuration and constants for the RFMR toolkit.
"""
import math
import os
from enum import Enum

from dotenv import load_dotenv

load_dotenv()


class IntegrationMethod(Enum):
    RK4 = "rk4"  # Fixed step, kept for convergence-order checks
    RK45 = "rk45"  # Adaptive Dormand-Prince pair


class ScheduleKind(Enum):
    CONSTANT = "constant"
    PERIODIC = "periodic"


class Preset(Enum):
    FIG2 = "fig2"
    FIG3 = "fig3"
    FIG5 = "fig5"
    FIG6 = "fig6"
    FIG7 = "fig7"
    EXAMPLE5 = "example5"


class ExitCode(Enum):
    OK = 0
    NUMERICAL_FAILURE = 1
    USAGE = 2


# Worked-example presets (command + parameter overrides)
PRESETS = {
    Preset.FIG2: {
        "command": "simulate",
        "params": {"rates": [2.0, 1.0], "x0": [1.0, 0.0], "tend": 10.0},
    },
    Preset.FIG3: {
        "command": "simulate",
        "params": {"rates": [2.0, 3.0, 1.0], "x0": [1.0, 1.0, 0.0], "tend": 20.0},
    },
    Preset.FIG5: {
        "command": "entrain",
        "params": {"schedule": "example4", "x0": [0.5, 0.01, 0.9]},
    },
    Preset.EXAMPLE5: {
        "command": "entrain",
        "params": {"schedule": "example5", "x0": [0.3, 0.5]},
    },
    Preset.FIG6: {
        "command": "consensus",
        "params": {"x0": [1.0, 0.0, 0.0, 0.0], "rate": 1.0},
    },
    Preset.FIG7: {
        "command": "formation",
        "params": {
            "thetas": [0.9 * math.pi, math.pi,
                       1.1 * math.pi, 1.2 * math.pi],
            "v": 3.0 / 16.0,
            "tend": 150.0,
        },
    },
}

# Configuration from environment
SERVICE_NAME = os.getenv("SERVICE_NAME", "rfmr")
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
OUT_DIR = os.getenv("RFMR_OUT_DIR", "results")

# Numerical defaults
RTOL = float(os.getenv("RFMR_RTOL", 1e-9))
ATOL = float(os.getenv("RFMR_ATOL", 1e-12))
STEP = float(os.getenv("RFMR_STEP", 1e-2))
SAMPLE_INTERVAL = float(os.getenv("RFMR_SAMPLE_INTERVAL", 1e-2))
SETTLE_TOL = float(os.getenv("RFMR_SETTLE_TOL", 1e-10))
CUBE_TOLERANCE = float(os.getenv("RFMR_CUBE_TOLERANCE", 1e-12))
CONSERVATION_TOL = float(os.getenv("RFMR_CONSERVATION_TOL", 1e-9))  # per site

# Entrainment
SAMPLES_PER_PERIOD = int(os.getenv("RFMR_SAMPLES_PER_PERIOD", 64))
ENTRAINMENT_TOL = float(os.getenv("RFMR_ENTRAINMENT_TOL", 1e-6))
MAX_CYCLES = int(os.getenv("RFMR_MAX_CYCLES", 200))

# Consensus
CONSENSUS_EPS = float(os.getenv("RFMR_CONSENSUS_EPS", 1e-6))

# Newton
NEWTON_MAX_ITER = int(os.getenv("RFMR_NEWTON_MAX_ITER", 50))
NEWTON_MAX_HALVINGS = 30

# Feature flags
METRICS_FILE = os.getenv("METRICS_FILE")
TRACING_ENABLED = os.getenv("TRACING_ENABLED", "false").lower() == "true"
