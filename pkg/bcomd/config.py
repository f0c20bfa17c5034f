import os
from dotenv import load_dotenv
from typing import Dict, List, Any

# Load environment variables from .env file
load_dotenv()

class Settings:
    # App settings
    APP_NAME = "BCOMD Simulator"
    LOG_LEVEL = os.getenv("BCOMD_LOG_LEVEL", "INFO")

    # Output
    RESULTS_DIR = os.getenv("BCOMD_RESULTS_DIR", "./results")
    CSV_FLOAT_FORMAT = "%.17g"

    # Results ledger
    DATABASE_URL = os.getenv("BCOMD_DATABASE_URL", "sqlite:///./bcomd_runs.db")

    # Replication
    DEFAULT_SEEDS = int(os.getenv("BCOMD_DEFAULT_SEEDS", "20"))

    # Acceptance checks run at reduced scale unless this is set
    FULL_ACCEPTANCE = os.getenv("BCOMD_FULL_ACCEPTANCE", "0") == "1"

    # Numerical tolerances, shared by library and tests
    EXPONENT_CLAMP = 700.0
    NORMALIZATION_TOL = 1e-12
    IDENTITY_TOL = 1e-9
    SOLVER_AGREEMENT_TOL = 1e-10
    FEASIBILITY_TOL = 1e-9
    BISECTION_XTOL = 1e-15
    BISECTION_MAXITER = 200

    # Trace format
    TRACE_DIGITS = 17
    NOMINAL_CONSTRAINT_FLOOR = -1e3

    # Experimental hyperparameter grid: mu = eta / 2, omega = 0
    MANUAL_PRESETS: Dict[str, Dict[str, Any]] = {
        "grid": {
            "etas": [1e-3, 4e-3, 1e-2, 2e-2, 4e-2],
            "gammas": [1e-5, 1e-4, 1e-3],
            "mu_ratio": 0.5,
            "omega": 0.0,
        },
        "low": {"eta": 1e-3, "mu": 5e-4, "gamma": 1e-4, "omega": 0.0},
        "mid": {"eta": 1e-2, "mu": 5e-3, "gamma": 1e-4, "omega": 0.0},
        "high": {"eta": 4e-2, "mu": 2e-2, "gamma": 1e-4, "omega": 0.0},
    }

    # Theta-constants of the doubling schedule
    META_CONSTANTS: Dict[str, float] = {
        "gamma": float(os.getenv("BCOMD_META_GAMMA", "1.0")),
        "gamma_meta": float(os.getenv("BCOMD_META_GAMMA_META", "1.0")),
        "eta_meta": float(os.getenv("BCOMD_META_ETA_META", "1.0")),
    }

    # Rounds between cyclic shifts of the synthetic trace
    TRACE_WINDOWS: Dict[str, int] = {
        "short": 200,
        "long": 2000,
    }

    CSV_COLUMNS: List[str] = [
        "t",
        "action",
        "loss",
        "constraint",
        "lambda",
        "cum_loss",
        "cum_violation",
        "comparator_value",
        "regret_prefix",
    ]

settings = Settings()
