# Housing Recession Impact - Configuration and Logging
# ====================================================

from __future__ import annotations

import logging
import os
import re
import sys
from logging.handlers import RotatingFileHandler
from typing import Optional

APP_VERSION = "1.2.0"

# ============================================================================
# MONTH INDEX
# ============================================================================

EPOCH_YEAR = 1996

_MONTH_RE = re.compile(r"^\s*(\d{4})-(\d{1,2})(?:-(\d{1,2}))?\s*$")


def month_index(year: int, month: int) -> int:
    """Months elapsed since 1996-01 (negative before the epoch)."""
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range: {month}")
    return (year - EPOCH_YEAR) * 12 + (month - 1)


def parse_month(text: str) -> int:
    """Parse ``YYYY-MM`` or ``YYYY-MM-DD`` into a month index; the day is ignored."""
    match = _MONTH_RE.match(text or "")
    if not match:
        raise ValueError(f"unparseable month: {text!r}")
    year, month, day = match.groups()
    if day is not None and not 1 <= int(day) <= 31:
        raise ValueError(f"unparseable month: {text!r}")
    return month_index(int(year), int(month))


def format_month(index: int) -> str:
    year, month0 = divmod(index, 12)
    return f"{EPOCH_YEAR + year:04d}-{month0 + 1:02d}"


def month_year(index: int) -> int:
    return EPOCH_YEAR + index // 12


# ============================================================================
# DEFAULTS (environment overridable)
# ============================================================================

MA_WINDOW = int(os.environ.get('HOUSING_MA_WINDOW', 5))
CRISIS_ONSET = os.environ.get('HOUSING_CRISIS_ONSET', '2007-01')
MAX_GAP = int(os.environ.get('HOUSING_MAX_GAP', 3))
RANK_K = int(os.environ.get('HOUSING_RANK_K', 3))

# Hard caps on ArimaOrder.
ARIMA_MAX_P = int(os.environ.get('HOUSING_ARIMA_MAX_P', 5))
ARIMA_MAX_D = int(os.environ.get('HOUSING_ARIMA_MAX_D', 2))
ARIMA_MAX_Q = int(os.environ.get('HOUSING_ARIMA_MAX_Q', 5))

GRID_P_MAX = int(os.environ.get('HOUSING_GRID_P_MAX', 3))
GRID_D_MAX = int(os.environ.get('HOUSING_GRID_D_MAX', 2))
GRID_Q_MAX = int(os.environ.get('HOUSING_GRID_Q_MAX', 2))
ORDER_CRITERION = os.environ.get('HOUSING_ORDER_CRITERION', 'aic')
FORECAST_HORIZON = int(os.environ.get('HOUSING_FORECAST_HORIZON', 36))
ACF_EXPORT_LAGS = int(os.environ.get('HOUSING_ACF_LAGS', 24))
RESIDUAL_BINS = int(os.environ.get('HOUSING_RESIDUAL_BINS', 10))

OPTIMIZER_MAX_ITER = int(os.environ.get('HOUSING_OPTIMIZER_MAX_ITER', 500))
OPTIMIZER_FTOL = float(os.environ.get('HOUSING_OPTIMIZER_FTOL', 1e-10))
INTERVAL_Z = 1.96

PCA_MAX_MISSING_FRAC = float(os.environ.get('HOUSING_PCA_MAX_MISSING', 0.4))

MAX_WORKERS = min(32, (os.cpu_count() or 4) + 4)
DEFAULT_JOBS = int(os.environ.get('HOUSING_JOBS', 1))

LOG_LEVEL = os.environ.get('HOUSING_LOG_LEVEL', 'INFO').upper()
LOG_FILE = os.environ.get('HOUSING_LOG_FILE') or None
METRICS_FILE = os.environ.get('HOUSING_METRICS_FILE') or None

# ============================================================================
# LOGGING
# ============================================================================

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s'

_logging_configured = False


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """Attach console (and optional rotating file) handlers to the root logger once."""
    global _logging_configured

    root = logging.getLogger()
    root.setLevel(getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO))
    if _logging_configured:
        return

    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    root.addHandler(console_handler)

    log_file = log_file or LOG_FILE
    if log_file:
        file_handler = RotatingFileHandler(log_file, maxBytes=10 * 1024 * 1024, backupCount=5)
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

    _logging_configured = True
