# Housing Recession Impact - Time Series Core
# ===========================================
#
# Trailing moving average, differencing and its inverse, and the
# correlogram estimator. Everything here is a pure function.

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

import config
from errors import (
    AnchorCountMismatchError,
    ConstantSeriesError,
    InvalidParameterError,
    SeriesTooShortError,
)
from ingest import MonthlySeries


@dataclass(frozen=True)
class SmoothedSeries:
    """Trailing ``window``-month means; entry j covers source months j .. j+window-1."""

    source: MonthlySeries
    window: int
    values: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.values)

    @property
    def start(self) -> int:
        """Month index of entry 0 (the last month of its window)."""
        return self.source.start + self.window - 1

    def month_of(self, j: int) -> int:
        return self.start + j

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class AcfResult:
    lags: int
    coefficients: Tuple[float, ...]
    # white-noise 95% half-width, 1.96 / sqrt(n)
    band: float = math.nan

    def significant_lags(self) -> Tuple[int, ...]:
        return tuple(k for k, r in enumerate(self.coefficients) if k > 0 and abs(r) > self.band)


def moving_average(series: MonthlySeries, window: int) -> SmoothedSeries:
    """Trailing mean M_i = mean(y[i-window+1 .. i]); no partial windows."""
    if window < 1:
        raise InvalidParameterError(f"window must be >= 1, got {window}")
    if len(series) < window:
        raise SeriesTooShortError(
            f"region {series.region.code}: {len(series)} months is shorter than window {window}"
        )
    windows = sliding_window_view(series.as_array(), window)
    return SmoothedSeries(source=series, window=window, values=tuple(windows.mean(axis=1).tolist()))


def difference(series: Sequence[float], order: int) -> np.ndarray:
    """Apply first differences ``order`` times."""
    values = np.asarray(series, dtype=float)
    if order < 0:
        raise InvalidParameterError(f"order must be >= 0, got {order}")
    if values.size <= order:
        raise SeriesTooShortError(f"need more than {order} values to difference, got {values.size}")
    return np.diff(values, n=order) if order else values.copy()


def undifference(diffed: Sequence[float], anchors: Sequence[float], order: int) -> np.ndarray:
    """Invert ``difference``: ``anchors`` are the last ``order`` levels before ``diffed``."""
    result = np.asarray(diffed, dtype=float)
    anchors = np.asarray(anchors, dtype=float)
    if order < 0:
        raise InvalidParameterError(f"order must be >= 0, got {order}")
    if anchors.size != order:
        raise AnchorCountMismatchError(f"expected {order} anchors, got {anchors.size}")

    # last value of the k-th difference of the anchors, k = 0..order-1
    tails = [np.diff(anchors, n=k)[-1] for k in range(order)]
    for k in reversed(range(order)):
        result = tails[k] + np.cumsum(result)
    return result


def acf(series: Sequence[float], max_lag: int) -> AcfResult:
    """Biased sample autocorrelation: sum (y_t - m)(y_{t+k} - m) / sum (y_t - m)^2."""
    values = np.asarray(series, dtype=float)
    if max_lag < 0:
        raise InvalidParameterError(f"max_lag must be >= 0, got {max_lag}")
    if values.size <= max_lag:
        raise SeriesTooShortError(f"need more than {max_lag} values, got {values.size}")
    if np.ptp(values) == 0:
        raise ConstantSeriesError("autocorrelation is undefined for a constant series")

    centered = values - values.mean()
    denominator = float(np.dot(centered, centered))
    n = values.size
    coefficients = [1.0]
    for k in range(1, max_lag + 1):
        coefficients.append(float(np.dot(centered[:n - k], centered[k:])) / denominator)
    return AcfResult(lags=max_lag, coefficients=tuple(coefficients), band=config.INTERVAL_Z / math.sqrt(n))
