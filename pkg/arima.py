"""
Housing Recession Impact - ARIMA
================================

ARIMA(p, d, q) estimation by conditional sum of squares, AIC/BIC order search,
forecasts with 95% prediction intervals, and the interval-area score: the
narrower the band over the horizon, the less volatile the expected recovery.

Model on the d-times differenced series w:

    w_t = c + sum_i phi_i w_{t-i} + e_t + sum_j theta_j e_{t-j}

The first ``condition`` points (default max(p, q)) are conditioned on: their
innovations are zero and they do not enter the sum of squares.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.polynomial import polynomial as P
from scipy import optimize, signal, stats

import config
from errors import (
    AllFitsFailedError,
    InvalidParameterError,
    OptimizerDivergedError,
    SeriesTooShortError,
    SplitOutOfRangeError,
)
from ingest import MonthlySeries, RegionId
from tscore import difference, undifference

logger = logging.getLogger(__name__)

SCORE_COLUMNS = [
    "region_code", "region_name", "p", "d", "q", "sigma2", "bias_flag",
    "horizon", "ci_area", "ci_area_normalized",
]
FORECAST_COLUMNS = ["month", "point", "lower95", "upper95"]
HISTOGRAM_COLUMNS = ["bin_lower", "bin_upper", "count"]

# Standardized CSS at or below this fraction of the sample size counts as a
# perfect fit; AIC is undefined there.
_DEGENERATE_CSS = 1e-12
_ROUNDOFF_CSS = np.finfo(float).eps ** 2
# Mean square innovation standing in for a non-finite CSS during optimization.
_PENALTY = 1e10
CRITERIA = ("aic", "bic")


# ============================================================================
# TYPES
# ============================================================================

@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        for name, value, cap in (
            ("p", self.p, config.ARIMA_MAX_P),
            ("d", self.d, config.ARIMA_MAX_D),
            ("q", self.q, config.ARIMA_MAX_Q),
        ):
            if not 0 <= value <= cap:
                raise InvalidParameterError(f"{name}={value} outside [0, {cap}]")

    @classmethod
    def parse(cls, text: str) -> "ArimaOrder":
        """Parse ``"p,d,q"``."""
        try:
            p, d, q = (int(part) for part in text.split(","))
        except ValueError as e:
            raise InvalidParameterError(f"order must look like 'p,d,q', got {text!r}") from e
        return cls(p, d, q)

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})"


@dataclass(frozen=True)
class OrderGrid:
    p_max: int = config.GRID_P_MAX
    d_max: int = config.GRID_D_MAX
    q_max: int = config.GRID_Q_MAX

    def __post_init__(self):
        ArimaOrder(self.p_max, self.d_max, self.q_max)


@dataclass(frozen=True)
class ArimaModel:
    order: ArimaOrder
    constant: float
    ar: Tuple[float, ...]
    ma: Tuple[float, ...]
    sigma2: float
    residuals: Tuple[float, ...]
    series_tail: Tuple[float, ...]
    css: float = 0.0
    condition: int = 0
    n_eff: int = 0
    aic: float = math.nan
    stationary: bool = True
    invertible: bool = True
    include_constant: bool = True
    last_month: int = 0
    region: Optional[RegionId] = None

    @property
    def loglik_proxy(self) -> float:
        return -self.css

    @property
    def last_value(self) -> float:
        return self.series_tail[-1] if self.series_tail else math.nan

    @property
    def effective_residuals(self) -> np.ndarray:
        return np.asarray(self.residuals[self.condition:], dtype=float)


@dataclass(frozen=True)
class ForecastResult:
    horizon: int
    start_month: int
    point: Tuple[float, ...]
    lower95: Tuple[float, ...]
    upper95: Tuple[float, ...]
    psi: Tuple[float, ...]
    variance: Tuple[float, ...]
    ci_area: float = math.nan
    ci_area_normalized: float = math.nan

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.upper95) - np.asarray(self.lower95)


@dataclass(frozen=True)
class ResidualDiagnostics:
    mean: float
    stddev: float
    bias_flag: bool
    histogram: Tuple[int, ...]
    bin_edges: Tuple[float, ...]
    normality_pvalue: float = math.nan


@dataclass(frozen=True)
class BacktestMetrics:
    n: int
    rmse: float
    mae: float
    coverage95: float


# ============================================================================
# CSS OBJECTIVE
# ============================================================================

def _unpack(params: np.ndarray, p: int, q: int, include_constant: bool):
    offset = 1 if include_constant else 0
    c = params[0] if include_constant else 0.0
    return c, params[offset:offset + p], params[offset + p:offset + p + q]


def css_objective(
    params: Sequence[float],
    w: Sequence[float],
    p: int,
    q: int,
    condition: Optional[int] = None,
    include_constant: bool = True,
) -> Tuple[float, np.ndarray]:
    """Conditional sum of squares and its analytic gradient.

    ``params`` is ``[c, phi_1..phi_p, theta_1..theta_q]`` (``c`` omitted when
    ``include_constant`` is false).
    """
    params = np.asarray(params, dtype=float)
    w = np.asarray(w, dtype=float)
    m = max(p, q) if condition is None else condition
    n = w.size
    c, phi, theta = _unpack(params, p, q, include_constant)

    ma_poly = np.r_[1.0, theta]
    lagged = [w[m - i:n - i] for i in range(1, p + 1)]

    u = w[m:] - c
    for coef, column in zip(phi, lagged):
        u = u - coef * column
    eps = signal.lfilter([1.0], ma_poly, u)
    value = float(eps @ eps)

    # d eps / d param follow the same MA filter, driven by minus the regressor
    drivers = []
    if include_constant:
        drivers.append(-np.ones_like(u))
    drivers.extend(-column for column in lagged)
    for k in range(1, q + 1):
        shifted = np.zeros_like(eps)
        shifted[k:] = eps[:-k] if k < eps.size else 0.0
        drivers.append(-shifted)

    grad = np.array([2.0 * float(eps @ signal.lfilter([1.0], ma_poly, drv)) for drv in drivers])
    return value, grad


def _roots_outside_unit_circle(coefficients: Sequence[float], sign: float) -> bool:
    """True if all roots of 1 + sign * sum_i coef_i z^i lie outside the unit circle."""
    poly = np.r_[1.0, sign * np.asarray(coefficients, dtype=float)]
    if np.allclose(poly[1:], 0.0):
        return True
    roots = P.polyroots(poly)
    return bool(np.all(np.abs(roots) > 1.0))


def _coefficient_bounds(p: int, q: int, include_constant: bool) -> list:
    """Box holding every stationary AR and invertible MA polynomial: |coef_i| <= C(order, i)."""
    bounds = [(None, None)] if include_constant else []
    for order in (p, q):
        bounds.extend((-math.comb(order, i), math.comb(order, i)) for i in range(1, order + 1))
    return bounds


def _minimize_css(
    w: np.ndarray, p: int, q: int, condition: int, include_constant: bool
) -> Tuple[np.ndarray, float, np.ndarray]:
    """Fit on w scaled to unit RMS; returns params, CSS and innovations on the original scale.

    The optimizer sees the mean square innovation. Points where the MA filter
    blows up score a finite penalty that grows away from the start, so the
    line search backs off instead of failing. If L-BFGS-B does not converge,
    Nelder-Mead restarts from the best point found.
    """
    scale = float(np.sqrt(np.mean(w * w)))
    if not math.isfinite(scale) or scale == 0.0:
        scale = 1.0
    ws = w / scale
    n = ws.size

    x0 = np.zeros((1 if include_constant else 0) + p + q)
    if include_constant:
        x0[0] = ws.mean()

    def objective(x):
        with np.errstate(over="ignore", invalid="ignore"):
            value, grad = css_objective(x, ws, p, q, condition, include_constant)
        value, grad = value / n, grad / n
        if math.isfinite(value) and value < _PENALTY and np.all(np.isfinite(grad)):
            return value, grad
        offset = x - x0
        return _PENALTY * (1.0 + float(offset @ offset)), 2.0 * _PENALTY * offset

    best_x, best_f = x0, objective(x0)[0]
    if best_f >= _PENALTY:
        raise OptimizerDivergedError("non-finite CSS at the starting point")

    if x0.size:
        bounds = _coefficient_bounds(p, q, include_constant)
        result = optimize.minimize(
            objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": config.OPTIMIZER_MAX_ITER, "ftol": config.OPTIMIZER_FTOL, "gtol": 1e-9},
        )
        if result.fun < best_f:
            best_x, best_f = result.x, float(result.fun)
        if not result.success:
            logger.debug(f"L-BFGS-B stopped early ({result.message}); retrying with Nelder-Mead")
            result = optimize.minimize(
                lambda x: objective(x)[0], best_x, method="Nelder-Mead", bounds=bounds,
                options={
                    "maxiter": config.OPTIMIZER_MAX_ITER * x0.size,
                    "xatol": 1e-8,
                    "fatol": config.OPTIMIZER_FTOL,
                },
            )
            if result.fun < best_f:
                best_x, best_f = result.x, float(result.fun)

    if not best_f < _PENALTY:
        raise OptimizerDivergedError(f"non-finite CSS at params {np.round(best_x, 6).tolist()}")

    x = np.asarray(best_x, dtype=float)
    css_scaled = best_f * n
    c, phi, theta = _unpack(x, p, q, include_constant)
    u = ws[condition:] - c
    for i, coef in enumerate(phi, start=1):
        u = u - coef * ws[condition - i:ws.size - i]
    eps = signal.lfilter([1.0], np.r_[1.0, theta], u)
    if css_scaled <= _ROUNDOFF_CSS * ws.size:
        # exact fit; what remains is round-off
        css_scaled = 0.0
        eps = np.zeros_like(eps)

    params = x.copy()
    if include_constant:
        params[0] *= scale
    return params, css_scaled * scale * scale, eps * scale


# ============================================================================
# FIT / ORDER SELECTION
# ============================================================================

def fit(
    series: MonthlySeries,
    order: ArimaOrder,
    include_constant: bool = True,
    condition: Optional[int] = None,
) -> ArimaModel:
    """Estimate an ARIMA model by conditional sum of squares."""
    p, d, q = order.p, order.d, order.q
    values = series.as_array()
    w = difference(values, d)
    n = w.size
    m = max(p, q) if condition is None else condition

    if n < p + q + 2:
        raise SeriesTooShortError(
            f"region {series.region.code}: {n} differenced points, order {order} needs {p + q + 2}"
        )
    if not p <= m <= n - 2:
        raise InvalidParameterError(f"condition={m} must lie in [{p}, {n - 2}]")
    if n < 10 * (p + q + 1):
        logger.warning(f"{series.region.code}: only {n} points for order {order}; estimates may be unstable")

    params, css, eps = _minimize_css(w, p, q, m, include_constant)
    c, phi, theta = _unpack(params, p, q, include_constant)

    residuals = np.zeros(n)
    residuals[m:] = eps
    n_eff = n - m
    k = p + q + (1 if include_constant else 0)

    stationary = _roots_outside_unit_circle(phi, -1.0)
    invertible = _roots_outside_unit_circle(theta, 1.0)
    if not stationary:
        logger.warning(f"{series.region.code}: fitted AR part of {order} is not stationary")
    if not invertible:
        logger.warning(f"{series.region.code}: fitted MA part of {order} is not invertible")

    tail = max(max(p, q) + d, 1)
    return ArimaModel(
        order=order,
        constant=float(c),
        ar=tuple(float(v) for v in phi),
        ma=tuple(float(v) for v in theta),
        sigma2=css / n_eff,
        residuals=tuple(residuals.tolist()),
        series_tail=tuple(values[-tail:].tolist()),
        css=css,
        condition=m,
        n_eff=n_eff,
        aic=n_eff * math.log(css / n_eff) + 2 * k if css > 0 else -math.inf,
        stationary=stationary,
        invertible=invertible,
        include_constant=include_constant,
        last_month=series.end,
        region=series.region,
    )


def _information_criterion(css: float, n_eff: int, k: int, criterion: str) -> float:
    penalty = 2.0 * k if criterion == "aic" else math.log(n_eff) * k
    return n_eff * math.log(css / n_eff) + penalty


def select_order(
    series: MonthlySeries,
    grid: OrderGrid = OrderGrid(),
    criterion: str = config.ORDER_CRITERION,
) -> ArimaOrder:
    """Pick the order minimizing AIC = n ln(CSS/n) + 2(p+q+1) over the grid.

    ``criterion="bic"`` uses the penalty ln(n)(p+q+1) instead.
    Every candidate is scored on the same effective sample: the series is
    differenced to each d, trimmed to the length of the d_max-differenced
    series, and conditioned on max(p_max, q_max) points. Fits whose AR part is
    not stationary or whose MA part is not invertible are not eligible.
    """
    if criterion not in CRITERIA:
        raise InvalidParameterError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    values = series.as_array()
    m = max(grid.p_max, grid.q_max)
    candidates = []
    failures = 0

    for d in range(grid.d_max + 1):
        try:
            w = difference(values, d)[grid.d_max - d:]
        except SeriesTooShortError:
            failures += (grid.p_max + 1) * (grid.q_max + 1)
            continue
        n_eff = w.size - m
        for p in range(grid.p_max + 1):
            for q in range(grid.q_max + 1):
                if n_eff < p + q + 2:
                    failures += 1
                    continue
                try:
                    params, css, _ = _minimize_css(w, p, q, m, True)
                except OptimizerDivergedError as e:
                    logger.debug(f"{series.region.code}: ({p},{d},{q}) diverged: {e}")
                    failures += 1
                    continue
                scale2 = float(np.mean(w * w)) or 1.0
                if css / scale2 <= _DEGENERATE_CSS * n_eff:
                    failures += 1
                    continue
                _, phi, theta = _unpack(params, p, q, True)
                if not (_roots_outside_unit_circle(phi, -1.0) and _roots_outside_unit_circle(theta, 1.0)):
                    logger.debug(f"{series.region.code}: ({p},{d},{q}) not stationary/invertible")
                    failures += 1
                    continue
                score = _information_criterion(css, n_eff, p + q + 1, criterion)
                candidates.append((score, p + q, d, p, q))

    if not candidates:
        raise AllFitsFailedError(
            f"region {series.region.code}: all {failures} candidate orders failed "
            "(zero variance, divergence or non-stationary fit)"
        )
    score, _, d, p, q = min(candidates)
    logger.debug(f"{series.region.code}: selected ({p},{d},{q}) with {criterion.upper()} {score:.4f}")
    return ArimaOrder(p, d, q)


# ============================================================================
# FORECAST
# ============================================================================

def psi_weights(model: ArimaModel, horizon: int) -> np.ndarray:
    """MA(infinity) weights of the integrated model, psi_0 .. psi_{horizon-1}."""
    ar_poly = np.r_[1.0, -np.asarray(model.ar, dtype=float)]
    full_ar = P.polymul(ar_poly, P.polypow([1.0, -1.0], model.order.d))
    impulse = np.zeros(horizon)
    impulse[0] = 1.0
    return signal.lfilter(np.r_[1.0, model.ma], full_ar, impulse)


def ci_area(result: ForecastResult, last_observed: float) -> Tuple[float, float]:
    """Band area over the horizon (1-month rectangles) and area / (last_observed * horizon)."""
    if not last_observed > 0:
        raise InvalidParameterError(f"last_observed must be > 0, got {last_observed}")
    area = math.fsum(result.widths.tolist())
    return area, area / (last_observed * result.horizon)


def ci_area_histogram(normalized_areas: Sequence[float], bins: int = config.RESIDUAL_BINS) -> pd.DataFrame:
    """Counts of normalized interval areas across regions; non-finite areas are left out."""
    if bins < 1:
        raise InvalidParameterError(f"bins must be >= 1, got {bins}")
    values = np.asarray(normalized_areas, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return pd.DataFrame(columns=HISTOGRAM_COLUMNS)
    counts, edges = np.histogram(values, bins=bins)
    return pd.DataFrame({"bin_lower": edges[:-1], "bin_upper": edges[1:], "count": counts}, columns=HISTOGRAM_COLUMNS)


def forecast(model: ArimaModel, horizon: int = config.FORECAST_HORIZON) -> ForecastResult:
    """Point forecasts with symmetric 95% bounds; future innovations are set to zero."""
    if horizon < 1:
        raise InvalidParameterError(f"horizon must be >= 1, got {horizon}")
    p, d, q = model.order.p, model.order.d, model.order.q
    tail = np.asarray(model.series_tail, dtype=float)

    path = list(difference(tail, d)) if tail.size > d else []
    past_eps = np.asarray(model.residuals[len(model.residuals) - q:], dtype=float) if q else np.empty(0)

    diffed = []
    for h in range(1, horizon + 1):
        value = model.constant
        for i in range(1, p + 1):
            value += model.ar[i - 1] * path[-i]
        for j in range(h, q + 1):
            value += model.ma[j - 1] * past_eps[q - 1 - (j - h)]
        path.append(value)
        diffed.append(value)

    point = undifference(diffed, tail[tail.size - d:], d) if d else np.asarray(diffed)
    psi = psi_weights(model, horizon)
    variance = model.sigma2 * np.cumsum(psi * psi)
    half = config.INTERVAL_Z * np.sqrt(variance)

    result = ForecastResult(
        horizon=horizon,
        start_month=model.last_month + 1,
        point=tuple(point.tolist()),
        lower95=tuple((point - half).tolist()),
        upper95=tuple((point + half).tolist()),
        psi=tuple(psi.tolist()),
        variance=tuple(variance.tolist()),
    )
    if model.last_value > 0:
        area, normalized = ci_area(result, model.last_value)
    else:
        area, normalized = math.fsum(result.widths.tolist()), math.nan
    return dataclasses.replace(result, ci_area=area, ci_area_normalized=normalized)


# ============================================================================
# DIAGNOSTICS AND BACKTEST
# ============================================================================

def diagnose_residuals(residuals: Sequence[float], bins: int = config.RESIDUAL_BINS) -> ResidualDiagnostics:
    """Mean/std of residuals, a two-sigma bias test on the mean, and a histogram."""
    values = np.asarray(residuals, dtype=float)
    if values.size == 0:
        raise InvalidParameterError("no residuals to diagnose")
    n = values.size
    mean = float(values.mean())
    stddev = float(values.std(ddof=1)) if n > 1 else 0.0
    counts, edges = np.histogram(values, bins=bins)
    pvalue = float(stats.jarque_bera(values).pvalue) if n >= 3 and stddev > 0 else math.nan
    return ResidualDiagnostics(
        mean=mean,
        stddev=stddev,
        bias_flag=bool(abs(mean) > 2.0 * stddev / math.sqrt(n)),
        histogram=tuple(int(c) for c in counts),
        bin_edges=tuple(float(e) for e in edges),
        normality_pvalue=pvalue,
    )


def residual_diagnostics(model: ArimaModel, bins: int = config.RESIDUAL_BINS) -> ResidualDiagnostics:
    return diagnose_residuals(model.effective_residuals, bins)


def backtest_split(series: MonthlySeries, split: int) -> Tuple[MonthlySeries, MonthlySeries]:
    """Train on months before ``split``, test on ``split`` onwards."""
    if not series.start < split <= series.end:
        raise SplitOutOfRangeError(
            f"region {series.region.code}: split {config.format_month(split)} outside "
            f"({config.format_month(series.start)}, {config.format_month(series.end)}]"
        )
    cut = split - series.start
    train = MonthlySeries(region=series.region, start=series.start, values=series.values[:cut])
    test = MonthlySeries(region=series.region, start=split, values=series.values[cut:])
    return train, test


def evaluate_forecast(result: ForecastResult, test: MonthlySeries) -> BacktestMetrics:
    """Out-of-sample errors and 95% band coverage over the months both cover."""
    first = max(result.start_month, test.start)
    last = min(result.start_month + result.horizon - 1, test.end)
    if last < first:
        return BacktestMetrics(n=0, rmse=math.nan, mae=math.nan, coverage95=math.nan)
    f_slice = slice(first - result.start_month, last - result.start_month + 1)
    actual = np.asarray(test.values[first - test.start:last - test.start + 1])
    point = np.asarray(result.point[f_slice])
    lower = np.asarray(result.lower95[f_slice])
    upper = np.asarray(result.upper95[f_slice])
    errors = actual - point
    return BacktestMetrics(
        n=int(actual.size),
        rmse=float(np.sqrt(np.mean(errors ** 2))),
        mae=float(np.mean(np.abs(errors))),
        coverage95=float(np.mean((actual >= lower) & (actual <= upper))),
    )


def forecast_to_csv(result: ForecastResult) -> bytes:
    frame = pd.DataFrame({
        "month": [config.format_month(result.start_month + h) for h in range(result.horizon)],
        "point": result.point,
        "lower95": result.lower95,
        "upper95": result.upper95,
    }, columns=FORECAST_COLUMNS)
    return frame.to_csv(index=False, lineterminator="\n", float_format="%.10g").encode("utf-8")
