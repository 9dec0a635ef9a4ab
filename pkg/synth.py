"""
Housing Recession Impact - Synthetic Data
=========================================

Seeded fixtures with known answers:

* boom-bust-recovery curves: a ramp up to a peak plateau of exactly
  ``window`` months at level c, a linear fall over f months to c - D, a linear
  climb over r months back to c, a recovery plateau of ``window`` months and a
  rising tail. After a ``window``-month trailing average the area under the
  baseline is exactly D * (f + r) / 2.
* ARMA(p, q) paths with known coefficients, optionally integrated.

Every region draws from its own child of one ``SeedSequence`` so a region's
data does not depend on how many other regions were generated.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import signal

import config
from errors import InvalidParameterError
from ingest import MonthlySeries, RegionId, serialize_series_csv

logger = logging.getLogger(__name__)

GROUND_TRUTH_COLUMNS = [
    "region_code", "region_name", "model", "true_aub", "peak", "depth",
    "fall_months", "rise_months", "peak_month", "recovery_month", "ar", "ma", "d",
]

# Cycled over synthetic regions so the state grids have several rows.
_STATES = ("CA", "FL", "NV", "TX", "WA", "NY", "AZ", "OH")


@dataclass(frozen=True)
class BoomBustShape:
    peak: float
    depth: float
    fall: int
    rise: int
    window: int = config.MA_WINDOW
    peak_end: int = config.parse_month(config.CRISIS_ONSET)  # last month of the peak plateau
    start: int = 0
    base_fraction: float = 0.5
    tail: int = 24
    tail_growth: float = 0.002

    def __post_init__(self):
        if self.fall < 1 or self.rise < 1 or self.window < 1:
            raise InvalidParameterError("fall, rise and window must be >= 1")
        if not 0 <= self.depth <= self.peak:
            raise InvalidParameterError(f"depth must lie in [0, peak], got {self.depth}")
        if self.peak_end - self.window + 1 - self.start < 1:
            raise InvalidParameterError("peak plateau must leave at least one ramp month")
        if not 0 <= self.base_fraction < 1:
            raise InvalidParameterError("base_fraction must lie in [0, 1)")

    @property
    def true_aub(self) -> float:
        return self.depth * (self.fall + self.rise) / 2.0

    @property
    def recovery_month(self) -> int:
        """First month whose trailing window is all at the peak again (the last climb month is c)."""
        return self.peak_end + self.fall + self.rise + self.window - 1


def boom_bust_curve(shape: BoomBustShape) -> np.ndarray:
    c, depth = shape.peak, shape.depth
    lead = shape.peak_end - shape.window + 1 - shape.start
    base = c * shape.base_fraction
    ramp = base + (c - base) * np.arange(lead) / lead
    plateau = np.full(shape.window, c)
    fall = c - depth * np.arange(1, shape.fall + 1) / shape.fall
    rise = c - depth * (shape.rise - np.arange(1, shape.rise + 1)) / shape.rise
    tail = c * (1.0 + shape.tail_growth * np.arange(1, shape.tail + 1))
    return np.concatenate([ramp, plateau, fall, rise, plateau, tail])


def boom_bust_series(region: RegionId, shape: BoomBustShape) -> MonthlySeries:
    return MonthlySeries(region=region, start=shape.start, values=tuple(boom_bust_curve(shape).tolist()))


def random_shape(rng: np.random.Generator, window: int, onset: int, depth_zero: bool = False) -> BoomBustShape:
    peak = float(rng.uniform(1e5, 5e5))
    return BoomBustShape(
        peak=peak,
        depth=0.0 if depth_zero else float(rng.uniform(0.05, 0.4) * peak),
        fall=int(rng.integers(6, 49)),
        rise=int(rng.integers(6, 73)),
        window=window,
        peak_end=onset + int(rng.integers(0, 25)),
        base_fraction=float(rng.uniform(0.3, 0.7)),
        tail=int(rng.integers(12, 37)),
    )


# ============================================================================
# ARMA SIMULATION
# ============================================================================

def simulate_arma(
    rng: np.random.Generator,
    n: int,
    ar: Sequence[float] = (),
    ma: Sequence[float] = (),
    sigma: float = 1.0,
    constant: float = 0.0,
    d: int = 0,
    burn: int = 200,
) -> np.ndarray:
    """ARMA(p, q) driven by N(0, sigma^2) noise, integrated ``d`` times; the burn-in is discarded."""
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    if burn < 0 or d < 0:
        raise InvalidParameterError("burn and d must be >= 0")
    innovations = rng.normal(0.0, sigma, n + burn) + constant
    path = signal.lfilter(np.r_[1.0, ma], np.r_[1.0, -np.asarray(ar, dtype=float)], innovations)[burn:]
    for _ in range(d):
        path = np.cumsum(path)
    return path


def arma_series(region: RegionId, path: np.ndarray, level: float = 100.0, start: int = 0) -> MonthlySeries:
    """Shift a simulated path so every value is at least ``level`` (series values must be >= 0)."""
    offset = level - min(float(path.min()), 0.0)
    return MonthlySeries(region=region, start=start, values=tuple((path + offset).tolist()))


# ============================================================================
# DATASET
# ============================================================================

@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    regions: int = 10
    arma_regions: int = 0
    window: int = config.MA_WINDOW
    onset: int = config.parse_month(config.CRISIS_ONSET)
    zero_depth_every: int = 0        # every n-th boom-bust region gets depth 0
    ar: Tuple[float, ...] = (0.7,)
    ma: Tuple[float, ...] = ()
    d: int = 0
    arma_length: int = 300
    sigma: float = 1.0


@dataclass
class SynthDataset:
    series: List[MonthlySeries] = field(default_factory=list)
    truth: List[dict] = field(default_factory=list)


def _region(index: int, prefix: str) -> RegionId:
    state = _STATES[index % len(_STATES)]
    return RegionId(code=f"{prefix}{index:04d}", name=f"Synthetic {prefix}{index:04d}, {state}")


def generate(cfg: SynthConfig) -> SynthDataset:
    if cfg.regions < 0 or cfg.arma_regions < 0:
        raise InvalidParameterError("region counts must be >= 0")
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.regions + cfg.arma_regions)
    dataset = SynthDataset()

    for i in range(cfg.regions):
        rng = np.random.default_rng(children[i])
        flat = cfg.zero_depth_every > 0 and i % cfg.zero_depth_every == 0
        shape = random_shape(rng, cfg.window, cfg.onset, depth_zero=flat)
        region = _region(i, "B")
        dataset.series.append(boom_bust_series(region, shape))
        dataset.truth.append({
            "region_code": region.code,
            "region_name": region.name,
            "model": "boom_bust",
            "true_aub": shape.true_aub,
            "peak": shape.peak,
            "depth": shape.depth,
            "fall_months": shape.fall,
            "rise_months": shape.rise,
            "peak_month": config.format_month(shape.peak_end),
            "recovery_month": config.format_month(shape.recovery_month),
        })

    for j in range(cfg.arma_regions):
        rng = np.random.default_rng(children[cfg.regions + j])
        region = _region(j, "A")
        path = simulate_arma(rng, cfg.arma_length, cfg.ar, cfg.ma, sigma=cfg.sigma, d=cfg.d)
        dataset.series.append(arma_series(region, path))
        dataset.truth.append({
            "region_code": region.code,
            "region_name": region.name,
            "model": "arma",
            "ar": json.dumps(list(cfg.ar)),
            "ma": json.dumps(list(cfg.ma)),
            "d": cfg.d,
        })

    logger.info(f"Generated {cfg.regions} boom-bust and {cfg.arma_regions} ARMA regions (seed {cfg.seed})")
    return dataset


def ground_truth_to_csv(dataset: SynthDataset) -> bytes:
    frame = pd.DataFrame(dataset.truth, columns=GROUND_TRUTH_COLUMNS)
    frame[["fall_months", "rise_months", "d"]] = frame[["fall_months", "rise_months", "d"]].astype("Int64")
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


def series_to_csv(dataset: SynthDataset) -> bytes:
    return serialize_series_csv(dataset.series)


def load_ground_truth(raw: bytes) -> pd.DataFrame:
    return pd.read_csv(io.BytesIO(raw), dtype={"region_code": str})


def config_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)
