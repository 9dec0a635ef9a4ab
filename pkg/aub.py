"""
Housing Recession Impact - Area Under Baseline
==============================================

Scores how hard a region's home values were hit: smooth the index with a
trailing moving average, take the largest local peak on/after the crisis
onset as the baseline, and sum the shortfall below that baseline until the
smoothed index gets back to it (or the data ends).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

import config
from errors import InvalidParameterError, KTooLargeError, NoLocalMaxError, SeriesTooShortError
from ingest import MonthlySeries, RegionId
from tscore import SmoothedSeries, moving_average

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "region_code", "region_name", "state", "window_start", "window_end",
    "recovered", "baseline", "aub", "classification",
]


class Classification(Enum):
    LOSER = "Loser"
    GAINER = "Gainer"
    UNRANKED = "Unranked"


@dataclass(frozen=True)
class RecessionWindow:
    start: int        # index a into the smoothed series
    end: int          # index b >= a
    baseline: float   # smoothed[a]
    recovered: bool


@dataclass(frozen=True)
class AubScore:
    region: RegionId
    window: RecessionWindow
    aub: float
    classification: Classification = Classification.UNRANKED
    smoothed_start: int = 0  # month index of smoothed entry 0

    @property
    def start_month(self) -> int:
        return self.smoothed_start + self.window.start

    @property
    def end_month(self) -> int:
        return self.smoothed_start + self.window.end


@dataclass(frozen=True)
class AubConfig:
    window: int = config.MA_WINDOW
    onset: int = config.parse_month(config.CRISIS_ONSET)
    normalize_baseline: bool = False


# ============================================================================
# WINDOW DETECTION AND SCORING
# ============================================================================

def find_window(smoothed: SmoothedSeries, onset: int) -> RecessionWindow:
    """Locate the recession window on a smoothed series.

    Candidates are indices i on/after ``onset`` where the smoothed series
    rises into i and falls out of it (D_i > 0, D_{i+1} < 0 with
    D_i = M_i - M_{i-1}). The start is the highest candidate, earliest on
    ties; the end is the first later index whose value is >= the baseline,
    or the final index when the series never gets back.
    """
    values = smoothed.as_array()
    first = max(onset - smoothed.start, 0)
    if values.size - first < 3:
        raise SeriesTooShortError(
            f"region {smoothed.source.region.code}: need 3 smoothed values on/after "
            f"{config.format_month(onset)}, have {max(values.size - first, 0)}"
        )

    slopes = np.diff(values)  # slopes[i - 1] = M_i - M_{i-1}
    best: Optional[int] = None
    for i in range(max(first, 1), values.size - 1):
        if slopes[i - 1] > 0 and slopes[i] < 0 and (best is None or values[i] > values[best]):
            best = i
    if best is None:
        raise NoLocalMaxError(
            f"region {smoothed.source.region.code}: no local maximum on/after {config.format_month(onset)}"
        )

    baseline = float(values[best])
    crossings = np.flatnonzero(values[best + 1:] >= baseline)
    if crossings.size:
        return RecessionWindow(start=best, end=best + 1 + int(crossings[0]), baseline=baseline, recovered=True)
    return RecessionWindow(start=best, end=values.size - 1, baseline=baseline, recovered=False)


def score_aub(smoothed: SmoothedSeries, window: RecessionWindow) -> float:
    """Sum of (baseline - M_i) for i in [a, b]; larger means a deeper or longer drawdown."""
    if not 0 <= window.start <= window.end < len(smoothed):
        raise InvalidParameterError(
            f"window [{window.start}, {window.end}] does not fit a series of length {len(smoothed)}"
        )
    segment = smoothed.values[window.start:window.end + 1]
    return math.fsum(window.baseline - m for m in segment)


def aub_pipeline(series: MonthlySeries, cfg: AubConfig = AubConfig()) -> AubScore:
    """moving_average -> find_window -> score_aub for one region."""
    smoothed = moving_average(series, cfg.window)
    window = find_window(smoothed, cfg.onset)
    aub = score_aub(smoothed, window)
    if cfg.normalize_baseline and window.baseline > 0:
        aub /= window.baseline
    logger.debug(f"{series.region.code}: window={window} aub={aub:.6g}")
    return AubScore(region=series.region, window=window, aub=aub, smoothed_start=smoothed.start)


def rank_regions(scores: Sequence[AubScore], k: int) -> List[AubScore]:
    """Order by descending AUB (ties by region code); top k are losers, bottom k gainers."""
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    if not scores:
        raise InvalidParameterError("no scores to rank")
    if 2 * k > len(scores):
        raise KTooLargeError(f"k={k} needs at least {2 * k} scored regions, have {len(scores)}")

    ordered = sorted(scores, key=lambda s: (-s.aub, s.region.code))
    ranked = []
    for position, score in enumerate(ordered):
        if position < k:
            label = Classification.LOSER
        elif position >= len(ordered) - k:
            label = Classification.GAINER
        else:
            label = Classification.UNRANKED
        ranked.append(dataclasses.replace(score, classification=label))
    return ranked


# ============================================================================
# REPORT SERIALIZATION
# ============================================================================

def _report_row(score: AubScore) -> Dict[str, object]:
    return {
        "region_code": score.region.code,
        "region_name": score.region.name,
        "state": score.region.state or "",
        "window_start": config.format_month(score.start_month),
        "window_end": config.format_month(score.end_month),
        "recovered": score.window.recovered,
        "baseline": score.window.baseline,
        "aub": score.aub,
        "classification": score.classification.value,
    }


def report_to_csv(ranked: Sequence[AubScore]) -> bytes:
    frame = pd.DataFrame([_report_row(s) for s in ranked], columns=REPORT_COLUMNS)
    return frame.to_csv(index=False, lineterminator="\n", float_format="%.10g").encode("utf-8")


def report_to_json(ranked: Sequence[AubScore]) -> bytes:
    return json.dumps([_report_row(s) for s in ranked], indent=2).encode("utf-8")
