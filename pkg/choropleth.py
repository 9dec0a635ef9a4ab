"""
Housing Recession Impact - State Grids
======================================

Pools metro series into state x calendar-year mean grids (and their
year-over-year differences) for map rendering by an external tool.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import config
from errors import (
    InvalidParameterError,
    MalformedRowError,
    TooFewYearsError,
    UnmappableRegionError,
)
from ingest import MonthlySeries, read_frame

logger = logging.getLogger(__name__)

MAPPING_COLUMNS = ("RegionCode", "State")


class GridKind(Enum):
    LEVEL = "level"
    YEAR_DIFF = "year_diff"


@dataclass(frozen=True, eq=False)
class StateYearGrid:
    states: Tuple[str, ...]
    years: Tuple[int, ...]
    values: np.ndarray                    # states x years, NaN = absent
    kind: GridKind = GridKind.LEVEL
    counts: Optional[np.ndarray] = None   # observations pooled per cell (level grids)
    skipped: Tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.states), len(self.years)):
            raise InvalidParameterError(
                f"grid shape {values.shape} does not match {len(self.states)} states x {len(self.years)} years"
            )
        if np.isinf(values).any():
            raise InvalidParameterError("grid cells must be finite or absent")
        object.__setattr__(self, "values", values)

    def cell(self, state: str, year: int) -> float:
        return float(self.values[self.states.index(state), self.years.index(year)])


def load_state_mapping(raw: bytes) -> Dict[str, str]:
    """Read ``RegionCode,State`` overrides."""
    frame = read_frame(raw, MAPPING_COLUMNS)
    mapping = {}
    for code, state in frame[list(MAPPING_COLUMNS)].itertuples(index=False, name=None):
        state = state.strip().upper()
        if len(state) != 2 or not state.isalpha():
            raise MalformedRowError(f"state for {code!r} must be a 2-letter code, got {state!r}")
        mapping[code.strip()] = state
    return mapping


def state_year_means(
    series: Sequence[MonthlySeries],
    years: Optional[Sequence[int]] = None,
    mapping: Optional[Mapping[str, str]] = None,
) -> StateYearGrid:
    """Mean of every monthly observation of every metro in a state, per calendar year."""
    mapping = mapping or {}
    frames = []
    skipped: List[str] = []
    for s in series:
        state = mapping.get(s.region.code) or s.region.state
        if state is None:
            logger.warning(f"Region {s.region.code} ({s.region.name}) has no state; skipped")
            skipped.append(s.region.code)
            continue
        frames.append(pd.DataFrame({
            "state": state,
            "year": [config.month_year(m) for m in s.months()],
            "value": s.values,
        }))
    if not frames:
        raise UnmappableRegionError(f"none of {len(series)} regions could be mapped to a state")

    observations = pd.concat(frames, ignore_index=True)
    if years is None:
        years = range(int(observations["year"].min()), int(observations["year"].max()) + 1)
    years = tuple(int(y) for y in years)
    if not years:
        raise InvalidParameterError("year range is empty")
    observations = observations[observations["year"].isin(years)]

    pooled = observations.groupby(["state", "year"])["value"].agg(["mean", "count"])
    states = tuple(sorted(set(observations["state"])))
    means = pooled["mean"].unstack("year").reindex(index=list(states), columns=list(years))
    counts = pooled["count"].unstack("year").reindex(index=list(states), columns=list(years)).fillna(0)

    logger.info(f"Pooled {len(observations)} observations into {len(states)} states x {len(years)} years")
    return StateYearGrid(
        states=states,
        years=years,
        values=means.to_numpy(dtype=float),
        kind=GridKind.LEVEL,
        counts=counts.to_numpy(dtype=int),
        skipped=tuple(sorted(skipped)),
    )


def year_diffs(grid: StateYearGrid) -> StateYearGrid:
    """diff[s][y] = level[s][y+1] - level[s][y], labelled by the earlier year y."""
    if grid.kind is not GridKind.LEVEL:
        raise InvalidParameterError("year_diffs needs a level grid")
    if len(grid.years) < 2:
        raise TooFewYearsError(f"need at least 2 years, have {len(grid.years)}")
    return StateYearGrid(
        states=grid.states,
        years=grid.years[:-1],
        values=np.diff(grid.values, axis=1),
        kind=GridKind.YEAR_DIFF,
        skipped=grid.skipped,
    )


def reconstruct_levels(diffs: StateYearGrid, first_column: Sequence[float]) -> StateYearGrid:
    """Invert ``year_diffs`` given the level grid's first year column."""
    if diffs.kind is not GridKind.YEAR_DIFF:
        raise InvalidParameterError("reconstruct_levels needs a year-diff grid")
    first = np.asarray(first_column, dtype=float).reshape(-1, 1)
    if first.shape[0] != len(diffs.states):
        raise InvalidParameterError(f"{first.shape[0]} anchors for {len(diffs.states)} states")
    values = np.hstack([first, first + np.cumsum(diffs.values, axis=1)])
    years = diffs.years + (diffs.years[-1] + 1,)
    return StateYearGrid(states=diffs.states, years=years, values=values, kind=GridKind.LEVEL)


def export_grid(grid: StateYearGrid, clamp: Optional[Tuple[float, float]] = None) -> bytes:
    """CSV with a ``state`` key column and one column per year; absent cells are empty."""
    values = grid.values
    if clamp is not None:
        lo, hi = clamp
        if lo > hi:
            raise InvalidParameterError(f"clamp bounds reversed: ({lo}, {hi})")
        values = np.clip(values, lo, hi)
    frame = pd.DataFrame(values, index=pd.Index(grid.states, name="state"), columns=[str(y) for y in grid.years])
    return frame.to_csv(lineterminator="\n", na_rep="").encode("utf-8")


def parse_grid_csv(raw: bytes, kind: GridKind = GridKind.LEVEL) -> StateYearGrid:
    frame = pd.read_csv(io.BytesIO(raw), dtype={"state": str}).set_index("state")
    try:
        years = tuple(int(c) for c in frame.columns)
    except ValueError as e:
        raise MalformedRowError(f"grid header has a non-year column: {e}") from e
    return StateYearGrid(
        states=tuple(frame.index),
        years=years,
        values=frame.to_numpy(dtype=float),
        kind=kind,
    )
