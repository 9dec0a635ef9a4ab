"""
Housing Recession Impact - Ingestion
====================================

Parses regional home-value CSV exports (long or wide layout) into validated
monthly series, fills short interior gaps, and loads covariate tables
(population, unemployment rate).

Months are integer indices from 1996-01 (see ``config.month_index``); calendar
strings only appear at the CSV boundary.
"""

from __future__ import annotations

import io
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

import config
from errors import (
    DuplicateObservationError,
    EmptyInputError,
    GapTooLargeError,
    InvalidParameterError,
    MalformedRowError,
    OutOfRangeError,
    SeriesTooShortError,
)

logger = logging.getLogger(__name__)

MISSING_TOKENS = {"", "NA"}

# Plain decimal reals only; "1,234" and "1 234" are rejected rather than guessed at.
_DECIMAL_RE = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")
_STATE_CODE_RE = re.compile(r"^[A-Z]{2}$")
_NAME_STATE_RE = re.compile(r",\s*([A-Z]{2})(?:-[A-Z]{2})*\s*$")

LONG_COLUMNS = ("Date", "RegionCode", "RegionName", "Value")
WIDE_KEY_COLUMNS = ("RegionCode", "RegionName")
COVARIATE_COLUMNS = ("RegionCode", "Value")


class Schema(Enum):
    LONG = "long"
    WIDE = "wide"


class RegionLevel(Enum):
    METRO = "metro"
    STATE = "state"


class CovariateKind(Enum):
    POPULATION = "population"
    UNEMPLOYMENT_RATE = "unemployment"


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class RegionId:
    code: str
    name: str
    level: RegionLevel = RegionLevel.METRO

    def __post_init__(self):
        if not self.code or not self.code.strip():
            raise InvalidParameterError("region code must be non-empty")
        if self.level is RegionLevel.STATE and not _STATE_CODE_RE.match(self.code):
            raise InvalidParameterError(f"state regions need a 2-letter code, got {self.code!r}")

    @property
    def state(self) -> Optional[str]:
        """Two-letter state: the code for states, the ``", XX"`` name suffix for metros."""
        if self.level is RegionLevel.STATE:
            return self.code
        match = _NAME_STATE_RE.search(self.name or "")
        return match.group(1) if match else None


@dataclass(frozen=True)
class MonthlySeries:
    """Gap-free monthly index values for one region, starting at month ``start``."""

    region: RegionId
    start: int
    values: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not values:
            raise InvalidParameterError(f"series for {self.region.code} is empty")
        for v in values:
            if not math.isfinite(v):
                raise InvalidParameterError(f"series for {self.region.code} has a non-finite value")
            if v < 0:
                raise InvalidParameterError(f"series for {self.region.code} has a negative value {v}")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> int:
        """Month index of the last observation."""
        return self.start + len(self.values) - 1

    def months(self) -> range:
        return range(self.start, self.end + 1)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class PartialSeries:
    """Monthly values where missing months are NaN; input to ``fill_gaps``."""

    region: RegionId
    start: int
    values: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class CovariateTable:
    kind: CovariateKind
    entries: Dict[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __post_init__(self):
        for code, value in self.entries.items():
            _check_covariate(self.kind, code, value)


# ============================================================================
# CSV HELPERS
# ============================================================================

def read_frame(raw: bytes, required: Sequence[str]) -> pd.DataFrame:
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise MalformedRowError(f"input is not UTF-8: {e}") from e
    if not text.strip():
        raise EmptyInputError("input is empty")
    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False, na_filter=False)
    except pd.errors.EmptyDataError as e:
        raise EmptyInputError("input is empty") from e
    except pd.errors.ParserError as e:
        raise MalformedRowError(str(e)) from e
    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise MalformedRowError(f"missing required columns: {', '.join(missing)}", row=1)
    if frame.empty:
        raise EmptyInputError("input has a header but no data rows")
    return frame


def parse_value(cell: str, row: Optional[int] = None) -> float:
    """Parse one numeric cell; missing cells (empty or ``NA``) become NaN."""
    cell = (cell or "").strip()
    if cell in MISSING_TOKENS:
        return math.nan
    if not _DECIMAL_RE.match(cell):
        raise MalformedRowError(f"unparseable value {cell!r}", row=row)
    return float(cell)


def _parse_index_value(cell: str, row: int) -> float:
    value = parse_value(cell, row)
    if value < 0:
        raise MalformedRowError(f"negative index value {cell!r}", row=row)
    return value


def _region_for(code: str, name: str, row: int) -> RegionId:
    code = code.strip()
    if not code:
        raise MalformedRowError("empty RegionCode", row=row)
    level = RegionLevel.STATE if _STATE_CODE_RE.match(code) else RegionLevel.METRO
    return RegionId(code=code, name=name.strip() or code, level=level)


def _to_partial(region: RegionId, cells: Dict[int, float]) -> PartialSeries:
    first, last = min(cells), max(cells)
    values = tuple(cells.get(m, math.nan) for m in range(first, last + 1))
    return PartialSeries(region=region, start=first, values=values)


# ============================================================================
# SERIES PARSING
# ============================================================================

def _read_long(frame: pd.DataFrame) -> List[PartialSeries]:
    regions: Dict[str, RegionId] = {}
    cells: Dict[str, Dict[int, float]] = {}

    for offset, (date, code, name, value) in enumerate(
        frame[list(LONG_COLUMNS)].itertuples(index=False, name=None)
    ):
        row = offset + 2
        try:
            month = config.parse_month(date)
        except ValueError as e:
            raise MalformedRowError(str(e), row=row) from e
        region = regions.get(code.strip()) or _region_for(code, name, row)
        regions.setdefault(region.code, region)
        region_cells = cells.setdefault(region.code, {})
        if month in region_cells:
            raise DuplicateObservationError(region.code, config.format_month(month))
        region_cells[month] = _parse_index_value(value, row)

    return [_to_partial(regions[code], cells[code]) for code in sorted(cells)]


def _read_wide(frame: pd.DataFrame) -> List[PartialSeries]:
    month_columns: List[Tuple[str, int]] = []
    seen: Dict[int, str] = {}
    for column in frame.columns:
        if column in WIDE_KEY_COLUMNS:
            continue
        try:
            month = config.parse_month(column)
        except ValueError:
            # pandas renames a repeated header "2000-01" to "2000-01.1"
            base, dot, suffix = column.rpartition(".")
            if dot and suffix.isdigit() and base in frame.columns:
                raise DuplicateObservationError("*", base)
            logger.warning(f"Ignoring non-month column {column!r} in wide input")
            continue
        if month in seen:
            raise DuplicateObservationError("*", config.format_month(month))
        seen[month] = column
        month_columns.append((column, month))

    if not month_columns:
        raise MalformedRowError("wide input has no YYYY-MM columns", row=1)

    result: Dict[str, PartialSeries] = {}
    for offset, record in enumerate(frame.to_dict(orient="records")):
        row = offset + 2
        region = _region_for(record["RegionCode"], record["RegionName"], row)
        if region.code in result:
            raise DuplicateObservationError(region.code, config.format_month(month_columns[0][1]))
        cells = {month: _parse_index_value(record[column], row) for column, month in month_columns}
        result[region.code] = _to_partial(region, cells)

    return [result[code] for code in sorted(result)]


def read_partial_series(raw: bytes, schema: Union[Schema, str]) -> List[PartialSeries]:
    """Parse a series CSV without filling gaps; one entry per region, sorted by code."""
    schema = Schema(schema)
    if schema is Schema.LONG:
        series = _read_long(read_frame(raw, LONG_COLUMNS))
    else:
        series = _read_wide(read_frame(raw, WIDE_KEY_COLUMNS))
    logger.info(f"Parsed {len(series)} regions from {schema.value} input")
    return series


def parse_series_csv(
    raw: bytes, schema: Union[Schema, str], max_gap: int = config.MAX_GAP
) -> List[MonthlySeries]:
    """Parse a series CSV into gap-free series (interior gaps up to ``max_gap`` interpolated)."""
    return [fill_gaps(partial, max_gap) for partial in read_partial_series(raw, schema)]


def serialize_series_csv(series: Iterable[MonthlySeries]) -> bytes:
    """Write series in the long layout; floats use shortest round-trip repr."""
    rows = []
    for s in series:
        for month, value in zip(s.months(), s.values):
            rows.append((config.format_month(month), s.region.code, s.region.name, repr(float(value))))
    frame = pd.DataFrame(rows, columns=list(LONG_COLUMNS))
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


# ============================================================================
# GAP FILLING
# ============================================================================

def fill_gaps(series: Union[PartialSeries, MonthlySeries], max_gap: int = config.MAX_GAP) -> MonthlySeries:
    """Trim leading/trailing missing months and linearly interpolate interior runs.

    Observed values are never modified. Interior runs longer than ``max_gap``
    raise ``GapTooLargeError`` naming the first missing month.
    """
    if max_gap < 0:
        raise InvalidParameterError(f"max_gap must be >= 0, got {max_gap}")
    if isinstance(series, MonthlySeries):
        return series

    values = np.asarray(series.values, dtype=float)
    observed = np.flatnonzero(~np.isnan(values))
    if observed.size == 0:
        raise SeriesTooShortError(f"region {series.region.code} has no observed values")

    first, last = int(observed[0]), int(observed[-1])
    values = values[first:last + 1]
    start = series.start + first

    missing = np.isnan(values)
    if missing.any():
        run_start = None
        for i, is_missing in enumerate(np.append(missing, False)):
            if is_missing and run_start is None:
                run_start = i
            elif not is_missing and run_start is not None:
                length = i - run_start
                if length > max_gap:
                    raise GapTooLargeError(
                        series.region.code, config.format_month(start + run_start), length, max_gap
                    )
                run_start = None

        known = np.flatnonzero(~missing)
        holes = np.flatnonzero(missing)
        values = values.copy()
        values[holes] = np.interp(holes, known, values[known])
        logger.debug(f"Interpolated {holes.size} months for {series.region.code}")

    return MonthlySeries(region=series.region, start=start, values=tuple(values.tolist()))


# ============================================================================
# COVARIATES
# ============================================================================

def _check_covariate(kind: CovariateKind, code: str, value: float) -> None:
    if kind is CovariateKind.POPULATION and not value > 0:
        raise OutOfRangeError(f"population for {code} must be > 0, got {value}")
    if kind is CovariateKind.UNEMPLOYMENT_RATE and not 0 <= value <= 100:
        raise OutOfRangeError(f"unemployment rate for {code} must be within [0, 100], got {value}")


def parse_covariates_csv(raw: bytes, kind: Union[CovariateKind, str]) -> CovariateTable:
    """Parse ``RegionCode,Value`` rows; rows with a missing value are skipped."""
    kind = CovariateKind(kind)
    frame = read_frame(raw, COVARIATE_COLUMNS)
    entries: Dict[str, float] = {}
    for offset, (code, cell) in enumerate(frame[list(COVARIATE_COLUMNS)].itertuples(index=False, name=None)):
        row = offset + 2
        code = code.strip()
        if not code:
            raise MalformedRowError("empty RegionCode", row=row)
        value = parse_value(cell, row)
        if math.isnan(value):
            logger.debug(f"Covariate row {row} for {code} has no value, skipped")
            continue
        if code in entries:
            raise DuplicateObservationError(code, kind.value)
        _check_covariate(kind, code, value)
        entries[code] = value
    logger.info(f"Loaded {len(entries)} {kind.value} entries")
    return CovariateTable(kind=kind, entries=entries)
