# Housing Recession Impact - Regression
# =====================================
#
# Least-squares fits of metric scores against regional covariates
# (population, unemployment) and the report that pairs every metric
# with every covariate.

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats as sp_stats

from errors import (
    ConstantXError,
    EmptyJoinError,
    InvalidParameterError,
    LengthMismatchError,
    MalformedRowError,
)
from ingest import CovariateTable

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["metric", "covariate", "n", "slope", "intercept", "r", "r_squared"]
SKIPPED_COLUMNS = ["metric", "covariate", "region_code", "reason"]


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r: float
    r_squared: float
    n: int


@dataclass(frozen=True)
class PairedSamples:
    codes: Tuple[str, ...]
    x: Tuple[float, ...]   # covariate
    y: Tuple[float, ...]   # metric
    skipped: Tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.codes)


@dataclass
class CorrelationReport:
    rows: List[Tuple[str, str, RegressionResult]] = field(default_factory=list)
    scatter: Dict[Tuple[str, str], PairedSamples] = field(default_factory=dict)
    skipped: List[Tuple[str, str, str, str]] = field(default_factory=list)


def ols(x: Sequence[float], y: Sequence[float]) -> RegressionResult:
    """Simple linear regression of y on x with Pearson r."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise LengthMismatchError(f"x has {x.size} values, y has {y.size}")
    if x.size < 3:
        raise InvalidParameterError(f"regression needs at least 3 points, got {x.size}")
    if np.ptp(x) == 0:
        raise ConstantXError("x is constant; slope is undefined")
    try:
        fit = sp_stats.linregress(x, y)
    except ValueError as e:
        raise ConstantXError(str(e)) from e
    r = float(fit.rvalue)
    return RegressionResult(
        slope=float(fit.slope), intercept=float(fit.intercept), r=r, r_squared=r * r, n=int(x.size)
    )


def join_metric_covariate(scores: Mapping[str, float], cov: CovariateTable) -> PairedSamples:
    """Inner join on region code; codes present on one side only are reported as skipped."""
    shared = sorted(set(scores) & set(cov.entries))
    skipped = tuple(sorted(set(scores) ^ set(cov.entries)))
    if not shared:
        raise EmptyJoinError(f"no region codes shared between scores and {cov.kind.value}")
    if skipped:
        logger.debug(f"{len(skipped)} regions missing from one side of the {cov.kind.value} join")
    return PairedSamples(
        codes=tuple(shared),
        x=tuple(cov.entries[c] for c in shared),
        y=tuple(float(scores[c]) for c in shared),
        skipped=skipped,
    )


def _log_pairs(pairs: PairedSamples) -> Tuple[PairedSamples, List[str]]:
    keep = [i for i, v in enumerate(pairs.x) if v > 0]
    dropped = [pairs.codes[i] for i in range(len(pairs)) if pairs.x[i] <= 0]
    return PairedSamples(
        codes=tuple(pairs.codes[i] for i in keep),
        x=tuple(math.log(pairs.x[i]) for i in keep),
        y=tuple(pairs.y[i] for i in keep),
        skipped=pairs.skipped,
    ), dropped


def correlation_report(
    metrics: Mapping[str, Mapping[str, float]],
    covariates: Sequence[CovariateTable],
    log_x: bool = False,
) -> CorrelationReport:
    """One regression per (metric, covariate) pair; pairs whose fit is undefined are skipped."""
    if not covariates:
        raise InvalidParameterError("correlation_report needs at least one covariate")
    if not metrics:
        raise InvalidParameterError("correlation_report needs at least one metric")

    report = CorrelationReport()
    for metric in sorted(metrics):
        for cov in covariates:
            name = cov.kind.value
            pairs = join_metric_covariate(metrics[metric], cov)
            report.skipped.extend((metric, name, code, "unmatched") for code in pairs.skipped)
            if log_x:
                pairs, non_positive = _log_pairs(pairs)
                report.skipped.extend((metric, name, code, "non-positive covariate") for code in non_positive)
            try:
                result = ols(pairs.x, pairs.y)
            except (ConstantXError, InvalidParameterError) as e:
                logger.warning(f"Skipping {metric} vs {name}: {e}")
                report.skipped.append((metric, name, "", str(e)))
                continue
            report.rows.append((metric, name, result))
            report.scatter[(metric, name)] = pairs
            logger.info(f"{metric} vs {name}: n={result.n} r={result.r:.4f}")
    return report


def report_to_csv(report: CorrelationReport) -> bytes:
    frame = pd.DataFrame(
        [(m, c, r.n, r.slope, r.intercept, r.r, r.r_squared) for m, c, r in report.rows],
        columns=REPORT_COLUMNS,
    )
    return frame.to_csv(index=False, lineterminator="\n", float_format="%.12g").encode("utf-8")


def scatter_to_csv(pairs: PairedSamples, covariate: str, metric: str) -> bytes:
    frame = pd.DataFrame({"region_code": pairs.codes, covariate: pairs.x, metric: pairs.y})
    return frame.to_csv(index=False, lineterminator="\n", float_format="%.12g").encode("utf-8")


def skipped_to_csv(report: CorrelationReport) -> bytes:
    frame = pd.DataFrame(report.skipped, columns=SKIPPED_COLUMNS)
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


def load_metric_scores(raw: bytes, column: str) -> Dict[str, float]:
    """Read ``region_code -> column`` from a score report CSV, skipping blank cells."""
    frame = pd.read_csv(io.BytesIO(raw), dtype={"region_code": str})
    if "region_code" not in frame.columns or column not in frame.columns:
        raise MalformedRowError(f"score report lacks region_code or {column} column")
    frame = frame.dropna(subset=[column])
    return {str(code): float(value) for code, value in zip(frame["region_code"], frame[column])}
