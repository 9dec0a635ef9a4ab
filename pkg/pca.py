"""
Housing Recession Impact - Principal Components
===============================================

Correlation-matrix PCA of the per-region feature table: drop sparse columns,
mean-impute the rest, standardize, eigendecompose, project.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import config
from errors import (
    DegenerateColumnError,
    InvalidParameterError,
    KTooLargeError,
    LabelCountMismatchError,
    MalformedRowError,
    NothingLeftError,
    PcaConvergenceError,
)
from ingest import MISSING_TOKENS, RegionId, read_frame

logger = logging.getLogger(__name__)

KEY_COLUMN = "RegionCode"
NAME_COLUMN = "RegionName"


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """One row per region; NaN marks a missing cell."""

    codes: Tuple[str, ...]
    columns: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(self.codes), len(self.columns)):
            raise InvalidParameterError(
                f"values shape {values.shape} does not match {len(self.codes)} rows x {len(self.columns)} columns"
            )
        if len(set(self.columns)) != len(self.columns):
            raise InvalidParameterError("feature column names must be unique")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def missing_fraction(self) -> np.ndarray:
        return np.isnan(self.values).mean(axis=0) if self.values.size else np.zeros(len(self.columns))


@dataclass(frozen=True, eq=False)
class PcaResult:
    columns: Tuple[str, ...]
    components: np.ndarray         # k x n_features, rows orthonormal
    eigenvalues: np.ndarray        # all n_features, non-increasing
    explained_ratio: np.ndarray    # first k
    projected: np.ndarray          # n_rows x k
    reconstruction_mse: float
    means: np.ndarray
    scales: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]


# ============================================================================
# LOADING AND CLEANING
# ============================================================================

def load_feature_matrix(raw: bytes) -> Tuple[FeatureMatrix, List[RegionId]]:
    """Read a wide feature table keyed by RegionCode; non-numeric columns are dropped."""
    frame = read_frame(raw, (KEY_COLUMN,))
    codes = [c.strip() for c in frame[KEY_COLUMN]]
    if any(not c for c in codes):
        raise MalformedRowError("empty RegionCode in feature table")
    if len(set(codes)) != len(codes):
        raise MalformedRowError("duplicate RegionCode in feature table")

    names = frame[NAME_COLUMN] if NAME_COLUMN in frame.columns else frame[KEY_COLUMN]
    labels = [RegionId(code=c, name=(n.strip() or c)) for c, n in zip(codes, names)]

    kept: Dict[str, np.ndarray] = {}
    for column in frame.columns:
        if column in (KEY_COLUMN, NAME_COLUMN):
            continue
        cells = frame[column].str.strip()
        numeric = pd.to_numeric(cells.where(~cells.isin(MISSING_TOKENS)), errors="coerce")
        unparsed = numeric.isna() & ~cells.isin(MISSING_TOKENS)
        if unparsed.any():
            logger.warning(f"Dropping non-numeric feature column {column!r}")
            continue
        kept[column] = numeric.to_numpy(dtype=float)

    if not kept:
        raise NothingLeftError("feature table has no numeric columns")
    matrix = FeatureMatrix(
        codes=tuple(codes),
        columns=tuple(kept),
        values=np.column_stack(list(kept.values())),
    )
    logger.info(f"Loaded feature matrix {matrix.shape[0]} x {matrix.shape[1]}")
    return matrix, labels


def clean_matrix(matrix: FeatureMatrix, max_missing_frac: float = config.PCA_MAX_MISSING_FRAC) -> FeatureMatrix:
    """Drop columns missing more than ``max_missing_frac`` of cells, mean-impute the rest."""
    if not 0 <= max_missing_frac < 1:
        raise InvalidParameterError(f"max_missing_frac must be in [0, 1), got {max_missing_frac}")
    keep = matrix.missing_fraction() <= max_missing_frac
    dropped = [c for c, k in zip(matrix.columns, keep) if not k]
    if dropped:
        logger.info(f"Dropped {len(dropped)} sparse columns: {', '.join(dropped)}")
    if keep.sum() < 2:
        raise NothingLeftError(
            f"{int(keep.sum())} column(s) at most {max_missing_frac:.0%} missing; PCA needs at least 2"
        )

    values = matrix.values[:, keep].copy()
    means = np.nanmean(values, axis=0)
    rows, cols = np.nonzero(np.isnan(values))
    values[rows, cols] = means[cols]
    return FeatureMatrix(
        codes=matrix.codes,
        columns=tuple(c for c, k in zip(matrix.columns, keep) if k),
        values=values,
    )


# ============================================================================
# FIT
# ============================================================================

def standardize(matrix: FeatureMatrix) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    values = matrix.values
    if np.isnan(values).any():
        raise InvalidParameterError("matrix has missing cells; run clean_matrix first")
    if values.shape[0] < 2:
        raise InvalidParameterError("PCA needs at least 2 rows")
    flat = np.ptp(values, axis=0) == 0
    if flat.any():
        names = [c for c, f in zip(matrix.columns, flat) if f]
        raise DegenerateColumnError(f"zero-variance columns: {', '.join(names)}")
    means = values.mean(axis=0)
    scales = values.std(axis=0, ddof=1)
    return (values - means) / scales, means, scales


def pca_fit(matrix: FeatureMatrix, k: int) -> PcaResult:
    """Top-k principal components of the standardized matrix."""
    n_features = matrix.shape[1]
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    if k > n_features:
        raise KTooLargeError(f"k={k} exceeds the {n_features} columns left after cleaning")

    z, means, scales = standardize(matrix)
    corr = np.atleast_2d(np.cov(z, rowvar=False))
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(corr)
    except np.linalg.LinAlgError as e:
        raise PcaConvergenceError(f"eigendecomposition failed: {e}") from e

    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    # largest-magnitude loading of each component is positive
    pivots = np.argmax(np.abs(eigenvectors), axis=0)
    signs = np.sign(eigenvectors[pivots, np.arange(n_features)])
    signs[signs == 0] = 1.0
    eigenvectors = eigenvectors * signs

    components = eigenvectors[:, :k].T
    projected = z @ components.T
    residual = z - projected @ components
    total = eigenvalues.sum()

    return PcaResult(
        columns=matrix.columns,
        components=components,
        eigenvalues=eigenvalues,
        explained_ratio=eigenvalues[:k] / total if total > 0 else np.zeros(k),
        projected=projected,
        reconstruction_mse=float(np.mean(residual ** 2)),
        means=means,
        scales=scales,
    )


# ============================================================================
# EXPORT
# ============================================================================

def pca_project_export(result: PcaResult, labels: Sequence[RegionId]) -> bytes:
    """Scatter CSV ``region_code,pc1..pck``; coordinates use repr floats."""
    if len(labels) != result.projected.shape[0]:
        raise LabelCountMismatchError(
            f"{len(labels)} labels for {result.projected.shape[0]} projected rows"
        )
    header = ["region_code"] + [f"pc{i + 1}" for i in range(result.k)]
    rows = [[label.code] + [repr(float(v)) for v in coords] for label, coords in zip(labels, result.projected)]
    frame = pd.DataFrame(rows, columns=header)
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


def parse_scatter_csv(raw: bytes) -> Tuple[List[str], np.ndarray]:
    frame = pd.read_csv(io.BytesIO(raw), dtype={"region_code": str})
    return frame["region_code"].tolist(), frame.drop(columns="region_code").to_numpy(dtype=float)


def components_to_csv(result: PcaResult) -> bytes:
    frame = pd.DataFrame(
        result.components.T,
        index=pd.Index(result.columns, name="feature"),
        columns=[f"pc{i + 1}" for i in range(result.k)],
    )
    return frame.to_csv(lineterminator="\n", float_format="%.12g").encode("utf-8")


def summary_to_json(result: PcaResult, dropped: Optional[Sequence[str]] = None) -> bytes:
    summary = {
        "k": result.k,
        "features": list(result.columns),
        "dropped_columns": list(dropped or []),
        "eigenvalues": result.eigenvalues.tolist(),
        "explained_ratio": result.explained_ratio.tolist(),
        "reconstruction_mse": result.reconstruction_mse,
    }
    return json.dumps(summary, indent=2).encode("utf-8")
