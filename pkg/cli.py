"""
Housing Recession Impact - Command Line
=======================================

    python cli.py aub-rank --input metro.csv --output-dir out/
    python cli.py arima-score --input metro.csv --output-dir out/ --order 2,1,0
    python cli.py pca --features features.csv --k 2 --output-dir out/
    python cli.py correlate --aub-scores out/aub_scores.csv --population pop.csv --output-dir out/
    python cli.py choropleth-export --input metro.csv --output-dir out/
    python cli.py synth --seed 7 --regions 100 --output-dir out/

Settings resolve as defaults < ``--config file.json`` < flags. Every run
writes ``run_manifest.json`` with the effective settings, the SHA-256 of
each input and, under "runtime", the operational settings. Runs whose
settings and inputs agree produce byte-identical outputs.

Exit codes: 0 success, 1 partial (regions skipped, or nothing scored),
2 invalid input or configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import pandas as pd

import arima
import aub
import batch
import choropleth
import config
import pca
import stats
import synth
from errors import AnalysisError, ConfigError, InputError, InvalidParameterError
from ingest import (
    CovariateKind,
    PartialSeries,
    Schema,
    fill_gaps,
    parse_covariates_csv,
    read_partial_series,
)
from monitoring import RunMonitor
from tscore import AcfResult, acf, difference

logger = logging.getLogger(__name__)

COMMANDS = ("aub-rank", "arima-score", "pca", "correlate", "choropleth-export", "synth")
SKIPPED_COLUMNS = ["region_code", "region_name", "reason"]

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INVALID = 2

# Operational settings; they never change results and sit under the manifest's "runtime" key.
RUNTIME_FIELDS = ("output_dir", "jobs", "log_level", "log_file", "metrics_file", "config")


# ============================================================================
# CONFIGURATION
# ============================================================================

@dataclass
class RunConfig:
    command: str = "aub-rank"
    input: Optional[str] = None
    schema: str = Schema.LONG.value
    output_dir: str = "."
    max_gap: int = config.MAX_GAP

    # aub-rank
    ma_window: int = config.MA_WINDOW
    onset: str = config.CRISIS_ONSET
    k: int = config.RANK_K
    normalize_baseline: bool = False

    # arima-score
    order: Optional[str] = None
    p_max: int = config.GRID_P_MAX
    d_max: int = config.GRID_D_MAX
    q_max: int = config.GRID_Q_MAX
    criterion: str = config.ORDER_CRITERION
    horizon: int = config.FORECAST_HORIZON
    split: Optional[str] = None
    acf_lags: int = config.ACF_EXPORT_LAGS
    bins: int = config.RESIDUAL_BINS

    # pca
    features: Optional[str] = None
    pca_k: Optional[int] = None
    max_missing: float = config.PCA_MAX_MISSING_FRAC

    # correlate
    aub_scores: Optional[str] = None
    arima_scores: Optional[str] = None
    population: Optional[str] = None
    unemployment: Optional[str] = None
    log_x: bool = False

    # choropleth-export
    mapping: Optional[str] = None
    year_start: Optional[int] = None
    year_end: Optional[int] = None
    level_clamp: Optional[str] = None
    diff_clamp: Optional[str] = None

    # synth
    seed: int = 0
    regions: int = 10
    arma_regions: int = 0
    zero_depth_every: int = 0
    ar: str = "0.7"
    ma: str = ""
    arma_d: int = 0
    arma_length: int = 300

    # runtime
    jobs: int = config.DEFAULT_JOBS
    log_level: str = config.LOG_LEVEL
    log_file: Optional[str] = config.LOG_FILE
    metrics_file: Optional[str] = config.METRICS_FILE
    config: Optional[str] = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        try:
            Schema(self.schema)
            config.parse_month(self.onset)
            if self.split is not None:
                config.parse_month(self.split)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        for name in ("ma_window", "k", "horizon", "jobs", "bins"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("max_gap", "acf_lags", "regions", "arma_regions", "zero_depth_every", "arma_d"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0 <= self.max_missing < 1:
            raise ConfigError(f"max_missing must lie in [0, 1), got {self.max_missing}")
        try:
            if self.order is not None:
                arima.ArimaOrder.parse(self.order)
            arima.OrderGrid(self.p_max, self.d_max, self.q_max)
            if self.criterion not in arima.CRITERIA:
                raise InvalidParameterError(f"criterion must be one of {arima.CRITERIA}, got {self.criterion!r}")
        except InvalidParameterError as e:
            raise ConfigError(str(e)) from e
        _parse_clamp(self.level_clamp)
        _parse_clamp(self.diff_clamp)
        _parse_floats(self.ar)
        _parse_floats(self.ma)

    def manifest_config(self) -> Dict[str, object]:
        return {k: v for k, v in sorted(dataclasses.asdict(self).items()) if k not in RUNTIME_FIELDS}

    def manifest_runtime(self) -> Dict[str, object]:
        return {k: getattr(self, k) for k in sorted(RUNTIME_FIELDS)}


def _parse_clamp(text: Optional[str]) -> Optional[Tuple[float, float]]:
    if text is None:
        return None
    try:
        lo, hi = (float(part) for part in text.split(","))
    except ValueError as e:
        raise ConfigError(f"clamp must look like 'lo,hi', got {text!r}") from e
    if lo > hi:
        raise ConfigError(f"clamp bounds reversed: {text!r}")
    return lo, hi


def _parse_floats(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as e:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from e


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """defaults < --config JSON < flags; flags absent on the command line are not in ``args``."""
    flags = vars(args)
    cfg = RunConfig(command=flags["command"])
    known = {f.name for f in dataclasses.fields(RunConfig)}

    config_path = flags.get("config")
    if config_path:
        try:
            overrides = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {config_path}: {e}") from e
        if not isinstance(overrides, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        overrides.pop("command", None)
        cfg = dataclasses.replace(cfg, **overrides)

    cfg = dataclasses.replace(cfg, **{k: v for k, v in flags.items() if k in known})
    cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="housing-impact", description="Housing recession impact toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--jobs", type=int, help="regions processed in parallel")
    common.add_argument("--log-level", dest="log_level")
    common.add_argument("--log-file", dest="log_file")
    common.add_argument("--metrics-file", dest="metrics_file", help="write Prometheus text metrics here")

    series = argparse.ArgumentParser(add_help=False, argument_default=S)
    series.add_argument("--input", help="series CSV")
    series.add_argument("--schema", choices=[s.value for s in Schema])
    series.add_argument("--max-gap", dest="max_gap", type=int)

    p = subparsers.add_parser("aub-rank", parents=[common, series], argument_default=S,
                              help="score and rank regions by area under baseline")
    p.add_argument("--ma-window", dest="ma_window", type=int)
    p.add_argument("--onset", help="crisis onset YYYY-MM")
    p.add_argument("--k", type=int, help="losers/gainers to label")
    p.add_argument("--normalize-baseline", dest="normalize_baseline", action="store_true")

    p = subparsers.add_parser("arima-score", parents=[common, series], argument_default=S,
                              help="fit ARIMA per region and score the forecast interval area")
    p.add_argument("--order", help="fixed order p,d,q (default: grid search)")
    p.add_argument("--p-max", dest="p_max", type=int)
    p.add_argument("--d-max", dest="d_max", type=int)
    p.add_argument("--q-max", dest="q_max", type=int)
    p.add_argument("--criterion", choices=arima.CRITERIA, help="order search criterion")
    p.add_argument("--horizon", type=int)
    p.add_argument("--split", help="train before this YYYY-MM and evaluate on the rest")
    p.add_argument("--acf-lags", dest="acf_lags", type=int, help="correlogram lags (0 disables)")
    p.add_argument("--bins", type=int, help="bins for the residual and interval-area histograms")

    p = subparsers.add_parser("pca", parents=[common], argument_default=S, help="principal components of a feature table")
    p.add_argument("--features", help="wide feature CSV keyed by RegionCode")
    p.add_argument("--k", dest="pca_k", type=int, required=True)
    p.add_argument("--max-missing", dest="max_missing", type=float)

    p = subparsers.add_parser("correlate", parents=[common], argument_default=S, help="regress scores on covariates")
    p.add_argument("--aub-scores", dest="aub_scores")
    p.add_argument("--arima-scores", dest="arima_scores")
    p.add_argument("--population")
    p.add_argument("--unemployment")
    p.add_argument("--log-x", dest="log_x", action="store_true")

    p = subparsers.add_parser("choropleth-export", parents=[common, series], argument_default=S,
                              help="state x year mean grids")
    p.add_argument("--mapping", help="RegionCode,State overrides")
    p.add_argument("--year-start", dest="year_start", type=int)
    p.add_argument("--year-end", dest="year_end", type=int)
    p.add_argument("--level-clamp", dest="level_clamp", help="lo,hi")
    p.add_argument("--diff-clamp", dest="diff_clamp", help="lo,hi")

    p = subparsers.add_parser("synth", parents=[common], argument_default=S, help="seeded synthetic dataset")
    p.add_argument("--seed", type=int)
    p.add_argument("--regions", type=int)
    p.add_argument("--arma-regions", dest="arma_regions", type=int)
    p.add_argument("--zero-depth-every", dest="zero_depth_every", type=int)
    p.add_argument("--ma-window", dest="ma_window", type=int)
    p.add_argument("--onset")
    p.add_argument("--ar", help="AR coefficients, comma separated")
    p.add_argument("--ma", help="MA coefficients, comma separated")
    p.add_argument("--arma-d", dest="arma_d", type=int)
    p.add_argument("--arma-length", dest="arma_length", type=int)
    return parser


# ============================================================================
# FILE HELPERS
# ============================================================================

class RunContext:
    """Output directory, input digests and the run monitor for one command."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.inputs: Dict[str, str] = {}
        self.monitor = RunMonitor(cfg.command)

    def read(self, path: Optional[str], what: str) -> bytes:
        if not path:
            raise ConfigError(f"{self.cfg.command} needs --{what}")
        try:
            raw = Path(path).read_bytes()
        except OSError as e:
            raise ConfigError(f"cannot read {what} file {path}: {e}") from e
        self.inputs[what] = hashlib.sha256(raw).hexdigest()
        return raw

    def write(self, name: str, data: bytes) -> None:
        target = self.out / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        logger.debug(f"Wrote {target} ({len(data)} bytes)")

    def write_manifest(self) -> None:
        manifest = {
            "version": config.APP_VERSION,
            "command": self.cfg.command,
            "config": self.cfg.manifest_config(),
            "inputs": dict(sorted(self.inputs.items())),
            "runtime": self.cfg.manifest_runtime(),
        }
        self.write("run_manifest.json", (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _skipped_csv(skips: Sequence[batch.Skip]) -> bytes:
    frame = pd.DataFrame([(s.region.code, s.region.name, s.reason) for s in skips], columns=SKIPPED_COLUMNS)
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


def _frame_csv(frame: pd.DataFrame) -> bytes:
    return frame.to_csv(index=False, lineterminator="\n", float_format="%.10g").encode("utf-8")


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _safe_name(code: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", code)


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_aub_rank(ctx: RunContext) -> int:
    cfg = ctx.cfg
    partials = read_partial_series(ctx.read(cfg.input, "input"), cfg.schema)
    aub_cfg = aub.AubConfig(
        window=cfg.ma_window, onset=config.parse_month(cfg.onset), normalize_baseline=cfg.normalize_baseline
    )

    def score(partial: PartialSeries) -> aub.AubScore:
        return aub.aub_pipeline(fill_gaps(partial, cfg.max_gap), aub_cfg)

    outcome = batch.run_regions(partials, lambda s: s.region, score, cfg.jobs, ctx.monitor)
    scores = [value for _, value in outcome.results]

    k = cfg.k
    if scores and 2 * k > len(scores):
        k = len(scores) // 2
        logger.warning(f"Only {len(scores)} regions scored; labelling top/bottom {k} instead of {cfg.k}")
    if k >= 1 and scores:
        ranked = aub.rank_regions(scores, k)
    else:
        ranked = sorted(scores, key=lambda s: (-s.aub, s.region.code))

    ctx.write("aub_scores.csv", aub.report_to_csv(ranked))
    ctx.write("aub_scores.json", aub.report_to_json(ranked))
    ctx.write("skipped.csv", _skipped_csv(outcome.skipped))
    for score_ in ranked[:k]:
        logger.info(f"Loser: {score_.region.name} AUB={score_.aub:.6g}")
    return EXIT_PARTIAL if outcome.skipped else EXIT_OK


def _arima_region(cfg: RunConfig, partial: PartialSeries) -> Tuple[dict, arima.ForecastResult, Optional[AcfResult]]:
    series = fill_gaps(partial, cfg.max_gap)
    test = None
    if cfg.split is not None:
        series, test = arima.backtest_split(series, config.parse_month(cfg.split))

    if cfg.order is not None:
        order = arima.ArimaOrder.parse(cfg.order)
    else:
        order = arima.select_order(series, arima.OrderGrid(cfg.p_max, cfg.d_max, cfg.q_max), cfg.criterion)
    model = arima.fit(series, order)
    result = arima.forecast(model, cfg.horizon)
    diagnostics = arima.residual_diagnostics(model, cfg.bins)

    row = {
        "region_code": series.region.code,
        "region_name": series.region.name,
        "p": order.p,
        "d": order.d,
        "q": order.q,
        "sigma2": model.sigma2,
        "bias_flag": diagnostics.bias_flag,
        "horizon": cfg.horizon,
        "ci_area": result.ci_area,
        "ci_area_normalized": result.ci_area_normalized,
        "aic": model.aic,
        "stationary": model.stationary,
        "invertible": model.invertible,
        "residual_mean": diagnostics.mean,
        "residual_std": diagnostics.stddev,
        "normality_pvalue": diagnostics.normality_pvalue,
    }
    if test is not None:
        metrics = arima.evaluate_forecast(result, test)
        row.update({
            "backtest_n": metrics.n,
            "rmse": metrics.rmse,
            "mae": metrics.mae,
            "coverage95": metrics.coverage95,
        })

    correlogram: Optional[AcfResult] = None
    if cfg.acf_lags > 0:
        try:
            correlogram = acf(difference(series.values, order.d), cfg.acf_lags)
        except AnalysisError as e:
            logger.debug(f"{series.region.code}: no correlogram: {e}")
    return row, result, correlogram


def cmd_arima_score(ctx: RunContext) -> int:
    cfg = ctx.cfg
    partials = read_partial_series(ctx.read(cfg.input, "input"), cfg.schema)
    outcome = batch.run_regions(
        partials, lambda s: s.region, lambda s: _arima_region(cfg, s), cfg.jobs, ctx.monitor
    )

    rows = []
    acf_rows = []
    for region, (row, result, correlogram) in outcome.results:
        rows.append(row)
        ctx.write(f"forecasts/{_safe_name(region.code)}.csv", arima.forecast_to_csv(result))
        if correlogram is not None:
            acf_rows.extend(
                (region.code, lag, value, correlogram.band) for lag, value in enumerate(correlogram.coefficients)
            )

    columns = list(arima.SCORE_COLUMNS) + [c for c in (rows[0] if rows else {}) if c not in arima.SCORE_COLUMNS]
    frame = pd.DataFrame(rows, columns=columns)
    ctx.write("arima_scores.csv", _frame_csv(frame))
    ctx.write("arima_scores.json", json.dumps(
        [{k: _json_safe(v) for k, v in row.items()} for row in rows], indent=2
    ).encode("utf-8"))
    histogram = arima.ci_area_histogram([row["ci_area_normalized"] for row in rows], cfg.bins)
    ctx.write("ci_area_histogram.csv", _frame_csv(histogram))
    if cfg.acf_lags > 0:
        acf_frame = pd.DataFrame(acf_rows, columns=["region_code", "lag", "acf", "band95"])
        ctx.write("correlogram.csv", _frame_csv(acf_frame))
    ctx.write("skipped.csv", _skipped_csv(outcome.skipped))
    return EXIT_OK if rows else EXIT_PARTIAL


def cmd_pca(ctx: RunContext) -> int:
    cfg = ctx.cfg
    if cfg.pca_k is None:
        raise ConfigError("pca needs --k")
    matrix, labels = pca.load_feature_matrix(ctx.read(cfg.features, "features"))
    cleaned = pca.clean_matrix(matrix, cfg.max_missing)
    dropped = [c for c in matrix.columns if c not in cleaned.columns]
    result = pca.pca_fit(cleaned, cfg.pca_k)

    ctx.write("pca_scatter.csv", pca.pca_project_export(result, labels))
    ctx.write("pca_components.csv", pca.components_to_csv(result))
    ctx.write("pca_summary.json", pca.summary_to_json(result, dropped))
    logger.info(f"PCA k={result.k}: explained {result.explained_ratio.sum():.3f} of variance")
    return EXIT_OK


def cmd_correlate(ctx: RunContext) -> int:
    cfg = ctx.cfg
    metrics: Dict[str, Dict[str, float]] = {}
    if cfg.aub_scores:
        metrics["aub"] = stats.load_metric_scores(ctx.read(cfg.aub_scores, "aub-scores"), "aub")
    if cfg.arima_scores:
        metrics["ci_area_normalized"] = stats.load_metric_scores(
            ctx.read(cfg.arima_scores, "arima-scores"), "ci_area_normalized"
        )
    covariates = []
    if cfg.population:
        covariates.append(parse_covariates_csv(ctx.read(cfg.population, "population"), CovariateKind.POPULATION))
    if cfg.unemployment:
        covariates.append(
            parse_covariates_csv(ctx.read(cfg.unemployment, "unemployment"), CovariateKind.UNEMPLOYMENT_RATE)
        )
    if not metrics or not covariates:
        raise ConfigError("correlate needs at least one score report and one covariate file")

    report = stats.correlation_report(metrics, covariates, log_x=cfg.log_x)
    ctx.write("correlation_report.csv", stats.report_to_csv(report))
    for (metric, covariate), pairs in sorted(report.scatter.items()):
        ctx.write(f"scatter/{metric}_vs_{covariate}.csv", stats.scatter_to_csv(pairs, covariate, metric))
    ctx.write("skipped.csv", stats.skipped_to_csv(report))
    return EXIT_OK


def cmd_choropleth_export(ctx: RunContext) -> int:
    cfg = ctx.cfg
    partials = read_partial_series(ctx.read(cfg.input, "input"), cfg.schema)
    mapping = choropleth.load_state_mapping(ctx.read(cfg.mapping, "mapping")) if cfg.mapping else None

    outcome = batch.run_regions(partials, lambda s: s.region, lambda s: fill_gaps(s, cfg.max_gap), cfg.jobs, ctx.monitor)
    series = [value for _, value in outcome.results]

    years = None
    if series and (cfg.year_start is not None or cfg.year_end is not None):
        first = cfg.year_start if cfg.year_start is not None else min(config.month_year(s.start) for s in series)
        last = cfg.year_end if cfg.year_end is not None else max(config.month_year(s.end) for s in series)
        years = range(first, last + 1)

    grid = choropleth.state_year_means(series, years, mapping)
    ctx.write("state_levels.csv", choropleth.export_grid(grid, _parse_clamp(cfg.level_clamp)))
    if len(grid.years) >= 2:
        ctx.write("state_diffs.csv", choropleth.export_grid(choropleth.year_diffs(grid), _parse_clamp(cfg.diff_clamp)))
    else:
        logger.warning("Only one year in range; state_diffs.csv not written")

    by_code = {p.region.code: p.region for p in partials}
    skips = list(outcome.skipped) + [
        batch.Skip(region=by_code[code], reason="UnmappableRegionError: no state") for code in grid.skipped
    ]
    skips.sort(key=lambda s: s.region.code)
    ctx.write("skipped.csv", _skipped_csv(skips))
    return EXIT_PARTIAL if skips else EXIT_OK


def cmd_synth(ctx: RunContext) -> int:
    cfg = ctx.cfg
    dataset = synth.generate(synth.SynthConfig(
        seed=cfg.seed,
        regions=cfg.regions,
        arma_regions=cfg.arma_regions,
        window=cfg.ma_window,
        onset=config.parse_month(cfg.onset),
        zero_depth_every=cfg.zero_depth_every,
        ar=_parse_floats(cfg.ar),
        ma=_parse_floats(cfg.ma),
        d=cfg.arma_d,
        arma_length=cfg.arma_length,
    ))
    ctx.write("synthetic_series.csv", synth.series_to_csv(dataset))
    ctx.write("ground_truth.csv", synth.ground_truth_to_csv(dataset))
    return EXIT_OK


HANDLERS = {
    "aub-rank": cmd_aub_rank,
    "arima-score": cmd_arima_score,
    "pca": cmd_pca,
    "correlate": cmd_correlate,
    "choropleth-export": cmd_choropleth_export,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (InputError, TypeError) as e:
        config.configure_logging()
        logger.error(f"Invalid configuration: {e}")
        return EXIT_INVALID

    config.configure_logging(cfg.log_level, cfg.log_file)
    ctx = RunContext(cfg)
    logger.info(f"Running {cfg.command} (version {config.APP_VERSION})")
    try:
        code = HANDLERS[cfg.command](ctx)
    except (InputError, InvalidParameterError) as e:
        logger.error(f"{cfg.command} failed on invalid input: {e}")
        return EXIT_INVALID
    except AnalysisError as e:
        logger.error(f"{cfg.command} could not complete: {e}")
        return EXIT_PARTIAL

    ctx.write_manifest()
    logger.info(f"Run summary: {ctx.monitor.report()}")
    if cfg.metrics_file:
        ctx.monitor.write_textfile(cfg.metrics_file)
    return code


if __name__ == "__main__":
    sys.exit(main())
