"""Config-driven runs: predictability report, model x feature-group grid, summaries.

Config files use INI syntax (``configparser``)::

    [data]
    name = refit_house1
    loads = loads.csv            ; CSV in the ingest layout
    schema = loads.schema        ; channel = role lines
    weather = weather.csv        ; optional
    weather_schema = weather.schema
    holidays = holidays.txt      ; optional, one ISO date per line
    synthetic_days = 120         ; instead of loads/schema: generate data
    targets = fridge

    [split]
    test_start = 2015-03-01T00:00:00   ; or test_fraction = 0.2
    train_end =                       ; defaults to test_start
    val_fraction = 0.2

    [preprocess]
    max_gap_hours = 72
    winsorize = fridge
    fit_fraction = 0.8

    [features]
    groups = none, datetime, weather, w_plus_dt
    on_threshold = 15

    [wpe]
    order = 7
    delay = 1
    normalize = false

    [models]
    kinds = naive, msvr, ffnn, lstm, bilstm

    [model]          ; hyperparameters shared by every model
    max_epochs = 50
    [model.lstm]     ; per-kind overrides
    hidden = 32

    [run]
    output = results
    seed = 0
    workers = 1

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .features import FeatureConfig, FeatureGroup, IncompatibleFeatureGroupError, assemble, check_compatible, read_holidays
from .forecasters import KINDS, ForecasterSpec, make_model
from .ingest import TimeSeriesFrame, load_csv, merge_weather, read_schema, resample_hourly
from .metrics import REPORT_COLUMNS, EvalRow, evaluate, write_report
from .predictability import WpeParams, predictability_report
from .preprocess import PreprocessConfig, apply_scaler, preprocess
from .synthetic import synthetic_household
from .windowing import make_windows, split_validation

logger = logging.getLogger(__name__)

GRID_COLUMNS = [c for c in REPORT_COLUMNS if c != "train_seconds"]
SUMMARY_METRICS = ("nrmse", "acc95")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: str = "dataset"
    loads: Path | None = None
    schema: Path | None = None
    weather: Path | None = None
    weather_schema: Path | None = None
    holidays: Path | None = None
    synthetic_days: int | None = None
    targets: tuple[str, ...] = ()
    test_start: str | None = None
    train_end: str | None = None
    test_fraction: float = 0.2
    val_fraction: float = 0.2
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    groups: tuple[str, ...] = ("none",)
    on_threshold: float = 15.0
    takens_delay: int = 1
    takens_dimension: int = 2
    wpe: WpeParams = field(default_factory=WpeParams)
    models: tuple[ForecasterSpec, ...] = ()
    output: Path = Path("results")
    seed: int = 0
    workers: int = 1

    def semantic_dict(self) -> dict:
        """Everything that can change results (excludes output path and worker count)."""
        d = {}
        for f in fields(self):
            if f.name in ("output", "workers"):
                continue
            v = getattr(self, f.name)
            if f.name == "models":
                v = [m.to_dict() for m in v]
            elif f.name in ("preprocess", "wpe"):
                v = asdict(v)
            elif isinstance(v, Path):
                v = str(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _split_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.replace("\n", ",").split(",") if v.strip())


def _coerce(value: str, typ):
    if typ is bool:
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if value.strip().lower() in ("none", ""):
        return None
    return typ(value)


_SPEC_TYPES = {
    "hidden": int, "layers": int, "learning_rate": float, "batch_size": int, "max_epochs": int,
    "patience": int, "clip_norm": float, "activation": str, "C": float, "epsilon": float,
    "kernel": str, "gamma": float, "tol": float, "max_iter": int, "seed": int,
}


def _spec_overrides(section) -> dict:
    out = {}
    for key, raw in section.items():
        if key not in _SPEC_TYPES:
            raise ConfigError(f"unknown model hyperparameter {key!r}")
        out[key] = _coerce(raw, _SPEC_TYPES[key])
    return out


def parse_config(text: str, base_dir=Path(".")) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str  # keep "C" upper-case
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    base_dir = Path(base_dir)

    def get(section, key, default=None):
        if parser.has_option(section, key):
            v = parser.get(section, key).strip()
            return v if v else default
        return default

    def path(section, key):
        v = get(section, key)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else (base_dir / p).resolve()

    try:
        kinds = _split_list(get("models", "kinds", "naive"))
        shared = _spec_overrides(parser["model"]) if parser.has_section("model") else {}
        specs = []
        for kind in kinds:
            if kind not in KINDS:
                raise ConfigError(f"unknown model kind {kind!r}")
            per_kind = _spec_overrides(parser[f"model.{kind}"]) if parser.has_section(f"model.{kind}") else {}
            specs.append(ForecasterSpec(kind=kind, **{**shared, **per_kind}))

        groups = tuple(FeatureGroup.parse(g).value for g in _split_list(get("features", "groups", "none")))
        synthetic_days = get("data", "synthetic_days")
        cfg = ExperimentConfig(
            dataset=get("data", "name", "dataset"),
            loads=path("data", "loads"),
            schema=path("data", "schema"),
            weather=path("data", "weather"),
            weather_schema=path("data", "weather_schema"),
            holidays=path("data", "holidays"),
            synthetic_days=int(synthetic_days) if synthetic_days else None,
            targets=_split_list(get("data", "targets", "")),
            test_start=get("split", "test_start"),
            train_end=get("split", "train_end"),
            test_fraction=float(get("split", "test_fraction", 0.2)),
            val_fraction=float(get("split", "val_fraction", 0.2)),
            preprocess=PreprocessConfig(
                max_gap_hours=float(get("preprocess", "max_gap_hours", 72)),
                winsorize=_split_list(get("preprocess", "winsorize", "")),
                fit_fraction=float(get("preprocess", "fit_fraction", 0.8)),
            ),
            groups=groups,
            on_threshold=float(get("features", "on_threshold", 15.0)),
            takens_delay=int(get("features", "takens_delay", 1)),
            takens_dimension=int(get("features", "takens_dimension", 2)),
            wpe=WpeParams(
                order=int(get("wpe", "order", 7)),
                delay=int(get("wpe", "delay", 1)),
                normalize=_coerce(get("wpe", "normalize", "false"), bool),
            ),
            models=tuple(specs),
            output=path("run", "output") or base_dir / "results",
            seed=int(get("run", "seed", 0)),
            workers=int(get("run", "workers", 1)),
        )
    except (ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    validate_config(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.synthetic_days is None and (cfg.loads is None or cfg.schema is None):
        raise ConfigError("[data] needs loads + schema, or synthetic_days")
    if not cfg.targets:
        raise ConfigError("[data] targets is empty")
    if not cfg.models:
        raise ConfigError("no models configured")
    if not cfg.groups:
        raise ConfigError("no feature groups configured")
    if not 0 < cfg.val_fraction < 1 or not 0 < cfg.test_fraction < 1:
        raise ConfigError("val_fraction and test_fraction must be in (0, 1)")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")


def load_frame(cfg: ExperimentConfig) -> TimeSeriesFrame:
    if cfg.synthetic_days is not None:
        frame = synthetic_household(days=cfg.synthetic_days, seed=cfg.seed)
    else:
        frame = resample_hourly(load_csv(cfg.loads, read_schema(cfg.schema)))
        if cfg.weather is not None:
            if cfg.weather_schema is None:
                raise ConfigError("[data] weather needs weather_schema")
            weather = resample_hourly(load_csv(cfg.weather, read_schema(cfg.weather_schema)))
            frame = merge_weather(frame, weather)
    missing = [t for t in cfg.targets if t not in frame.load_channels]
    if missing:
        raise ConfigError(f"target channels not found among loads: {missing}")
    for c in cfg.preprocess.winsorize:
        if c not in frame.channels:
            raise ConfigError(f"winsorize channel {c!r} not in data")
    return frame


def _cell_seed(global_seed: int, *names: str) -> int:
    ss = np.random.SeedSequence([global_seed] + [zlib.crc32(n.encode()) for n in names])
    return int(ss.generate_state(1)[0])


@dataclass
class CellResult:
    appliance: str
    model: str
    feature_group: str
    status: str  # ok | failed | skipped
    row: EvalRow | None = None
    error: str = ""
    seconds: float = 0.0
    log: object = None
    samples: dict = field(default_factory=dict)


@dataclass
class RunResult:
    config: ExperimentConfig
    predictability: object
    cells: list[CellResult]
    group_summary: pd.DataFrame
    model_summary: pd.DataFrame
    predictability_vs_mase: pd.DataFrame
    output: Path

    @property
    def rows(self) -> list[EvalRow]:
        return [c.row for c in self.cells if c.row is not None]

    @property
    def all_failed(self) -> bool:
        return not any(c.status == "ok" for c in self.cells)


def _test_start(cfg: ExperimentConfig, frame: TimeSeriesFrame) -> pd.Timestamp:
    if cfg.test_start:
        return pd.Timestamp(cfg.test_start)
    idx = frame.timestamps
    # whole days of test data, starting at midnight
    n_test = int(math.floor(cfg.test_fraction * len(idx)))
    return idx[len(idx) - n_test].floor("D")


def prepare(cfg: ExperimentConfig, frame: TimeSeriesFrame | None = None):
    """Load and preprocess; returns ``(clean, scaled, scaler, train_end, test_start)``."""
    frame = load_frame(cfg) if frame is None else frame
    test_start = _test_start(cfg, frame)
    train_end = pd.Timestamp(cfg.train_end) if cfg.train_end else test_start
    if train_end > test_start:
        raise ConfigError("train_end is after test_start")
    clean, scaler = preprocess(frame, cfg.preprocess)
    # the scaler never sees test rows
    n_before_test = int((clean.timestamps < test_start).sum())
    if scaler.fit_range[1] >= test_start:
        clean, scaler = preprocess(frame, cfg.preprocess, fit_rows_limit=n_before_test)
    scaled = apply_scaler(clean, scaler)
    return clean, scaled, scaler, train_end, test_start


def _run_cell(spec: ForecasterSpec, appliance: str, group: str, data, seed: int, dataset: str) -> CellResult:
    start = time.perf_counter()
    try:
        train, val, test = data
        spec = ForecasterSpec.from_dict({**spec.to_dict(), "seed": seed})
        model = make_model(spec).fit(train, val)
        row = evaluate(model, test, dataset=dataset, appliance=appliance, feature_group=group)
        return CellResult(appliance, spec.kind, group, "ok", row=row, seconds=time.perf_counter() - start,
                          log=model.log, samples={"train": len(train), "val": len(val), "test": len(test)})
    except Exception as exc:  # fail-soft: one bad cell must not end the grid
        logger.exception("cell %s/%s/%s failed", appliance, spec.kind, group)
        return CellResult(appliance, spec.kind, group, "failed", error=f"{type(exc).__name__}: {exc}",
                          seconds=time.perf_counter() - start)


def run(cfg: ExperimentConfig, frame: TimeSeriesFrame | None = None, write: bool = True) -> RunResult:
    """Run the full framework and (optionally) write every output under ``cfg.output``."""
    wall_start = time.perf_counter()
    clean, scaled, scaler, train_end, test_start = prepare(cfg, frame)

    train_clean = clean.slice(stop=train_end)
    report = predictability_report(train_clean, cfg.wpe)

    holidays = read_holidays(cfg.holidays) if cfg.holidays else frozenset()
    feat_cfg = FeatureConfig(
        on_threshold=cfg.on_threshold,
        holidays=frozenset(holidays),
        train_span=train_end - clean.timestamps[0],
        takens_delay=cfg.takens_delay,
        takens_dimension=cfg.takens_dimension,
    )

    jobs = []
    skipped = []
    for appliance in cfg.targets:
        for group in cfg.groups:
            matrix = assemble(scaled, appliance, group, feat_cfg, scaler=scaler)
            train_m = _slice_matrix(matrix, None, train_end)
            test_m = _slice_matrix(matrix, test_start, None)
            train_w, val_w = split_validation(make_windows(train_m, stride=1), cfg.val_fraction)
            test_w = make_windows(test_m, stride=24)
            for spec in cfg.models:
                try:
                    check_compatible(group, spec.kind)
                except IncompatibleFeatureGroupError as exc:
                    skipped.append(CellResult(appliance, spec.kind, group, "skipped", error=str(exc)))
                    continue
                seed = _cell_seed(cfg.seed, appliance, spec.kind, group)
                jobs.append((spec, appliance, group, (train_w, val_w, test_w), seed, cfg.dataset))

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            cells = list(pool.map(lambda j: _run_cell(*j), jobs))
    else:
        cells = [_run_cell(*j) for j in jobs]
    cells += skipped
    order = {(a, g, m.kind): k for k, (a, g, m) in enumerate(
        (a, g, m) for a in cfg.targets for g in cfg.groups for m in cfg.models)}
    cells.sort(key=lambda c: order[(c.appliance, c.feature_group, c.model)])

    rows = [c.row for c in cells if c.row is not None]
    grid = grid_frame(rows)
    groups_s, models_s = summarize(grid) if "none" in set(grid.get("feature_group", [])) else (pd.DataFrame(), pd.DataFrame())
    pvm = predictability_vs_mase(report, grid)
    result = RunResult(cfg, report, cells, groups_s, models_s, pvm, Path(cfg.output))
    if write:
        _write_outputs(result, time.perf_counter() - wall_start)
    return result


def _slice_matrix(matrix, start, stop):
    from dataclasses import replace

    ts = matrix.timestamps
    keep = np.ones(len(ts), dtype=bool)
    if start is not None:
        keep &= ts >= start
    if stop is not None:
        keep &= ts < stop
    return replace(matrix, values=matrix.values[keep], timestamps=ts[keep])


def grid_frame(rows) -> pd.DataFrame:
    if not rows:
        return pd.DataFrame(columns=REPORT_COLUMNS)
    return pd.DataFrame([asdict(r) for r in rows], columns=REPORT_COLUMNS)


def summarize(grid, metrics=SUMMARY_METRICS, baseline: str = "none"):
    """Mean metric change relative to the ``baseline`` feature group.

    Per group ``g``: mean over (appliance, model) of ``metric(g) - metric(baseline)``.
    Per model: mean of the same differences over the non-baseline groups.
    ``grid`` is a DataFrame or a path to a grid CSV.
    """
    if not isinstance(grid, pd.DataFrame):
        grid = pd.read_csv(grid)
    if baseline not in set(grid["feature_group"]):
        raise ValueError(f"grid has no {baseline!r} baseline rows")
    keys = ["appliance", "model"]
    base = grid[grid["feature_group"] == baseline].set_index(keys)[list(metrics)]
    diffs = []
    for _, row in grid.iterrows():
        key = (row["appliance"], row["model"])
        if key not in base.index:
            continue
        d = {"appliance": row["appliance"], "model": row["model"], "feature_group": row["feature_group"]}
        for m in metrics:
            d[f"delta_{m}"] = float(row[m]) - float(base.loc[key, m])
        diffs.append(d)
    diffs = pd.DataFrame(diffs)
    delta_cols = [f"delta_{m}" for m in metrics]
    group_order = list(dict.fromkeys(grid["feature_group"]))
    model_order = list(dict.fromkeys(grid["model"]))
    by_group = diffs.groupby("feature_group", sort=False)[delta_cols].mean()
    by_group["n_cells"] = diffs.groupby("feature_group", sort=False).size()
    by_group = by_group.reindex(group_order).reset_index()
    non_base = diffs[diffs["feature_group"] != baseline]
    if len(non_base):
        by_model = non_base.groupby("model", sort=False)[delta_cols].mean()
        by_model["n_cells"] = non_base.groupby("model", sort=False).size()
        by_model = by_model.reindex([m for m in model_order if m in by_model.index]).reset_index()
    else:
        by_model = pd.DataFrame(columns=["model", *delta_cols, "n_cells"])
    return by_group, by_model


def predictability_vs_mase(report, grid: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for r in report.rows:
        sub = grid[grid["appliance"] == r.channel] if len(grid) else grid
        sub = sub[np.isfinite(sub["mase"].astype(float))] if len(sub) else sub
        if len(sub):
            best = sub.loc[sub["mase"].astype(float).idxmin()]
            rows.append({"appliance": r.channel, "wpe": r.wpe, "wpe_normalized": r.wpe_normalized,
                         "best_mase": float(best["mase"]), "best_model": best["model"],
                         "best_feature_group": best["feature_group"]})
    return pd.DataFrame(rows, columns=["appliance", "wpe", "wpe_normalized", "best_mase", "best_model", "best_feature_group"])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_table(df: pd.DataFrame, path, columns=None) -> None:
    columns = list(df.columns) if columns is None else columns
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for rec in df[columns].itertuples(index=False):
            w.writerow([_fmt(v) for v in rec])


def _write_outputs(result: RunResult, wall_seconds: float) -> None:
    cfg = result.config
    out = Path(cfg.output)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    result.predictability.to_csv(out / "predictability.csv")
    result.predictability.to_json(out / "predictability.json")
    grid = grid_frame(result.rows)
    write_table(grid, out / "grid.csv", GRID_COLUMNS)
    write_report(result.rows, out / "eval_report.csv")
    if len(result.group_summary):
        write_table(result.group_summary, out / "summary_groups.csv")
        write_table(result.model_summary, out / "summary_models.csv")
    write_table(result.predictability_vs_mase, out / "predictability_vs_mase.csv")
    for c in result.cells:
        if c.log is not None:
            c.log.to_csv(out / "logs" / f"{c.appliance}__{c.model}__{c.feature_group}.csv")
    manifest = {
        "config_hash": cfg.config_hash(),
        "config": cfg.semantic_dict(),
        "seed": cfg.seed,
        "workers": cfg.workers,
        "versions": {
            "loadcast": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
        },
        "wall_seconds": wall_seconds,
        "cells": [
            {"appliance": c.appliance, "model": c.model, "feature_group": c.feature_group,
             "status": c.status, "error": c.error, "seconds": c.seconds, "samples": c.samples}
            for c in result.cells
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str), encoding="utf-8")
