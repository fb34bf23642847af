"""Command line entry point: ``loadcast predictability|run|summarize``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_ALL_FAILED = 1
EXIT_BAD_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loadcast", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("predictability", help="weighted permutation entropy per load channel")
    pr.add_argument("--config", type=Path)
    pr.add_argument("--input", type=Path, help="hourly CSV (timestamp column first)")
    pr.add_argument("--schema", type=Path, help="channel = role lines; default: every column is a load")
    pr.add_argument("--order", type=int)
    pr.add_argument("--delay", type=int)
    pr.add_argument("--normalize", action="store_true")
    pr.add_argument("--output", type=Path, help="report CSV (default: stdout)")

    rn = sub.add_parser("run", help="full grid: predictability, models x feature groups, summaries")
    rn.add_argument("--config", type=Path, required=True)
    rn.add_argument("--workers", type=int, help="override [run] workers")
    rn.add_argument("--output", type=Path, help="override [run] output")

    sm = sub.add_parser("summarize", help="mean deltas versus the 'none' feature group")
    sm.add_argument("--config", type=Path, help="read grid.csv from the config's output directory")
    sm.add_argument("--grid", type=Path)
    sm.add_argument("--metrics", default="nrmse,acc95")
    sm.add_argument("--output", type=Path, help="directory for summary CSVs (default: print)")
    return p


def _schema_for(path: Path, schema: Path | None) -> dict:
    import pandas as pd

    from .ingest import read_schema

    if schema is not None:
        return read_schema(schema)
    cols = pd.read_csv(path, nrows=0).columns[1:]
    return {c: "load" for c in cols}


def _cmd_predictability(args) -> int:
    from .experiment import ConfigError, load_config, load_frame, prepare
    from .ingest import load_csv, resample_hourly
    from .predictability import WpeParams, predictability_report

    if args.config is not None:
        cfg = load_config(args.config)
        clean, _, _, train_end, _ = prepare(cfg)
        frame = clean.slice(stop=train_end)
        params = cfg.wpe
    elif args.input is not None:
        frame = resample_hourly(load_csv(args.input, _schema_for(args.input, args.schema)))
        params = WpeParams()
    else:
        raise ConfigError("predictability needs --config or --input")
    params = WpeParams(
        order=args.order if args.order is not None else params.order,
        delay=args.delay if args.delay is not None else params.delay,
        normalize=args.normalize or params.normalize,
    )
    report = predictability_report(frame, params)
    if args.output is not None:
        report.to_csv(args.output)
    else:
        report.to_csv("/dev/stdout")
    return EXIT_OK


def _cmd_run(args) -> int:
    from dataclasses import replace

    from .experiment import load_config, run

    cfg = load_config(args.config)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if args.output is not None:
        cfg = replace(cfg, output=args.output)
    result = run(cfg)
    n_ok = sum(c.status == "ok" for c in result.cells)
    n_failed = sum(c.status == "failed" for c in result.cells)
    n_skipped = sum(c.status == "skipped" for c in result.cells)
    print(f"{n_ok} cells ok, {n_failed} failed, {n_skipped} skipped; outputs in {result.output}")
    return EXIT_ALL_FAILED if result.all_failed else EXIT_OK


def _cmd_summarize(args) -> int:
    from .experiment import ConfigError, load_config, summarize, write_table

    if args.grid is not None:
        grid = args.grid
    elif args.config is not None:
        grid = Path(load_config(args.config).output) / "grid.csv"
    else:
        raise ConfigError("summarize needs --grid or --config")
    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    try:
        by_group, by_model = summarize(grid, metrics)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.output is not None:
        args.output.mkdir(parents=True, exist_ok=True)
        write_table(by_group, args.output / "summary_groups.csv")
        write_table(by_model, args.output / "summary_models.csv")
    else:
        print(by_group.to_csv(index=False), end="")
        print()
        print(by_model.to_csv(index=False), end="")
    return EXIT_OK


def main(argv=None) -> int:
    from .experiment import ConfigError
    from .ingest import IngestError

    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"predictability": _cmd_predictability, "run": _cmd_run, "summarize": _cmd_summarize}
    try:
        return handlers[args.command](args)
    except (ConfigError, IngestError, FileNotFoundError) as exc:
        print(f"loadcast: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
