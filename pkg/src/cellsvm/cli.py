"""Command-line front end: train/test/report subcommands over the scenarios.

Exit codes: 0 ok, 2 usage or configuration error, 3 data error, 4 numeric
error. Prediction files carry one space-separated row per test point.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from .config import RunConfig
from .dataio import load_file
from .errors import CellSvmError, ConfigError, DataError, NumericError, ParseError
from .scenarios import (evaluate, load_model, predict, save_model,
                        scenario_from_config, train)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

TRAIN_COMMANDS = {"mc": "mc", "ls": "ls", "qt": "quantile", "ex": "expectile",
                  "npl": "npl", "binary": "binary", "weighted": "weighted_binary"}


def format_prediction_row(row) -> str:
    return " ".join(repr(float(v)) for v in row)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--display", type=int, default=0, help="verbosity 0..2")
    p.add_argument("--threads", type=int, default=0,
                   help="worker threads (0 = all physical cores)")
    p.add_argument("--grid_choice", default="0", choices=["0", "1", "2", "libsvm"],
                   help="0/1/2: 10x10 / 15x15 / 20x20 default grid; libsvm: the 10x11 libsvm grid")
    p.add_argument("--adaptivity_control", type=int, default=0, choices=[0, 1, 2],
                   help="adaptive grid search level (0 = full grid)")
    p.add_argument("--voronoi", type=int, nargs="+", default=[0],
                   metavar="CODE [SIZE]",
                   help="cell decomposition: 0 none, 1 random chunks, 4 disjoint "
                        "Voronoi, 5 overlapping Voronoi, 6 recursive; optional "
                        "max cell size (default 2000)")
    p.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--kernel", default="gaussian_rbf",
                   choices=["gaussian_rbf", "laplacian"])
    p.add_argument("--label_col", default="last", choices=["first", "last"],
                   help="label column for CSV inputs")
    p.add_argument("--has_header", action="store_true", help="CSV files carry a header row")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cellsvm",
                                     description="kernel SVM train/select/test toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    descr = {"mc": "multi-class classification", "ls": "least squares regression",
             "qt": "quantile regression", "ex": "expectile regression",
             "npl": "Neyman-Pearson classification", "binary": "binary classification",
             "weighted": "weighted binary classification"}
    for cmd, text in descr.items():
        p = sub.add_parser(cmd, help=text)
        p.add_argument("--train", required=True, metavar="FILE", help="training data")
        p.add_argument("--model", required=True, metavar="FILE", help="model output path")
        _add_common(p)
        if cmd == "mc":
            p.add_argument("--mc_type", default="ava", choices=["ava", "ova"])
        if cmd in ("qt", "ex"):
            p.add_argument("--levels", type=float, nargs="+", default=None,
                           help="quantile/expectile levels in (0,1)")
        if cmd in ("npl", "weighted"):
            p.add_argument("--weights", type=float, nargs="+", default=None,
                           help="hinge weight grid")
        if cmd == "npl":
            p.add_argument("--npl_class", type=float, default=1.0,
                           help="class whose detection rate is maximized")
            p.add_argument("--npl_alpha", type=float, default=0.05,
                           help="false-alarm bound in (0,1)")

    p = sub.add_parser("test", help="apply a trained model to test data")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--test", required=True, metavar="FILE")
    p.add_argument("--output", metavar="FILE", help="predictions file")
    p.add_argument("--result", metavar="FILE", help="JSON result record for `report`")
    p.add_argument("--threads", type=int, default=0)
    p.add_argument("--label_col", default="last", choices=["first", "last"])
    p.add_argument("--has_header", action="store_true")

    p = sub.add_parser("report", help="aggregate result records into a table")
    p.add_argument("results", nargs="+", metavar="RESULT.json")
    p.add_argument("--csv", metavar="FILE", help="also write the table as CSV")
    return parser


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig(display=args.display, threads=args.threads,
                    grid_choice=args.grid_choice,
                    adaptivity_control=args.adaptivity_control,
                    voronoi=tuple(args.voronoi), folds=args.folds, seed=args.seed,
                    kernel=args.kernel)
    if getattr(args, "mc_type", None):
        cfg.mc_type = args.mc_type
    if getattr(args, "levels", None):
        cfg.levels = tuple(args.levels)
    if getattr(args, "weights", None):
        cfg.weights = tuple(args.weights)
    if getattr(args, "npl_class", None) is not None:
        cfg.npl_class = args.npl_class
    if getattr(args, "npl_alpha", None) is not None:
        cfg.npl_alpha = args.npl_alpha
    return cfg.validate()


def _load(path, args):
    try:
        fh = open(path, "rb")
        fh.close()
    except OSError as exc:
        raise ConfigError(f"cannot open {path}: {exc.strerror}")
    return load_file(path, label_column=args.label_col,
                     has_header=getattr(args, "has_header", False))


def cmd_train(args) -> int:
    config = _config_from_args(args)
    data = _load(args.train, args)
    spec = scenario_from_config(TRAIN_COMMANDS[args.command], config)
    start = time.perf_counter()
    model = train(spec, data, config)
    elapsed = time.perf_counter() - start
    save_model(model, args.model)
    if config.display >= 1:
        print(f"[cellsvm] trained {spec.kind} on n={data.n} d={data.dim} "
              f"in {elapsed:.2f}s; model -> {args.model}")
    return EXIT_OK


def cmd_test(args) -> int:
    model = load_model(args.model)
    data = _load(args.test, args)
    workers = args.threads if args.threads > 0 else model.config.workers
    start = time.perf_counter()
    preds = predict(model, data, workers=workers)
    elapsed = time.perf_counter() - start
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            for row in preds:
                fh.write(format_prediction_row(row) + "\n")
    metrics = evaluate(preds, data.labels, model.scenario)
    for key, value in metrics.items():
        print(f"{key}: {value}")
    if args.result:
        record = {"dataset": args.test, "scenario": model.scenario.kind,
                  "config": model.config.snapshot(), "metrics": metrics,
                  "test_seconds": elapsed, "n_test": data.n}
        with open(args.result, "w", encoding="utf-8") as fh:
            json.dump(record, fh)
            fh.write("\n")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for path in args.results:
        with open(path, "r", encoding="utf-8") as fh:
            rec = json.load(fh)
        metrics = rec.get("metrics", {})
        flat = []
        for key, value in metrics.items():
            if isinstance(value, list):
                flat.append((key, float(np.mean(value)) if value else float("nan")))
            else:
                flat.append((key, float(value)))
        rows.append({"dataset": rec.get("dataset", path),
                     "scenario": rec.get("scenario", "?"),
                     "seconds": rec.get("test_seconds", float("nan")),
                     **dict(flat)})
    keys = ["dataset", "scenario", "seconds"]
    extra = sorted({k for row in rows for k in row} - set(keys))
    header = keys + extra
    widths = [max(len(h), max((len(_fmt(row.get(h))) for row in rows), default=0))
              for h in header]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        print("  ".join(_fmt(row.get(h)).ljust(w) for h, w in zip(header, widths)))
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=header)
            writer.writeheader()
            for row in rows:
                writer.writerow({h: row.get(h, "") for h in header})
    return EXIT_OK


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_CONFIG
    try:
        if args.command in TRAIN_COMMANDS:
            return cmd_train(args)
        if args.command == "test":
            return cmd_test(args)
        return cmd_report(args)
    except ConfigError as exc:
        print(f"cellsvm: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, DataError) as exc:
        print(f"cellsvm: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"cellsvm: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CellSvmError as exc:
        print(f"cellsvm: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
