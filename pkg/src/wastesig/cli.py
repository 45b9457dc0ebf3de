"""Command-line entry point: ``wastesig <subcommand> INPUT [options]``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import pipeline, report
from .config import Config, ConfigError, load_config
from .ingest import CleaningConfigError
from .risk import LabelConfig, LabelConfigError

log = logging.getLogger("wastesig")


def _global_parser(suppress: bool = True) -> argparse.ArgumentParser:
    # subcommand copies must not overwrite values given before the subcommand
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS if suppress else None)
    p.add_argument("--config", help="YAML config file (defaults are bundled)")
    p.add_argument("--seed", type=int, help="seed for clustering restarts and bootstrap")
    p.add_argument("--out-dir", help="output directory (default: out)")
    p.add_argument("--format", choices=("csv", "json", "svg", "both"),
                   help="output format; tables as csv/json, dashboards as json/svg (default: both)")
    p.add_argument("--delimiter", help="input and table delimiter (default from config, ',')")
    p.add_argument("--tab", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="tab-delimited input and tables")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_parser(suppress=False)
    parser = argparse.ArgumentParser(prog="wastesig", parents=[common],
                                     description="Trade-data e-waste risk pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, parents=[_global_parser()], argument_default=argparse.SUPPRESS)
        sp.add_argument("input", help="trade records file, or - for stdin")
        return sp

    add("ingest", "parse and clean records; write the cleaned series")

    fp = sub.add_parser("features", help="feature table operations")
    fsub = fp.add_subparsers(dest="action", required=True)
    fe = fsub.add_parser("export", help="write the per-product feature table",
                         parents=[_global_parser()], argument_default=argparse.SUPPRESS)
    fe.add_argument("input")

    sp = add("segment", "iterative K-Means/DBSCAN segmentation")
    sp.add_argument("--k-max", type=int)
    sp.add_argument("--k", type=int, help="override the elbow choice for the first pass")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--min-pts", type=int)

    sp = add("score", "fit the Waste Score model and score every product")
    sp.add_argument("--labels", help="YAML with scrap_codes and finished_codes prefix lists")
    sp.add_argument("--l2", type=float, help="L2 penalty on the weights")

    sp = add("forecast", "linear unit-price forecasts and downtrend rankings")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--top", type=int, nargs="+")

    sp = add("validate", "check tier recoverability with a bagged tree ensemble")
    sp.add_argument("--trees", type=int)
    sp.add_argument("--depth", type=int)

    sp = add("report", "dashboards, country hotspots and treemap data")
    sp.add_argument("--hs", action="append", default=None, help="HS code to render (repeatable)")
    sp.add_argument("--all", action="store_true", default=False, help="one dashboard per modeled product")
    sp.add_argument("--hotspots", action="store_true", default=False)
    sp.add_argument("--treemap", action="store_true", default=False)

    add("run-all", "run every stage and write all outputs")

    cp = sub.add_parser("corpus", help="write the seeded synthetic trade corpus",
                        parents=[_global_parser()], argument_default=argparse.SUPPRESS)
    cp.add_argument("output", help="destination file, or - for stdout")
    return parser


def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def _load_labels(path: str) -> LabelConfig:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict) or not {"scrap_codes", "finished_codes"} <= set(raw):
        raise ConfigError(f"{path}: expected scrap_codes and finished_codes lists")
    return LabelConfig(frozenset(map(str, raw["scrap_codes"])), frozenset(map(str, raw["finished_codes"])))


def resolve_config(args: argparse.Namespace) -> Config:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    delim = "\t" if getattr(args, "tab", False) else getattr(args, "delimiter", None)
    if delim:
        cfg.input = dataclasses.replace(cfg.input, delimiter=delim)
    seg = {}
    for flag, key in (("k_max", "k_max"), ("k", "k"), ("eps", "eps"), ("min_pts", "min_pts")):
        if getattr(args, flag, None) is not None:
            seg[key] = getattr(args, flag)
    if seg:
        cfg.segmentation = dataclasses.replace(cfg.segmentation, **seg)
    if getattr(args, "labels", None):
        cfg.risk = dataclasses.replace(cfg.risk, labels=_load_labels(args.labels))
    if getattr(args, "l2", None) is not None:
        cfg.risk = dataclasses.replace(cfg.risk, l2_lambda=args.l2)
    if getattr(args, "horizon", None) is not None:
        cfg.forecast = dataclasses.replace(cfg.forecast, horizon=args.horizon)
    if getattr(args, "top", None):
        cfg.forecast = dataclasses.replace(cfg.forecast, top=tuple(args.top))
    val = {}
    if getattr(args, "trees", None) is not None:
        val["n_trees"] = args.trees
    if getattr(args, "depth", None) is not None:
        val["max_depth"] = args.depth
    if val:
        cfg.validation = dataclasses.replace(cfg.validation, **val)
    return cfg


STAGE_FOR = {"ingest": "ingest", "features": "features", "segment": "segment", "score": "score",
             "forecast": "forecast", "validate": "validate", "report": "validate", "run-all": "validate"}


def write_corpus(args: argparse.Namespace) -> int:
    from .synthetic import make_trade_corpus

    seed = getattr(args, "seed", None)
    delim = "\t" if getattr(args, "tab", False) else getattr(args, "delimiter", None) or ","
    text = make_trade_corpus(42 if seed is None else seed).to_csv(delim)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8", newline="")
    return 0


def run(args: argparse.Namespace) -> int:
    if args.command == "corpus":
        return write_corpus(args)
    cfg = resolve_config(args)
    content = _read_input(args.input)
    res = pipeline.run_pipeline(content, cfg, until=STAGE_FOR[args.command])
    fmt = getattr(args, "format", None) or "both"
    w = pipeline.OutputWriter(getattr(args, "out_dir", None) or "out", fmt, cfg.input.delimiter)
    cmd = args.command

    if cmd == "ingest":
        pipeline.write_ingest(res, w)
        print(f"{len(res.cleaning.series)} series kept, {len(res.cleaning.dropped)} dropped, "
              f"{len(res.rejected)} rows rejected")
    elif cmd == "features":
        pipeline.write_features(res, w)
        print(f"{len(res.vectors)} products featurized, {len(res.excluded)} excluded")
    elif cmd == "segment":
        pipeline.write_segments(res, w)
        seg = res.segmentation
        print(f"pass 1 k={seg.pass1_k}, pass 2 k={seg.pass2_k}, eps={seg.eps:.4f}")
        for tier, n in seg.counts().items():
            print(f"  {tier}: {n}")
    elif cmd == "score":
        pipeline.write_scores(res, w)
        print(f"{len(res.profiles)} products scored; weights: "
              + ", ".join(f"{n}={v:.4f}" for n, v in zip(res.model.feature_names, res.model.weights)))
    elif cmd == "forecast":
        pipeline.write_forecasts(res, w, cfg.forecast.top)
        crossing = sum(f.negative_cross_year is not None for f in res.forecasts)
        print(f"{len(res.forecasts)} forecasts to {cfg.forecast.horizon}, {crossing} cross zero")
    elif cmd == "validate":
        s = pipeline.write_validation(res, w)
        print(f"training accuracy: {s['training_accuracy']:.4f}")
        oob = "n/a" if s["oob_accuracy"] is None else f"{s['oob_accuracy']:.4f}"
        print(f"out-of-bag accuracy: {oob} (coverage {s['oob_coverage']:.4f})")
        print(pipeline.format_confusion(s["labels"], s["training_confusion"]))
    elif cmd == "report":
        if not (args.hs or args.all or args.hotspots or args.treemap):
            raise ConfigError("report needs at least one of --hs, --all, --hotspots, --treemap")
        codes = list(res.matrix.rows) if args.all else (args.hs or [])
        for code in codes:
            pipeline.write_dashboard(res, w, code)
        if args.hotspots:
            pipeline.write_hotspots(res, w)
        if args.treemap:
            pipeline.write_treemap(res, w)
        print(f"{len(w.written)} files written to {w.out_dir}")
    elif cmd == "run-all":
        s = pipeline.write_all(res, w)
        print(f"{len(w.written)} files written to {w.out_dir}; "
              f"out-of-bag accuracy {s['oob_accuracy']:.4f}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (ConfigError, CleaningConfigError, LabelConfigError, report.NotModeledError,
            ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"wastesig: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
