"""Command-line front end: one verb per pipeline stage plus full runs.

Exit codes: 0 success, 2 configuration error, 3 data-format error,
4 numerical-conditioning error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import (
    ConditioningError,
    ConfigurationError,
    DataFormatError,
    SplineFdaError,
)
from .io import load_model
from .pipeline import (
    PipelineConfig,
    classify_archive,
    evaluate_archive,
    render_svg_curves,
    run_pipeline,
)

__all__ = ["main"]

_STOP_AFTER = {"ddk": "knot-selection", "density": "density",
               "transform": "transform", "basis": "basis"}


def _read_config(path, seed=None) -> PipelineConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise ConfigurationError(f"{path}: config is not valid JSON: "
                                 f"{exc}") from exc
    config = PipelineConfig.from_dict(data)
    if seed is not None:
        config = config.with_seed(seed)
    return config


def _cmd_stage(args) -> int:
    config = _read_config(args.config, args.seed)
    if args.verb == "ddk" and config.transform == "none":
        raise ConfigurationError(
            "transform 'none' runs no knot selection; use state or domain")
    report = run_pipeline(config, args.out_dir,
                          stop_after=_STOP_AFTER[args.verb])
    print(f"wrote {len(report['artifacts'])} artifacts to "
          f"{report['out_dir']}")
    return 0


def _cmd_train(args) -> int:
    config = _read_config(args.config, args.seed)
    report = run_pipeline(config, args.out_dir)
    print(f"test accuracy {report['accuracy']:.4f} "
          f"({report['counts']['test']} samples); wrote "
          f"{len(report['artifacts'])} artifacts to {report['out_dir']}")
    return 0


def _cmd_report(args) -> int:
    config = _read_config(args.config, args.seed)
    report = run_pipeline(config, args.out_dir)
    out = Path(report["out_dir"])
    rendered = []
    for name in list(report["artifacts"]):
        if name.endswith(".csv"):
            svg = name[:-4] + ".svg"
            render_svg_curves(out / name, out / svg)
            rendered.append(svg)
    report["artifacts"].extend(rendered)
    print(f"test accuracy {report['accuracy']:.4f}; wrote "
          f"{len(report['artifacts'])} artifacts "
          f"({len(rendered)} SVG) to {report['out_dir']}")
    return 0


def _cmd_classify(args) -> int:
    archive = load_model(args.model)
    report = classify_archive(archive, args.data, args.labels, args.out_dir)
    line = f"classified {len(report['predicted'])} samples"
    if "accuracy" in report:
        line += f", accuracy {report['accuracy']:.4f}"
    print(line + f"; wrote predictions to {report['out_dir']}")
    return 0


def _cmd_eval(args) -> int:
    config = _read_config(args.config, args.seed)
    archive = load_model(args.model)
    report = evaluate_archive(config, archive, args.out_dir)
    print(f"test accuracy {report['accuracy']:.4f} "
          f"({report['test_count']} samples)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splinefda",
        description="Tensor-spline functional classification pipeline")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add(name, func, help_text, needs_config=True):
        p = sub.add_parser(name, help=help_text)
        if needs_config:
            p.add_argument("config", help="JSON configuration file")
            p.add_argument("--seed", type=int, default=None,
                           help="override the configured seed")
        p.add_argument("--out-dir", default="out",
                       help="artifact directory (default: out)")
        p.set_defaults(func=func)
        return p

    add("ddk", _cmd_stage, "per-class knot selection and stopping curves")
    add("density", _cmd_stage, "knot-density estimates per class")
    add("transform", _cmd_stage, "topology-transformed training curves")
    add("basis", _cmd_stage, "shared orthonormal lattice basis tables")
    add("train", _cmd_train, "full pipeline: fit, tune, evaluate, archive")
    add("report", _cmd_report, "full pipeline plus SVG renderings")
    add("eval", _cmd_eval, "score a saved model on the test split") \
        .add_argument("--model", required=True, help="model archive path")
    classify_p = add("classify", _cmd_classify,
                     "label new data with a saved model", needs_config=False)
    classify_p.add_argument("--model", required=True,
                            help="model archive path")
    classify_p.add_argument("--data", required=True,
                            help="curve CSV or IDX image file")
    classify_p.add_argument("--labels", default=None,
                            help="IDX label file (required for IDX data)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return 3
    except ConditioningError as exc:
        print(f"conditioning error: {exc}", file=sys.stderr)
        return 4
    except SplineFdaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
