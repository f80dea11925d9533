"""Command-line entry point: ``caring <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data / numeric / file error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io
from .calibrators import FitConfig, fit_caring, fit_temperature
from .errors import CalibrationError, InvalidParameterError
from .metrics import DEFAULT_BINS, ClassManifest, partition_classes, per_class_report, reliability_report, subset_filter
from .synth import SynthSpec, gen_global, gen_grouped

log = logging.getLogger("caring")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


def _checked(factory, *args, **kwargs):
    """Build a config object, reporting invalid flag values as usage errors."""
    try:
        return factory(*args, **kwargs)
    except InvalidParameterError as exc:
        raise UsageError(str(exc)) from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(args):
    dataset, manifest = io.read_predictions(args.predictions, getattr(args, "manifest", None))
    calibrator = io.load_calibrator(args.calibrator) if getattr(args, "calibrator", None) else None
    if calibrator is not None and hasattr(calibrator, "feature_dim") and calibrator.feature_dim != dataset.feature_dim:
        raise CalibrationError(
            f"calibrator expects {calibrator.feature_dim} features, predictions have {dataset.feature_dim}"
        )
    return dataset, manifest, calibrator


def _temps(calibrator, dataset):
    return None if calibrator is None else calibrator.temperatures(dataset)


def cmd_evaluate(args) -> int:
    if args.subset in ("common", "rare") and not args.manifest:
        raise UsageError(f"--subset {args.subset} requires --manifest")
    dataset, manifest, calibrator = _load(args)
    if args.subset != "all":
        common, rare = partition_classes(manifest)
        dataset = subset_filter(dataset, common if args.subset == "common" else rare)
    temps = _temps(calibrator, dataset)
    report = reliability_report(dataset, temps, args.bins, args.subset)
    print(f"subset={args.subset} n={report.total} accuracy={report.accuracy:.4f} ece={report.ece:.4f} nll={report.nll:.4f}")
    if args.out_json:
        io.write_report(report, args.out_json, "json")
    if args.out_csv:
        io.write_report(report, args.out_csv, "csv")
    if args.classes_csv or args.classes_table:
        classes = per_class_report(dataset, temps, manifest, args.bins)
        if args.classes_csv:
            io.write_report(classes, args.classes_csv, "csv")
        if args.classes_table:
            name = "calibrated" if calibrator is not None else "raw"
            present = [c.class_id for c in classes if c.num_samples > 0]
            Path(args.classes_table).write_text(io.format_class_table([(name, classes)], present))
    return EXIT_OK


def _fit(args, fit_fn, config) -> int:
    dataset, _ = io.read_predictions(args.predictions)
    calibrator, trace = fit_fn(dataset, config)
    io.save_calibrator(calibrator, args.out)
    if args.trace:
        io.write_trace(trace, args.trace)
    if trace:
        log.info("final nll=%.4f ece=%.4f mean_T=%.4f", trace.nll[-1], trace.ece[-1], trace.mean_temperature[-1])
    return EXIT_OK


def cmd_fit_temp(args) -> int:
    config = _checked(
        FitConfig.temperature,
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        batch_size=args.batch_size or None,
    )
    return _fit(args, fit_temperature, config)


def cmd_fit_caring(args) -> int:
    config = _checked(
        FitConfig.caring,
        learning_rate=args.lr,
        epochs=args.epochs,
        weight_decay=args.weight_decay,
        hidden_dim=args.hidden,
        seed=args.seed,
        batch_size=args.batch_size or None,
    )
    return _fit(args, fit_caring, config)


def cmd_apply(args) -> int:
    dataset, _, calibrator = _load(args)
    io.write_calibrated_predictions(dataset, calibrator, args.out)
    return EXIT_OK


def cmd_diagram(args) -> int:
    if not (args.out_svg or args.out_csv or args.histogram):
        raise UsageError("diagram needs at least one of --out-svg, --out-csv, --histogram")
    dataset, _, calibrator = _load(args)
    temps = _temps(calibrator, dataset)
    report = reliability_report(dataset, temps, args.bins)
    if args.out_svg:
        io.write_reliability_diagram(report, args.out_svg)
    if args.out_csv:
        io.write_report(report, args.out_csv, "csv")
    if args.histogram:
        io.write_confidence_histogram(dataset, temps, args.histogram, args.bins)
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.mode == "global":
        if args.groups:
            raise UsageError("--groups is only valid with --mode grouped")
        spec = _checked(SynthSpec, args.n, args.m, args.c, args.feature_dim, args.noise, args.seed)
        dataset = gen_global(spec)
    else:
        if not args.groups:
            raise UsageError("--mode grouped requires --groups")
        spec = _checked(SynthSpec, args.n, args.m, args.groups, args.feature_dim, args.noise, args.seed)
        dataset = gen_grouped(spec)
    manifest = None
    if args.with_manifest:
        counts = [int((dataset.labels == c).sum()) for c in range(dataset.num_classes)]
        manifest = ClassManifest([f"class_{c:02d}" for c in range(dataset.num_classes)], counts)
    io.write_predictions(dataset, args.out, manifest)
    return EXIT_OK


def _group_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("need at least one group factor")
    return values


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="caring", description="Confidence calibration: evaluation, temperature scaling and CARING.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("evaluate", help="reliability report (ECE, NLL, accuracy) for a prediction file")
    p.add_argument("predictions")
    p.add_argument("--calibrator")
    p.add_argument("--bins", type=_positive_int, default=DEFAULT_BINS)
    p.add_argument("--subset", choices=("all", "common", "rare"), default="all")
    p.add_argument("--manifest")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.add_argument("--classes-csv")
    p.add_argument("--classes-table")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fit-temp", help="fit global temperature scaling on a validation file")
    p.add_argument("predictions")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=128, help="0 for full-batch steps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_fit_temp)

    p = sub.add_parser("fit-caring", help="fit the CARING temperature network on a validation file")
    p.add_argument("predictions")
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--weight-decay", type=float, default=1e-6)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--batch-size", type=int, default=128, help="0 for full-batch steps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_fit_caring)

    p = sub.add_parser("apply", help="write calibrated predictions")
    p.add_argument("predictions")
    p.add_argument("--calibrator", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("diagram", help="reliability diagram / confidence histogram as SVG")
    p.add_argument("predictions")
    p.add_argument("--calibrator")
    p.add_argument("--bins", type=_positive_int, default=DEFAULT_BINS)
    p.add_argument("--out-svg")
    p.add_argument("--out-csv")
    p.add_argument("--histogram")
    p.set_defaults(func=cmd_diagram)

    p = sub.add_parser("synth", help="generate a synthetic miscalibrated prediction file")
    p.add_argument("--mode", choices=("global", "grouped"), default="global")
    p.add_argument("--n", type=_positive_int, default=10000)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--c", type=float, default=1.0, help="global overconfidence factor")
    p.add_argument("--groups", type=_group_list, help="comma-separated per-group factors, e.g. 1.5,4.0")
    p.add_argument("--feature-dim", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--with-manifest", action="store_true", help="also write a sidecar class manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"caring {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CalibrationError, OSError) as exc:
        print(f"caring {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
