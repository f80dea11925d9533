"""File formats: prediction JSONL, class manifests, calibrator JSON, reports, traces and SVG figures.

Floats are written with ``repr`` (shortest round-trip form) wherever a file
is meant to be read back, so reloading is bit-exact. Human-facing CSV report
columns use fixed four-decimal formatting.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .calibrators import CaringCalibrator, FitTrace, TemperatureScaler
from .core import Dataset, per_sample_temperatures, predict_batch
from .errors import DataError
from .metrics import DEFAULT_BINS, ClassManifest, ClassReport, ReliabilityReport, bin_stats

FORMAT_VERSION = 1

Calibrator = Union[TemperatureScaler, CaringCalibrator]
PathLike = Union[str, Path]

BIN_COLUMNS = ("bin_low", "bin_high", "count", "accuracy", "mean_confidence", "gap")
CLASS_COLUMNS = ("class", "n", "recall", "mean_conf", "delta_acc", "ece")
TRACE_COLUMNS = ("epoch", "nll", "ece", "mean_temperature", "std_temperature")


# -- predictions and manifests ------------------------------------------------


def sidecar_manifest_path(path: PathLike) -> Path:
    """``preds.jsonl`` -> ``preds.manifest.json``."""
    path = Path(path)
    return path.with_suffix(".manifest.json")


def read_manifest(path: PathLike) -> ClassManifest:
    try:
        data = json.loads(Path(path).read_text())
        classes = data["classes"]
        return ClassManifest([str(c["name"]) for c in classes], [int(c["frequency"]) for c in classes])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: invalid class manifest ({exc})") from exc


def write_manifest(manifest: ClassManifest, path: PathLike) -> None:
    classes = [{"name": n, "frequency": int(f)} for n, f in zip(manifest.names, manifest.frequencies)]
    Path(path).write_text(json.dumps({"classes": classes, "format_version": FORMAT_VERSION}, indent=1) + "\n")


def _float_list(values, line_no: int, key: str) -> list[float]:
    if not isinstance(values, list):
        raise DataError(f"line {line_no}: {key!r} must be a list of numbers")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise DataError(f"line {line_no}: {key!r} contains a non-numeric value")
        v = float(v)
        if not math.isfinite(v):
            raise DataError(f"line {line_no}: {key!r} contains a non-finite value")
        out.append(v)
    return out


def read_predictions(path: PathLike, manifest: PathLike | None = None) -> tuple[Dataset, ClassManifest | None]:
    """Load a prediction JSONL file plus its class manifest, if any.

    The manifest comes from ``manifest`` when given, otherwise from the
    sidecar ``<stem>.manifest.json`` next to ``path`` when it exists.
    Dimensions are fixed by the first record; every violation is reported as
    a :class:`DataError` naming the offending line.
    """
    path = Path(path)
    ids, labels, logits, features = [], [], [], []
    m = d = None
    with path.open() as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise DataError(f"line {line_no}: record must be a JSON object")
            for key in ("id", "label", "logits", "features"):
                if key not in rec:
                    raise DataError(f"line {line_no}: missing field {key!r}")
            y = _float_list(rec["logits"], line_no, "logits")
            z = _float_list(rec["features"], line_no, "features")
            label = rec["label"]
            if isinstance(label, bool) or not isinstance(label, int):
                raise DataError(f"line {line_no}: label must be an integer")
            if m is None:
                m, d = len(y), len(z)
                if m < 2:
                    raise DataError(f"line {line_no}: need at least 2 logits, got {m}")
            if len(y) != m:
                raise DataError(f"line {line_no}: logits length {len(y)} ≠ {m}")
            if len(z) != d:
                raise DataError(f"line {line_no}: features length {len(z)} ≠ {d}")
            if not 0 <= label < m:
                raise DataError(f"line {line_no}: label {label} out of range [0, {m})")
            ids.append(str(rec["id"]))
            labels.append(label)
            logits.append(y)
            features.append(z)
    if not ids:
        raise DataError(f"{path}: no records")

    manifest_path = Path(manifest) if manifest is not None else sidecar_manifest_path(path)
    class_manifest = None
    if manifest is not None or manifest_path.exists():
        class_manifest = read_manifest(manifest_path)
        if class_manifest.num_classes != m:
            raise DataError(f"{manifest_path}: manifest lists {class_manifest.num_classes} classes, predictions have {m}")
    feats = np.array(features, dtype=np.float64).reshape(len(ids), d)
    return Dataset(np.array(logits, dtype=np.float64), feats, labels, ids), class_manifest


def _record(dataset: Dataset, i: int) -> dict:
    return {
        "id": dataset.ids[i],
        "label": int(dataset.labels[i]),
        "logits": dataset.logits[i].tolist(),
        "features": dataset.features[i].tolist(),
    }


def write_predictions(dataset: Dataset, path: PathLike, manifest: ClassManifest | None = None) -> None:
    """Write ``dataset`` as JSONL (and ``manifest`` as a sidecar file, when given)."""
    path = Path(path)
    with path.open("w") as fh:
        for i in range(len(dataset)):
            fh.write(json.dumps(_record(dataset, i)) + "\n")
    if manifest is not None:
        write_manifest(manifest, sidecar_manifest_path(path))


def write_calibrated_predictions(dataset: Dataset, calibrator: Calibrator, path: PathLike) -> None:
    """Prediction records augmented with calibrated ``pred``, ``confidence`` and ``temperature``."""
    temps = calibrator.temperatures(dataset)
    pred, conf = predict_batch(dataset.logits / temps[:, None])
    with Path(path).open("w") as fh:
        for i in range(len(dataset)):
            rec = _record(dataset, i)
            rec.update(pred=int(pred[i]), confidence=float(conf[i]), temperature=float(temps[i]))
            fh.write(json.dumps(rec) + "\n")


# -- calibrators ---------------------------------------------------------------


def calibrator_to_dict(calibrator: Calibrator) -> dict:
    if isinstance(calibrator, TemperatureScaler):
        return {"kind": "temperature", "tau": float(calibrator.tau), "format_version": FORMAT_VERSION}
    if isinstance(calibrator, CaringCalibrator):
        return {
            "kind": "caring",
            "w1": calibrator.w1.tolist(),
            "b1": calibrator.b1.tolist(),
            "w2": calibrator.w2.tolist(),
            "b2": float(calibrator.b2),
            "hidden_dim": calibrator.hidden_dim,
            "feature_dim": calibrator.feature_dim,
            "format_version": FORMAT_VERSION,
        }
    raise TypeError(f"cannot serialise {type(calibrator).__name__}")


def calibrator_from_dict(data: dict) -> Calibrator:
    if not isinstance(data, dict):
        raise DataError("calibrator file must contain a JSON object")
    if data.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported calibrator format_version: {data.get('format_version')!r}")
    kind = data.get("kind")
    try:
        if kind == "temperature":
            return TemperatureScaler(float(data["tau"]))
        if kind == "caring":
            h, d = int(data["hidden_dim"]), int(data["feature_dim"])
            w1 = np.array(data["w1"], dtype=np.float64).reshape(h, d)
            cal = CaringCalibrator(w1, data["b1"], data["w2"], data["b2"])
            if cal.hidden_dim != h:
                raise DataError(f"hidden_dim {h} does not match parameter shapes")
            return cal
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid {kind} calibrator ({exc})") from exc
    raise DataError(f"unsupported calibrator kind: {kind!r}")


def save_calibrator(calibrator: Calibrator, path: PathLike) -> None:
    Path(path).write_text(json.dumps(calibrator_to_dict(calibrator)) + "\n")


def load_calibrator(path: PathLike) -> Calibrator:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc.msg})") from exc
    return calibrator_from_dict(data)


# -- reports -------------------------------------------------------------------


def _fmt(value) -> str:
    return "" if value is None else f"{value:.4f}"


def bin_rows(report: ReliabilityReport) -> list[list[str]]:
    return [
        [f"{b.lower:.4f}", f"{b.upper:.4f}", str(b.count), _fmt(b.accuracy), _fmt(b.mean_confidence), _fmt(b.gap)]
        for b in report.bins
    ]


def class_rows(reports: Sequence[ClassReport]) -> list[list[str]]:
    return [
        [r.class_name, str(r.num_samples), _fmt(r.recall), _fmt(r.mean_confidence), _fmt(r.delta_acc), _fmt(r.ece)]
        for r in reports
    ]


def _is_class_reports(report) -> bool:
    return isinstance(report, (list, tuple)) and all(isinstance(r, ClassReport) for r in report)


def write_report(report: ReliabilityReport | Sequence[ClassReport], path: PathLike, fmt: str | None = None) -> None:
    """Write a reliability report (bin table) or per-class reports as ``json`` or ``csv``.

    ``fmt`` defaults to the file suffix.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    per_class = _is_class_reports(report)
    if not per_class and not isinstance(report, ReliabilityReport):
        raise TypeError("expected a ReliabilityReport or a list of ClassReport")
    if fmt == "json":
        payload = {"classes": [vars(r) for r in report]} if per_class else report.to_dict()
        path.write_text(json.dumps(payload, indent=1) + "\n")
    elif fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if per_class:
                writer.writerow(CLASS_COLUMNS)
                writer.writerows(class_rows(report))
            else:
                writer.writerow(BIN_COLUMNS)
                writer.writerows(bin_rows(report))
    else:
        raise ValueError(f"unknown report format {fmt!r}; use json or csv")


def read_report(path: PathLike) -> ReliabilityReport | list[ClassReport]:
    """Reload a JSON report written by :func:`write_report`."""
    data = json.loads(Path(path).read_text())
    if "classes" in data:
        return [ClassReport(**r) for r in data["classes"]]
    return ReliabilityReport.from_dict(data)


def write_trace(trace: FitTrace, path: PathLike) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for epoch, *values in trace.rows():
            writer.writerow([epoch, *(repr(float(v)) for v in values)])


def read_trace(path: PathLike) -> FitTrace:
    trace = FitTrace()
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            trace.nll.append(float(row["nll"]))
            trace.ece.append(float(row["ece"]))
            trace.mean_temperature.append(float(row["mean_temperature"]))
            trace.std_temperature.append(float(row["std_temperature"]))
    return trace


def _pct(value) -> str:
    return "-" if value is None else f"{100 * value:.2f}"


def format_summary_table(rows: Sequence[tuple[str, ReliabilityReport, ReliabilityReport]], title: str = "") -> str:
    """Model-comparison table: ECE (%) and NLL on validation and test splits.

    ``rows`` holds ``(model_name, val_report, test_report)`` tuples.
    """
    width = max([len("Model"), *(len(r[0]) for r in rows)])
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'Model':<{width}} | {'ECE val':>8} {'ECE test':>8} | {'NLL val':>8} {'NLL test':>8}")
    lines.append("-" * len(lines[-1]))
    for name, val, test in rows:
        lines.append(f"{name:<{width}} | {_pct(val.ece):>8} {_pct(test.ece):>8} | {val.nll:>8.2f} {test.nll:>8.2f}")
    return "\n".join(lines) + "\n"


def format_class_table(
    columns: Sequence[tuple[str, Sequence[ClassReport]]],
    class_ids: Sequence[int] | None = None,
) -> str:
    """Per-class table: samples, recall and, per model, mean confidence, delta-acc and ECE (all %).

    ``columns`` holds ``(model_name, class_reports)`` pairs over the same classes.
    """
    base = columns[0][1]
    class_ids = list(range(len(base))) if class_ids is None else list(class_ids)
    width = max([len("Class"), *(len(base[c].class_name) for c in class_ids)])
    head = f"{'Class':<{width}} | {'N':>6} {'Recall':>7}"
    for name, _ in columns:
        head += f" | {name + ' Conf':>14} {'dAcc':>7} {'ECE':>7}"
    lines = [head, "-" * len(head)]
    for c in class_ids:
        r0 = base[c]
        line = f"{r0.class_name:<{width}} | {r0.num_samples:>6} {_pct(r0.recall):>7}"
        for _, reports in columns:
            r = reports[c]
            line += f" | {_pct(r.mean_confidence):>14} {_pct(r.delta_acc):>7} {_pct(r.ece):>7}"
        lines.append(line)
    return "\n".join(lines) + "\n"


# -- SVG figures -------------------------------------------------------------

_W, _H, _PAD = 360, 360, 48
_PLOT = _W - 2 * _PAD


def _x(v: float) -> float:
    return _PAD + v * _PLOT


def _y(v: float) -> float:
    return _H - _PAD - v * _PLOT


def _svg(body: list[str], title: str) -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f"<title>{title}</title>",
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _axes(xlabel: str, ylabel: str, y_max_label: str = "1.0") -> list[str]:
    out = [
        f'<line x1="{_x(0):.2f}" y1="{_y(0):.2f}" x2="{_x(1):.2f}" y2="{_y(0):.2f}" stroke="black"/>',
        f'<line x1="{_x(0):.2f}" y1="{_y(0):.2f}" x2="{_x(0):.2f}" y2="{_y(1):.2f}" stroke="black"/>',
    ]
    for i in range(6):
        v = i / 5
        out.append(f'<text x="{_x(v):.2f}" y="{_y(0) + 14:.2f}" text-anchor="middle">{v:.1f}</text>')
    out.append(f'<text x="{_x(0) - 6:.2f}" y="{_y(0) + 4:.2f}" text-anchor="end">0</text>')
    out.append(f'<text x="{_x(0) - 6:.2f}" y="{_y(1) + 4:.2f}" text-anchor="end">{y_max_label}</text>')
    out.append(f'<text x="{_x(0.5):.2f}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>')
    out.append(
        f'<text x="14" y="{_y(0.5):.2f}" text-anchor="middle" transform="rotate(-90 14 {_y(0.5):.2f})">{ylabel}</text>'
    )
    return out


def reliability_diagram_svg(report: ReliabilityReport, title: str = "Reliability diagram") -> str:
    """Accuracy-per-confidence-bin bars with the identity diagonal and the ECE in the corner."""
    body = []
    for b in report.bins:
        if b.count == 0:
            continue
        x0, x1, top = _x(b.lower), _x(b.upper), _y(b.accuracy)
        body.append(
            f'<rect class="bar" data-bin="{b.index}" data-count="{b.count}" data-accuracy="{b.accuracy:.4f}" '
            f'data-confidence="{b.mean_confidence:.4f}" x="{x0:.2f}" y="{top:.2f}" width="{x1 - x0:.2f}" '
            f'height="{_y(0) - top:.2f}" fill="#3b6ea8" stroke="#1f3d5c"/>'
        )
    body.append(
        f'<line class="diagonal" x1="{_x(0):.2f}" y1="{_y(0):.2f}" x2="{_x(1):.2f}" y2="{_y(1):.2f}" '
        'stroke="#c0392b" stroke-dasharray="4 3"/>'
    )
    body += _axes("Confidence", "Accuracy")
    body.append(f'<text class="ece" x="{_x(0) + 6:.2f}" y="{_y(1) + 14:.2f}">ECE = {report.ece:.4f}</text>')
    return _svg(body, title)


def confidence_histogram_svg(counts: Sequence[int], title: str = "Confidence histogram") -> str:
    """Bar per confidence bin with height proportional to its sample count."""
    k = len(counts)
    peak = max(counts) if counts else 0
    body = []
    for i, n in enumerate(counts):
        if n == 0:
            continue
        lower, upper = i / k, (i + 1) / k
        top = _y(n / peak)
        body.append(
            f'<rect class="bar" data-bin="{i}" data-count="{n}" x="{_x(lower):.2f}" y="{top:.2f}" '
            f'width="{_x(upper) - _x(lower):.2f}" height="{_y(0) - top:.2f}" fill="#5b8c5a" stroke="#2f4f2e"/>'
        )
    body += _axes("Confidence", "Samples", str(peak))
    return _svg(body, title)


def write_reliability_diagram(report: ReliabilityReport, path: PathLike, title: str = "Reliability diagram") -> None:
    Path(path).write_text(reliability_diagram_svg(report, title))


def histogram_counts(dataset: Dataset, per_sample_t=None, k: int = DEFAULT_BINS) -> list[int]:
    t = per_sample_temperatures(dataset, per_sample_t)
    pred, conf = predict_batch(dataset.logits / t[:, None])
    return [b.count for b in bin_stats(conf, pred == dataset.labels, k)]


def write_confidence_histogram(
    dataset: Dataset, per_sample_t, path: PathLike, k: int = DEFAULT_BINS, title: str = "Confidence histogram"
) -> None:
    Path(path).write_text(confidence_histogram_svg(histogram_counts(dataset, per_sample_t, k), title))
