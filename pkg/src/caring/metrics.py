"""Reliability measurement: confidence binning, ECE, per-class reports and class partitioning.

Bins are half-open ``[i/k, (i+1)/k)`` with the last bin closed at 1.0. Bin
bounds are always computed as ``i / k`` so every function here (and any
independent re-implementation using the same bounds) agrees on membership
down to the last bit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Collection, Optional, Sequence

import numpy as np

from .core import Dataset, nll, per_sample_temperatures, predict_batch
from .errors import DataError, InvalidParameterError

DEFAULT_BINS = 10
SUBSET_TAGS = ("all", "common", "rare", "custom")


@dataclass(frozen=True)
class BinStats:
    index: int
    lower: float
    upper: float
    count: int
    accuracy: Optional[float] = None
    mean_confidence: Optional[float] = None

    @property
    def gap(self) -> Optional[float]:
        if self.count == 0:
            return None
        return abs(self.accuracy - self.mean_confidence)


@dataclass(frozen=True)
class ReliabilityReport:
    bins: list[BinStats]
    ece: float
    nll: float
    accuracy: float
    total: int
    subset_tag: str = "all"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ReliabilityReport:
        data = dict(data)
        data["bins"] = [BinStats(**b) for b in data["bins"]]
        return cls(**data)


@dataclass(frozen=True)
class ClassReport:
    class_id: int
    class_name: str
    num_samples: int
    recall: Optional[float] = None
    mean_confidence: Optional[float] = None
    delta_acc: Optional[float] = None
    ece: Optional[float] = None


@dataclass(frozen=True)
class ClassManifest:
    """Class names plus training-split frequencies, in class-index order."""

    names: list[str]
    frequencies: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(self.names) != len(self.frequencies):
            raise DataError(f"manifest has {len(self.names)} names but {len(self.frequencies)} frequencies")
        if any(f < 0 for f in self.frequencies):
            raise DataError("class frequencies must be non-negative")

    @property
    def num_classes(self) -> int:
        return len(self.names)


def _bin_bounds(i: int, k: int) -> tuple[float, float]:
    return i / k, (i + 1) / k


def assign_bin(confidence: float, k: int = DEFAULT_BINS) -> int:
    """Index of the bin holding ``confidence``: ``min(floor(confidence * k), k - 1)``."""
    if k < 1:
        raise InvalidParameterError(f"bin count must be >= 1, got {k}")
    if not 0.0 <= confidence <= 1.0:
        raise InvalidParameterError(f"confidence {confidence!r} outside [0, 1]")
    i = min(int(math.floor(confidence * k)), k - 1)
    # floor(c * k) can land one bin off when c * k rounds across an integer
    lower, upper = _bin_bounds(i, k)
    if confidence < lower:
        i -= 1
    elif confidence >= upper and i < k - 1:
        i += 1
    return i


def assign_bins(confidences, k: int = DEFAULT_BINS) -> np.ndarray:
    """Vectorised :func:`assign_bin`."""
    if k < 1:
        raise InvalidParameterError(f"bin count must be >= 1, got {k}")
    c = np.asarray(confidences, dtype=np.float64)
    if np.any(~((c >= 0.0) & (c <= 1.0))):
        raise InvalidParameterError("confidences must lie in [0, 1]")
    idx = np.minimum(np.floor(c * k).astype(np.int64), k - 1)
    lower = idx / k
    upper = (idx + 1) / k
    idx = np.where(c < lower, idx - 1, idx)
    idx = np.where((c >= upper) & (idx < k - 1), idx + 1, idx)
    return idx


def bin_stats(confidences, correct, k: int = DEFAULT_BINS) -> list[BinStats]:
    """Per-bin sample count, accuracy and mean confidence.

    Args:
        confidences: predicted-class confidence per sample.
        correct: boolean per sample, whether the prediction matched the label.
        k: number of equal-width bins over [0, 1].
    """
    c = np.asarray(confidences, dtype=np.float64)
    ok = np.asarray(correct, dtype=bool)
    if c.size == 0:
        raise InvalidParameterError("bin_stats needs at least one prediction")
    if c.shape != ok.shape:
        raise InvalidParameterError("confidences and correct must have the same shape")
    idx = assign_bins(c, k)
    # bincount accumulates in sample order, so sums are reproducible
    counts = np.bincount(idx, minlength=k)
    hits = np.bincount(idx, weights=ok.astype(np.float64), minlength=k)
    conf_sums = np.bincount(idx, weights=c, minlength=k)

    bins = []
    for i in range(k):
        lower, upper = _bin_bounds(i, k)
        n = int(counts[i])
        if n == 0:
            bins.append(BinStats(i, lower, upper, 0))
        else:
            bins.append(BinStats(i, lower, upper, n, float(hits[i] / n), float(conf_sums[i] / n)))
    return bins


def ece(bins: Sequence[BinStats], total: int) -> float:
    """Expected Calibration Error: bin-size-weighted mean of ``|accuracy - mean confidence|``."""
    if total != sum(b.count for b in bins):
        raise InvalidParameterError(f"total {total} does not match bin counts {sum(b.count for b in bins)}")
    if total <= 0:
        raise InvalidParameterError("total must be positive")
    err = 0.0
    for b in bins:
        if b.count:
            err += b.count / total * abs(b.accuracy - b.mean_confidence)
    return err


def reliability_report(
    dataset: Dataset,
    per_sample_t=None,
    k: int = DEFAULT_BINS,
    subset_tag: str = "all",
) -> ReliabilityReport:
    """Bins, ECE, NLL and accuracy of ``softmax(logits / t_i)`` predictions.

    ``per_sample_t=None`` evaluates the raw model.
    """
    if subset_tag not in SUBSET_TAGS:
        raise InvalidParameterError(f"subset_tag must be one of {SUBSET_TAGS}, got {subset_tag!r}")
    t = per_sample_temperatures(dataset, per_sample_t)
    pred, conf = predict_batch(dataset.logits / t[:, None])
    correct = pred == dataset.labels
    bins = bin_stats(conf, correct, k)
    return ReliabilityReport(
        bins=bins,
        ece=ece(bins, len(dataset)),
        nll=nll(dataset, t),
        accuracy=float(np.mean(correct)),
        total=len(dataset),
        subset_tag=subset_tag,
    )


def per_class_report(
    dataset: Dataset,
    per_sample_t=None,
    manifest: ClassManifest | None = None,
    k: int = DEFAULT_BINS,
) -> list[ClassReport]:
    """Table-style breakdown grouped by ground-truth class.

    Classes with no samples get ``num_samples == 0`` and ``None`` metrics.
    """
    m = dataset.num_classes
    if manifest is None:
        names = [f"class_{i}" for i in range(m)]
    else:
        if manifest.num_classes != m:
            raise InvalidParameterError(f"manifest lists {manifest.num_classes} classes, dataset has {m}")
        names = manifest.names
    t = per_sample_temperatures(dataset, per_sample_t)
    pred, conf = predict_batch(dataset.logits / t[:, None])
    correct = pred == dataset.labels

    reports = []
    for cls in range(m):
        mask = dataset.labels == cls
        n = int(mask.sum())
        if n == 0:
            reports.append(ClassReport(cls, names[cls], 0))
            continue
        recall = float(np.mean(correct[mask]))
        mean_conf = float(np.mean(conf[mask]))
        bins = bin_stats(conf[mask], correct[mask], k)
        reports.append(ClassReport(cls, names[cls], n, recall, mean_conf, mean_conf - recall, ece(bins, n)))
    return reports


def partition_classes(manifest: ClassManifest) -> tuple[frozenset[int], frozenset[int]]:
    """Split classes into (common, rare) halves by descending frequency.

    Ties go to the lower class id; with odd ``m`` the extra class is common.
    """
    m = manifest.num_classes
    if m < 2:
        raise InvalidParameterError("need at least 2 classes to partition")
    order = sorted(range(m), key=lambda i: (-manifest.frequencies[i], i))
    n_common = (m + 1) // 2
    return frozenset(order[:n_common]), frozenset(order[n_common:])


def subset_filter(dataset: Dataset, classes: Collection[int]) -> Dataset:
    """Samples whose true label is in ``classes``, in original order."""
    classes = set(classes)
    if not classes:
        raise InvalidParameterError("class set must not be empty")
    mask = np.isin(dataset.labels, sorted(classes))
    if not mask.any():
        raise DataError(f"no samples with labels in {sorted(classes)}")
    return dataset.take(mask)
