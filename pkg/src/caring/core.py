"""Prediction records and the numerically careful softmax / NLL primitives.

Everything here works in float64. Single-sample functions accept 1-D vectors;
the batched variants operate row-wise on ``(n, m)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError, InvalidParameterError


@dataclass(frozen=True, eq=False)
class Sample:
    """One exported prediction: logit vector, feature vector ``z`` and ground-truth label."""

    id: str
    logits: np.ndarray
    features: np.ndarray
    true_label: int

    def __post_init__(self):
        logits = _as_vector(self.logits, "logits")
        features = _as_vector(self.features, "features", allow_empty=True)
        if not 0 <= int(self.true_label) < logits.shape[0]:
            raise DataError(f"sample {self.id!r}: label {self.true_label} out of range for {logits.shape[0]} classes")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "true_label", int(self.true_label))

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.id == other.id
            and self.true_label == other.true_label
            and np.array_equal(self.logits, other.logits)
            and np.array_equal(self.features, other.features)
        )


class Dataset:
    """An ordered collection of samples sharing class count ``m`` and feature dimension ``d``.

    Stored column-wise as read-only arrays so that metrics and fitters can work
    on whole batches; iterate or index to get :class:`Sample` objects back.
    """

    def __init__(self, logits, features, labels, ids: Sequence[str] | None = None):
        logits = np.array(logits, dtype=np.float64)
        labels_arr = np.asarray(labels)
        if logits.ndim != 2:
            raise DataError(f"logits must be a 2-D array, got shape {logits.shape}")
        n, m = logits.shape
        if n < 1:
            raise DataError("dataset must contain at least one sample")
        if m < 2:
            raise DataError(f"need at least 2 classes, got {m}")
        features = np.array(features, dtype=np.float64)
        if features.ndim == 1 and features.size == 0:
            features = features.reshape(n, 0)
        if features.ndim != 2 or features.shape[0] != n:
            raise DataError(f"features must have shape ({n}, d), got {features.shape}")
        if labels_arr.shape != (n,):
            raise DataError(f"labels must have shape ({n},), got {labels_arr.shape}")
        if labels_arr.size and not np.issubdtype(labels_arr.dtype, np.integer):
            if not np.all(labels_arr == np.round(labels_arr)):
                raise DataError("labels must be integers")
        labels_arr = labels_arr.astype(np.int64)
        if np.any(labels_arr < 0) or np.any(labels_arr >= m):
            raise DataError(f"labels must lie in [0, {m})")
        if not np.all(np.isfinite(logits)):
            raise DataError("logits contain non-finite values")
        if not np.all(np.isfinite(features)):
            raise DataError("features contain non-finite values")
        if ids is None:
            ids = [str(i) for i in range(n)]
        ids = tuple(str(i) for i in ids)
        if len(ids) != n:
            raise DataError(f"got {len(ids)} ids for {n} samples")

        for arr in (logits, features, labels_arr):
            arr.setflags(write=False)
        self.logits = logits
        self.features = features
        self.labels = labels_arr
        self.ids = ids

    @classmethod
    def from_samples(cls, samples: Iterable[Sample]) -> Dataset:
        samples = list(samples)
        if not samples:
            raise DataError("dataset must contain at least one sample")
        m, d = samples[0].logits.shape[0], samples[0].features.shape[0]
        for s in samples:
            if s.logits.shape[0] != m or s.features.shape[0] != d:
                raise DataError(f"sample {s.id!r} has shape ({s.logits.shape[0]}, {s.features.shape[0]}), expected ({m}, {d})")
        return cls(
            np.stack([s.logits for s in samples]),
            np.stack([s.features for s in samples]),
            [s.true_label for s in samples],
            [s.id for s in samples],
        )

    @property
    def num_classes(self) -> int:
        return self.logits.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def samples(self) -> list[Sample]:
        return list(self)

    def __len__(self) -> int:
        return self.logits.shape[0]

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.ids[i], self.logits[i], self.features[i], int(self.labels[i]))

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]

    def take(self, index) -> Dataset:
        """Sub-dataset for an integer index array or boolean mask, order preserved."""
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return Dataset(self.logits[index], self.features[index], self.labels[index], [self.ids[i] for i in index])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.ids == other.ids
            and np.array_equal(self.labels, other.labels)
            and self.logits.shape == other.logits.shape
            and self.features.shape == other.features.shape
            and np.array_equal(self.logits, other.logits)
            and np.array_equal(self.features, other.features)
        )

    def __repr__(self):
        return f"Dataset(n={len(self)}, m={self.num_classes}, d={self.feature_dim})"


@dataclass(frozen=True, eq=False)
class Prediction:
    pred_label: int
    confidence: float
    probs: np.ndarray


def _as_vector(values, name: str, allow_empty: bool = False) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DataError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise DataError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contain non-finite values")
    arr.setflags(write=False)
    return arr


def _check_logits(logits) -> np.ndarray:
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim not in (1, 2):
        raise DataError(f"logits must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[-1] < 2:
        raise DataError(f"need at least 2 logits, got {arr.shape[-1]}")
    if not np.all(np.isfinite(arr)):
        raise DataError("logits contain non-finite values")
    return arr


def log_softmax(logits) -> np.ndarray:
    """Log-probabilities along the last axis via the log-sum-exp trick."""
    arr = _check_logits(logits)
    shifted = arr - arr.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits) -> np.ndarray:
    """Softmax along the last axis, with max-subtraction so large logits cannot overflow."""
    arr = _check_logits(logits)
    e = np.exp(arr - arr.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def predict(logits) -> Prediction:
    """Max-softmax prediction for one logit vector; ties go to the lowest class index."""
    arr = _check_logits(logits)
    if arr.ndim != 1:
        raise DataError("predict takes a single logit vector; use predict_batch for arrays")
    probs = softmax(arr)
    label = int(np.argmax(arr))
    return Prediction(label, float(probs[label]), probs)


def predict_batch(logits) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``(pred_labels, confidences)`` for an ``(n, m)`` logit array."""
    arr = _check_logits(logits)
    arr = np.atleast_2d(arr)
    labels = np.argmax(arr, axis=1)
    probs = softmax(arr)
    return labels, probs[np.arange(arr.shape[0]), labels]


def _check_temperature(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        raise InvalidParameterError("temperature must be finite and > 0")
    return t


def scale_logits(logits, t) -> np.ndarray:
    """Divide logits by a positive temperature.

    ``t`` is a scalar, or for 2-D ``logits`` may be a length-``n`` vector of
    per-row temperatures.
    """
    arr = _check_logits(logits)
    t = _check_temperature(t)
    if t.ndim == 1 and arr.ndim == 2:
        if t.shape[0] != arr.shape[0]:
            raise InvalidParameterError(f"got {t.shape[0]} temperatures for {arr.shape[0]} rows")
        t = t[:, None]
    elif t.ndim != 0:
        raise InvalidParameterError("temperature must be a scalar for a single logit vector")
    return arr / t


def per_sample_temperatures(dataset: Dataset, per_sample_t=None) -> np.ndarray:
    """Validate (or default to all-ones) a temperature vector aligned with ``dataset``."""
    if per_sample_t is None:
        return np.ones(len(dataset))
    t = np.asarray(per_sample_t, dtype=np.float64)
    if t.ndim == 0:
        t = np.full(len(dataset), float(t))
    if t.shape != (len(dataset),):
        raise InvalidParameterError(f"got {t.size} temperatures for {len(dataset)} samples")
    return _check_temperature(t)


def per_sample_nll(dataset: Dataset, per_sample_t=None) -> np.ndarray:
    t = per_sample_temperatures(dataset, per_sample_t)
    logp = log_softmax(dataset.logits / t[:, None])
    return -logp[np.arange(len(dataset)), dataset.labels]


def nll(dataset: Dataset, per_sample_t=None) -> float:
    """Mean negative log-likelihood of the true class under ``softmax(logits / t_i)``.

    Omitting ``per_sample_t`` (or passing all ones) gives the uncalibrated NLL.
    """
    return float(np.mean(per_sample_nll(dataset, per_sample_t)))
