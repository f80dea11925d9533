"""Post-hoc calibrators: global temperature scaling and the input-guided CARING network.

Both rescale logits by a temperature before the softmax and therefore never
change the predicted class. Temperature scaling learns one scalar ``tau``;
CARING maps a sample's feature vector ``z`` to its own temperature

    T(z) = 1 + relu(w2 . relu(W1 z + b1) + b2)

which is at least 1 by construction. Both are fitted by minimising the mean
NLL on a held-out validation set with plain (minibatch) gradient descent
using hand-derived gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Dataset, Prediction, _check_logits, log_softmax, predict, softmax
from .errors import InvalidParameterError, NumericFailureError
from .metrics import DEFAULT_BINS, reliability_report

MIN_TAU = 0.05


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings.

    An epoch is one pass over the fitting data in minibatches of
    ``batch_size`` samples, visited in an order drawn from ``seed``;
    ``batch_size=None`` means one full-batch step per epoch.
    """

    learning_rate: float
    epochs: int
    weight_decay: float = 0.0
    seed: int = 0
    hidden_dim: int = 64
    batch_size: Optional[int] = 128
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be > 0")
        if self.epochs < 0:
            raise InvalidParameterError("epochs must be >= 0")
        if self.weight_decay < 0:
            raise InvalidParameterError("weight_decay must be >= 0")
        if self.hidden_dim < 1:
            raise InvalidParameterError("hidden_dim must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidParameterError("batch_size must be >= 1")

    @classmethod
    def temperature(cls, **overrides) -> FitConfig:
        return cls(**{"learning_rate": 0.01, "epochs": 50, **overrides})

    @classmethod
    def caring(cls, **overrides) -> FitConfig:
        return cls(**{"learning_rate": 0.005, "epochs": 300, "weight_decay": 1e-6, "hidden_dim": 64, **overrides})


@dataclass
class FitTrace:
    """Per-epoch diagnostics on the fitting data, recorded after each epoch's updates."""

    nll: list[float] = field(default_factory=list)
    ece: list[float] = field(default_factory=list)
    mean_temperature: list[float] = field(default_factory=list)
    std_temperature: list[float] = field(default_factory=list)

    def record(self, dataset: Dataset, temps: np.ndarray, bins: int = DEFAULT_BINS):
        report = reliability_report(dataset, temps, bins)
        self.nll.append(report.nll)
        self.ece.append(report.ece)
        self.mean_temperature.append(float(np.mean(temps)))
        # np.std of a constant vector can come out as ~1e-16
        self.std_temperature.append(float(np.std(temps)) if np.ptp(temps) > 0 else 0.0)

    def rows(self):
        for i in range(len(self)):
            yield i + 1, self.nll[i], self.ece[i], self.mean_temperature[i], self.std_temperature[i]

    def __len__(self):
        return len(self.nll)


@dataclass(frozen=True)
class TemperatureScaler:
    tau: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise InvalidParameterError(f"tau must be finite and > 0, got {self.tau}")

    def temperature(self, z=None) -> float:
        return self.tau

    def temperatures(self, dataset: Dataset) -> np.ndarray:
        return np.full(len(dataset), self.tau)

    def calibrated(self, logits) -> Prediction:
        return predict(np.asarray(logits, dtype=np.float64) / self.tau)


@dataclass(frozen=True, eq=False)
class CaringCalibrator:
    """Two-layer network producing a per-sample temperature ``T(z) >= 1``."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def __post_init__(self):
        w1 = np.array(self.w1, dtype=np.float64)
        b1 = np.array(self.b1, dtype=np.float64)
        w2 = np.array(self.w2, dtype=np.float64)
        b2 = float(self.b2)
        if w1.ndim != 2:
            raise InvalidParameterError(f"w1 must be (hidden, features), got shape {w1.shape}")
        h = w1.shape[0]
        if b1.shape != (h,) or w2.shape != (h,):
            raise InvalidParameterError(f"b1 and w2 must have shape ({h},), got {b1.shape} and {w2.shape}")
        if not all(np.all(np.isfinite(p)) for p in (w1, b1, w2)) or not np.isfinite(b2):
            raise InvalidParameterError("calibrator parameters must be finite")
        for arr in (w1, b1, w2):
            arr.setflags(write=False)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)

    @classmethod
    def identity(cls, feature_dim: int, hidden_dim: int = 64) -> CaringCalibrator:
        """All-zero parameters, so ``T(z) == 1`` everywhere."""
        return cls(np.zeros((hidden_dim, feature_dim)), np.zeros(hidden_dim), np.zeros(hidden_dim), 0.0)

    @classmethod
    def initialize(cls, feature_dim: int, hidden_dim: int = 64, seed: int = 0) -> CaringCalibrator:
        """Uniform ``+-1/sqrt(fan_in)`` weights and zero biases."""
        return cls._init_from(np.random.default_rng(seed), feature_dim, hidden_dim)

    @classmethod
    def _init_from(cls, rng: np.random.Generator, feature_dim: int, hidden_dim: int) -> CaringCalibrator:
        lim1 = 1.0 / np.sqrt(feature_dim) if feature_dim else 0.0
        lim2 = 1.0 / np.sqrt(hidden_dim)
        w1 = rng.uniform(-lim1, lim1, size=(hidden_dim, feature_dim))
        w2 = rng.uniform(-lim2, lim2, size=hidden_dim)
        return cls(w1, np.zeros(hidden_dim), w2, 0.0)

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[1]

    def params(self) -> dict[str, np.ndarray | float]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def _forward(self, z: np.ndarray):
        return _forward(self.w1, self.b1, self.w2, self.b2, z)

    def _check_features(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1:] != (self.feature_dim,):
            raise InvalidParameterError(f"feature vector length {z.shape[-1] if z.ndim else 0} != {self.feature_dim}")
        return z

    def temperature(self, z) -> float:
        z = self._check_features(z)
        if z.ndim != 1:
            raise InvalidParameterError("temperature takes one feature vector; use temperatures for batches")
        return float(self._forward(z)[3])

    def temperatures(self, data) -> np.ndarray:
        """``T(z)`` for every row of a Dataset or an ``(n, d)`` feature array."""
        features = data.features if isinstance(data, Dataset) else data
        z = self._check_features(features)
        return self._forward(np.atleast_2d(z))[3]

    def calibrated(self, logits, z) -> Prediction:
        return caring_confidence(self, logits, z)


def caring_temperature(calibrator: CaringCalibrator, z) -> float:
    return calibrator.temperature(z)


def caring_confidence(calibrator: CaringCalibrator, logits, z) -> Prediction:
    """Prediction from ``softmax(logits / T(z))``; the label matches the raw argmax."""
    logits = _check_logits(logits)
    t = calibrator.temperature(z)
    probs = softmax(logits / t)
    label = int(np.argmax(logits))
    return Prediction(label, float(probs[label]), probs)


def _forward(w1, b1, w2, b2, z):
    pre1 = z @ w1.T + b1
    hidden = np.maximum(pre1, 0.0)
    pre2 = hidden @ w2 + b2
    return pre1, hidden, pre2, 1.0 + np.maximum(pre2, 0.0)


def _nll_and_dT(logits: np.ndarray, labels: np.ndarray, temps: np.ndarray):
    """Per-sample NLL of ``softmax(y / T)`` and its derivative with respect to ``T``.

    d NLL / d T = (y_true - sum_j p_j y_j) / T**2
    """
    scaled = logits / temps[:, None]
    logp = log_softmax(scaled)
    rows = np.arange(logits.shape[0])
    losses = -logp[rows, labels]
    expected = np.sum(np.exp(logp) * logits, axis=1)
    d_t = (logits[rows, labels] - expected) / temps**2
    return losses, d_t


def temp_nll_and_grad(dataset: Dataset, tau: float) -> tuple[float, float]:
    """Mean NLL at temperature ``tau`` and its derivative with respect to ``tau``."""
    if not (np.isfinite(tau) and tau > 0):
        raise InvalidParameterError(f"tau must be finite and > 0, got {tau}")
    losses, d_t = _nll_and_dT(dataset.logits, dataset.labels, np.full(len(dataset), float(tau)))
    return float(np.mean(losses)), float(np.mean(d_t))


def _batches(n: int, batch_size: Optional[int], rng: np.random.Generator):
    if batch_size is None or batch_size >= n:
        yield slice(None)
        return
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def fit_temperature(dataset: Dataset, config: FitConfig | None = None) -> tuple[TemperatureScaler, FitTrace]:
    """Fit a global temperature by gradient descent on the validation NLL.

    Starts from ``tau = 1`` and clamps ``tau >= 0.05`` after every step.
    """
    config = config or FitConfig.temperature()
    rng = np.random.default_rng(config.seed)
    tau = 1.0
    trace = FitTrace()
    logits, labels = dataset.logits, dataset.labels
    for epoch in range(1, config.epochs + 1):
        for idx in _batches(len(dataset), config.batch_size, rng):
            y, lab = logits[idx], labels[idx]
            # overflow surfaces as a non-finite gradient, reported below
            with np.errstate(over="ignore", invalid="ignore"):
                losses, d_t = _nll_and_dT(y, lab, np.full(y.shape[0], tau))
            grad = float(np.mean(d_t))
            if not (np.isfinite(grad) and np.all(np.isfinite(losses))):
                raise NumericFailureError(f"epoch {epoch}: non-finite loss or gradient at tau={tau!r}", epoch)
            tau = max(tau - config.learning_rate * grad, MIN_TAU)
        trace.record(dataset, np.full(len(dataset), tau), config.bins)
    return TemperatureScaler(tau), trace


def _loss_and_grads(w1, b1, w2, b2, logits, labels, features, weight_decay: float):
    pre1, hidden, pre2, temps = _forward(w1, b1, w2, b2, features)
    losses, d_t = _nll_and_dT(logits, labels, temps)
    n = logits.shape[0]
    loss = float(np.mean(losses)) + weight_decay * (float(np.sum(w1**2)) + float(np.sum(w2**2)))
    # relu'(0) = 0 in both layers
    d_pre2 = d_t * (pre2 > 0) / n
    d_pre1 = np.outer(d_pre2, w2) * (pre1 > 0)
    grads = {
        "w1": d_pre1.T @ features + 2.0 * weight_decay * w1,
        "b1": d_pre1.sum(axis=0),
        "w2": hidden.T @ d_pre2 + 2.0 * weight_decay * w2,
        "b2": float(d_pre2.sum()),
    }
    return loss, grads


def caring_loss_and_grads(calibrator: CaringCalibrator, dataset: Dataset, weight_decay: float = 0.0):
    """Regularised mean NLL ``mean NLL + weight_decay * (|w1|^2 + |w2|^2)`` and its gradients.

    Returns ``(loss, grads)`` with ``grads`` keyed like :meth:`CaringCalibrator.params`.
    Biases are not decayed.
    """
    if weight_decay < 0:
        raise InvalidParameterError("weight_decay must be >= 0")
    if dataset.feature_dim != calibrator.feature_dim:
        raise InvalidParameterError(f"dataset feature_dim {dataset.feature_dim} != calibrator feature_dim {calibrator.feature_dim}")
    c = calibrator
    loss, grads = _loss_and_grads(c.w1, c.b1, c.w2, c.b2, dataset.logits, dataset.labels, dataset.features, weight_decay)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise NumericFailureError("non-finite loss or gradient in CARING network")
    return loss, grads


def fit_caring(dataset: Dataset, config: FitConfig | None = None) -> tuple[CaringCalibrator, FitTrace]:
    """Train a CARING temperature network on validation data.

    The trace records, per epoch, NLL, ECE and the mean / standard deviation of
    ``T(z)`` over the fitting data.
    """
    config = config or FitConfig.caring()
    rng = np.random.default_rng(config.seed)
    cal = CaringCalibrator._init_from(rng, dataset.feature_dim, config.hidden_dim)
    w1, b1, w2, b2 = (np.array(cal.w1), np.array(cal.b1), np.array(cal.w2), cal.b2)
    trace = FitTrace()
    lr, wd = config.learning_rate, config.weight_decay
    for epoch in range(1, config.epochs + 1):
        for idx in _batches(len(dataset), config.batch_size, rng):
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = _loss_and_grads(
                    w1, b1, w2, b2, dataset.logits[idx], dataset.labels[idx], dataset.features[idx], wd
                )
            if not np.isfinite(loss):
                raise NumericFailureError(f"epoch {epoch}: non-finite loss", epoch)
            w1 = w1 - lr * grads["w1"]
            b1 = b1 - lr * grads["b1"]
            w2 = w2 - lr * grads["w2"]
            b2 = b2 - lr * grads["b2"]
            if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(w2)) and np.isfinite(b2)):
                raise NumericFailureError(f"epoch {epoch}: parameters became non-finite", epoch)
        trace.record(dataset, _forward(w1, b1, w2, b2, dataset.features)[3], config.bins)
    return CaringCalibrator(w1, b1, w2, b2), trace
