"""Synthetic miscalibrated datasets with known ground-truth temperatures.

Base logits ``b ~ N(0, I_m)`` are drawn per sample and the label is sampled
from ``softmax(b)``, so ``softmax(b)`` is perfectly calibrated. The emitted
logits are ``c * b``; dividing them by ``c`` recovers the calibrated model.
In grouped mode every group has its own ``c`` and the group is visible in the
features as a (noisy) one-hot code.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .core import Dataset, softmax
from .errors import InvalidParameterError


@dataclass(frozen=True)
class SynthSpec:
    n: int
    m: int = 10
    overconfidence: Union[float, Sequence[float]] = 1.0
    feature_dim: int = 8
    feature_noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameterError("n must be >= 1")
        if self.m < 2:
            raise InvalidParameterError("m must be >= 2")
        if self.feature_noise < 0:
            raise InvalidParameterError("feature_noise must be >= 0")
        if any(c <= 0 for c in self.factors):
            raise InvalidParameterError("overconfidence factors must be > 0")
        if self.feature_dim < self.group_count:
            raise InvalidParameterError(f"feature_dim {self.feature_dim} < group count {self.group_count}")

    @property
    def factors(self) -> tuple[float, ...]:
        if np.ndim(self.overconfidence) == 0:
            return (float(self.overconfidence),)
        return tuple(float(c) for c in self.overconfidence)

    @property
    def group_count(self) -> int:
        return len(self.factors)


def _base_draw(spec: SynthSpec, rng: np.random.Generator):
    base = rng.standard_normal((spec.n, spec.m))
    u = rng.random(spec.n)
    cdf = np.cumsum(softmax(base), axis=1)
    labels = np.minimum((cdf <= u[:, None]).sum(axis=1), spec.m - 1)
    return base, labels


def _ids(n: int) -> list[str]:
    return [f"synth-{i:06d}" for i in range(n)]


def gen_global(spec: SynthSpec) -> Dataset:
    """One overconfidence factor for all samples; features are pure noise."""
    if spec.group_count != 1:
        raise InvalidParameterError("gen_global needs a single overconfidence factor")
    rng = np.random.default_rng(spec.seed)
    base, labels = _base_draw(spec, rng)
    features = spec.feature_noise * rng.standard_normal((spec.n, spec.feature_dim))
    return Dataset(spec.factors[0] * base, features, labels, _ids(spec.n))


def gen_grouped(spec: SynthSpec) -> Dataset:
    """Per-group overconfidence; features are ``one_hot(group) + noise``.

    Logits and labels match :func:`gen_global` for the same seed when there is
    a single group.
    """
    rng = np.random.default_rng(spec.seed)
    base, labels = _base_draw(spec, rng)
    groups = rng.integers(0, spec.group_count, size=spec.n)
    factors = np.asarray(spec.factors)
    features = spec.feature_noise * rng.standard_normal((spec.n, spec.feature_dim))
    features[np.arange(spec.n), groups] += 1.0
    return Dataset(factors[groups][:, None] * base, features, labels, _ids(spec.n))


def group_of(dataset: Dataset, group_count: int) -> np.ndarray:
    """Recover each sample's group from grouped-mode features (largest of the first ``group_count`` coordinates)."""
    return np.argmax(dataset.features[:, :group_count], axis=1)
