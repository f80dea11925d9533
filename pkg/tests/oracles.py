"""Independent reference implementations used to check the package.

Nothing here imports the code paths it is used to verify.
"""

import math

import numpy as np

from caring.core import Dataset


def brute_force_ece(confidences, correct, k):
    """ECE by scanning every bin for every sample; bins [i/k, (i+1)/k), last one closed."""
    counts = [0] * k
    hits = [0.0] * k
    conf_sums = [0.0] * k
    for c, ok in zip(confidences, correct):
        c = float(c)
        found = None
        for i in range(k):
            lower, upper = i / k, (i + 1) / k
            if lower <= c < upper or (i == k - 1 and lower <= c <= upper):
                found = i
                break
        assert found is not None, c
        counts[found] += 1
        hits[found] += 1.0 if ok else 0.0
        conf_sums[found] += c
    total = len(confidences)
    err = 0.0
    for i in range(k):
        if counts[i]:
            err += counts[i] / total * abs(hits[i] / counts[i] - conf_sums[i] / counts[i])
    return err


def naive_softmax(v):
    ex = [math.exp(x) for x in v]
    s = sum(ex)
    return [x / s for x in ex]


def naive_nll(dataset: Dataset, temps=None):
    """Mean -log p(true) without any log-sum-exp care; only valid for well-scaled logits."""
    total = 0.0
    for i in range(len(dataset)):
        t = 1.0 if temps is None else float(temps[i])
        p = naive_softmax([y / t for y in dataset.logits[i]])
        total += -math.log(p[dataset.labels[i]])
    return total / len(dataset)


def central_difference(f, x: float, h: float = 1e-5) -> float:
    return (f(x + h) - f(x - h)) / (2 * h)


def rel_error(a, b, floor=1e-5):
    """Elementwise |a - b| / max(|a|, |b|, floor); the floor stops exact zeros from dividing by 0."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def random_dataset(rng: np.random.Generator, n: int, m: int, d: int = 3, scale: float = 3.0) -> Dataset:
    logits = scale * rng.standard_normal((n, m))
    labels = rng.integers(0, m, size=n)
    features = rng.standard_normal((n, d))
    return Dataset(logits, features, labels)
