"""Synthetic task environments and adversarial transforms.

Gaussian XOR family: class 0 is a mixture of two Gaussians at +-(0.5, 0.5),
class 1 at +-(0.5, -0.5), isotropic covariance. XNOR flips the labels; R-XOR
rotates the whole distribution by an angle. Spirals wrap K classes around the
origin with angular Gaussian noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import DataError, TaskDataset
from .seeding import SeedStream, as_seed_stream

__all__ = [
    "XorSpec",
    "SpiralSpec",
    "generate_xor",
    "generate_spirals",
    "shuffle_labels",
    "rotate_features",
    "rotate_points",
]

# Chosen so the four mixture modes are visually separated; the distribution
# family only fixes the covariance as proportional to the identity.
DEFAULT_XOR_VARIANCE = 0.25**2


@dataclass(frozen=True)
class XorSpec:
    n: int
    variance: float = DEFAULT_XOR_VARIANCE
    angle_degrees: float = 0.0
    label_flip: bool = False
    seed: SeedStream | int = 0
    task_id: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise DataError("n must be >= 1")
        if self.variance <= 0:
            raise DataError("variance must be positive")
        if not 0.0 <= self.angle_degrees < 360.0:
            raise DataError("angle must lie in [0, 360)")


@dataclass(frozen=True)
class SpiralSpec:
    n: int
    class_count: int
    turns: float
    angle_variance: float
    seed: SeedStream | int = 0
    task_id: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise DataError("n must be >= 1")
        if self.class_count < 2:
            raise DataError("need at least 2 classes")
        if self.turns <= 0:
            raise DataError("turns must be positive")
        if self.angle_variance < 0:
            raise DataError("angle variance must be non-negative")


def rotate_points(points: np.ndarray, angle_degrees: float) -> np.ndarray:
    """Rotate the first two coordinates counter-clockwise by the given angle."""
    theta = math.radians(angle_degrees)
    c, s = math.cos(theta), math.sin(theta)
    out = np.array(points, dtype=np.float64)
    x, y = out[:, 0].copy(), out[:, 1].copy()
    out[:, 0] = c * x - s * y
    out[:, 1] = s * x + c * y
    return out


def generate_xor(spec: XorSpec) -> TaskDataset:
    """Sample a Gaussian XOR / XNOR / R-XOR task.

    Class sizes are multinomial with equal priors. Points are sampled from
    the axis-aligned mixture, then rotated; a label flip turns XOR into XNOR
    without touching the features.
    """
    rng = as_seed_stream(spec.seed, SeedStream(0)).rng()
    n0, n1 = rng.multinomial(spec.n, [0.5, 0.5])
    sigma = math.sqrt(spec.variance)

    means = {0: np.array([0.5, 0.5]), 1: np.array([0.5, -0.5])}
    feats = []
    labels = []
    for cls, n_cls in ((0, n0), (1, n1)):
        if n_cls == 0:
            continue
        signs = np.where(rng.integers(0, 2, size=n_cls) == 0, 1.0, -1.0)
        centers = signs[:, None] * means[cls][None, :]
        pts = centers + sigma * rng.standard_normal((n_cls, 2))
        feats.append(pts)
        labels.append(np.full(n_cls, cls, dtype=np.int64))
    features = np.concatenate(feats)
    labels = np.concatenate(labels)
    # shuffle so any prefix is itself an i.i.d. sample (streams take prefixes)
    perm = rng.permutation(spec.n)
    features, labels = features[perm], labels[perm]

    if spec.angle_degrees != 0.0:
        features = rotate_points(features, spec.angle_degrees)
    if spec.label_flip:
        labels = 1 - labels
    return TaskDataset(features=features, labels=labels, task_id=spec.task_id, class_count=2)


def generate_spirals(spec: SpiralSpec) -> TaskDataset:
    """Sample a K-class spiral task.

    Radii are uniform on [0, 1]; within class k the base angles are evenly
    spaced across the band [4*pi*(k-1)*t/K, 4*pi*k*t/K] and jittered with
    Gaussian angular noise. The angle grid is paired with the sorted radii so
    each arm winds outward (independent pairing would give no spiral at all).
    """
    rng = as_seed_stream(spec.seed, SeedStream(0)).rng()
    k = spec.class_count
    sizes = rng.multinomial(spec.n, np.full(k, 1.0 / k))
    sigma = math.sqrt(spec.angle_variance)

    feats = []
    labels = []
    for cls in range(k):
        n_cls = int(sizes[cls])
        if n_cls == 0:
            continue
        r = np.sort(rng.uniform(0.0, 1.0, size=n_cls))
        lo = 4.0 * math.pi * cls * spec.turns / k
        hi = 4.0 * math.pi * (cls + 1) * spec.turns / k
        base = np.linspace(lo, hi, n_cls)
        theta = base + (sigma * rng.standard_normal(n_cls) if sigma > 0 else 0.0)
        feats.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
        labels.append(np.full(n_cls, cls, dtype=np.int64))
    features = np.concatenate(feats)
    all_labels = np.concatenate(labels)
    perm = rng.permutation(spec.n)
    return TaskDataset(
        features=features[perm],
        labels=all_labels[perm],
        task_id=spec.task_id,
        class_count=k,
    )


def shuffle_labels(data: TaskDataset, seed: SeedStream | int) -> TaskDataset:
    """Relabel classes through a uniformly random permutation of {0..K-1}."""
    rng = as_seed_stream(seed, SeedStream(0)).rng()
    perm = rng.permutation(data.class_count)
    return TaskDataset(
        features=data.features,
        labels=perm[data.labels],
        task_id=data.task_id,
        class_count=data.class_count,
    )


def rotate_features(data: TaskDataset, angle_degrees: float) -> TaskDataset:
    """Rotate feature coordinates (0, 1) by an angle; labels are unchanged."""
    if data.n_features < 2:
        raise DataError("rotation needs at least 2 feature dimensions")
    return TaskDataset(
        features=rotate_points(data.features, angle_degrees),
        labels=data.labels,
        task_id=data.task_id,
        class_count=data.class_count,
    )
