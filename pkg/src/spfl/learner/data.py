"""Synthetic Gaussian-mixture data and equal-size IID / Dirichlet shards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    num_classes: int

    def __len__(self) -> int:
        return int(self.y.size)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.num_classes)


@dataclass(frozen=True)
class Partition:
    """Disjoint, covering, equal-size index lists, one per device."""

    shards: tuple
    scheme: str
    concentration: float | None = None

    def __post_init__(self):
        sizes = {len(s) for s in self.shards}
        if len(sizes) > 1:
            raise ValueError(f"shards must have equal sizes, got {sorted(sizes)}")
        both = np.concatenate(self.shards) if self.shards else np.array([], dtype=int)
        if both.size != np.unique(both).size:
            raise ValueError("shards overlap")

    @property
    def num_devices(self) -> int:
        return len(self.shards)


def mixture_centers(num_classes: int, dim: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(scale=separation / np.sqrt(dim), size=(num_classes, dim))


def noise_factor(dim: int, noise: float, spread: float, rng: np.random.Generator) -> np.ndarray:
    """``A`` with ``A A^T`` the shared class covariance.

    Standard deviations run log-uniformly from ``noise / spread`` up to
    ``noise`` along randomly rotated axes; ``spread = 1`` is isotropic.
    """
    if spread == 1.0:
        return noise * np.eye(dim)
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    sd = noise * np.geomspace(1.0 / spread, 1.0, dim)
    return q * sd


def sample_mixture(centers, n: int, rng: np.random.Generator, noise=1.0, balanced: bool = True) -> Dataset:
    """``n`` points from a Gaussian around each class center.

    ``noise`` is a scalar standard deviation or a factor matrix from
    ``noise_factor``.
    """
    C, dim = centers.shape
    if balanced:
        y = np.arange(n) % C
        y = rng.permutation(y)
    else:
        y = rng.integers(0, C, size=n)
    z = rng.normal(size=(n, dim))
    x = centers[y] + (z @ np.asarray(noise).T if np.ndim(noise) == 2 else noise * z)
    return Dataset(x, y, C)


def iid_partition(num_samples: int, num_devices: int, rng: np.random.Generator) -> Partition:
    if num_devices < 1 or num_samples % num_devices:
        raise ValueError(f"{num_samples} samples do not split evenly over {num_devices} devices")
    perm = rng.permutation(num_samples)
    return Partition(tuple(np.sort(s) for s in np.split(perm, num_devices)), "iid")


def dirichlet_partition(labels, num_devices: int, concentration: float, rng: np.random.Generator) -> Partition:
    """Equal-size shards whose class mix follows Dir(concentration) per device.

    Each device draws its class proportions, then fills its quota from the
    classes that still have samples left; once a class runs dry the draw is
    renormalized over the remaining ones, so the last devices absorb whatever
    is left and every sample is used exactly once.
    """
    labels = np.asarray(labels)
    n = labels.size
    if num_devices < 1 or n % num_devices:
        raise ValueError(f"{n} samples do not split evenly over {num_devices} devices")
    if not concentration > 0:
        raise ValueError("Dirichlet concentration must be positive")
    size = n // num_devices
    classes = np.unique(labels)
    pools = [list(rng.permutation(np.flatnonzero(labels == c))) for c in classes]
    left = np.array([len(p) for p in pools])
    props = rng.dirichlet(np.full(classes.size, concentration), size=num_devices)
    shards = []
    for k in range(num_devices):
        take = np.zeros(classes.size, dtype=int)
        need = size
        while need > 0:
            room = left - take
            w = props[k] * (room > 0)
            if w.sum() <= 0:
                w = (room > 0).astype(float)
            draw = np.minimum(rng.multinomial(need, w / w.sum()), room)
            take += draw
            need -= int(draw.sum())
        idx = []
        for c, t in enumerate(take):
            idx.extend(pools[c][:t])
            del pools[c][:t]
        left -= take
        shards.append(np.sort(np.asarray(idx, dtype=int)))
    return Partition(tuple(shards), "dirichlet", float(concentration))


def label_tv_distance(labels, partition: Partition, num_classes: int) -> np.ndarray:
    """Total-variation distance of each shard's label histogram from uniform."""
    labels = np.asarray(labels)
    out = []
    for s in partition.shards:
        h = np.bincount(labels[s], minlength=num_classes) / max(len(s), 1)
        out.append(0.5 * np.abs(h - 1.0 / num_classes).sum())
    return np.asarray(out)


def make_partition(scheme: str, labels, num_devices: int, rng: np.random.Generator,
                   concentration: float = 0.5) -> Partition:
    if scheme == "iid":
        return iid_partition(np.asarray(labels).size, num_devices, rng)
    if scheme == "dirichlet":
        return dirichlet_partition(labels, num_devices, concentration, rng)
    raise ValueError(f"unknown partition scheme {scheme!r}; valid: iid, dirichlet")
