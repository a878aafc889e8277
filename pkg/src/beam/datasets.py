"""Training data: Gaussian-mixture benchmarks and MNIST in IDX format."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MNIST_SIDE = 28
MNIST_DIR_ENV = "BEAM_MNIST_DIR"


@dataclass(frozen=True)
class MogSpec:
    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        stds = np.broadcast_to(np.asarray(self.stds, dtype=float), (len(means),)).copy()
        weights = (
            np.full(len(means), 1.0 / len(means))
            if self.weights is None
            else np.asarray(self.weights, dtype=float)
        )
        if weights.shape != (len(means),) or abs(weights.sum() - 1.0) > 1e-9 or np.any(weights < 0):
            raise ValueError("mixture weights must be a probability vector, one per mode")
        if np.any(stds <= 0):
            raise ValueError("mode standard deviations must be positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def nearest_mode(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.sum((x[:, None, :] - self.means[None]) ** 2, axis=2)
        return np.argmin(d, axis=1)


@dataclass(frozen=True)
class ModeCoverage:
    occupancy: np.ndarray
    near_fraction: float

    @property
    def min_occupancy(self) -> float:
        return float(self.occupancy.min())


def mode_coverage(spec: MogSpec, samples, radius_stds: float = 4.0) -> ModeCoverage:
    """Fraction of samples in each mode's basin (nearest mean), and the
    fraction within ``radius_stds`` standard deviations of its nearest mean."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if x.shape[1] != spec.dim:
        raise ValueError("samples do not match the mixture dimension")
    label = spec.nearest_mode(x)
    occupancy = np.bincount(label, minlength=len(spec.means)) / len(x)
    dist = np.linalg.norm(x - spec.means[label], axis=1)
    return ModeCoverage(occupancy, float(np.mean(dist <= radius_stds * spec.stds[label])))


def bimodal_spec() -> MogSpec:
    return MogSpec(means=[[-1.0], [1.0]], stds=0.1, weights=None)


def ring_spec(n_modes: int = 8, radius: float = 2.0, std: float = 0.02) -> MogSpec:
    angles = 2 * np.pi * np.arange(n_modes) / n_modes
    return MogSpec(radius * np.c_[np.cos(angles), np.sin(angles)], std, None)


def grid_spec(side: int = 5, spacing: float = 2.0, std: float = 0.05) -> MogSpec:
    ticks = spacing * (np.arange(side) - (side - 1) / 2)
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    return MogSpec(np.c_[xx.ravel(), yy.ravel()], std, None)


BUILTIN_MOGS = {"bimodal": bimodal_spec, "ring": ring_spec, "grid": grid_spec}


@dataclass
class Dataset:
    rows: np.ndarray
    kind: str = "continuous"
    train_idx: np.ndarray = field(default=None)
    val_idx: np.ndarray = field(default=None)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim == 1:
            self.rows = self.rows[:, None]
        if self.kind not in ("continuous", "binary"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.train_idx is None:
            self.train_idx = np.arange(len(self.rows))
        if self.val_idx is None:
            self.val_idx = np.arange(0)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def train(self) -> np.ndarray:
        return self.rows[self.train_idx]

    @property
    def validation(self) -> np.ndarray:
        return self.rows[self.val_idx]


def mog_sample(spec: MogSpec, n: int, rng) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    modes = rng.choice(len(spec.weights), size=n, p=spec.weights)
    rows = spec.means[modes] + spec.stds[modes, None] * rng.standard_normal((n, spec.dim))
    return Dataset(rows, "continuous")


# -- IDX ---------------------------------------------------------------------

def _open(path):
    path = str(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Read an unsigned-byte IDX file (MNIST images or labels)."""
    with _open(path) as f:
        raw = f.read()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC):
        raise ValueError(f"{path}: bad IDX magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ValueError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims))
    if len(raw) - header < expected:
        raise ValueError(f"{path}: truncated payload ({len(raw) - header} of {expected} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header).reshape(dims)


def write_idx(path, array) -> None:
    array = np.asarray(array, dtype=np.uint8)
    magic = {1: IDX_LABELS_MAGIC, 3: IDX_IMAGES_MAGIC}.get(array.ndim)
    if magic is None:
        raise ValueError("only 1-D label and 3-D image arrays are supported")
    payload = struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes()
    with (gzip.open(path, "wb") if str(path).endswith(".gz") else open(path, "wb")) as f:
        f.write(payload)


def find_mnist_images(path) -> Path:
    path = Path(path)
    if path.is_file():
        return path
    for name in ("train-images-idx3-ubyte", "train-images.idx3-ubyte"):
        for suffix in ("", ".gz"):
            candidate = path / (name + suffix)
            if candidate.exists():
                return candidate
    raise FileNotFoundError(f"no MNIST training images under {os.fspath(path)}")


def mnist_load(path, variant: str = "continuous", limit: int | None = None) -> Dataset:
    """Load MNIST images as flattened rows in [0, 1], or binarized at 0.5."""
    images = read_idx(find_mnist_images(path))
    if images.ndim != 3 or images.shape[1:] != (MNIST_SIDE, MNIST_SIDE):
        raise ValueError(f"expected 28x28 images, got shape {images.shape}")
    if limit is not None:
        images = images[:limit]
    rows = images.reshape(len(images), -1) / 255.0
    if variant == "binary":
        return Dataset((rows >= 0.5).astype(float), "binary")
    if variant != "continuous":
        raise ValueError(f"unknown MNIST variant {variant!r}")
    return Dataset(rows, "continuous")


def write_mnist_subset(directory) -> Path:
    """Write the 5000-image MNIST subset bundled with ``mlxtend`` as IDX
    files under ``directory``; a stand-in when the full corpus is absent."""
    from mlxtend.data import mnist_data  # optional dependency

    images, labels = mnist_data()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_idx(directory / "train-images-idx3-ubyte",
              np.asarray(images).reshape(-1, MNIST_SIDE, MNIST_SIDE))
    write_idx(directory / "train-labels-idx1-ubyte", np.asarray(labels))
    return directory


def mnist_dir(fallback_dir=None) -> Path:
    """``$BEAM_MNIST_DIR`` when it holds MNIST, else the bundled subset
    written to ``fallback_dir``."""
    env = os.environ.get(MNIST_DIR_ENV)
    if env:
        find_mnist_images(env)
        return Path(env)
    if fallback_dir is None:
        raise FileNotFoundError(f"set {MNIST_DIR_ENV} to a directory holding MNIST IDX files")
    fallback = Path(fallback_dir)
    if not (fallback / "train-images-idx3-ubyte").exists():
        write_mnist_subset(fallback)
    return fallback


# -- splitting and batching ------------------------------------------------

def split_validation(dataset: Dataset, fraction: float = 0.1, rng=None) -> Dataset:
    if not 0.0 < fraction < 1.0:
        raise ValueError("validation fraction must lie strictly between 0 and 1")
    n = len(dataset.rows)
    perm = rng.permutation(n)
    n_val = int(round(fraction * n))
    return Dataset(dataset.rows, dataset.kind, np.sort(perm[n_val:]), np.sort(perm[:n_val]))


def minibatches(rows, batch_size: int, rng):
    """One shuffled pass over ``rows``; the ragged final batch is dropped."""
    rows = np.asarray(rows)
    if batch_size > len(rows):
        raise ValueError("batch_size exceeds the number of rows")
    order = rng.permutation(len(rows))
    for b in range(len(rows) // batch_size):
        yield rows[order[b * batch_size : (b + 1) * batch_size]]
