"""IDX ingestion, seeded splits and the rotation/translation test-time shift."""
from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigurationError, FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    images: np.ndarray  # [n, h, w] in [0, 1]
    labels: np.ndarray  # [n]
    provenance: str = "clean"
    indices: np.ndarray | None = field(default=None, repr=False)  # row ids in the source dataset

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3 or self.images.shape[0] != self.labels.shape[0]:
            raise ConfigurationError(f"images {self.images.shape} and labels {self.labels.shape} disagree")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ConfigurationError("pixel values must lie in [0, 1]")
        if self.labels.size and self.labels.min() < 0:
            raise ConfigurationError("labels must be non-negative")
        if self.indices is None:
            self.indices = np.arange(self.labels.shape[0])

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def inputs(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)

    @property
    def n_labels(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def take(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(self.images[rows], self.labels[rows], self.provenance, self.indices[rows])

    def save_npz(self, path) -> None:
        np.savez_compressed(path, images=self.images, labels=self.labels, provenance=self.provenance, indices=self.indices)

    @classmethod
    def load_npz(cls, path) -> "LabeledDataset":
        with np.load(path, allow_pickle=False) as f:
            return cls(f["images"], f["labels"], str(f["provenance"]), f["indices"])


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    return gzip.decompress(raw) if raw[:2] == b"\x1f\x8b" else raw


def _header(buf: bytes, magic: int, ndim: int, name: str) -> tuple[int, ...]:
    need = 4 + 4 * ndim
    if len(buf) < need:
        raise FormatError(f"{name}: truncated header at offset {len(buf)} (need {need} bytes)")
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise FormatError(f"{name}: bad magic 0x{got:08x} at offset 0, expected 0x{magic:08x}")
    return struct.unpack(f">{ndim}I", buf[4:need])


def load_idx(image_path, label_path) -> LabeledDataset:
    """Read a big-endian IDX image/label pair; pixels scaled by 1/255."""
    ib = _read_bytes(image_path)
    lb = _read_bytes(label_path)
    n, rows, cols = _header(ib, IMAGE_MAGIC, 3, "images")
    (nl,) = _header(lb, LABEL_MAGIC, 1, "labels")
    if n == 0:
        raise FormatError("images: empty dataset (count header 0 at offset 4)")
    if n != nl:
        raise FormatError(f"count mismatch: images header says {n} at offset 4, labels header says {nl} at offset 4")
    need = 16 + n * rows * cols
    if len(ib) < need:
        raise FormatError(f"images: truncated pixel data at offset {len(ib)}, expected {need} bytes")
    if len(lb) < 8 + n:
        raise FormatError(f"labels: truncated label data at offset {len(lb)}, expected {8 + n} bytes")
    pixels = np.frombuffer(ib, dtype=np.uint8, count=n * rows * cols, offset=16).reshape(n, rows, cols)
    labels = np.frombuffer(lb, dtype=np.uint8, count=n, offset=8)
    return LabeledDataset(pixels.astype(np.float64) / 255.0, labels.astype(np.int64), "clean")


def write_idx(dataset: LabeledDataset, image_path, label_path) -> None:
    n, rows, cols = dataset.images.shape
    pixels = np.rint(dataset.images * 255.0).astype(np.uint8)
    Path(image_path).write_bytes(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + pixels.tobytes())
    Path(label_path).write_bytes(struct.pack(">II", LABEL_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes())


def subsample(dataset: LabeledDataset, size: int, rng_seed: int):
    """Disjoint (subset, remainder) split after one seeded shuffle."""
    if not 0 <= size <= len(dataset):
        raise ConfigurationError(f"cannot take {size} samples from a dataset of {len(dataset)}")
    order = np.random.default_rng(rng_seed).permutation(len(dataset))
    return dataset.take(np.sort(order[:size])), dataset.take(np.sort(order[size:]))


@dataclass(frozen=True)
class PerturbSpec:
    max_translation: int = 5
    angle_range: float = math.pi / 4
    rng_seed: int = 0
    order: str = "rotate_then_translate"

    def __post_init__(self):
        if self.max_translation < 0:
            raise ConfigurationError("max_translation must be >= 0")
        if not 0.0 <= self.angle_range <= math.pi:
            raise ConfigurationError("angle_range must lie in [0, pi]")
        if self.order not in ("rotate_then_translate", "translate_then_rotate"):
            raise ConfigurationError(f"unknown order {self.order!r}")


def translate_image(image, dx: int, dy: int) -> np.ndarray:
    """Shift by dx columns and dy rows with zero padding."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    out = np.zeros_like(image)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src_r = slice(max(0, -dy), h - max(0, dy))
    src_c = slice(max(0, -dx), w - max(0, dx))
    dst_r = slice(max(0, dy), h - max(0, -dy))
    dst_c = slice(max(0, dx), w - max(0, -dx))
    out[dst_r, dst_c] = image[src_r, src_c]
    return out


def rotate_images(images, angles) -> np.ndarray:
    """Rotate each image about its centre (bilinear, zero fill)."""
    return kernels.rotate_bilinear(images, angles)


def perturb(dataset: LabeledDataset, spec: PerturbSpec) -> LabeledDataset:
    """Random rotation in (-angle_range, angle_range) and integer shifts in [-T, T] per axis.

    Each image draws from its own stream seeded by (rng_seed, source row id), so a
    row is perturbed identically whichever split it lands in.
    """
    n, h, w = dataset.images.shape
    if h != w:
        raise ConfigurationError("perturbation expects square images")
    angles = np.empty(n)
    shifts = np.empty((n, 2), dtype=np.int64)
    for i in range(n):
        r = np.random.default_rng([spec.rng_seed, int(dataset.indices[i])])
        angles[i] = r.uniform(-spec.angle_range, spec.angle_range)
        shifts[i] = r.integers(-spec.max_translation, spec.max_translation + 1, size=2)
    out = dataset.images
    if spec.order == "rotate_then_translate":
        out = rotate_images(out, angles)
        out = np.stack([translate_image(img, dx, dy) for img, (dx, dy) in zip(out, shifts)]) if n else out
    else:
        out = np.stack([translate_image(img, dx, dy) for img, (dx, dy) in zip(out, shifts)]) if n else out
        out = rotate_images(out, angles)
    tag = f"perturbed(seed={spec.rng_seed},order={spec.order})"
    return LabeledDataset(out, dataset.labels.copy(), tag, dataset.indices.copy())


def mnist_subset() -> LabeledDataset:
    """The 5000-image MNIST subset (500 per class) bundled with mlxtend."""
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise ConfigurationError("mlxtend is required for the bundled MNIST subset: pip install mlxtend") from exc
    x, y = mnist_data()
    return LabeledDataset(x.reshape(-1, 28, 28) / 255.0, y.astype(np.int64), "clean")


def export_mnist_subset(out_dir) -> tuple[Path, Path]:
    """Write the bundled MNIST subset as an IDX image/label pair."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    img, lab = out_dir / "mnist5k-images-idx3-ubyte", out_dir / "mnist5k-labels-idx1-ubyte"
    write_idx(mnist_subset(), img, lab)
    return img, lab
