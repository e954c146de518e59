"""Labeled image datasets: IDX file I/O and a synthetic handwritten-digit set.

The IDX reader/writer follows the classic MNIST binary layout: big-endian
magic number, dimension counts, then raw unsigned bytes.  Pixels are scaled
to [0, 1] by division by 255 on load.

``make_synthetic_digits`` produces an MNIST-shaped stand-in (28x28 grayscale,
10 classes) from procedurally rendered glyphs, so every experiment in this
package can run without downloading anything.  Real MNIST IDX files drop in
unchanged through the same loader.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

N_CLASSES = 10
IMAGE_SIDE = 28
N_PIXELS = IMAGE_SIDE * IMAGE_SIDE


class IdxFormatError(ValueError):
    """Raised when an IDX file has the wrong magic number or is truncated."""


@dataclass
class LabeledDataset:
    """Flattened images in [0, 1] with integer class labels."""

    images: np.ndarray  # (n, 784) float32
    labels: np.ndarray  # (n,) int64

    def __post_init__(self):
        if self.images.ndim != 2 or self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"images {self.images.shape} and labels {self.labels.shape} disagree"
            )

    def __len__(self):
        return self.images.shape[0]

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.images[idx], self.labels[idx])


def load_idx_images(path) -> np.ndarray:
    """Read an IDX image file into a (n, rows*cols) float32 array in [0, 1]."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise IdxFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(
            f"{path}: bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}"
        )
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise IdxFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16)
    images = pixels.astype(np.float32).reshape(count, rows * cols)
    images /= 255.0
    return images


def load_idx_labels(path) -> np.ndarray:
    """Read an IDX label file into a (n,) int64 array."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise IdxFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise IdxFormatError(
            f"{path}: bad label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}"
        )
    if len(raw) != 8 + count:
        raise IdxFormatError(f"{path}: expected {8 + count} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=8).astype(np.int64)


def load_dataset(images_path, labels_path) -> LabeledDataset:
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"image count {images.shape[0]} != label count {labels.shape[0]}"
        )
    return LabeledDataset(images, labels)


def write_idx_images(path, images_u8: np.ndarray):
    """Write uint8 images of shape (n, rows, cols) in IDX format."""
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    n, rows, cols = images_u8.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        fh.write(images_u8.tobytes())


def write_idx_labels(path, labels: np.ndarray):
    labels = np.asarray(labels)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.astype(np.uint8).tobytes())


# 5x7 digit glyphs, upscaled at render time.  '#' marks ink.
_GLYPHS = {
    0: (" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "),
    1: ("  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "),
    2: (" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"),
    3: (" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "),
    4: ("   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "),
    5: ("#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "),
    6: (" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "),
    7: ("#####", "    #", "   # ", "   # ", "  #  ", "  #  ", "  #  "),
    8: (" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "),
    9: (" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "),
}


def _glyph_canvas(digit: int) -> np.ndarray:
    """Rasterize one glyph onto a centered 28x28 float canvas."""
    rows = _GLYPHS[digit]
    bitmap = np.array([[1.0 if c == "#" else 0.0 for c in row] for row in rows])
    scaled = np.kron(bitmap, np.ones((3, 3)))  # 7x5 glyph -> 21x15 blocks
    canvas = np.zeros((IMAGE_SIDE, IMAGE_SIDE))
    h, w = scaled.shape
    top = (IMAGE_SIDE - h) // 2
    left = (IMAGE_SIDE - w) // 2
    canvas[top : top + h, left : left + w] = scaled
    return canvas


def _prototype_bank(shift_range: int, angles) -> np.ndarray:
    """Pre-render all (digit, rotation, shift) variants, blurred once.

    Returns an array of shape (10, n_variants, 28, 28).
    """
    shifts = range(-shift_range, shift_range + 1)
    bank = []
    for digit in range(N_CLASSES):
        base = _glyph_canvas(digit)
        variants = []
        for angle in angles:
            rotated = ndimage.rotate(base, angle, reshape=False, order=1)
            for dy in shifts:
                for dx in shifts:
                    shifted = np.roll(np.roll(rotated, dy, axis=0), dx, axis=1)
                    variants.append(ndimage.gaussian_filter(shifted, sigma=1.0))
        bank.append(np.stack(variants))
    bank = np.stack(bank)
    return np.clip(bank, 0.0, 1.0)


def make_synthetic_digits(
    n_samples: int,
    seed: int,
    shift_range: int = 2,
    angles=(-8.0, -4.0, 0.0, 4.0, 8.0),
    noise_sigma: float = 0.10,
    intensity_range=(0.55, 1.0),
) -> tuple[np.ndarray, np.ndarray]:
    """Generate uint8 images (n, 28, 28) and labels (n,), deterministic per seed.

    Samples are drawn from a bank of rotated/shifted glyph prototypes, scaled
    by a random intensity and corrupted with Gaussian pixel noise.  The shift
    range is the main difficulty knob: a plain fully connected classifier has
    no translation invariance and needs to see many positions per class.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    bank = _prototype_bank(shift_range, angles)
    n_variants = bank.shape[1]

    labels = rng.integers(0, N_CLASSES, size=n_samples)
    variant = rng.integers(0, n_variants, size=n_samples)
    intensity = rng.uniform(intensity_range[0], intensity_range[1], size=n_samples)
    noise = rng.normal(0.0, noise_sigma, size=(n_samples, IMAGE_SIDE, IMAGE_SIDE))

    images = bank[labels, variant] * intensity[:, None, None] + noise
    np.clip(images, 0.0, 1.0, out=images)
    images_u8 = np.round(images * 255.0).astype(np.uint8)
    return images_u8, labels.astype(np.int64)


def write_synthetic_digits(out_dir, n_train=60000, n_test=10000, seed=0, **kwargs):
    """Write a synthetic train/test pair in MNIST IDX layout; return the paths.

    Train and test are drawn from the same generator with different seed
    streams, so the test set is held out but identically distributed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_images, train_labels = make_synthetic_digits(n_train, seed=seed, **kwargs)
    test_images, test_labels = make_synthetic_digits(n_test, seed=seed + 1, **kwargs)
    paths = {
        "train_images": out / "train-images-idx3-ubyte",
        "train_labels": out / "train-labels-idx1-ubyte",
        "test_images": out / "t10k-images-idx3-ubyte",
        "test_labels": out / "t10k-labels-idx1-ubyte",
    }
    write_idx_images(paths["train_images"], train_images)
    write_idx_labels(paths["train_labels"], train_labels)
    write_idx_images(paths["test_images"], test_images)
    write_idx_labels(paths["test_labels"], test_labels)
    return paths
