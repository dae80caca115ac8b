"""Dataset ingestion and synthesis.

IDX files (the MNIST binary layout) are parsed bit-exactly: big-endian magic
and counts, unsigned-byte pixels scaled to [0, 1]. When no real MNIST files
are available the package synthesizes a deterministic 28x28 ten-class digit
set from bitmap glyphs (random placement, scale, intensity, and noise), which
round-trips through the same IDX reader/writer.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MNIST_ENV_VAR = "SNNADV_MNIST_DIR"

# 5x7 bitmap glyphs for the synthetic digit set
_GLYPHS = [
    "01110 10001 10011 10101 11001 10001 01110",
    "00100 01100 00100 00100 00100 00100 01110",
    "01110 10001 00001 00010 00100 01000 11111",
    "11111 00010 00100 00010 00001 10001 01110",
    "00010 00110 01010 10010 11111 00010 00010",
    "11111 10000 11110 00001 00001 10001 01110",
    "00110 01000 10000 11110 10001 10001 01110",
    "11111 00001 00010 00100 01000 01000 01000",
    "01110 10001 10001 01110 10001 10001 01110",
    "01110 10001 10001 01111 00001 00010 01100",
]


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated IDX file: expected {count} bytes for {what}, "
                          f"got {len(data)}")
    return data


def load_idx_images(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, "image header"))
        if magic != IMAGES_MAGIC:
            raise FormatError(f"bad IDX image magic: expected {IMAGES_MAGIC:#010x}, "
                              f"observed {magic:#010x}")
        raw = _read_exact(fh, count * rows * cols, "pixel data")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)
    return pixels.astype(np.float32) / 255.0


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, count = struct.unpack(">II", _read_exact(fh, 8, "label header"))
        if magic != LABELS_MAGIC:
            raise FormatError(f"bad IDX label magic: expected {LABELS_MAGIC:#010x}, "
                              f"observed {magic:#010x}")
        raw = _read_exact(fh, count, "label data")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def load_mnist_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(images) != len(labels):
        raise FormatError(f"image count {len(images)} != label count {len(labels)}")
    return images, labels


def save_idx_images(path, images: np.ndarray) -> None:
    """Write [n, rows, cols] images; float inputs in [0, 1] are quantized."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def save_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def synth_blobs(n: int, classes: int = 2, dim: int = 2, seed: int = 0,
                spread: float = 0.08) -> tuple[np.ndarray, np.ndarray]:
    """Seeded Gaussian class blobs in [0, 1]^dim, balanced and linearly
    separable at the default spread."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.2, 0.8, size=(classes, dim))
    # push centers apart until pairwise distances clear the spread
    for _ in range(200):
        dists = np.linalg.norm(centers[:, None] - centers[None, :], axis=-1)
        np.fill_diagonal(dists, np.inf)
        if dists.min() > 8 * spread:
            break
        i, j = np.unravel_index(np.argmin(dists), dists.shape)
        delta = centers[i] - centers[j]
        norm = np.linalg.norm(delta) or 1.0
        centers[i] = np.clip(centers[i] + 0.05 * delta / norm, 0.05, 0.95)
        centers[j] = np.clip(centers[j] - 0.05 * delta / norm, 0.05, 0.95)
    labels = np.arange(n) % classes
    x = centers[labels] + spread * rng.standard_normal((n, dim))
    order = rng.permutation(n)
    return np.clip(x, 0.0, 1.0).astype(np.float32)[order], labels[order]


def _glyph_array(digit: int) -> np.ndarray:
    rows = _GLYPHS[digit].split()
    return np.array([[int(ch) for ch in row] for row in rows], dtype=np.float32)


def synth_digits(n: int, seed: int = 0, size: int = 28) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic ten-class digit images: bitmap glyphs with random
    integer scale, near-center placement jitter, stroke intensity, and pixel
    noise (roughly centered, like the real handwritten sets)."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 10
    images = np.zeros((n, size, size), dtype=np.float32)
    for i, digit in enumerate(labels):
        glyph = _glyph_array(int(digit))
        scale = int(rng.integers(2, 4))  # 10x14 or 15x21 footprint
        sprite = np.kron(glyph, np.ones((scale, scale), dtype=np.float32))
        sh, sw = sprite.shape
        top = (size - sh) // 2 + int(rng.integers(-3, 4))
        left = (size - sw) // 2 + int(rng.integers(-3, 4))
        top = min(max(top, 0), size - sh)
        left = min(max(left, 0), size - sw)
        intensity = rng.uniform(0.75, 1.0)
        images[i, top:top + sh, left:left + sw] = sprite * intensity
        images[i] += rng.normal(0.0, 0.06, size=(size, size)).astype(np.float32)
    np.clip(images, 0.0, 1.0, out=images)
    order = rng.permutation(n)
    return images[order], labels[order]


def find_mnist_dir() -> Optional[Path]:
    candidates = []
    env = os.environ.get(MNIST_ENV_VAR)
    if env:
        candidates.append(Path(env))
    candidates.append(Path("data"))
    for cand in candidates:
        if (cand / "train-images-idx3-ubyte").exists() \
                and (cand / "train-labels-idx1-ubyte").exists():
            return cand
    return None


def image_dataset(n_train: int, n_test: int, seed: int = 0
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, str]:
    """Real MNIST when IDX files are present (env SNNADV_MNIST_DIR or ./data),
    otherwise the synthetic digit set. Returns (train_x, train_y, test_x,
    test_y, source_tag); subsampling is deterministic given the seed."""
    mnist_dir = find_mnist_dir()
    if mnist_dir is not None:
        train_x, train_y = load_mnist_idx(mnist_dir / "train-images-idx3-ubyte",
                                          mnist_dir / "train-labels-idx1-ubyte")
        test_images = mnist_dir / "t10k-images-idx3-ubyte"
        if test_images.exists():
            test_x, test_y = load_mnist_idx(test_images,
                                            mnist_dir / "t10k-labels-idx1-ubyte")
        else:
            test_x, test_y = train_x[-n_test:], train_y[-n_test:]
        rng = np.random.default_rng(seed)
        tr = rng.choice(len(train_y), size=min(n_train, len(train_y)), replace=False)
        te = rng.choice(len(test_y), size=min(n_test, len(test_y)), replace=False)
        return train_x[tr], train_y[tr], test_x[te], test_y[te], "mnist"
    x, y = synth_digits(n_train + n_test, seed=seed)
    return x[:n_train], y[:n_train], x[n_train:], y[n_train:], "synthetic-digits"
