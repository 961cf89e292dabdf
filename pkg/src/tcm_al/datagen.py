"""Synthetic embeddings, long-tail subsampling and embedding file I/O.

File formats
------------
Features (``EMB``): an ASCII header line ``EMB v1 N D`` terminated by
``\\n``, followed by ``N*D`` little-endian float32 values in row-major
order. A CSV file (one row of comma-separated floats per sample) is
accepted on load as a fallback.

Labels (``LAB``): one decimal integer per line, optionally preceded by a
header line ``LAB v1 N C``. Without the header the class count is
``max(label) + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidDatasetError, InvalidSpecError
from .pool import EmbeddingDataset

EMB_MAGIC = b"EMB v1"
LAB_MAGIC = "LAB v1"


@dataclass(frozen=True)
class MixtureSpec:
    class_count: int
    samples_per_class: int
    dimension: int
    center_separation: float
    noise_sigma: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class LongTailSpec:
    imbalance_ratio: float
    seed: int = 0


def _mixture_centers(rng, class_count, dimension, separation):
    # orthonormal directions give every pair of centers distance exactly s
    if class_count <= dimension:
        q, r = np.linalg.qr(rng.standard_normal((dimension, class_count)))
        q *= np.sign(np.diag(r))
        return (separation / math.sqrt(2.0)) * q.T
    # more classes than dimensions: expected pairwise distance s
    return separation * rng.standard_normal((class_count, dimension)) / math.sqrt(2.0 * dimension)


def gaussian_mixture(spec: MixtureSpec) -> EmbeddingDataset:
    """Isotropic Gaussian classes, ``samples_per_class`` each, labels class-major."""
    if not spec.noise_sigma > 0:
        raise InvalidSpecError(f"noise_sigma must be positive, got {spec.noise_sigma}")
    if spec.center_separation < 0:
        raise InvalidSpecError("center_separation must be non-negative")
    if spec.class_count < 2 or spec.samples_per_class < 1 or spec.dimension < 1:
        raise InvalidSpecError(f"invalid mixture shape in {spec}")
    rng = np.random.default_rng(spec.seed)
    centers = _mixture_centers(rng, spec.class_count, spec.dimension, spec.center_separation)
    labels = np.repeat(np.arange(spec.class_count), spec.samples_per_class)
    noise = rng.standard_normal((labels.size, spec.dimension)) * spec.noise_sigma
    return EmbeddingDataset(centers[labels] + noise, labels, spec.class_count)


def longtail_sizes(samples_per_class: int, class_count: int, ratio: float) -> list[int]:
    """Per-class sizes ``round(n * ratio ** (-c / (C - 1)))``, halves rounded up."""
    return [
        int(math.floor(samples_per_class * ratio ** (-c / (class_count - 1)) + 0.5))
        for c in range(class_count)
    ]


def longtail_subsample(dataset: EmbeddingDataset, spec: LongTailSpec) -> EmbeddingDataset:
    sizes = dataset.class_sizes()
    if np.any(sizes != sizes[0]):
        raise InvalidSpecError(f"long-tail subsampling needs a class-balanced dataset, got sizes {sizes.tolist()}")
    n = int(sizes[0])
    if spec.imbalance_ratio < 1:
        raise InvalidSpecError(f"imbalance ratio must be >= 1, got {spec.imbalance_ratio}")
    if spec.imbalance_ratio > n:
        raise InvalidSpecError(f"imbalance ratio {spec.imbalance_ratio} exceeds samples per class {n}")
    rng = np.random.default_rng(spec.seed)
    keep = []
    for c, size in enumerate(longtail_sizes(n, dataset.class_count, spec.imbalance_ratio)):
        members = np.flatnonzero(dataset.labels == c)
        keep.append(rng.choice(members, size=size, replace=False))
    return dataset.subset(np.sort(np.concatenate(keep)))


# --- file I/O --------------------------------------------------------------------

def save_embeddings(dataset: EmbeddingDataset, features_path, labels_path) -> None:
    feats = np.ascontiguousarray(dataset.features, dtype="<f4")
    n, d = feats.shape
    with open(features_path, "wb") as fh:
        fh.write(b"EMB v1 %d %d\n" % (n, d))
        fh.write(feats.tobytes(order="C"))
    with open(labels_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{LAB_MAGIC} {n} {dataset.class_count}\n")
        fh.write("".join(f"{int(v)}\n" for v in dataset.labels))


def _read_emb(raw: bytes) -> np.ndarray:
    end = raw.find(b"\n")
    if end < 0:
        raise FormatError("missing newline after EMB header", row=0)
    parts = raw[:end].split()
    if len(parts) != 4 or parts[0] != b"EMB" or parts[1] != b"v1":
        raise FormatError(f"bad EMB header {raw[:end]!r}", row=0)
    try:
        n, d = int(parts[2]), int(parts[3])
    except ValueError:
        raise FormatError(f"bad EMB header {raw[:end]!r}", row=0) from None
    if n < 1 or d < 1:
        raise FormatError(f"EMB header declares empty matrix {n}x{d}", row=0)
    body = raw[end + 1:]
    if len(body) != n * d * 4:
        complete = len(body) // (4 * d)
        raise FormatError(
            f"EMB header declares {n}x{d} float32 values ({n * d * 4} bytes), body has {len(body)} bytes",
            row=min(complete + 1, n),
        )
    return np.frombuffer(body, dtype="<f4").reshape(n, d).astype(np.float32)


def _read_csv(text: str) -> np.ndarray:
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            values = [float(v) for v in line.split(",")]
        except ValueError:
            raise FormatError(f"non-numeric value in {line!r}", row=lineno) from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise FormatError(f"expected {width} columns, got {len(values)}", row=lineno)
        rows.append(values)
    if not rows:
        raise FormatError("feature file is empty")
    return np.asarray(rows, dtype=np.float32)


def read_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    feats = _read_emb(raw) if raw.startswith(EMB_MAGIC) else _read_csv(raw.decode("ascii", errors="replace"))
    bad = np.flatnonzero(~np.all(np.isfinite(feats), axis=1))
    if bad.size:
        raise FormatError("non-finite feature value", row=int(bad[0]) + 1)
    return feats


def read_labels(path):
    """Return ``(labels, class_count or None)``."""
    lines = Path(path).read_text(encoding="ascii", errors="replace").splitlines()
    declared_n = declared_c = None
    start = 0
    if lines and lines[0].startswith("LAB"):
        parts = lines[0].split()
        if len(parts) != 4 or parts[1] != "v1":
            raise FormatError(f"bad LAB header {lines[0]!r}", row=1)
        try:
            declared_n, declared_c = int(parts[2]), int(parts[3])
        except ValueError:
            raise FormatError(f"bad LAB header {lines[0]!r}", row=1) from None
        start = 1
    labels = []
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        try:
            value = int(line.strip())
        except ValueError:
            raise FormatError(f"label {line.strip()!r} is not an integer", row=lineno) from None
        if value < 0 or (declared_c is not None and value >= declared_c):
            raise FormatError(f"label {value} outside [0, {declared_c if declared_c is not None else 'inf'})", row=lineno)
        labels.append(value)
    if declared_n is not None and declared_n != len(labels):
        raise FormatError(f"LAB header declares {declared_n} labels, file has {len(labels)}")
    return np.asarray(labels, dtype=np.int64), declared_c


def load_embeddings(features_path, labels_path) -> EmbeddingDataset:
    feats = read_features(features_path)
    labels, class_count = read_labels(labels_path)
    if labels.size != feats.shape[0]:
        row = min(labels.size, feats.shape[0]) + 1
        raise FormatError(
            f"{feats.shape[0]} feature rows but {labels.size} labels", row=row
        )
    if class_count is None:
        class_count = int(labels.max()) + 1 if labels.size else 0
    try:
        return EmbeddingDataset(feats, labels, class_count)
    except InvalidDatasetError as exc:
        raise FormatError(str(exc)) from exc
