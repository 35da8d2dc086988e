"""Synthetic private datasets, disjoint partitioning, and dataset IO.

Dataset file layout (little-endian):
    magic "DGDS" | version u32 | n u32 | dim u32 | K u32 | labeled u8 |
    float32 features row-major | (if labeled) u16 labels

Features are kept float32-exact in memory so the file round trip
preserves every byte.
"""

import struct

import numpy as np

from .errors import ConfigurationError, DataError, FormatError

MAGIC = b"DGDS"
VERSION = 1


class LabeledDataset:
    """Feature matrix with optional class labels."""

    def __init__(self, features, labels, class_count):
        features = np.asarray(features, dtype=np.float32)
        if features.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if not np.all(np.isfinite(features)):
            raise DataError("non-finite feature values")
        if class_count < 1:
            raise DataError("class_count must be >= 1")
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (features.shape[0],):
                raise DataError("label count does not match example count")
            if labels.size and (labels.min() < 0 or labels.max() >= class_count):
                raise DataError("label id outside [0, K)")
        self.features = features
        self.labels = labels
        self.class_count = class_count

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def labeled(self):
        return self.labels is not None

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        labels = self.labels[idx] if self.labeled else None
        return LabeledDataset(self.features[idx], labels, self.class_count)

    def equal(self, other):
        same_labels = (
            self.labels is None
            and other.labels is None
            or (
                self.labels is not None
                and other.labels is not None
                and np.array_equal(self.labels, other.labels)
            )
        )
        return (
            self.class_count == other.class_count
            and np.array_equal(self.features, other.features)
            and same_labels
        )


class Partition:
    """Pairwise-disjoint, jointly exhaustive index subsets of a dataset."""

    def __init__(self, subsets, parent_size):
        subsets = [np.asarray(s, dtype=np.int64) for s in subsets]
        if any(len(s) == 0 for s in subsets):
            raise DataError("empty partition subset")
        combined = np.concatenate(subsets) if subsets else np.empty(0, dtype=np.int64)
        if len(np.unique(combined)) != len(combined):
            raise DataError("partition subsets overlap")
        if not np.array_equal(np.sort(combined), np.arange(parent_size)):
            raise DataError("partition does not cover the dataset")
        self.subsets = subsets
        self.parent_size = parent_size

    def __len__(self):
        return len(self.subsets)


def make_mixture_dataset(class_count, dim, per_class, spread, seed):
    """Balanced Gaussian clusters around unit-norm centers.

    Centers are rejection-sampled until pairwise distance >= 2*spread;
    infeasible separation in the given dimension is a configuration error.
    """
    if class_count < 2 or dim < 2:
        raise ConfigurationError("need class_count >= 2 and dim >= 2")
    if per_class < 1 or spread <= 0:
        raise ConfigurationError("per_class must be >= 1 and spread > 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    centers = []
    attempts = 0
    while len(centers) < class_count:
        attempts += 1
        if attempts > 200 * class_count:
            raise ConfigurationError(
                f"cannot place {class_count} centers with separation {2 * spread} in dim {dim}"
            )
        c = rng.normal(size=dim)
        c /= np.linalg.norm(c)
        if all(np.linalg.norm(c - prev) >= 2 * spread for prev in centers):
            centers.append(c)
    centers = np.stack(centers)
    features = np.empty((class_count * per_class, dim), dtype=np.float64)
    labels = np.empty(class_count * per_class, dtype=np.int64)
    for k in range(class_count):
        block = slice(k * per_class, (k + 1) * per_class)
        features[block] = centers[k] + spread * rng.normal(size=(per_class, dim))
        labels[block] = k
    order = rng.permutation(len(labels))
    return LabeledDataset(features[order], labels[order], class_count)


# 8x8 glyph templates for digits 0-9; '#' = 1, '.' = 0.
_GLYPHS = [
    ".####...#....#..#....#..#....#..#....#..#....#..#....#...####...",
    "...#.....##......#......#......#......#......#....###...........",
    ".####...#....#.......#.....##....##....##......#......######....",
    ".####...#....#.......#...###.........#.#....#...####............",
    "...##....#.#....#..#...#...#...######......#......#......#......",
    "######..#.......#.......#####........#.......#..#...#...###.....",
    "..###....#......#.......#####...#....#..#....#..#....#...####...",
    "######.......#......#......#......#......#......#......#........",
    ".#####..#.....#..#...#....###....#...#..#.....#.#.....#..#####..",
    ".####...#....#..#....#...#####.......#......#......#...###......",
]


def digit_templates():
    """The 10 fixed 8x8 binary glyph templates as a (10, 64) array."""
    out = np.zeros((10, 64), dtype=np.float32)
    for k, glyph in enumerate(_GLYPHS):
        out[k] = np.array([1.0 if ch == "#" else 0.0 for ch in glyph], dtype=np.float32)
    return out


def make_digitgrid_dataset(per_class, noise, seed, class_count=10, cell=8):
    """Binary glyph images: class template XOR Bernoulli(noise) pixels."""
    if not 0.0 <= noise < 0.5:
        raise ConfigurationError("noise must lie in [0, 0.5)")
    if class_count != 10 or cell != 8:
        raise ConfigurationError("digit grid is fixed at 10 classes of 8x8 cells")
    if per_class < 1:
        raise ConfigurationError("per_class must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    templates = digit_templates()
    n = class_count * per_class
    features = np.empty((n, cell * cell), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    for k in range(class_count):
        block = slice(k * per_class, (k + 1) * per_class)
        flips = rng.random((per_class, cell * cell)) < noise
        features[block] = np.abs(templates[k][None, :] - flips.astype(np.float32))
        labels[block] = k
    order = rng.permutation(n)
    return LabeledDataset(features[order], labels[order], class_count)


def partition_disjoint(ds, n, seed):
    """Random equal-size (+-1) disjoint subsets covering the dataset."""
    if n < 1:
        raise ConfigurationError("need at least one subset")
    if n > len(ds):
        raise ConfigurationError(f"cannot split {len(ds)} examples into {n} subsets")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(ds))
    base, extra = divmod(len(ds), n)
    subsets = []
    start = 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        subsets.append(np.sort(order[start : start + size]))
        start += size
    return Partition(subsets, len(ds))


def split_query_pool(ds, query_count):
    """Deterministic prefix split into (query set, remainder)."""
    if query_count < 0 or query_count > len(ds):
        raise ConfigurationError(
            f"query_count {query_count} outside [0, {len(ds)}]"
        )
    idx = np.arange(len(ds))
    return ds.subset(idx[:query_count]), ds.subset(idx[query_count:])


def write_dataset(ds, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(
            struct.pack(
                "<IIIIB",
                VERSION,
                len(ds),
                ds.dim,
                ds.class_count,
                1 if ds.labeled else 0,
            )
        )
        fh.write(np.ascontiguousarray(ds.features, dtype="<f4").tobytes())
        if ds.labeled:
            if ds.labels.size and ds.labels.max() > np.iinfo(np.uint16).max:
                raise FormatError("label id exceeds u16 range")
            fh.write(ds.labels.astype("<u2").tobytes())


def _read_exact(fh, count, what):
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated dataset while reading {what}", offset=fh.tell())
    return data


def read_dataset(path):
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad dataset magic {magic!r}", offset=0)
        version, n, dim, class_count, labeled = struct.unpack(
            "<IIIIB", _read_exact(fh, 17, "header")
        )
        if version != VERSION:
            raise FormatError(f"unsupported dataset version {version}", offset=4)
        features = np.frombuffer(
            _read_exact(fh, 4 * n * dim, "features"), dtype="<f4"
        ).reshape(n, dim)
        labels = None
        if labeled:
            labels = np.frombuffer(_read_exact(fh, 2 * n, "labels"), dtype="<u2").astype(
                np.int64
            )
        trailing = fh.read(1)
        if trailing:
            raise FormatError("trailing bytes after dataset payload", offset=fh.tell() - 1)
    return LabeledDataset(features.copy(), labels, class_count)
