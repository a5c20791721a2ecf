"""Local-file dataset ingestion, normalization, splitting, and batch iteration.

Nothing here touches the network: loaders read IDX image/label pairs (the
MNIST family) and the three delimited text layouts (digits, semeion, usps)
from paths the caller supplies. `DATASETS` records where the canonical files
come from so the CLI can point users at them.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .numerics import Prng

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

# Seed used for the stratified splits of datasets without a canonical split
# (digits, semeion); recorded here so every metrics file is auditable.
DEFAULT_SPLIT_SEED = 71

NORMALIZATIONS = ("zscore", "affine05")


@dataclass
class Dataset:
    """Flattened feature matrix plus integer class labels."""

    name: str
    features: np.ndarray  # (samples, features) float64
    labels: np.ndarray  # (samples,) int
    class_count: int
    pixel_range: tuple[float, float]  # native value range, for affine normalization
    normalization: str | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError(f"{self.name}: features must be 2-D, got {self.features.shape}")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.name}: {self.features.shape[0]} feature rows vs {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"{self.name}: label out of range [0, {self.class_count})")
        if not np.isfinite(self.features).all():
            raise ValueError(f"{self.name}: non-finite feature values")

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, indices: np.ndarray, name_suffix: str = "") -> "Dataset":
        return replace(
            self,
            name=self.name + name_suffix,
            features=self.features[indices],
            labels=self.labels[indices],
        )


def _open_maybe_gzip(path):
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_be32(f, path) -> int:
    data = f.read(4)
    if len(data) != 4:
        raise ValueError(f"{path}: truncated header")
    return struct.unpack(">i", data)[0]


def load_idx(images_path, labels_path, name: str = "idx") -> Dataset:
    """Load a big-endian IDX image/label file pair (gzipped files are fine).

    Pixels come out flattened row-major as reals in 0-255; normalization is a
    separate step.
    """
    with _open_maybe_gzip(images_path) as f:
        magic = _read_be32(f, images_path)
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(f"{images_path}: bad image magic 0x{magic:08x}")
        count = _read_be32(f, images_path)
        rows = _read_be32(f, images_path)
        cols = _read_be32(f, images_path)
        raw = f.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise ValueError(f"{images_path}: truncated pixel data")
        features = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols).astype(np.float64)
    with _open_maybe_gzip(labels_path) as f:
        magic = _read_be32(f, labels_path)
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(f"{labels_path}: bad label magic 0x{magic:08x}")
        label_count = _read_be32(f, labels_path)
        if label_count != count:
            raise ValueError(
                f"{labels_path}: {label_count} labels for {count} images in {images_path}"
            )
        raw = f.read(label_count)
        if len(raw) != label_count:
            raise ValueError(f"{labels_path}: truncated label data")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    class_count = 10
    return Dataset(name, features, labels, class_count, pixel_range=(0.0, 255.0))


# (feature count, pixel range) per delimited text layout.
_DELIMITED_LAYOUTS = {
    "digits": (64, (0.0, 16.0)),
    "semeion": (256, (0.0, 1.0)),
    "usps": (256, (-1.0, 1.0)),
}


def load_delimited(path, fmt: str) -> Dataset:
    """Load one of the delimited text layouts.

    digits: 64 comma-separated features then the label.
    semeion: 256 space-separated pixels then a 10-column one-hot label.
    usps: the label first, then 256 space-separated grayscale values.
    """
    if fmt not in _DELIMITED_LAYOUTS:
        raise ValueError(f"unknown delimited format {fmt!r}")
    n_features, pixel_range = _DELIMITED_LAYOUTS[fmt]
    features, labels = [], []
    with _open_maybe_gzip(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.decode("ascii").strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            try:
                values = [float(p) for p in parts]
                if fmt == "digits":
                    if len(values) != n_features + 1:
                        raise ValueError(f"expected {n_features + 1} fields, got {len(values)}")
                    row, label = values[:n_features], int(values[n_features])
                elif fmt == "semeion":
                    if len(values) != n_features + 10:
                        raise ValueError(f"expected {n_features + 10} fields, got {len(values)}")
                    row = values[:n_features]
                    onehot = values[n_features:]
                    if sum(onehot) != 1.0:
                        raise ValueError("label columns are not one-hot")
                    label = int(np.argmax(onehot))
                else:  # usps
                    if len(values) != n_features + 1:
                        raise ValueError(f"expected {n_features + 1} fields, got {len(values)}")
                    label, row = int(values[0]), values[1:]
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {err}") from None
            features.append(row)
            labels.append(label)
    return Dataset(fmt, np.array(features), np.array(labels), 10, pixel_range)


def write_delimited(ds: Dataset, path, fmt: str) -> None:
    """Inverse of `load_delimited`; float repr keeps the round trip exact."""
    if fmt not in _DELIMITED_LAYOUTS:
        raise ValueError(f"unknown delimited format {fmt!r}")
    with open(path, "w") as f:
        for row, label in zip(ds.features, ds.labels):
            values = [repr(float(v)) for v in row]
            if fmt == "digits":
                f.write(",".join(values + [str(int(label))]) + "\n")
            elif fmt == "semeion":
                onehot = ["1" if c == label else "0" for c in range(ds.class_count)]
                f.write(" ".join(values + onehot) + "\n")
            else:  # usps
                f.write(" ".join([str(int(label))] + values) + "\n")


def feature_stats(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and std, with the std floored to avoid division blow-ups."""
    mean = ds.features.mean(axis=0)
    std = np.maximum(ds.features.std(axis=0), 1e-8)
    return mean, std


def normalize(ds: Dataset, scheme: str, stats=None) -> Dataset:
    """Return a normalized copy of `ds`; refuses to normalize twice.

    zscore: (x - mean) / std per feature, using `stats` when given (pass the
    training split's stats to normalize a test split without leakage).
    affine05: scale the native pixel range to [0, 1], then map through
    (x - 0.5) / 0.5 so values land in [-1, 1].
    """
    if scheme not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {scheme!r}")
    if ds.normalization is not None:
        raise ValueError(f"{ds.name}: already normalized with {ds.normalization!r}")
    if scheme == "zscore":
        mean, std = feature_stats(ds) if stats is None else stats
        features = (ds.features - mean) / std
    else:
        lo, hi = ds.pixel_range
        unit = (ds.features - lo) / (hi - lo)
        features = (unit - 0.5) / 0.5
    return replace(ds, features=features, normalization=scheme)


def normalize_split(train: Dataset, test: Dataset, scheme: str) -> tuple[Dataset, Dataset]:
    """Normalize a train/test pair, test with the training split's statistics."""
    stats = feature_stats(train) if scheme == "zscore" else None
    return normalize(train, scheme, stats), normalize(test, scheme, stats)


def stratified_split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic per-class split preserving class proportions within one sample."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = Prng(seed)
    train_idx, test_idx = [], []
    for c in range(ds.class_count):
        members = np.flatnonzero(ds.labels == c)
        if len(members) < 2:
            raise ValueError(f"{ds.name}: class {c} has {len(members)} samples, need >= 2")
        order = members[rng.child(c).permutation(len(members))]
        n_train = int(np.clip(round(len(members) * train_fraction), 1, len(members) - 1))
        train_idx.append(order[:n_train])
        test_idx.append(order[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return ds.subset(train_idx, "-train"), ds.subset(test_idx, "-test")


class BatchIterator:
    """Seeded minibatch iteration; each epoch is a fresh permutation of all samples."""

    def __init__(self, ds: Dataset, batch_size: int, seed: int):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.ds = ds
        self.batch_size = batch_size
        self.seed = seed

    def epoch_order(self, epoch: int) -> np.ndarray:
        return Prng(self.seed).child(epoch).permutation(len(self.ds))

    def epoch(self, epoch: int):
        """Yield (features, labels) batches; the final short batch is included."""
        order = self.epoch_order(epoch)
        for start in range(0, len(order), self.batch_size):
            idx = order[start : start + self.batch_size]
            yield self.ds.features[idx], self.ds.labels[idx]


@dataclass(frozen=True)
class DatasetSource:
    """Where a dataset's canonical files come from and what they must contain."""

    files: tuple[str, ...]  # expected file names inside the data directory
    urls: tuple[str, ...]
    samples: int
    features: int
    classes: int
    normalization: str
    split: str  # "stratified" or "canonical"


DATASETS = {
    "digits": DatasetSource(
        files=("digits.csv",),
        urls=(
            "https://archive.ics.uci.edu/ml/machine-learning-databases/optdigits/",
            "(bundled with scikit-learn: salnet.data.materialize_digits writes digits.csv)",
        ),
        samples=1797,
        features=64,
        classes=10,
        normalization="zscore",
        split="stratified",
    ),
    "semeion": DatasetSource(
        files=("semeion.data",),
        urls=("https://archive.ics.uci.edu/ml/machine-learning-databases/semeion/semeion.data",),
        samples=1593,
        features=256,
        classes=10,
        normalization="affine05",
        split="stratified",
    ),
    "usps": DatasetSource(
        files=("zip.train", "zip.test"),
        urls=(
            "https://hastie.su.domains/ElemStatLearn/datasets/zip.train.gz",
            "https://hastie.su.domains/ElemStatLearn/datasets/zip.test.gz",
        ),
        samples=9298,
        features=256,
        classes=10,
        normalization="affine05",
        split="canonical",
    ),
    "mnist": DatasetSource(
        files=(
            "train-images-idx3-ubyte",
            "train-labels-idx1-ubyte",
            "t10k-images-idx3-ubyte",
            "t10k-labels-idx1-ubyte",
        ),
        urls=("https://ossci-datasets.s3.amazonaws.com/mnist/",),
        samples=70000,
        features=784,
        classes=10,
        normalization="affine05",
        split="canonical",
    ),
    "fashion-mnist": DatasetSource(
        files=(
            "train-images-idx3-ubyte",
            "train-labels-idx1-ubyte",
            "t10k-images-idx3-ubyte",
            "t10k-labels-idx1-ubyte",
        ),
        urls=("http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",),
        samples=70000,
        features=784,
        classes=10,
        normalization="affine05",
        split="canonical",
    ),
}


def dataset_files(name: str, data_dir) -> list[Path]:
    """Resolve a dataset's expected files inside `data_dir` (gzipped variants count)."""
    source = DATASETS[name]
    data_dir = Path(data_dir)
    resolved = []
    for fname in source.files:
        plain, gz = data_dir / fname, data_dir / (fname + ".gz")
        resolved.append(plain if plain.exists() or not gz.exists() else gz)
    return resolved


def materialize_digits(path) -> None:
    """Write the canonical digits CSV from scikit-learn's bundled copy."""
    try:
        from sklearn.datasets import load_digits
    except ImportError:
        raise RuntimeError(
            "scikit-learn is not installed; fetch digits.csv from the canonical source instead"
        ) from None
    bunch = load_digits()
    ds = Dataset("digits", bunch.data, bunch.target, 10, pixel_range=(0.0, 16.0))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_delimited(ds, path, "digits")


def load_dataset(name: str, data_dir) -> tuple[Dataset, Dataset]:
    """Load, split, and normalize one of the registered datasets.

    Returns the (train, test) pair ready for training: canonical splits are
    used where they exist, otherwise a seeded stratified 80/20 split; the
    test split of a zscore dataset is normalized with training statistics.
    """
    if name not in DATASETS:
        raise ValueError(f"unknown dataset {name!r}; known: {', '.join(sorted(DATASETS))}")
    source = DATASETS[name]
    paths = dataset_files(name, data_dir)
    if name == "digits" and not paths[0].exists():
        try:
            materialize_digits(paths[0])
        except RuntimeError:
            pass
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise FileNotFoundError(
            f"{name}: missing {', '.join(missing)}; fetch from: {' '.join(source.urls)}"
        )
    if name == "digits":
        full = load_delimited(paths[0], "digits")
        train, test = stratified_split(full, 0.8, DEFAULT_SPLIT_SEED)
    elif name == "semeion":
        full = load_delimited(paths[0], "semeion")
        train, test = stratified_split(full, 0.8, DEFAULT_SPLIT_SEED)
    elif name == "usps":
        train = load_delimited(paths[0], "usps")
        test = load_delimited(paths[1], "usps")
    else:  # mnist / fashion-mnist
        train = load_idx(paths[0], paths[1], name=f"{name}-train")
        test = load_idx(paths[2], paths[3], name=f"{name}-test")
    return normalize_split(train, test, source.normalization)
