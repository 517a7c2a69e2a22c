"""Dataset container, seeded RNG, and CSV/IDX file I/O."""

import csv
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np


class Rng:
    """Deterministic random source backed by NumPy's PCG64.

    The generator algorithm is fixed (PCG64) so that identical seeds yield
    identical draw sequences across releases. A single Rng must not be
    shared across concurrent tasks.
    """

    def __init__(self, seed):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size)

    def choice(self, a, size=None, replace=True, p=None):
        return self._gen.choice(a, size=size, replace=replace, p=p)

    def permutation(self, n):
        return self._gen.permutation(n)


@dataclass(frozen=True)
class LabeledDataset:
    """Rows of (feature vector, class label, environment id).

    Environment ids are 0 (training) or 1 (test). Features are float64,
    labels and envs are int64. Immutable after construction.
    """

    features: np.ndarray
    labels: np.ndarray
    envs: np.ndarray
    n_classes: int = field(default=0)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        envs = np.asarray(self.envs, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n = features.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one row")
        if labels.shape != (n,) or envs.shape != (n,):
            raise ValueError("features, labels, envs must have equal row counts")
        n_classes = self.n_classes or int(labels.max()) + 1
        if labels.min() < 0 or labels.max() >= n_classes:
            raise ValueError("label out of range [0, n_classes)")
        if not np.isin(envs, (0, 1)).all():
            raise ValueError("env out of range {0, 1}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "envs", envs)
        object.__setattr__(self, "n_classes", n_classes)
        for arr in (features, labels, envs):
            arr.setflags(write=False)

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_dims(self):
        return self.features.shape[1]

    def subset(self, idx):
        return LabeledDataset(
            self.features[idx], self.labels[idx], self.envs[idx], self.n_classes
        )


class ParseError(ValueError):
    """Malformed dataset file."""


def load_csv(path):
    """Load a dataset from CSV with header ``env,label,x0,...,x{d-1}``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: no rows") from None
        header = [c.strip() for c in header]
        expected = ["env", "label"] + [f"x{i}" for i in range(len(header) - 2)]
        if header != expected:
            raise ParseError(f"{path}: line 1: malformed header {header!r}")
        d = len(header) - 2
        envs, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise ParseError(
                    f"{path}: line {lineno}: expected {d + 2} columns, got {len(row)}"
                )
            try:
                env = int(row[0])
                label = int(row[1])
                feats = [float(c) for c in row[2:]]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: non-numeric cell ({exc})") from None
            if env not in (0, 1):
                raise ParseError(f"{path}: line {lineno}: env out of range: {env}")
            if label < 0:
                raise ParseError(f"{path}: line {lineno}: negative label: {label}")
            envs.append(env)
            labels.append(label)
            rows.append(feats)
    if not rows:
        raise ParseError(f"{path}: no rows")
    return LabeledDataset(np.array(rows), np.array(labels), np.array(envs))


def save_csv(ds, path):
    """Write a dataset as CSV; floats carry 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["env", "label"] + [f"x{i}" for i in range(ds.n_dims)])
        for env, label, feats in zip(ds.envs, ds.labels, ds.features):
            writer.writerow([int(env), int(label)] + [f"{v:.17g}" for v in feats])


_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def load_idx(images_path, labels_path):
    """Load MNIST-style IDX image/label files.

    Pixels are scaled to [0, 1]; the env column is set to 0 (callers assign
    environments afterwards).
    """
    with open(images_path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise ParseError(f"{images_path}: truncated header")
    magic, n, rows, cols = struct.unpack(">IIII", blob[:16])
    if magic != _IDX_IMAGES_MAGIC:
        raise ParseError(f"{images_path}: unexpected IDX magic 0x{magic:08x}")
    if len(blob) != 16 + n * rows * cols:
        raise ParseError(f"{images_path}: truncated payload")
    images = np.frombuffer(blob, dtype=np.uint8, offset=16).reshape(n, rows * cols)

    with open(labels_path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise ParseError(f"{labels_path}: truncated header")
    magic, n_labels = struct.unpack(">II", blob[:8])
    if magic != _IDX_LABELS_MAGIC:
        raise ParseError(f"{labels_path}: unexpected IDX magic 0x{magic:08x}")
    if len(blob) != 8 + n_labels:
        raise ParseError(f"{labels_path}: truncated payload")
    if n_labels != n:
        raise ParseError(f"image/label count mismatch: {n} images, {n_labels} labels")
    labels = np.frombuffer(blob, dtype=np.uint8, offset=8).astype(np.int64)

    return LabeledDataset(
        images.astype(np.float64) / 255.0, labels, np.zeros(n, dtype=np.int64)
    )


def split_train_val(ds, frac, rng):
    """Shuffle and split into ceil(frac*n) training rows and the rest."""
    if not 0.0 < frac < 1.0:
        raise ValueError("frac must lie in (0, 1)")
    n = ds.n_rows
    n_train = int(np.ceil(frac * n))
    if n_train == n:
        warnings.warn("validation split is empty", stacklevel=2)
    perm = rng.permutation(n)
    train_idx, val_idx = perm[:n_train], perm[n_train:]
    train = ds.subset(train_idx)
    val = ds.subset(val_idx) if len(val_idx) else None
    return train, val
