"""Dataset container, file loaders, standardization, synthetic data.

Feature matrices always carry a trailing constant-1 bias column, so a
dataset of feature dimension d stores an (n, d+1) matrix. Classification
labels are contiguous class indices in [0, n_classes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParseError


@dataclass
class Dataset:
    features: np.ndarray  # (n, d+1) float64, last column all ones
    labels: np.ndarray  # (n,) int64 class indices or float64 targets
    n_classes: int | None = None
    feature_names: list[str] | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise DataError("features must be a nonempty (n, d+1) matrix")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain non-finite values")
        if not np.allclose(self.features[:, -1], 1.0, rtol=0.0, atol=0.0):
            raise DataError("last feature column must be the constant bias 1")
        if self.n_classes is not None:
            labels = np.asarray(self.labels)
            if labels.dtype.kind not in "iu":
                raise DataError("classification labels must be integer class indices")
            self.labels = labels.astype(np.int64)
            if self.labels.shape != (self.n,):
                raise DataError("labels must be one per row")
            if self.n_classes < 2:
                raise DataError("classification needs at least 2 classes")
            if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
                raise DataError(
                    f"labels must lie in [0, {self.n_classes}), got "
                    f"[{self.labels.min()}, {self.labels.max()}]"
                )
        else:
            self.labels = np.asarray(self.labels, dtype=np.float64)
            if self.labels.shape != (self.n,):
                raise DataError("labels must be one per row")
            if not np.all(np.isfinite(self.labels)):
                raise DataError("targets contain non-finite values")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1] - 1

    @property
    def task(self) -> str:
        return "regression" if self.n_classes is None else "classification"

    def subset(self, idx) -> "Dataset":
        return Dataset(
            self.features[idx],
            self.labels[idx],
            n_classes=self.n_classes,
            feature_names=self.feature_names,
        )

    @classmethod
    def from_raw(cls, x, labels, n_classes=None, feature_names=None) -> "Dataset":
        """Build a dataset from a raw (n, d) matrix, appending the bias column."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise DataError("raw features must be an (n, d) matrix")
        features = np.hstack([x, np.ones((x.shape[0], 1))])
        return cls(features, labels, n_classes=n_classes, feature_names=feature_names)


def _canonical_labels(values, classify):
    """Map raw label values to contiguous class indices (classification)."""
    values = np.asarray(values, dtype=np.float64)
    if not classify:
        return values, None
    rounded = np.rint(values)
    if not np.allclose(values, rounded, rtol=0.0, atol=1e-9):
        raise DataError("classification labels must be integers")
    ints = rounded.astype(np.int64)
    classes = np.unique(ints)
    if classes.shape[0] < 2:
        raise DataError("classification data must contain at least 2 distinct labels")
    lookup = {int(c): j for j, c in enumerate(classes)}
    return np.array([lookup[int(v)] for v in ints], dtype=np.int64), classes.shape[0]


def load_delimited(path, has_header=False, label_column=0, classify=True) -> Dataset:
    """Parse comma- or tab-delimited numeric rows into a dataset.

    The delimiter is sniffed per file (tab wins if present in the first
    data line). Distinct label values are mapped to contiguous class
    indices when classify is True.
    """
    rows = []
    labels = []
    names = None
    arity = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            sep = "\t" if "\t" in line else ","
            parts = [p.strip() for p in line.split(sep)]
            if has_header and names is None and not rows:
                names = parts
                continue
            if arity is None:
                arity = len(parts)
                if not 0 <= label_column < arity:
                    raise ParseError(
                        f"label column {label_column} out of range for {arity} columns",
                        line_number,
                    )
            elif len(parts) != arity:
                raise ParseError(
                    f"expected {arity} fields, found {len(parts)}", line_number
                )
            try:
                values = [float(p) for p in parts]
            except ValueError as exc:
                raise ParseError(f"non-numeric field: {exc}", line_number) from None
            labels.append(values.pop(label_column))
            rows.append(values)
    if not rows:
        raise DataError(f"no data rows in {path}")
    x = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(labels)):
        raise DataError(f"non-finite values in {path}")
    y, n_classes = _canonical_labels(labels, classify)
    if names is not None:
        names = [nm for j, nm in enumerate(names) if j != label_column]
    return Dataset.from_raw(x, y, n_classes=n_classes, feature_names=names)


def load_sparse(path, classify=True) -> Dataset:
    """Parse sparse "label idx:val ..." lines (1-based ascending indices).

    The matrix is densified with d = the maximum index seen; missing
    entries are 0. Binary -1/+1 labels map to classes 0/1; otherwise
    integer labels are canonicalized to contiguous indices.
    """
    raw_labels = []
    entries = []
    max_index = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                raw_labels.append(float(parts[0]))
            except ValueError:
                raise ParseError(f"bad label field {parts[0]!r}", line_number) from None
            row = []
            prev = 0
            for token in parts[1:]:
                try:
                    idx_str, val_str = token.split(":", 1)
                    idx = int(idx_str)
                    val = float(val_str)
                except ValueError:
                    raise ParseError(f"bad index:value token {token!r}", line_number) from None
                if idx <= prev:
                    raise ParseError(
                        f"indices must be ascending and unique, got {idx} after {prev}",
                        line_number,
                    )
                prev = idx
                row.append((idx, val))
                max_index = max(max_index, idx)
            entries.append(row)
    if not entries:
        raise DataError(f"no data rows in {path}")
    x = np.zeros((len(entries), max_index), dtype=np.float64)
    for i, row in enumerate(entries):
        for idx, val in row:
            x[i, idx - 1] = val
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(raw_labels)):
        raise DataError(f"non-finite values in {path}")
    if classify:
        unique = set(raw_labels)
        if unique <= {-1.0, 1.0}:
            y = np.array([0 if v < 0 else 1 for v in raw_labels], dtype=np.int64)
            return Dataset.from_raw(x, y, n_classes=2)
    y, n_classes = _canonical_labels(raw_labels, classify)
    return Dataset.from_raw(x, y, n_classes=n_classes)


def dump_sparse(dataset: Dataset, path) -> None:
    """Write a dataset in the sparse text format (zeros omitted)."""
    raw = dataset.features[:, :-1]
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(dataset.n):
            label = dataset.labels[i]
            head = str(int(label)) if dataset.n_classes is not None else repr(float(label))
            cols = np.nonzero(raw[i])[0]
            toks = [f"{j + 1}:{float(raw[i, j])!r}" for j in cols]
            fh.write(" ".join([head] + toks) + "\n")


@dataclass
class Standardizer:
    """Per-feature shift/scale fitted on training data.

    The bias column and zero-variance columns pass through unchanged.
    Apply the same fitted transform to validation and test data.
    """

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, dataset: Dataset) -> Dataset:
        if dataset.feature_dim != self.mean.shape[0]:
            raise DataError(
                f"standardizer fitted for {self.mean.shape[0]} features, "
                f"dataset has {dataset.feature_dim}"
            )
        x = (dataset.features[:, :-1] - self.mean) / self.scale
        return Dataset.from_raw(
            x, dataset.labels, n_classes=dataset.n_classes, feature_names=dataset.feature_names
        )


def standardize(train: Dataset) -> tuple[Dataset, Standardizer]:
    """Shift/scale each non-bias column to mean 0, standard deviation 1."""
    if train.n < 2:
        raise DataError("standardization needs at least 2 rows")
    raw = train.features[:, :-1]
    mean = raw.mean(axis=0)
    scale = raw.std(axis=0)
    constant = scale == 0.0
    mean = np.where(constant, 0.0, mean)
    scale = np.where(constant, 1.0, scale)
    transform = Standardizer(mean=mean, scale=scale)
    return transform.apply(train), transform


def synth_circles(n, r_inner=0.45, r_outer=0.85, seed=0) -> Dataset:
    """Uniform points on [-1, 1]^2, class 1 between two concentric circles.

    A point is labeled 1 iff its radius lies in [r_inner, r_outer].
    """
    if not 0.0 < r_inner < r_outer:
        raise ValueError(f"need 0 < r_inner < r_outer, got {r_inner}, {r_outer}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(int(n), 2))
    radius = np.hypot(x[:, 0], x[:, 1])
    y = ((radius >= r_inner) & (radius <= r_outer)).astype(np.int64)
    return Dataset.from_raw(x, y, n_classes=2, feature_names=["x1", "x2"])
