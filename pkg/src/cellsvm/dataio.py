"""Dataset container, libsvm/CSV parsing, feature scaling, and fold generation."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParseError

FOLD_METHODS = ("random", "stratified", "block", "alternating")


def _content_token(samples: np.ndarray, labels: np.ndarray) -> str:
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(samples).tobytes())
    h.update(np.ascontiguousarray(labels).tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class Dataset:
    """Dense labeled samples. Immutable after construction.

    `token` identifies the content (for sub-datasets it hashes the parent
    token plus the selected indices, not the copied values).
    """

    samples: np.ndarray  # (n, dim) float64
    labels: np.ndarray   # (n,) float64
    token: str = field(default="", compare=False)

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if samples.ndim != 2:
            raise DataError("samples must be a 2-D array")
        if labels.ndim != 1 or labels.shape[0] != samples.shape[0]:
            raise DataError("labels length must equal the sample count")
        if samples.shape[0] < 1:
            raise DataError("empty dataset")
        if not np.all(np.isfinite(samples)):
            raise DataError("non-finite feature value")
        if not np.all(np.isfinite(labels)):
            raise DataError("non-finite label")
        samples.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)
        if not self.token:
            object.__setattr__(self, "token", _content_token(samples, labels))

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        h = hashlib.sha1()
        h.update(self.token.encode())
        h.update(idx.tobytes())
        return Dataset(self.samples[idx], self.labels[idx], token=h.hexdigest())


@dataclass(frozen=True)
class Scaling:
    """Per-feature affine map x -> (x - offset) / factor."""

    offset: np.ndarray
    factor: np.ndarray

    def apply(self, samples: np.ndarray) -> np.ndarray:
        return (samples - self.offset) / self.factor

    def invert(self, samples: np.ndarray) -> np.ndarray:
        return samples * self.factor + self.offset


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray  # (n,) int64 in 0..k-1
    k: int
    method: str
    seed: int

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.nonzero(self.fold_of == fold)[0]

    def train_indices(self, fold: int) -> np.ndarray:
        return np.nonzero(self.fold_of != fold)[0]


def _decode(stream) -> io.StringIO:
    if isinstance(stream, bytes):
        return io.StringIO(stream.decode("utf-8"))
    if isinstance(stream, str):
        return io.StringIO(stream)
    data = stream.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return io.StringIO(data)


def parse_libsvm(stream) -> Dataset:
    """Parse libsvm text: `label idx:val ...` with strictly increasing 1-based indices."""
    rows = []
    labels = []
    dim = 0
    for lineno, raw in enumerate(_decode(stream), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise ParseError(f"invalid label {parts[0]!r}", line=lineno)
        feats = {}
        prev = 0
        for tok in parts[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"invalid token {tok!r}", line=lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"invalid token {tok!r}", line=lineno)
            if idx < 1:
                raise ParseError(f"index {idx} < 1", line=lineno)
            if idx <= prev:
                raise ParseError(f"non-increasing index at {idx}", line=lineno)
            prev = idx
            feats[idx] = val
        if not np.isfinite(label) or any(not np.isfinite(v) for v in feats.values()):
            raise ParseError("non-finite value", line=lineno)
        dim = max(dim, prev)
        labels.append(label)
        rows.append(feats)
    if not rows:
        raise ParseError("empty dataset", line=1)
    samples = np.zeros((len(rows), dim))
    for i, feats in enumerate(rows):
        for idx, val in feats.items():
            samples[i, idx - 1] = val
    return Dataset(samples, np.asarray(labels))


def to_libsvm(data: Dataset) -> str:
    """Serialize to libsvm text. Zero entries are omitted, except that the last
    feature column is written explicitly on the first line when it would
    otherwise vanish (keeps the parsed dim identical)."""
    force_last = not np.any(data.samples[:, -1] != 0.0) if data.dim else False
    lines = []
    for i in range(data.n):
        toks = [repr(float(data.labels[i]))]
        row = data.samples[i]
        for j in range(data.dim):
            if row[j] != 0.0 or (force_last and i == 0 and j == data.dim - 1):
                toks.append(f"{j + 1}:{float(row[j])!r}")
        lines.append(" ".join(toks))
    return "\n".join(lines) + "\n"


def parse_csv(stream, label_column="last", has_header=False, delimiter=",") -> Dataset:
    """Parse a rectangular numeric CSV with the label in one column.

    label_column: "first", "last", or a 0-based column index.
    """
    reader = csv.reader(_decode(stream), delimiter=delimiter)
    rows = []
    width = None
    for lineno, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if has_header and not rows and width is None:
            width = len(row)
            continue
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"ragged row ({len(row)} fields, expected {width})", line=lineno)
        vals = []
        for col, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell.strip()!r}", line=lineno, column=col + 1)
            if not np.isfinite(v):
                raise ParseError("non-finite value", line=lineno, column=col + 1)
            vals.append(v)
        rows.append(vals)
    if not rows:
        raise ParseError("empty dataset", line=1)
    table = np.asarray(rows)
    ncol = table.shape[1]
    if ncol < 2:
        raise ParseError("need at least one feature column and one label column", line=1)
    if label_column == "first":
        lcol = 0
    elif label_column == "last":
        lcol = ncol - 1
    else:
        lcol = int(label_column)
        if not 0 <= lcol < ncol:
            raise DataError(f"label column {lcol} out of range for {ncol} columns")
    labels = table[:, lcol]
    samples = np.delete(table, lcol, axis=1)
    return Dataset(samples, labels)


def load_file(path, label_column="last", has_header=False) -> Dataset:
    """Load a dataset; `.csv` files parse as CSV, everything else as libsvm."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if str(path).endswith(".csv"):
        return parse_csv(blob, label_column=label_column, has_header=has_header)
    return parse_libsvm(blob)


def compute_scaling(train: Dataset) -> Scaling:
    """Min/max scaling fitted on the training set: features map into [0, 1].

    Degenerate (constant) features get factor 1 with the constant as offset.
    """
    lo = train.samples.min(axis=0)
    hi = train.samples.max(axis=0)
    factor = hi - lo
    factor[factor == 0.0] = 1.0
    return Scaling(offset=lo, factor=factor)


def make_folds(labels, k: int, method: str = "stratified", seed: int = 0) -> FoldAssignment:
    """Deterministic fold assignment; see FOLD_METHODS for the variants."""
    labels = np.asarray(labels, dtype=np.float64)
    n = labels.shape[0]
    if k < 2 or k > n:
        raise ValueError(f"fold count k={k} must satisfy 2 <= k <= n={n}")
    if method not in FOLD_METHODS:
        raise ValueError(f"unknown fold method {method!r}")
    fold_of = np.empty(n, dtype=np.int64)
    if method == "alternating":
        fold_of = np.arange(n, dtype=np.int64) % k
    elif method == "block":
        bounds = np.linspace(0, n, k + 1).astype(np.int64)
        for f in range(k):
            fold_of[bounds[f]:bounds[f + 1]] = f
    elif method == "random":
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        fold_of[perm] = np.arange(n, dtype=np.int64) % k
    else:  # stratified: per-class round robin with a fold pointer carried
        rng = np.random.default_rng(seed)
        pointer = 0
        for cls in np.unique(labels):
            idx = np.nonzero(labels == cls)[0]
            idx = rng.permutation(idx)
            for i in idx:
                fold_of[i] = pointer % k
                pointer += 1
    return FoldAssignment(fold_of=fold_of, k=k, method=method, seed=seed)
