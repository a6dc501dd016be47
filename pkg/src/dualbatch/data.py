"""Sparse dataset container and LIBSVM-style text I/O.

The design matrix is stored as raw CSR arrays (indptr/indices/data) in float64
because the solver kernels consume those arrays directly. Row norms and
per-row/per-column nonzero counts are computed once at construction and
cached; instances are immutable (all arrays are marked read-only).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError, LoadError


@dataclass(frozen=True)
class Dataset:
    """Immutable CSR design matrix with labels and cached statistics.

    Feature indices are 0-based internally; the LIBSVM text format is 1-based
    and converted at the boundary.
    """

    indptr: np.ndarray    # int64, shape (n+1,)
    indices: np.ndarray   # int64, shape (nnz,), strictly increasing per row
    data: np.ndarray      # float64, shape (nnz,)
    labels: np.ndarray    # float64, shape (n,)
    d: int
    row_norms_sq: np.ndarray  # float64, shape (n,)
    row_nnz: np.ndarray       # int64, shape (n,)
    col_nnz: np.ndarray       # int64, shape (d,)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def nnz(self) -> int:
        return self.data.shape[0]

    def to_dense(self) -> np.ndarray:
        """Dense (n, d) copy; intended for small verification instances."""
        out = np.zeros((self.n, self.d))
        for i in range(self.n):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            out[i, self.indices[lo:hi]] = self.data[lo:hi]
        return out


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def make_dataset(indptr, indices, data, labels, d: int | None = None) -> Dataset:
    """Validate raw CSR arrays and build an immutable Dataset.

    Rejects empty rows, zero-norm rows, duplicate/unsorted column indices,
    and out-of-range indices. ``d`` may widen the feature space beyond the
    largest observed index but never truncate it.
    """
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    data = np.ascontiguousarray(data, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.float64)

    n = labels.shape[0]
    if n < 1:
        raise ConfigError("dataset must contain at least one example")
    if indptr.shape != (n + 1,) or indptr[0] != 0 or indptr[-1] != data.shape[0]:
        raise ConfigError("indptr is inconsistent with data length")
    if indices.shape != data.shape:
        raise ConfigError("indices and data must have equal length")
    if not np.all(np.isfinite(data)):
        raise ConfigError("feature values must be finite")
    if not np.all(np.isfinite(labels)):
        raise ConfigError("labels must be finite")

    row_nnz = np.diff(indptr)
    if np.any(row_nnz < 1):
        bad = int(np.argmax(row_nnz < 1))
        raise ConfigError(f"row {bad} has no features")

    # strictly increasing column indices within each row (also catches duplicates)
    if np.any(indices < 0):
        raise ConfigError("negative feature index")
    gaps = np.diff(indices)
    row_starts = indptr[1:-1]  # positions where a new row begins
    interior = np.ones(max(indices.shape[0] - 1, 0), dtype=bool)
    interior[row_starts - 1] = False
    if np.any(gaps[interior] <= 0):
        pos = int(np.flatnonzero(interior & (gaps <= 0))[0])
        row = int(np.searchsorted(indptr, pos, side="right")) - 1
        raise ConfigError(f"row {row}: feature indices must be strictly increasing")

    d_min = int(indices.max()) + 1 if indices.size else 1
    if d is None:
        d = d_min
    elif d < d_min:
        raise ConfigError(f"d={d} is smaller than the largest feature index ({d_min})")

    row_norms_sq = np.add.reduceat(data * data, indptr[:-1])
    if np.any(row_norms_sq <= 0.0):
        bad = int(np.argmax(row_norms_sq <= 0.0))
        raise ConfigError(f"row {bad} has zero norm")
    col_nnz = np.bincount(indices, minlength=d).astype(np.int64)

    return Dataset(
        indptr=_freeze(indptr),
        indices=_freeze(indices),
        data=_freeze(data),
        labels=_freeze(labels),
        d=int(d),
        row_norms_sq=_freeze(row_norms_sq),
        row_nnz=_freeze(row_nnz.astype(np.int64)),
        col_nnz=_freeze(col_nnz),
    )


def parse_libsvm(source: str | Iterable[str], d: int | None = None) -> Dataset:
    """Parse LIBSVM-format text: ``label idx:value ...`` with 1-based indices.

    ``source`` is either one string of newline-separated records or an
    iterable of lines. Blank lines and lines starting with ``#`` are skipped.
    Errors carry the offending 1-based line number.
    """
    if isinstance(source, str):
        source = source.splitlines()

    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    labels: list[float] = []

    for line_no, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LoadError(f"invalid label {tokens[0]!r}", line_no) from None
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LoadError(f"invalid token {tok!r} (expected idx:value)", line_no)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LoadError(f"invalid token {tok!r}", line_no) from None
            if idx < 1:
                raise LoadError(f"feature index {idx} must be >= 1", line_no)
            if idx <= prev:
                raise LoadError(
                    f"feature index {idx} not strictly increasing "
                    f"(duplicate or out of order)", line_no)
            prev = idx
            indices.append(idx - 1)
            values.append(val)
        if len(indices) == indptr[-1]:
            raise LoadError("empty row (no features)", line_no)
        labels.append(label)
        indptr.append(len(indices))

    if not labels:
        raise LoadError("no records found")
    try:
        return make_dataset(indptr, indices, values, labels, d=d)
    except ConfigError as exc:
        raise LoadError(str(exc)) from None


def load_libsvm(path: str | Path, d: int | None = None) -> Dataset:
    """Read a LIBSVM-format file from disk."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm(fh, d=d)


def write_libsvm(ds: Dataset) -> str:
    """Serialize to LIBSVM text. Values use shortest round-trip formatting,
    so ``parse_libsvm(write_libsvm(ds))`` reproduces the dataset exactly."""
    lines = []
    for i in range(ds.n):
        lo, hi = ds.indptr[i], ds.indptr[i + 1]
        feats = " ".join(
            f"{ds.indices[p] + 1}:{float(ds.data[p])!r}" for p in range(lo, hi)
        )
        lines.append(f"{float(ds.labels[i])!r} {feats}")
    return "\n".join(lines) + "\n"


def save_libsvm(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_libsvm(ds))


def normalize_rows(ds: Dataset) -> Dataset:
    """Return a copy with every row scaled to unit Euclidean norm."""
    scale = 1.0 / np.sqrt(ds.row_norms_sq)
    new_data = ds.data * np.repeat(scale, ds.row_nnz)
    return make_dataset(ds.indptr.copy(), ds.indices.copy(), new_data,
                        ds.labels.copy(), d=ds.d)


def matvec(ds: Dataset, w: np.ndarray) -> np.ndarray:
    """X @ w: per-example margins for a primal vector w."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (ds.d,):
        raise ConfigError(f"w has shape {w.shape}, expected ({ds.d},)")
    return np.add.reduceat(ds.data * w[ds.indices], ds.indptr[:-1])


def rmatvec(ds: Dataset, u: np.ndarray) -> np.ndarray:
    """X.T @ u accumulated deterministically (fixed summation order)."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (ds.n,):
        raise ConfigError(f"u has shape {u.shape}, expected ({ds.n},)")
    contrib = ds.data * np.repeat(u, ds.row_nnz)
    return np.bincount(ds.indices, weights=contrib, minlength=ds.d)


margins = matvec


def primal_image(ds: Dataset, alpha: np.ndarray, lam: float) -> np.ndarray:
    """w(alpha) = (1/(lam*n)) X.T alpha, recomputed from scratch."""
    if lam <= 0:
        raise ConfigError("lam must be positive")
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (ds.n,):
        raise ConfigError(f"alpha has shape {alpha.shape}, expected ({ds.n},)")
    return rmatvec(ds, alpha) / (lam * ds.n)


def synthetic_dataset(n: int, d: int, density: float, seed: int,
                      noise: float = 0.0, normalize: bool = True) -> Dataset:
    """Generate a seeded random sparse instance with planted labels.

    Each row gets max(1, round(density*d)) distinct features with
    standard-normal values. Labels are the sign of the margin against a
    random unit-norm hyperplane, then flipped independently with probability
    ``noise``. With ``normalize`` (default) rows are scaled to unit norm.
    """
    if n < 1 or d < 1:
        raise ConfigError("n and d must be positive")
    if not (0.0 < density <= 1.0):
        raise ConfigError("density must be in (0, 1]")
    if not (0.0 <= noise <= 1.0):
        raise ConfigError("noise must be in [0, 1]")
    rng = np.random.default_rng(seed)
    k = max(1, min(d, int(round(density * d))))

    indptr = np.arange(0, n * k + 1, k, dtype=np.int64)
    indices = np.empty(n * k, dtype=np.int64)
    for i in range(n):
        cols = rng.choice(d, size=k, replace=False)
        cols.sort()
        indices[i * k:(i + 1) * k] = cols
    values = rng.standard_normal(n * k)
    # resample the rare exact zero so every stored entry is structural
    zero = values == 0.0
    while np.any(zero):
        values[zero] = rng.standard_normal(int(zero.sum()))
        zero = values == 0.0

    if normalize:
        norms = np.sqrt(np.add.reduceat(values * values, indptr[:-1]))
        values = values / np.repeat(norms, k)

    w_star = rng.standard_normal(d)
    w_star /= np.linalg.norm(w_star)
    margin = np.add.reduceat(values * w_star[indices], indptr[:-1])
    labels = np.where(margin >= 0.0, 1.0, -1.0)
    if noise > 0.0:
        flips = rng.random(n) < noise
        labels = np.where(flips, -labels, labels)

    return make_dataset(indptr, indices, values, labels, d=d)
