"""Coordinate-subset sampling: serial, b-nice, and (C,b)-distributed.

Draws use a partial Fisher-Yates shuffle on a persistent index buffer with
undo, so each draw costs O(b) and is exactly uniform. Randomness comes from
counter-based Philox streams: ``iteration_rng(seed, t)`` yields an
independent stream per iteration index, so traces are reproducible and
independent of how iterations are grouped into chunks.
"""

from __future__ import annotations

import math
from itertools import combinations, product
from pathlib import Path

import numpy as np

from .errors import ConfigError, SupportTooLargeError

SUPPORT_LIMIT = 100_000

# purpose words keep the solver's draw streams, verification trials, and any
# future consumers of the same seed from colliding
_PURPOSE_VERIFY = 1
_PURPOSE_SIGMA_PRIME = 2


def iteration_rng(seed: int, t: int) -> np.random.Generator:
    """Independent stream for iteration t of a run keyed by ``seed``."""
    if t < 0:
        raise ConfigError("iteration index must be nonnegative")
    return np.random.Generator(np.random.Philox(key=seed % (1 << 128),
                                                counter=t << 128))


def purpose_rng(seed: int, purpose: int) -> np.random.Generator:
    """Stream for a non-solver purpose (verification trials etc.)."""
    return np.random.Generator(np.random.Philox(key=seed % (1 << 128),
                                                counter=purpose << 192))


def _sample_without_replacement(buf: np.ndarray, k: int,
                                rng: np.random.Generator) -> np.ndarray:
    """Draw k distinct entries of ``buf`` uniformly; ``buf`` is restored."""
    m = buf.shape[0]
    js = rng.integers(low=np.arange(k), high=m)
    for t in range(k):
        j = js[t]
        buf[t], buf[j] = buf[j], buf[t]
    out = buf[:k].copy()
    for t in range(k - 1, -1, -1):
        j = js[t]
        buf[t], buf[j] = buf[j], buf[t]
    out.sort()
    return out


class SerialSampling:
    """One uniformly random coordinate per iteration."""

    kind = "serial"

    def __init__(self, n: int):
        if n < 1:
            raise ConfigError("n must be positive")
        self.n = int(n)
        self.batch = 1
        self.C = 1

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([rng.integers(0, self.n)], dtype=np.int64)

    def marginal(self, i: int) -> float:
        _check_index(i, self.n)
        return 1.0 / self.n

    def support_size(self) -> int:
        return self.n

    def enumerate_support(self):
        p = 1.0 / self.n
        return [((i,), p) for i in range(self.n)]

    def __repr__(self):
        return f"SerialSampling(n={self.n})"


class NiceSampling:
    """Uniform over all size-b subsets of the n coordinates."""

    kind = "nice"

    def __init__(self, n: int, b: int):
        if n < 1:
            raise ConfigError("n must be positive")
        if not (1 <= b <= n):
            raise ConfigError(f"batch b={b} must satisfy 1 <= b <= n={n}")
        self.n = int(n)
        self.batch = int(b)
        self.C = 1
        self._buf = np.arange(n, dtype=np.int64)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return _sample_without_replacement(self._buf, self.batch, rng)

    def marginal(self, i: int) -> float:
        _check_index(i, self.n)
        return self.batch / self.n

    def support_size(self) -> int:
        return math.comb(self.n, self.batch)

    def enumerate_support(self):
        size = self.support_size()
        if size > SUPPORT_LIMIT:
            raise SupportTooLargeError(size, SUPPORT_LIMIT)
        p = 1.0 / size
        return [(s, p) for s in combinations(range(self.n), self.batch)]

    def __repr__(self):
        return f"NiceSampling(n={self.n}, b={self.batch})"


class DistributedSampling:
    """Union of independent uniform (b/C)-subsets of each partition cell."""

    kind = "distributed"

    def __init__(self, n: int, b: int, C: int, cell_of: np.ndarray | None = None):
        if n < 1:
            raise ConfigError("n must be positive")
        if C < 1:
            raise ConfigError("machines C must be >= 1")
        if n % C != 0:
            raise ConfigError(f"C={C} does not divide n={n}")
        if b < 1 or b % C != 0:
            raise ConfigError(f"C={C} does not divide batch b={b}")
        if b // C > n // C:
            raise ConfigError(f"per-cell batch {b // C} exceeds cell size {n // C}")
        self.n = int(n)
        self.batch = int(b)
        self.C = int(C)
        if cell_of is None:
            cell_of = np.repeat(np.arange(C, dtype=np.int64), n // C)
        else:
            cell_of = np.asarray(cell_of, dtype=np.int64)
            if cell_of.shape != (n,):
                raise ConfigError(f"partition must assign all {n} coordinates")
            counts = np.bincount(cell_of, minlength=C) if cell_of.min() >= 0 else None
            if counts is None or cell_of.max() >= C or len(counts) != C \
                    or np.any(counts != n // C):
                raise ConfigError(
                    f"partition must split {n} coordinates into {C} cells "
                    f"of exactly {n // C}")
        self.cell_of = cell_of
        self.cells = [np.flatnonzero(cell_of == c).astype(np.int64)
                      for c in range(C)]
        self._bufs = [c.copy() for c in self.cells]

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        k = self.batch // self.C
        parts = [_sample_without_replacement(buf, k, rng) for buf in self._bufs]
        out = np.concatenate(parts)
        out.sort()
        return out

    def marginal(self, i: int) -> float:
        _check_index(i, self.n)
        return self.batch / self.n

    def support_size(self) -> int:
        return math.comb(self.n // self.C, self.batch // self.C) ** self.C

    def enumerate_support(self):
        size = self.support_size()
        if size > SUPPORT_LIMIT:
            raise SupportTooLargeError(size, SUPPORT_LIMIT)
        k = self.batch // self.C
        per_cell = [list(combinations(cell.tolist(), k)) for cell in self.cells]
        p = 1.0
        for choices in per_cell:
            p /= len(choices)
        out = []
        for combo in product(*per_cell):
            merged = tuple(sorted(i for part in combo for i in part))
            out.append((merged, p))
        return out

    def __repr__(self):
        return (f"DistributedSampling(n={self.n}, b={self.batch}, C={self.C})")


SamplingScheme = SerialSampling | NiceSampling | DistributedSampling


def _check_index(i: int, n: int) -> None:
    if not (0 <= i < n):
        raise ConfigError(f"coordinate {i} out of range [0, {n})")


def load_partition(path: str | Path, n: int, C: int) -> np.ndarray:
    """Read a partition file: one cell id (0..C-1) per line, n lines."""
    cell_of = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                cell_of.append(int(line))
            except ValueError:
                raise ConfigError(
                    f"{path}:{line_no}: invalid cell id {line!r}") from None
    if len(cell_of) != n:
        raise ConfigError(
            f"partition file has {len(cell_of)} entries, expected {n}")
    return np.asarray(cell_of, dtype=np.int64)


def make_sampling(kind: str, n: int, b: int = 1, C: int = 1,
                  cell_of: np.ndarray | None = None) -> SamplingScheme:
    """Factory used by the CLI: kind in {serial, nice, distributed}."""
    if kind == "serial":
        if b not in (0, 1):
            raise ConfigError("serial sampling has batch size 1")
        return SerialSampling(n)
    if kind == "nice":
        return NiceSampling(n, b)
    if kind == "distributed":
        return DistributedSampling(n, b, C, cell_of)
    raise ConfigError(f"unknown sampling kind {kind!r}")
