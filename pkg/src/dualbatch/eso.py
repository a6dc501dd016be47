"""Safe step-size weights and their spectral diagnostics.

The solver's relaxed update is only safe (never decreases the dual in
expectation) when the weight vector v certifies a separable quadratic upper
bound on E[f(alpha + t_[S])] for f(alpha) = ||(1/lam*n) X.T alpha||^2 under
the configured sampling. This module computes v for each sampling family,
the spectral quantity sigma^2 and its sparsity surrogate omega that the
formulas consume, the scalar multiplier beta, and an empirical verifier of
the inequality itself (exact over an enumerated support, or Monte Carlo).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, matvec, rmatvec
from .errors import ConfigError, PowerIterationError
from .sampling import (DistributedSampling, NiceSampling, SamplingScheme,
                       SerialSampling)

log = logging.getLogger(__name__)

MODES = ("serial", "standard_dense", "standard_sparse", "distributed",
         "safe_any_b")
DEFAULT_INFLATION = 1e-3


@dataclass(frozen=True)
class EsoWeights:
    v: np.ndarray
    mode: str
    b: int
    C: int
    sigma_sq: float | None = None
    omega: float | None = None
    beta: float | None = None


@dataclass(frozen=True)
class EsoReport:
    passed: bool
    method: str            # "exact" | "mc"
    max_violation: float
    pairs: int
    threshold: float | None = None   # exact-mode absolute threshold
    draws: int | None = None
    max_stderr: float | None = None


# fixed key for the second power-iteration start vector; any constant works,
# it only has to be the same in every process
_START_KEY = 0x9E3779B97F4A7C15


def _power_lmax(indptr, indices, data, rn2, d, tol, max_iters):
    """Largest eigenvalue of R^{-1/2} X X.T R^{-1/2} (R = diag of row norms)
    by power iteration with Rayleigh-quotient estimates.

    Runs from two deterministic starts — all-ones and a fixed pseudo-random
    vector — and returns the larger limit. A single start can sit exactly on
    a non-dominant eigenvector (e.g. all-ones for two negatively correlated
    rows) and converge to the wrong eigenvalue; two independent starts make
    that failure mode vanish.
    """
    m = rn2.shape[0]
    rn = np.sqrt(rn2)
    row_nnz = np.diff(indptr)

    def run(x):
        lam_prev = 0.0
        lam = 0.0
        rel = math.inf
        for it in range(1, max_iters + 1):
            u = x / rn
            z = np.bincount(indices, weights=data * np.repeat(u, row_nnz),
                            minlength=d)
            y = np.add.reduceat(data * z[indices], indptr[:-1]) / rn
            lam = float(x @ y) / float(x @ x)
            if it > 1:
                rel = abs(lam - lam_prev) / max(abs(lam), 1e-300)
                if rel < tol:
                    return lam
            lam_prev = lam
            ny = float(np.linalg.norm(y))
            if ny == 0.0:
                # the iterate fell into the kernel; restart on a basis
                # vector (deterministic cycling keeps runs reproducible)
                x = np.zeros(m)
                x[it % m] = 1.0
            else:
                x = y / ny
        raise PowerIterationError(
            f"power iteration did not converge in {max_iters} iterations "
            f"(last estimate {lam!r}, relative change {rel!r})",
            estimate=lam, rel_change=rel, iterations=max_iters)

    rand = np.random.Generator(np.random.Philox(key=_START_KEY)) \
        .standard_normal(m)
    return max(run(np.ones(m)), run(rand))


def sigma_sq(ds: Dataset, tol: float = 1e-9, max_iters: int = 10_000) -> float:
    """sigma^2 = (1/n) * lambda_max of the row-normalized Gram matrix.

    Always lies in [1/n, 1]; the estimate is clamped to that interval.
    """
    lam = _power_lmax(ds.indptr, ds.indices, ds.data, ds.row_norms_sq, ds.d,
                      tol, max_iters)
    return min(max(lam / ds.n, 1.0 / ds.n), 1.0)


def omega(ds: Dataset, row: bool = False) -> float:
    """Sparsity upper bound on sigma^2 from per-feature nonzero counts.

    omega = max_i (1/n) * sum_j col_nnz[j] * x_ij^2 / ||x_i||^2.

    ``row=True`` returns the per-example variant max_i row_nnz[i]/n instead;
    it is a diagnostic only and is NOT an upper bound on sigma^2.
    """
    if row:
        return float(ds.row_nnz.max()) / ds.n
    weighted = np.add.reduceat(ds.col_nnz[ds.indices] * ds.data * ds.data,
                               ds.indptr[:-1])
    return float(np.max(weighted / ds.row_norms_sq)) / ds.n


def beta(kind: str, n: int, b: int, C: int = 1,
         sigma_sq_value: float | None = None) -> float:
    """Scalar multiplier relating batch weights to the serial weights.

    kind: serial | standard | distributed. The distributed formula routes
    b=C to 1+b*sigma^2 and C<b<2C to the any-b safe bound 2(1+b*sigma^2).
    """
    if kind == "serial":
        return 1.0
    if sigma_sq_value is None:
        raise ConfigError(f"beta({kind!r}) requires sigma^2")
    s = sigma_sq_value
    if kind == "standard":
        if not (1 <= b <= n):
            raise ConfigError(f"b={b} out of range for n={n}")
        return 1.0 + (b - 1) * (n * s - 1.0) / max(1, n - 1)
    if kind == "distributed":
        if b < C:
            raise ConfigError(f"b={b} < C={C}")
        if b == C:
            return 1.0 + b * s
        if b < 2 * C:
            return 2.0 * (1.0 + b * s)
        return b / (b - C) * (1.0 + (b - C) * (n * s - 1.0) / max(C, n - C))
    raise ConfigError(f"unknown beta kind {kind!r}")


_AUTO_MODE = {"serial": "serial", "nice": "standard_dense",
              "distributed": "distributed"}
_COMPATIBLE = {
    "serial": ("serial",),
    "nice": ("standard_dense", "standard_sparse"),
    "distributed": ("distributed", "safe_any_b"),
}


def eso_weights(ds: Dataset, scheme: SamplingScheme, mode: str = "auto",
                sigma_sq_value: float | None = None,
                inflation: float = DEFAULT_INFLATION,
                row_sparsity: bool = False) -> EsoWeights:
    """Weight vector v for (dataset, scheme), one of the certified formulas.

    mode "auto" picks serial / standard_dense / distributed by scheme kind.
    A sigma^2 computed here is inflated by (1+inflation) as a safety margin
    against early power-iteration termination; an explicitly passed
    ``sigma_sq_value`` is used as-is. ``row_sparsity`` switches
    standard_sparse to the per-example count variant — diagnostic only,
    excluded from all guarantees.
    """
    if scheme.n != ds.n:
        raise ConfigError(f"scheme is for n={scheme.n}, dataset has n={ds.n}")
    if mode == "auto":
        mode = _AUTO_MODE[scheme.kind]
    if mode not in MODES:
        raise ConfigError(f"unknown weight mode {mode!r} (expected {MODES})")
    if mode not in _COMPATIBLE[scheme.kind]:
        raise ConfigError(
            f"weight mode {mode!r} is not valid for {scheme.kind} sampling")

    n, b, C = ds.n, scheme.batch, scheme.C
    rn2 = ds.row_norms_sq
    sig: float | None = None
    omg: float | None = None

    def need_sigma() -> float:
        nonlocal sig
        if sig is None:
            if sigma_sq_value is not None:
                sig = float(sigma_sq_value)
            else:
                sig = sigma_sq(ds) * (1.0 + inflation)
        return sig

    if mode == "serial":
        v = rn2.copy()
        bet = 1.0
    elif mode == "standard_dense":
        bet = beta("standard", n, b, sigma_sq_value=need_sigma())
        v = bet * rn2
    elif mode == "standard_sparse":
        if row_sparsity:
            counts = np.repeat(ds.row_nnz, ds.row_nnz)
            omg = omega(ds, row=True)
        else:
            counts = ds.col_nnz[ds.indices]
            omg = omega(ds)
        factor = 1.0 + (b - 1) * (counts - 1.0) / max(1, n - 1)
        v = np.add.reduceat(ds.data * ds.data * factor, ds.indptr[:-1])
        bet = None
    else:  # distributed / safe_any_b
        s = need_sigma()
        if mode == "distributed" and C < b < 2 * C:
            log.info("distributed weights have no exact formula for "
                     "C < b < 2C (b=%d, C=%d); using safe_any_b", b, C)
            mode = "safe_any_b"
        if mode == "safe_any_b":
            bet = 2.0 * (1.0 + b * s)
        else:
            bet = beta("distributed", n, b, C, sigma_sq_value=s)
        v = bet * rn2

    v = np.ascontiguousarray(v, dtype=np.float64)
    if np.any(v < rn2 - 1e-12 * np.abs(rn2)):
        raise ConfigError("weight formula produced v below the serial floor")
    v.setflags(write=False)
    return EsoWeights(v=v, mode=mode, b=b, C=C, sigma_sq=sig, omega=omg,
                      beta=bet)


def _weights_vector(weights, n: int) -> np.ndarray:
    v = np.asarray(getattr(weights, "v", weights), dtype=np.float64)
    if v.shape != (n,):
        raise ConfigError(f"weights have shape {v.shape}, expected ({n},)")
    if np.any(v <= 0.0):
        raise ConfigError("weights must be positive")
    return v


def verify_eso(ds: Dataset, scheme: SamplingScheme, weights, lam: float = 1.0,
               pairs: int = 100, seed: int = 0, method: str = "exact",
               mc_draws: int = 2000) -> EsoReport:
    """Empirically check the separable overapproximation certified by v.

    For random (alpha, t) pairs, compares E[f(alpha + t_[S])] with
    f(alpha) + (E|S|/n) * (<grad f(alpha), t> + ||(1/lam*n) t||_v^2), where
    f(alpha) = ||(1/lam*n) X.T alpha||^2. Exact mode takes the expectation
    over the enumerated support and passes iff the worst violation is
    <= 1e-12; Monte Carlo mode estimates it from draws and passes iff every
    violation is within 3 standard errors.
    """
    if lam <= 0.0:
        raise ConfigError("lam must be positive")
    if method not in ("exact", "mc"):
        raise ConfigError("method must be 'exact' or 'mc'")
    v = _weights_vector(weights, ds.n)
    n, b = ds.n, scheme.batch
    inv2 = 1.0 / (lam * n) ** 2
    rng = np.random.default_rng(seed)

    masks = probs = None
    if method == "exact":
        support = scheme.enumerate_support()
        masks = np.zeros((len(support), n))
        probs = np.empty(len(support))
        for k, (subset, p) in enumerate(support):
            masks[k, list(subset)] = 1.0
            probs[k] = p
        dense = ds.to_dense()

    max_violation = -math.inf
    max_stderr = 0.0
    passed = True
    for _ in range(pairs):
        a = rng.standard_normal(n)
        t = rng.standard_normal(n)
        wa = rmatvec(ds, a)                     # X.T alpha, data scale
        f_a = float(wa @ wa) * inv2
        grad_term = 2.0 * inv2 * float(t @ matvec(ds, wa))
        quad_term = inv2 * float(v @ (t * t))
        rhs = f_a + (b / n) * (grad_term + quad_term)

        if method == "exact":
            shifted = wa[None, :] + (masks * t) @ dense
            lhs = float(probs @ np.einsum("ij,ij->i", shifted, shifted)) * inv2
            violation = lhs - rhs
            if violation > max_violation:
                max_violation = violation
        else:
            vals = np.empty(mc_draws)
            for k in range(mc_draws):
                subset = scheme.draw(rng)
                ts = np.zeros(n)
                ts[subset] = t[subset]
                wt = wa + rmatvec(ds, ts)
                vals[k] = float(wt @ wt) * inv2
            mean = float(vals.mean())
            sem = float(vals.std(ddof=1)) / math.sqrt(mc_draws)
            violation = mean - rhs
            if violation > max_violation:
                max_violation = violation
                max_stderr = sem
            if violation > 3.0 * sem:
                passed = False

    if method == "exact":
        passed = max_violation <= 1e-12
        return EsoReport(passed=passed, method="exact",
                         max_violation=max_violation, pairs=pairs,
                         threshold=1e-12)
    return EsoReport(passed=passed, method="mc", max_violation=max_violation,
                     pairs=pairs, draws=mc_draws, max_stderr=max_stderr)
