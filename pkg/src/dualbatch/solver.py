"""Mini-batch stochastic dual coordinate ascent.

The iterate is the dual vector alpha (length n) together with its maintained
primal image w = (1/lam*n) X.T alpha. One iteration draws a coordinate
subset, snapshots the margins x_i.T w against the pre-iteration w, solves the
relaxed one-dimensional subproblem for every drawn coordinate independently,
and applies the deltas in ascending coordinate order. Safety of the
independent updates is exactly what the ESO weights certify.

Gap checkpoints (every ceil(n/b) iterations by default) recompute w from
scratch, verify the incremental drift bound, evaluate primal/dual/gap, and
test the stopping rule. All randomness is drawn from per-iteration counter
streams, so a run is fully determined by (seed, config) and is independent
of chunking and thread count.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import Dataset, matvec, primal_image
from .errors import ConfigError, FeasibilityError
from .eso import EsoWeights, _weights_vector
from .losses import (LossModel, check_feasible, conjugate_value,
                     coordinate_update, loss_value)
from .sampling import DistributedSampling, SamplingScheme, iteration_rng

_NO_AVERAGING = 1 << 62


@dataclass
class SolveConfig:
    loss: LossModel
    lam: float
    scheme: SamplingScheme
    weights: EsoWeights | np.ndarray
    target_gap: float = 1e-6
    max_epochs: float = 100.0
    max_iters: int | None = None
    seed: int = 0
    threads: int = 1
    checkpoint_every: int | None = None
    average_from: int | None = None   # T0: accumulate iterates after t > T0
    output: str = "last"              # "last" | "average"
    cocoa_h: int = 0                  # >0 switches to the CoCoA comparison mode
    sigma_prime: float | None = None  # CoCoA aggregation parameter; default C
    backend: str = "active"

    def validate(self, ds: Dataset) -> None:
        if self.lam <= 0.0:
            raise ConfigError("lam must be positive")
        if self.target_gap <= 0.0:
            raise ConfigError("target gap must be positive")
        if self.max_epochs < 1.0:
            raise ConfigError("max epochs must be at least 1")
        if self.max_iters is not None and self.max_iters < 0:
            raise ConfigError("max iters must be nonnegative")
        if self.threads < 1:
            raise ConfigError("thread count must be at least 1")
        if self.output not in ("last", "average"):
            raise ConfigError("output must be 'last' or 'average'")
        if self.output == "average" and self.average_from is None:
            raise ConfigError("output 'average' requires average_from (T0)")
        if self.average_from is not None and self.average_from < 0:
            raise ConfigError("average_from must be nonnegative")
        if self.scheme.n != ds.n:
            raise ConfigError(
                f"scheme is for n={self.scheme.n}, dataset has n={ds.n}")
        if self.cocoa_h < 0:
            raise ConfigError("cocoa local step count must be nonnegative")
        if self.cocoa_h > 0 and not isinstance(self.scheme, DistributedSampling):
            raise ConfigError("the CoCoA mode requires distributed sampling")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ConfigError("checkpoint interval must be at least 1")
        _weights_vector(self.weights, ds.n)


@dataclass
class SolverState:
    alpha: np.ndarray
    w: np.ndarray
    t: int = 0
    updates: int = 0
    avg_sum: np.ndarray | None = None
    m_buf: np.ndarray | None = None
    d_buf: np.ndarray | None = None


@dataclass(frozen=True)
class TraceRecord:
    t: int
    epochs: float
    primal: float
    dual: float
    gap: float
    updates: int
    wall_s: float


@dataclass
class SolveResult:
    status: str                  # "converged" | "budget"
    alpha: np.ndarray            # output iterate per config.output
    w: np.ndarray                # primal image of the output iterate
    gap: float                   # duality gap of the output iterate
    trace: list[TraceRecord]
    iterations: int
    epochs: float
    updates: int
    alpha_last: np.ndarray
    average: np.ndarray | None
    best_gap: float
    best_t: int
    notes: list[str] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def init_state(ds: Dataset, config: SolveConfig) -> SolverState:
    b = config.scheme.batch
    return SolverState(
        alpha=np.zeros(ds.n),
        w=np.zeros(ds.d),
        avg_sum=np.zeros(ds.n),
        m_buf=np.empty(b),
        d_buf=np.empty(b),
    )


# ---------------------------------------------------------------------------
# objective values

def primal_value(ds: Dataset, loss: LossModel, w: np.ndarray, lam: float) -> float:
    """P(w) = (1/n) sum phi_i(x_i.T w) + (lam/2) ||w||^2."""
    if lam <= 0.0:
        raise ConfigError("lam must be positive")
    m = matvec(ds, w)
    return float(np.mean(loss_value(loss, m, ds.labels))) \
        + 0.5 * lam * float(w @ w)


def dual_value(ds: Dataset, loss: LossModel, alpha: np.ndarray, lam: float) -> float:
    """D(alpha) = -(1/n) sum phi_i*(-alpha_i) - (lam/2) ||w_alpha||^2."""
    w = primal_image(ds, alpha, lam)
    conj = np.asarray(conjugate_value(loss, alpha, ds.labels))
    if np.any(np.isinf(conj)):
        raise FeasibilityError("alpha is dual-infeasible (infinite conjugate)")
    return -float(np.mean(conj)) - 0.5 * lam * float(w @ w)


def duality_gap(ds: Dataset, loss: LossModel, alpha: np.ndarray, lam: float) -> float:
    """P(w_alpha) - D(alpha) with w_alpha recomputed from scratch."""
    w = primal_image(ds, alpha, lam)
    return primal_value(ds, loss, w, lam) - dual_value(ds, loss, alpha, lam)


def h_value(ds: Dataset, loss: LossModel, alpha: np.ndarray, t: np.ndarray,
            lam: float, weights) -> float:
    """Separable surrogate of the dual around alpha, evaluated at step t:

    H(t; alpha) = -(1/n) sum phi_i*(-(alpha_i+t_i)) - (lam/2)||w_alpha||^2
                  - (lam/2)||(1/lam*n) t||_v^2 - (1/n) t.T X w_alpha.

    H(0; alpha) = D(alpha), and the per-coordinate closed-form updates
    jointly maximize H over t.
    """
    v = _weights_vector(weights, ds.n)
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (ds.n,):
        raise ConfigError(f"t has shape {t.shape}, expected ({ds.n},)")
    w = primal_image(ds, alpha, lam)
    conj = np.asarray(conjugate_value(loss, np.asarray(alpha) + t, ds.labels))
    if np.any(np.isinf(conj)):
        raise FeasibilityError("alpha + t is dual-infeasible")
    lam_n = lam * ds.n
    return (-float(np.mean(conj))
            - 0.5 * lam * float(w @ w)
            - 0.5 * lam * float(v @ (t * t)) / lam_n ** 2
            - float(t @ matvec(ds, w)) / ds.n)


def update_vector(ds: Dataset, loss: LossModel, alpha: np.ndarray, lam: float,
                  weights) -> np.ndarray:
    """The full closed-form update map: delta_i for every coordinate i,
    all computed against the same w_alpha snapshot."""
    v = _weights_vector(weights, ds.n)
    w = primal_image(ds, alpha, lam)
    m = matvec(ds, w)
    out = np.empty(ds.n)
    for i in range(ds.n):
        out[i] = coordinate_update(loss, float(alpha[i]), float(m[i]),
                                   float(ds.labels[i]), float(v[i]), lam, ds.n)
    return out


# ---------------------------------------------------------------------------
# steps

def _run_iterations(state: SolverState, ds: Dataset, config: SolveConfig,
                    count: int, v: np.ndarray, ns: dict) -> None:
    """Advance `count` iterations through the kernel, one draw per iteration."""
    parts = [config.scheme.draw(iteration_rng(config.seed, state.t + k))
             for k in range(count)]
    sizes = np.fromiter((p.size for p in parts), dtype=np.int64, count=count)
    dptr = np.zeros(count + 1, dtype=np.int64)
    np.cumsum(sizes, out=dptr[1:])
    draws = np.concatenate(parts)
    avg_from = (config.average_from + 1 if config.average_from is not None
                else _NO_AVERAGING)
    ns["run_chunk"](ds.indptr, ds.indices, ds.data, ds.labels, state.alpha,
                    state.w, state.avg_sum, v, draws, dptr,
                    config.loss.code, config.loss.gamma,
                    config.lam * ds.n, 1.0 / (config.lam * ds.n),
                    state.t, avg_from, state.m_buf, state.d_buf)
    state.t += count
    state.updates += int(draws.size)


def msdca_step(state: SolverState, ds: Dataset, config: SolveConfig) -> SolverState:
    """One iteration: draw S_t, snapshot margins, update each drawn
    coordinate independently, apply deltas in ascending order."""
    ns = kernels.get_backend(config.backend)
    v = _weights_vector(config.weights, ds.n)
    _run_iterations(state, ds, config, 1, v, ns)
    return state


def cocoa_step(state: SolverState, ds: Dataset, config: SolveConfig) -> SolverState:
    """One outer round of the additive local-solver comparison mode.

    Each machine draws its b/C coordinates (the same distributed draw the
    solver would make), then runs H sequential local dual-ascent steps
    against its own correction u_c, cycling its sampled set in a freshly
    shuffled order. Local subproblems use weight sigma' * ||x_i||^2 and see
    the margin x_i.T w + (sigma'/lam*n) x_i.T u_c. Machine results are added:
    alpha += sum of local deltas, w += (1/lam*n) sum u_c. With b=C, H=1 and
    sigma'=C this reproduces msdca_step with v_i = C*||x_i||^2 bit for bit
    (contiguous partition).
    """
    scheme = config.scheme
    if not isinstance(scheme, DistributedSampling):
        raise ConfigError("the CoCoA mode requires distributed sampling")
    H = config.cocoa_h
    if H < 1:
        raise ConfigError("cocoa_step requires at least one local step")
    ns = kernels.get_backend(config.backend)
    row_dot = ns["row_dot"]
    sp = float(scheme.C) if config.sigma_prime is None else float(config.sigma_prime)
    if sp <= 0.0:
        raise ConfigError("sigma_prime must be positive")

    lam_n = config.lam * ds.n
    inv_lam_n = 1.0 / lam_n
    rng = iteration_rng(config.seed, state.t)
    union = scheme.draw(rng)

    locals_: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    for c in range(scheme.C):
        loc = union[scheme.cell_of[union] == c]
        order = rng.permutation(loc.size)
        u_c = np.zeros(ds.d)
        delta_loc = np.zeros(loc.size)
        for step in range(H):
            pos = int(order[step % loc.size])
            i = int(loc[pos])
            m_eff = row_dot(ds.indptr, ds.indices, ds.data, state.w, i) \
                + (sp * inv_lam_n) * row_dot(ds.indptr, ds.indices, ds.data, u_c, i)
            de = coordinate_update(
                config.loss, float(state.alpha[i] + delta_loc[pos]), m_eff,
                float(ds.labels[i]), sp * float(ds.row_norms_sq[i]),
                config.lam, ds.n)
            delta_loc[pos] += de
            lo, hi = ds.indptr[i], ds.indptr[i + 1]
            u_c[ds.indices[lo:hi]] += de * ds.data[lo:hi]
        locals_.append((loc, delta_loc, u_c))

    for loc, delta_loc, u_c in locals_:
        state.alpha[loc] += delta_loc
        state.w += inv_lam_n * u_c
    state.t += 1
    state.updates += scheme.C * H
    if config.average_from is not None and state.t >= config.average_from + 1:
        state.avg_sum += state.alpha
    return state


# ---------------------------------------------------------------------------
# the driver

def _checkpoint(state: SolverState, ds: Dataset, config: SolveConfig,
                wall0: float) -> TraceRecord:
    w_scratch = primal_image(ds, state.alpha, config.lam)
    drift = float(np.max(np.abs(state.w - w_scratch))) if ds.d else 0.0
    bound = 1e-9 * (1.0 + float(np.max(np.abs(w_scratch))))
    if drift > bound:
        raise FeasibilityError(
            f"maintained primal image drifted by {drift!r} (bound {bound!r})")
    # the incremental w stays the trajectory: adopting w_scratch here would
    # make the low bits of a run depend on the checkpoint interval
    check_feasible(config.loss, state.alpha, ds.labels)

    m = matvec(ds, w_scratch)
    p = float(np.mean(loss_value(config.loss, m, ds.labels))) \
        + 0.5 * config.lam * float(w_scratch @ w_scratch)
    conj = np.asarray(conjugate_value(config.loss, state.alpha, ds.labels))
    if np.any(np.isinf(conj)):
        raise FeasibilityError("alpha is dual-infeasible (infinite conjugate)")
    d_val = -float(np.mean(conj)) - 0.5 * config.lam * float(w_scratch @ w_scratch)
    b = config.scheme.batch
    return TraceRecord(t=state.t, epochs=state.t * b / ds.n, primal=p,
                       dual=d_val, gap=p - d_val, updates=state.updates,
                       wall_s=time.perf_counter() - wall0)


def solve(ds: Dataset, config: SolveConfig) -> SolveResult:
    """Run to the target gap or the iteration/epoch budget.

    Emits a trace record at t=0 and then every checkpoint interval
    (default ceil(n/b) iterations). On budget exhaustion the best-gap
    checkpoint iterate is returned with status "budget" (not an error).
    When averaging is enabled, iterates strictly after T0 are accumulated
    and the tail average (sum over t in [T0+1, T-1]) / (T - T0) is formed
    at exit.
    """
    config.validate(ds)
    v = _weights_vector(config.weights, ds.n)
    ns = kernels.get_backend(config.backend)
    n, b = ds.n, config.scheme.batch
    interval = config.checkpoint_every or math.ceil(n / b)

    budget = math.ceil(config.max_epochs * n / b)
    if config.max_iters is not None:
        budget = min(budget, config.max_iters)

    state = init_state(ds, config)
    wall0 = time.perf_counter()
    notes: list[str] = []

    rec = _checkpoint(state, ds, config, wall0)
    trace = [rec]
    best_gap, best_t = rec.gap, 0
    best_alpha = state.alpha.copy()

    while rec.gap > config.target_gap and state.t < budget:
        chunk = min(interval, budget - state.t)
        if config.cocoa_h > 0:
            for _ in range(chunk):
                cocoa_step(state, ds, config)
        else:
            _run_iterations(state, ds, config, chunk, v, ns)
        rec = _checkpoint(state, ds, config, wall0)
        trace.append(rec)
        if rec.gap < best_gap:
            best_gap, best_t = rec.gap, state.t
            best_alpha = state.alpha.copy()

    status = "converged" if rec.gap <= config.target_gap else "budget"

    average = None
    if config.average_from is not None:
        t0 = config.average_from
        if state.t > t0:
            average = (state.avg_sum - state.alpha) / (state.t - t0)
        else:
            notes.append(
                f"averaging window [T0+1, T-1] never entered (T0={t0}, "
                f"stopped at t={state.t})")

    if config.output == "average" and average is not None:
        alpha_out = average
        gap_out = duality_gap(ds, config.loss, average, config.lam)
    elif status == "converged" or config.output == "average":
        if config.output == "average":
            notes.append("falling back to the last iterate")
        alpha_out = state.alpha.copy()
        gap_out = rec.gap
    else:
        alpha_out = best_alpha
        gap_out = best_gap
    w_out = primal_image(ds, alpha_out, config.lam)

    return SolveResult(status=status, alpha=alpha_out, w=w_out, gap=gap_out,
                       trace=trace, iterations=state.t,
                       epochs=state.t * b / n, updates=state.updates,
                       alpha_last=state.alpha.copy(), average=average,
                       best_gap=best_gap, best_t=best_t, notes=notes)
