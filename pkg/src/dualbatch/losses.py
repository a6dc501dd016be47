"""Loss models: values, convex conjugates, and the per-coordinate dual update.

Four kinds are supported. ``gamma`` is the strong-convexity modulus of the
conjugate (the loss itself is (1/gamma)-smooth when gamma > 0):

==========  ------------------  -----------  ----------
kind        phi_i(z)            gamma        Lipschitz
==========  ------------------  -----------  ----------
hinge       max(0, 1-y*z)       0            1
shinge      quadratically       user (>0)    1
            smoothed hinge
logistic    log(1+exp(-y*z))    4            1
square      (z-y)^2 / 2         1            inf
==========  ------------------  -----------  ----------

The dual variable for the three classification losses is feasible iff
alpha_i*y_i lies in [0, 1]; the quadratic loss is unconstrained.

``coordinate_update`` maximizes the relaxed one-dimensional subproblem

    Q(delta) = -phi_i*(-(alpha_i+delta)) - v_i/(2*lam*n)*delta^2 - margin*delta

in closed form (Newton/bisection for logistic). ``numeric_update_oracle``
maximizes the same Q by golden section without ever consulting the closed
forms; it exists so the closed forms can be checked against an independent
path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FeasibilityError

KINDS = ("hinge", "shinge", "logistic", "square")

# integer codes shared with the compiled kernels
LOSS_CODES = {"hinge": 0, "shinge": 1, "logistic": 2, "square": 3}

_FEAS_TOL = 1e-12


@dataclass(frozen=True)
class LossModel:
    kind: str
    gamma: float
    lipschitz: float

    @property
    def code(self) -> int:
        return LOSS_CODES[self.kind]

    @property
    def smooth(self) -> bool:
        return self.gamma > 0.0


def loss_model(kind: str, gamma: float = 1.0) -> LossModel:
    """Build a LossModel. ``gamma`` is honored only by ``shinge``."""
    if kind == "hinge":
        return LossModel("hinge", 0.0, 1.0)
    if kind == "shinge":
        if not (gamma > 0.0):
            raise ConfigError("shinge requires gamma > 0")
        return LossModel("shinge", float(gamma), 1.0)
    if kind == "logistic":
        return LossModel("logistic", 4.0, 1.0)
    if kind == "square":
        return LossModel("square", 1.0, math.inf)
    raise ConfigError(f"unknown loss kind {kind!r} (expected one of {KINDS})")


def _check_labels(model: LossModel, y: np.ndarray) -> None:
    if model.kind != "square" and not np.all(np.abs(y) == 1.0):
        raise ConfigError(f"{model.kind} loss requires labels in {{-1, +1}}")


def loss_value(model: LossModel, z, y):
    """phi(z) elementwise; scalars in, scalar out."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_labels(model, y)
    yz = y * z
    if model.kind == "hinge":
        out = np.maximum(0.0, 1.0 - yz)
    elif model.kind == "shinge":
        g = model.gamma
        out = np.where(yz >= 1.0, 0.0,
                       np.where(yz <= 1.0 - g,
                                1.0 - yz - g / 2.0,
                                (1.0 - yz) ** 2 / (2.0 * g)))
    elif model.kind == "logistic":
        out = np.logaddexp(0.0, -yz)
    else:
        out = (z - y) ** 2 / 2.0
    return out if out.ndim else float(out)


def _xlogx(t: np.ndarray) -> np.ndarray:
    # t*log(t) with the exact limit 0 at t=0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0.0, t * np.log(np.maximum(t, 1e-300)), 0.0)


def conjugate_value(model: LossModel, a, y):
    """phi*(-a) elementwise: the dual objective contribution of alpha_i = a.

    Returns +inf outside the feasible region (a*y outside [0,1] for the
    classification losses).
    """
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_labels(model, y)
    ay = a * y
    if model.kind == "square":
        out = a * a / 2.0 - ay
    else:
        feas = (ay >= 0.0) & (ay <= 1.0)
        if model.kind == "hinge":
            inner = -ay
        elif model.kind == "shinge":
            inner = -ay + (model.gamma / 2.0) * a * a
        else:  # logistic: binary entropy of ay, negated
            t = np.clip(ay, 0.0, 1.0)
            inner = _xlogx(t) + _xlogx(1.0 - t)
        out = np.where(feas, inner, np.inf)
    return out if out.ndim else float(out)


def subgradient(model: LossModel, z, y):
    """u with -u in the subdifferential of phi at z (minimum-norm at kinks)."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_labels(model, y)
    yz = y * z
    if model.kind == "hinge":
        out = np.where(yz < 1.0, y, 0.0)
    elif model.kind == "shinge":
        g = model.gamma
        out = np.where(yz >= 1.0, 0.0,
                       np.where(yz <= 1.0 - g, y, y * (1.0 - yz) / g))
    elif model.kind == "logistic":
        out = y / (1.0 + np.exp(yz))
    else:
        out = y - z
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# closed-form updates (scalar). The compiled kernels carry textually identical
# arithmetic; keep the expression shapes in sync so results agree bitwise.

def _logistic_aprime(a: float, m: float, y: float, v: float, lam_n: float) -> float:
    """Root of the logistic subproblem's derivative in a' = (alpha+delta)*y.

    Safeguarded Newton with a shrinking bisection bracket; iterates clamped
    to [1e-14, 1-1e-14]; stops at |derivative| <= 1e-12 or bracket collapse.
    """
    ratio = v / lam_n
    ay = a * y
    my = m * y
    lo = 1e-14
    hi = 1.0 - 1e-14
    x = ay
    if x < lo:
        x = lo
    elif x > hi:
        x = hi
    for _ in range(200):
        g = -math.log(x / (1.0 - x)) - ratio * (x - ay) - my
        if abs(g) <= 1e-12:
            break
        if g > 0.0:
            lo = x
        else:
            hi = x
        if hi - lo <= 1e-16:
            break
        gp = -1.0 / x - 1.0 / (1.0 - x) - ratio
        xn = x - g / gp
        if xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
        x = xn
    return x


def _delta_scalar(code: int, gamma: float, a: float, m: float, y: float,
                  v: float, lam_n: float) -> float:
    """Maximizer of Q(delta); dispatch on the integer loss code."""
    if code == 0:  # hinge
        ap = y * a + (1.0 - y * m) * lam_n / v
        if ap < 0.0:
            ap = 0.0
        elif ap > 1.0:
            ap = 1.0
        return y * ap - a
    if code == 1:  # smoothed hinge
        ap = (y * a * v + lam_n * (1.0 - y * m)) / (v + lam_n * gamma)
        if ap < 0.0:
            ap = 0.0
        elif ap > 1.0:
            ap = 1.0
        return y * ap - a
    if code == 3:  # square
        return lam_n * (y - m - a) / (lam_n + v)
    ap = _logistic_aprime(a, m, y, v, lam_n)
    return y * ap - a


def check_feasible(model: LossModel, alpha, y, tol: float = _FEAS_TOL) -> None:
    """Raise FeasibilityError if alpha is outside the dual domain."""
    if model.kind == "square":
        return
    ay = np.asarray(alpha, dtype=np.float64) * np.asarray(y, dtype=np.float64)
    if np.any(ay < -tol) or np.any(ay > 1.0 + tol):
        raise FeasibilityError(
            f"dual variable outside [0, 1] for {model.kind} "
            f"(min={float(np.min(ay))!r}, max={float(np.max(ay))!r})")


def coordinate_update(model: LossModel, alpha_i: float, margin: float,
                      y_i: float, v_i: float, lam: float, n: int) -> float:
    """Closed-form maximizer delta of the relaxed subproblem Q (see module doc).

    ``margin`` is x_i.T w for the snapshot w the batch sees. Raises on
    invalid parameters or an infeasible incoming alpha_i.
    """
    if v_i <= 0.0:
        raise ConfigError("v_i must be positive")
    if lam <= 0.0 or n < 1:
        raise ConfigError("lam must be positive and n >= 1")
    if model.kind != "square" and abs(y_i) != 1.0:
        raise ConfigError(f"{model.kind} loss requires labels in {{-1, +1}}")
    check_feasible(model, alpha_i, y_i)
    return _delta_scalar(model.code, model.gamma, float(alpha_i), float(margin),
                         float(y_i), float(v_i), lam * n)


def update_objective(model: LossModel, alpha, margin, y, v, lam: float, n: int,
                     delta):
    """Q(delta), vectorized; the quantity both update paths maximize."""
    alpha = np.asarray(alpha, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    lam_n = lam * n
    conj = conjugate_value(model, alpha + delta, y)
    return -conj - np.asarray(v) / (2.0 * lam_n) * delta * delta \
        - np.asarray(margin) * delta


def numeric_update_oracle(model: LossModel, alpha, margin, y, v, lam: float,
                          n: int, tol: float = 1e-12):
    """Golden-section maximization of Q(delta); reference path for tests.

    Never consults the closed forms. For the box-constrained losses the
    search bracket is exactly the feasible interval; for the quadratic loss
    the bracket is grown by doubling until it provably contains the maximum.
    Scalar inputs give a scalar; arrays are processed in lockstep.
    """
    alpha_a = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    margin_a = np.atleast_1d(np.asarray(margin, dtype=np.float64))
    y_a = np.atleast_1d(np.asarray(y, dtype=np.float64))
    v_a = np.atleast_1d(np.asarray(v, dtype=np.float64))
    alpha_a, margin_a, y_a, v_a = np.broadcast_arrays(alpha_a, margin_a, y_a, v_a)
    if np.any(v_a <= 0.0) or lam <= 0.0 or n < 1:
        raise ConfigError("v must be positive, lam > 0, n >= 1")
    check_feasible(model, alpha_a, y_a)
    lam_n = lam * n

    def q(delta):
        conj = conjugate_value(model, alpha_a + delta, y_a)
        return -conj - v_a / (2.0 * lam_n) * delta * delta - margin_a * delta

    if model.kind == "square":
        lo = np.full(alpha_a.shape, -1.0)
        hi = np.full(alpha_a.shape, 1.0)
        q0 = q(np.zeros_like(lo))
        for _ in range(200):
            grow_lo = q(lo) > q0
            grow_hi = q(hi) > q0
            if not (np.any(grow_lo) or np.any(grow_hi)):
                break
            lo = np.where(grow_lo, lo * 2.0, lo)
            hi = np.where(grow_hi, hi * 2.0, hi)
    else:
        end0 = -alpha_a                 # alpha+delta = 0
        end1 = y_a - alpha_a            # (alpha+delta)*y = 1
        lo = np.minimum(end0, end1)
        hi = np.maximum(end0, end1)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    width = float(np.max(hi - lo))
    iters = max(1, int(math.ceil(math.log(max(width, tol) / tol)
                                 / math.log(1.0 / invphi))) + 1)
    for _ in range(iters):
        span = hi - lo
        c = hi - invphi * span
        dd = lo + invphi * span
        keep_left = q(c) >= q(dd)
        hi = np.where(keep_left, dd, hi)
        lo = np.where(keep_left, lo, c)
    out = (lo + hi) / 2.0
    return out if np.asarray(alpha).ndim else float(out[0])
