"""Solver behavior: objective values, exactness, safety, and determinism."""

import dataclasses
import math

import numpy as np
import pytest

import dualbatch as db
from dualbatch.losses import numeric_update_oracle, update_objective
from dualbatch.solver import _checkpoint, init_state

from helpers import dataset_from_dense, feasible_alpha, random_dense_dataset


def _config(ds, **kw):
    kw.setdefault("loss", db.loss_model("shinge", 1.0))
    kw.setdefault("lam", 0.1)
    kw.setdefault("scheme", db.SerialSampling(ds.n))
    if "weights" not in kw:
        kw["weights"] = db.eso_weights(ds, kw["scheme"])
    return db.SolveConfig(**kw)


def dense_objectives(ds, loss, alpha, lam):
    X = ds.to_dense()
    w = X.T @ alpha / (lam * ds.n)
    p = float(np.mean(db.loss_value(loss, X @ w, ds.labels))) \
        + 0.5 * lam * float(w @ w)
    d = -float(np.mean(db.conjugate_value(loss, alpha, ds.labels))) \
        - 0.5 * lam * float(w @ w)
    return w, p, d


# ---------------------------------------------------------------------------
# objective values

def test_objective_values_match_dense_oracle():
    rng = np.random.default_rng(30)
    for kind in ("hinge", "shinge", "logistic", "square"):
        loss = db.loss_model(kind, 0.8)
        for _ in range(10):
            ds = random_dense_dataset(rng, int(rng.integers(4, 20)),
                                      int(rng.integers(2, 8)))
            alpha = feasible_alpha(rng, loss, ds.labels)
            lam = float(rng.uniform(0.01, 1.0))
            w, p, d = dense_objectives(ds, loss, alpha, lam)
            assert db.primal_value(ds, loss, w, lam) == pytest.approx(p, rel=1e-12)
            assert db.dual_value(ds, loss, alpha, lam) == pytest.approx(d, rel=1e-12, abs=1e-14)
            assert db.duality_gap(ds, loss, alpha, lam) \
                == pytest.approx(p - d, rel=1e-10, abs=1e-12)


def test_objective_trivial_values():
    rng = np.random.default_rng(31)
    ds = random_dense_dataset(rng, 10, 4)
    zero_w, zero_a = np.zeros(ds.d), np.zeros(ds.n)
    for kind, p0 in (("hinge", 1.0), ("square", 0.5)):
        loss = db.loss_model(kind)
        assert db.primal_value(ds, loss, zero_w, 0.3) == pytest.approx(p0)
        assert db.dual_value(ds, loss, zero_a, 0.3) == 0.0
        assert db.duality_gap(ds, loss, zero_a, 0.3) == pytest.approx(p0)
    assert db.dual_value(ds, db.loss_model("logistic"), zero_a, 0.3) == 0.0


def test_weak_duality():
    rng = np.random.default_rng(32)
    loss = db.loss_model("logistic")
    for _ in range(20):
        ds = random_dense_dataset(rng, 12, 5)
        lam = float(rng.uniform(0.05, 0.5))
        alpha = feasible_alpha(rng, loss, ds.labels)
        w_any = rng.standard_normal(ds.d)
        assert db.dual_value(ds, loss, alpha, lam) \
            <= db.primal_value(ds, loss, w_any, lam) + 1e-12
        assert db.duality_gap(ds, loss, alpha, lam) >= -1e-12


def test_dual_infeasible_raises():
    rng = np.random.default_rng(33)
    ds = random_dense_dataset(rng, 6, 3)
    bad = -0.5 * ds.labels  # alpha_i * y_i = -0.5 outside [0, 1]
    with pytest.raises(db.FeasibilityError):
        db.dual_value(ds, db.loss_model("hinge"), bad, 0.1)
    with pytest.raises(db.ConfigError):
        db.primal_value(ds, db.loss_model("hinge"), np.zeros(3), 0.0)


# ---------------------------------------------------------------------------
# the separable surrogate

def test_h_value_identity():
    # H(t) = D(alpha+t) + (lam/2) * (||X.T t||^2 - sum v_i t_i^2) / (lam n)^2
    rng = np.random.default_rng(34)
    loss = db.loss_model("shinge", 1.0)
    for _ in range(25):
        ds = random_dense_dataset(rng, 10, 4)
        lam = float(rng.uniform(0.05, 0.5))
        v = ds.row_norms_sq * float(rng.uniform(1.0, 3.0))
        alpha = feasible_alpha(rng, loss, ds.labels)
        t = feasible_alpha(rng, loss, ds.labels) - alpha
        X = ds.to_dense()
        xt = X.T @ t
        corr = 0.5 * lam * (float(xt @ xt) - float(v @ (t * t))) / (lam * ds.n) ** 2
        h = db.h_value(ds, loss, alpha, t, lam, v)
        d_shift = db.dual_value(ds, loss, alpha + t, lam)
        assert h == pytest.approx(d_shift + corr, rel=1e-12, abs=1e-13)
        assert db.h_value(ds, loss, alpha, np.zeros(ds.n), lam, v) \
            == pytest.approx(db.dual_value(ds, loss, alpha, lam), rel=1e-12)


def test_update_vector_maximizes_h():
    rng = np.random.default_rng(35)
    loss = db.loss_model("logistic")
    ds = random_dense_dataset(rng, 12, 5)
    lam = 0.1
    v = 2.5 * ds.row_norms_sq
    alpha = feasible_alpha(rng, loss, ds.labels, scale=0.9)
    t_star = db.update_vector(ds, loss, alpha, lam, v)
    h_star = db.h_value(ds, loss, alpha, t_star, lam, v)
    for _ in range(300):
        t = feasible_alpha(rng, loss, ds.labels) - alpha
        assert h_star >= db.h_value(ds, loss, alpha, t, lam, v) - 1e-12


# ---------------------------------------------------------------------------
# steps

def test_serial_steps_are_exact_coordinate_ascent():
    rng = np.random.default_rng(36)
    ds = random_dense_dataset(rng, 16, 6)
    loss = db.loss_model("hinge")
    lam = 0.05
    config = _config(ds, loss=loss, lam=lam, seed=7)
    state = init_state(ds, config)
    v = ds.row_norms_sq
    d_prev = db.dual_value(ds, loss, state.alpha, lam)
    for t in range(100):
        i = int(config.scheme.draw(db.iteration_rng(7, t))[0])
        a_before = float(state.alpha[i])
        m = float(np.dot(ds.to_dense()[i], state.w))
        ref = numeric_update_oracle(loss, a_before, m, float(ds.labels[i]),
                                    float(v[i]), lam, ds.n)
        db.msdca_step(state, ds, config)
        de = float(state.alpha[i]) - a_before
        q = lambda x: update_objective(loss, a_before, m, float(ds.labels[i]),
                                       float(v[i]), lam, ds.n, x)
        # as good as the numeric maximizer of the exact coordinate restriction
        assert q(de) >= q(ref) - 1e-10
        d_now = db.dual_value(ds, loss, state.alpha, lam)
        assert d_now >= d_prev - 1e-14  # serial ascent never goes downhill
        d_prev = d_now
    assert state.t == 100 and state.updates == 100


def test_safe_weights_ascend_where_naive_overshoots():
    # four identical examples, full batch: independent unit steps collide
    ds = dataset_from_dense(np.repeat([[1.0, 0.0]], 4, axis=0), np.ones(4))
    loss = db.loss_model("hinge")
    lam = 0.25  # lam * n = 1
    scheme = db.NiceSampling(4, 4)

    naive = _config(ds, loss=loss, lam=lam, scheme=scheme,
                    weights=ds.row_norms_sq.copy())
    st = init_state(ds, naive)
    db.msdca_step(st, ds, naive)
    assert np.allclose(st.alpha, 1.0)  # every coordinate jumps to its bound
    assert db.dual_value(ds, loss, st.alpha, lam) == pytest.approx(-1.0)

    safe = _config(ds, loss=loss, lam=lam, scheme=scheme,
                   weights=db.eso_weights(ds, scheme, sigma_sq_value=1.0))
    st = init_state(ds, safe)
    db.msdca_step(st, ds, safe)
    assert np.allclose(st.alpha, 0.25)
    assert db.dual_value(ds, loss, st.alpha, lam) == pytest.approx(0.125)
    assert db.dual_value(ds, loss, st.alpha, lam) > 0.0 > -1.0


# ---------------------------------------------------------------------------
# solve

def test_solve_converges_for_every_loss():
    ds = db.synthetic_dataset(n=60, d=10, density=0.8, seed=1, noise=0.05)
    for kind, gamma, target in (("hinge", None, 1e-3), ("shinge", 1.0, 1e-6),
                                ("logistic", None, 1e-6), ("square", None, 1e-6)):
        loss = db.loss_model(kind) if gamma is None else db.loss_model(kind, gamma)
        scheme = db.NiceSampling(60, 6)
        config = db.SolveConfig(loss=loss, lam=0.05, scheme=scheme,
                                weights=db.eso_weights(ds, scheme),
                                target_gap=target, max_epochs=3000, seed=2)
        res = db.solve(ds, config)
        assert res.converged, (kind, res.gap)
        assert res.gap <= target
        assert res.gap == pytest.approx(
            db.duality_gap(ds, loss, res.alpha, 0.05), rel=1e-9, abs=1e-15)
        assert res.trace[0].t == 0
        assert res.trace[0].gap == pytest.approx(
            db.duality_gap(ds, loss, np.zeros(60), 0.05), rel=1e-12)


def test_solve_trace_bookkeeping():
    ds = db.synthetic_dataset(n=40, d=8, density=1.0, seed=3)
    scheme = db.NiceSampling(40, 8)
    config = db.SolveConfig(loss=db.loss_model("shinge", 1.0), lam=0.1,
                            scheme=scheme, weights=db.eso_weights(ds, scheme),
                            target_gap=1e-12, max_iters=20, max_epochs=1e6)
    res = db.solve(ds, config)
    assert res.status == "budget"
    assert res.iterations == 20 and res.updates == 160
    assert [r.t for r in res.trace] == [0, 5, 10, 15, 20]
    for r in res.trace:
        assert r.epochs == pytest.approx(r.t * 8 / 40)
        assert r.updates == r.t * 8
        assert r.gap == pytest.approx(r.primal - r.dual, rel=1e-12, abs=1e-15)
    walls = [r.wall_s for r in res.trace]
    assert all(b >= a for a, b in zip(walls, walls[1:]))
    # budget exit returns the best checkpoint, which here is the newest
    gaps = [r.gap for r in res.trace]
    assert res.best_gap == min(gaps)
    assert res.gap == res.best_gap
    assert res.best_t == res.trace[int(np.argmin(gaps))].t


def test_solve_is_invariant_to_chunking_and_threads():
    ds = db.synthetic_dataset(n=30, d=6, density=0.7, seed=4)
    scheme = db.NiceSampling(30, 5)
    base = dict(loss=db.loss_model("logistic"), lam=0.08, scheme=scheme,
                weights=db.eso_weights(ds, scheme), target_gap=1e-300,
                max_iters=24, max_epochs=1e6, seed=11)
    runs = [db.solve(ds, db.SolveConfig(**base, checkpoint_every=k, threads=th))
            for k, th in ((1, 1), (3, 1), (8, 4), (24, 2))]
    ref = runs[0].alpha_last
    for r in runs[1:]:
        assert np.array_equal(r.alpha_last, ref)
        assert r.iterations == 24
    again = db.solve(ds, db.SolveConfig(**base, checkpoint_every=1, threads=1))
    assert np.array_equal(again.alpha_last, ref)


def test_solve_budget_returns_best_checkpoint():
    # crank the step weights so late iterations oscillate: the best
    # checkpoint is then a strict improvement over the final one
    ds = db.synthetic_dataset(n=20, d=4, density=1.0, seed=5)
    scheme = db.SerialSampling(20)
    config = db.SolveConfig(loss=db.loss_model("square"), lam=0.001,
                            scheme=scheme, weights=db.eso_weights(ds, scheme),
                            target_gap=1e-300, max_epochs=2.0, seed=6,
                            checkpoint_every=1)
    res = db.solve(ds, config)
    assert res.status == "budget" and not res.converged
    gaps = [r.gap for r in res.trace]
    assert res.best_gap == min(gaps)
    assert res.gap == res.best_gap
    assert db.duality_gap(ds, config.loss, res.alpha, config.lam) \
        == pytest.approx(res.best_gap, rel=1e-9)
    # alpha_last is the final iterate, distinct from the best one in general
    assert res.trace[-1].gap == pytest.approx(
        db.duality_gap(ds, config.loss, res.alpha_last, config.lam), rel=1e-9)


def test_average_output_window():
    ds = db.synthetic_dataset(n=18, d=5, density=0.9, seed=7)
    scheme = db.NiceSampling(18, 3)
    t0, total = 5, 12
    base = dict(loss=db.loss_model("hinge"), lam=0.1, scheme=scheme,
                weights=db.eso_weights(ds, scheme), target_gap=1e-300,
                max_iters=total, max_epochs=1e6, seed=8)
    res = db.solve(ds, db.SolveConfig(**base, average_from=t0, output="average"))
    assert res.status == "budget"

    # replay the same iterations and form the window average by hand
    config = db.SolveConfig(**base)
    state = init_state(ds, config)
    acc = np.zeros(ds.n)
    for t in range(1, total + 1):
        db.msdca_step(state, ds, config)
        if t >= t0 + 1:
            acc += state.alpha
    # window [T0+1, T-1]: the final iterate is subtracted back out
    assert np.array_equal(res.average, (acc - state.alpha) / (total - t0))
    assert np.array_equal(res.alpha, res.average)
    assert res.gap == pytest.approx(
        db.duality_gap(ds, config.loss, res.average, 0.1), rel=1e-12)
    assert np.array_equal(res.alpha_last, state.alpha)


def test_average_window_never_entered():
    ds = db.synthetic_dataset(n=10, d=3, density=1.0, seed=9)
    scheme = db.SerialSampling(10)
    config = db.SolveConfig(loss=db.loss_model("square"), lam=0.5,
                            scheme=scheme, weights=db.eso_weights(ds, scheme),
                            target_gap=1e-300, max_iters=4, max_epochs=1e6,
                            average_from=9, output="average")
    res = db.solve(ds, config)
    assert res.average is None
    assert any("never entered" in note for note in res.notes)
    assert any("falling back" in note for note in res.notes)
    assert np.array_equal(res.alpha, res.alpha_last)


def test_immediate_convergence_at_t0():
    ds = db.synthetic_dataset(n=10, d=3, density=1.0, seed=10)
    config = _config(ds, loss=db.loss_model("hinge"), target_gap=10.0)
    res = db.solve(ds, config)
    assert res.converged and res.iterations == 0
    assert len(res.trace) == 1 and res.updates == 0
    assert np.array_equal(res.alpha, np.zeros(10))


def test_solve_config_validation():
    ds = db.synthetic_dataset(n=12, d=4, density=1.0, seed=11)
    ok = _config(ds)
    ok.validate(ds)
    cases = [
        dict(lam=0.0), dict(target_gap=0.0), dict(max_epochs=0.5),
        dict(max_iters=-1), dict(threads=0), dict(output="mean"),
        dict(output="average"), dict(average_from=-1), dict(cocoa_h=-1),
        dict(cocoa_h=2), dict(checkpoint_every=0),
        dict(weights=np.ones(5)), dict(scheme=db.SerialSampling(9)),
    ]
    for kw in cases:
        bad = dataclasses.replace(ok, **kw)
        with pytest.raises(db.ConfigError):
            bad.validate(ds)


# ---------------------------------------------------------------------------
# the CoCoA comparison mode

def test_cocoa_degenerate_mode_matches_msdca():
    ds = db.synthetic_dataset(n=24, d=6, density=0.8, seed=12)
    C = 6
    scheme = db.DistributedSampling(24, C, C)
    weights = C * ds.row_norms_sq
    shared = dict(loss=db.loss_model("shinge", 1.0), lam=0.05, scheme=scheme,
                  target_gap=1e-300, max_iters=40, max_epochs=1e6, seed=13,
                  weights=weights)
    plain = db.solve(ds, db.SolveConfig(**shared))
    coco = db.solve(ds, db.SolveConfig(**shared, cocoa_h=1))
    assert np.array_equal(plain.alpha_last, coco.alpha_last)
    assert plain.updates == coco.updates
    for a, b in zip(plain.trace, coco.trace):
        assert (a.t, a.primal, a.dual, a.gap, a.updates) \
            == (b.t, b.primal, b.dual, b.gap, b.updates)


def test_cocoa_rounds_never_decrease_dual():
    ds = db.synthetic_dataset(n=32, d=8, density=0.9, seed=14)
    scheme = db.DistributedSampling(32, 8, 4)
    loss = db.loss_model("logistic")
    config = db.SolveConfig(loss=loss, lam=0.1, scheme=scheme,
                            weights=db.eso_weights(ds, scheme), cocoa_h=4,
                            seed=15)
    state = init_state(ds, config)
    d_prev = db.dual_value(ds, loss, state.alpha, 0.1)
    for _ in range(100):
        db.cocoa_step(state, ds, config)
        d_now = db.dual_value(ds, loss, state.alpha, 0.1)
        assert d_now >= d_prev - 1e-12
        d_prev = d_now
    assert state.updates == 100 * 4 * 4
    assert d_prev > 0.1  # made real progress


def test_cocoa_validation():
    ds = db.synthetic_dataset(n=12, d=4, density=1.0, seed=16)
    scheme = db.DistributedSampling(12, 4, 2)
    config = db.SolveConfig(loss=db.loss_model("hinge"), lam=0.1,
                            scheme=scheme, weights=db.eso_weights(ds, scheme))
    with pytest.raises(db.ConfigError, match="local step"):
        db.cocoa_step(init_state(ds, config), ds, config)
    bad = dataclasses.replace(config, cocoa_h=1, sigma_prime=0.0)
    with pytest.raises(db.ConfigError, match="sigma_prime"):
        db.cocoa_step(init_state(ds, bad), ds, bad)
    serial = _config(ds, cocoa_h=1)
    with pytest.raises(db.ConfigError, match="distributed"):
        db.cocoa_step(init_state(ds, serial), ds, serial)


def test_drift_guard_catches_corrupted_primal_image():
    ds = db.synthetic_dataset(n=10, d=4, density=1.0, seed=17)
    config = _config(ds)
    state = init_state(ds, config)
    state.w += 1e-3
    with pytest.raises(db.FeasibilityError, match="drift"):
        _checkpoint(state, ds, config, 0.0)
    # sub-tolerance drift passes; the incremental w is left untouched
    state = init_state(ds, config)
    state.w += 1e-12
    rec = _checkpoint(state, ds, config, 0.0)
    assert np.array_equal(state.w, np.full(ds.d, 1e-12))
    assert rec.t == 0
