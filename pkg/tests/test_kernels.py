"""Backend parity: the compiled and interpreted kernels must agree."""

import numpy as np
import pytest

import dualbatch as db
from dualbatch import kernels


def test_backend_resolution():
    py = kernels.get_backend("python")
    assert set(py) == {"row_dot", "coord_delta", "run_chunk"}
    assert kernels.get_backend("python") is py  # cached
    assert kernels.active_backend_name() in ("numba", "python")
    assert set(kernels.get_backend("active")) == set(py)
    assert set(kernels.get_backend("auto")) == set(py)
    with pytest.raises(db.ConfigError):
        kernels.get_backend("fortran")


def test_backend_env_validation():
    import subprocess
    import sys
    proc = subprocess.run(
        [sys.executable, "-c", "import dualbatch"],
        env={"PATH": "/usr/bin:/bin", "DUALBATCH_BACKEND": "gpu"},
        capture_output=True, text=True)
    assert proc.returncode != 0
    assert "DUALBATCH_BACKEND" in proc.stderr
    proc = subprocess.run(
        [sys.executable, "-c",
         "from dualbatch import kernels; print(kernels.active_backend_name())"],
        env={"PATH": "/usr/bin:/bin", "DUALBATCH_BACKEND": "python"},
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "python"


def test_row_dot_matches_numpy():
    rng = np.random.default_rng(50)
    ds = db.synthetic_dataset(n=20, d=8, density=0.5, seed=51)
    X = ds.to_dense()
    w = rng.standard_normal(8)
    for name in ("python", "numba"):
        fn = kernels.get_backend(name)["row_dot"]
        for i in range(20):
            assert fn(ds.indptr, ds.indices, ds.data, w, i) \
                == pytest.approx(float(X[i] @ w), rel=1e-14)


def test_coord_delta_cross_backend_parity():
    rng = np.random.default_rng(52)
    py = kernels.get_backend("python")["coord_delta"]
    nb = kernels.get_backend("numba")["coord_delta"]
    for code, gamma in ((0, 0.0), (1, 1.0), (3, 1.0)):
        for _ in range(500):
            y = float(rng.choice([-1.0, 1.0]))
            a = float(rng.uniform(0.0, 1.0)) * y if code != 3 else rng.normal()
            m, v = float(rng.normal() * 2), float(rng.uniform(0.05, 4.0))
            lam_n = float(rng.uniform(0.1, 50.0))
            assert py(code, gamma, a, m, y, v, lam_n) \
                == nb(code, gamma, a, m, y, v, lam_n)  # bitwise
    # logistic goes through libm, where compiled code may round differently
    for _ in range(500):
        y = float(rng.choice([-1.0, 1.0]))
        a = float(rng.uniform(0.0, 1.0)) * y
        m, v = float(rng.normal() * 2), float(rng.uniform(0.05, 4.0))
        lam_n = float(rng.uniform(0.1, 50.0))
        assert py(2, 4.0, a, m, y, v, lam_n) \
            == pytest.approx(nb(2, 4.0, a, m, y, v, lam_n), abs=1e-13)


def test_solve_cross_backend_parity():
    ds = db.synthetic_dataset(n=48, d=10, density=0.7, seed=53)
    for kind, exact in (("hinge", True), ("shinge", True), ("square", True),
                        ("logistic", False)):
        loss = db.loss_model(kind, 1.0)
        scheme = db.NiceSampling(48, 6)
        base = dict(loss=loss, lam=0.05, scheme=scheme,
                    weights=db.eso_weights(ds, scheme), target_gap=1e-300,
                    max_iters=40, max_epochs=1e6, seed=54)
        res_py = db.solve(ds, db.SolveConfig(**base, backend="python"))
        res_nb = db.solve(ds, db.SolveConfig(**base, backend="numba"))
        if exact:
            assert np.array_equal(res_py.alpha_last, res_nb.alpha_last), kind
        else:
            assert np.allclose(res_py.alpha_last, res_nb.alpha_last,
                               rtol=0, atol=1e-12), kind
        assert res_py.iterations == res_nb.iterations == 40
