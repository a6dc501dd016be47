"""Benchmark the compiled kernels against the pure-numpy fallback.

Runs the same seeded solve on both backends, reports wall time per epoch
and the largest difference between the resulting iterates. Example:

    python3 benchmarks/kernel_bench.py --n 20000 --d 200 --batch 64
"""

import argparse
import time

import numpy as np

import dualbatch as db
from dualbatch import kernels


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10000, help="examples")
    ap.add_argument("--d", type=int, default=100, help="features")
    ap.add_argument("--density", type=float, default=0.1,
                    help="fraction of nonzero features per example")
    ap.add_argument("--loss", default="shinge",
                    choices=["hinge", "shinge", "logistic", "square"])
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--lam", type=float, default=1e-3)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--epochs", type=float, default=2.0,
                    help="epochs to run per timed repeat")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    return ap.parse_args()


def run(ds, config, repeats):
    best = np.inf
    res = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        res = db.solve(ds, config)
        best = min(best, time.perf_counter() - t0)
    return best, res


def main():
    args = parse_args()
    ds = db.synthetic_dataset(n=args.n, d=args.d, density=args.density,
                              seed=args.seed)
    scheme = db.NiceSampling(args.n, args.batch)
    weights = db.eso_weights(ds, scheme)
    loss = db.loss_model(args.loss, args.gamma)
    base = dict(loss=loss, lam=args.lam, scheme=scheme, weights=weights,
                target_gap=1e-300, max_epochs=args.epochs, seed=args.seed)

    backends = ["python"]
    try:
        kernels.get_backend("numba")
        backends.insert(0, "numba")
    except db.BackendError as exc:
        print(f"numba backend unavailable ({exc}); timing python only")

    print(f"n={args.n} d={args.d} density={args.density} loss={args.loss} "
          f"lam={args.lam} b={args.batch} epochs={args.epochs}")
    print(f"{'backend':<8} {'best wall':>10} {'epochs/s':>10} {'iters/s':>12}")
    results = {}
    times = {}
    for name in backends:
        config = db.SolveConfig(**base, backend=name)
        db.solve(ds, config)  # warm up (JIT compile, caches)
        wall, res = run(ds, config, args.repeats)
        results[name] = res
        times[name] = wall
        print(f"{name:<8} {wall:>9.3f}s {res.epochs / wall:>10.2f} "
              f"{res.iterations / wall:>12.0f}")

    if len(backends) == 2:
        speedup = times["python"] / times["numba"]
        diff = float(np.max(np.abs(results["numba"].alpha_last
                                   - results["python"].alpha_last)))
        gap_diff = abs(results["numba"].gap - results["python"].gap)
        print(f"speedup: {speedup:.1f}x")
        print(f"max |alpha_numba - alpha_python| = {diff:.3e}")
        print(f"|gap_numba - gap_python| = {gap_diff:.3e}")


if __name__ == "__main__":
    main()
