"""Command-line front end: dataset loading, solver runs, batch-size sweeps,
ESO weight reports and verification, bound prediction, and the local-solver
comparison table.

Exit codes: 0 success/converged, 2 budget exhausted or verification failed,
1 usage or data error. All emitted CSV/JSON is locale-independent with LF
line endings; float fields use shortest round-trip formatting.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import statistics
import sys
from pathlib import Path

import numpy as np

from .data import load_libsvm, synthetic_dataset
from .errors import ConfigError, DualbatchError
from .eso import EsoWeights, beta, eso_weights, omega, sigma_sq, verify_eso
from .losses import loss_model
from .sampling import load_partition, make_sampling
from .solver import SolveConfig, solve
from .theory import (BoundInputs, cocoa_vs_msdca_report, complexity_estimate,
                     sigma_prime_estimate, sigma_tilde_sq, theorem1_bounds,
                     theorem2_bounds)

_BETA_KIND = {"serial": "serial", "nice": "standard",
              "distributed": "distributed"}
_SWITCHES = ("wall", "row-sparsity")


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors remapped to exit code 1 (2 is reserved
    for budget exhaustion / failed verification)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# shared pieces

def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))  # builtin repr even for numpy scalars
    return str(value)


def _csv_line(values) -> str:
    return ",".join(_cell(v) for v in values) + "\n"


def _parse_synthetic(spec: str) -> dict:
    out = {"density": 1.0, "seed": 0, "noise": 0.0, "normalize": True}
    converters = {"n": int, "d": int, "density": float, "seed": int,
                  "noise": float}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, value = part.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(
                f"synthetic spec entry {part!r} is not key=value")
        try:
            if key == "norm":
                out["normalize"] = bool(int(value))
            elif key in converters:
                out[key] = converters[key](value)
            else:
                raise ConfigError(f"unknown synthetic spec key {key!r}")
        except ValueError:
            raise ConfigError(
                f"synthetic spec value {value!r} invalid for {key!r}") from None
    if "n" not in out or "d" not in out:
        raise ConfigError("synthetic spec requires n= and d=")
    return out


def _load_dataset(args):
    if args.data is not None and args.synthetic is not None:
        raise ConfigError("pass --data or --synthetic, not both")
    if args.data is not None:
        return load_libsvm(args.data)
    if args.synthetic is not None:
        return synthetic_dataset(**_parse_synthetic(args.synthetic))
    raise ConfigError("a dataset is required: --data PATH or --synthetic SPEC")


def _make_scheme(args, n: int):
    if args.batch < 1:
        raise ConfigError(f"--batch must be at least 1, got {args.batch}")
    cell_of = None
    if getattr(args, "partition", None) is not None:
        if args.sampling != "distributed":
            raise ConfigError("--partition requires --sampling distributed")
        cell_of = load_partition(args.partition, n, args.machines)
    return make_sampling(args.sampling, n, args.batch, args.machines, cell_of)


def _make_weights(args, ds, scheme):
    if getattr(args, "weights", "safe") == "naive":
        # per-coordinate serial weights regardless of batch size: the
        # deliberately unsafe choice the safe formulas exist to prevent
        return ds.row_norms_sq.copy()
    return eso_weights(ds, scheme, mode=args.eso_mode,
                       inflation=args.inflation,
                       row_sparsity=getattr(args, "row_sparsity", False))


def _resolve_threads(value) -> int:
    if value is not None:
        return value
    env = os.environ.get("DUALBATCH_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(
                f"DUALBATCH_THREADS={env!r} is not an integer") from None
    return 1


def _write_trace(path: Path, trace, wall: bool) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,epochs,primal,dual,gap,updates,wall_s\n")
        for r in trace:
            fh.write(_csv_line([r.t, r.epochs, r.primal, r.dual, r.gap,
                                r.updates, r.wall_s if wall else 0.0]))


def _solve_config(args, scheme, weights, loss) -> SolveConfig:
    return SolveConfig(
        loss=loss, lam=args.lam, scheme=scheme, weights=weights,
        target_gap=args.target_gap, max_epochs=args.max_epochs,
        max_iters=args.max_iters, seed=args.seed,
        threads=_resolve_threads(args.threads),
        checkpoint_every=args.checkpoint_every,
        average_from=args.average,
        output="average" if args.average is not None else "last",
        cocoa_h=getattr(args, "cocoa", 0), backend=args.backend)


# ---------------------------------------------------------------------------
# subcommands

def cmd_solve(args) -> int:
    ds = _load_dataset(args)
    loss = loss_model(args.loss, args.gamma)
    scheme = _make_scheme(args, ds.n)
    weights = _make_weights(args, ds, scheme)
    result = solve(ds, _solve_config(args, scheme, weights, loss))

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_trace(outdir / "trace.csv", result.trace, args.wall)
    summary = {
        "status": result.status,
        "converged": result.converged,
        "iterations": result.iterations,
        "epochs": result.epochs,
        "updates": result.updates,
        "final_gap": result.gap,
        "best_gap": result.best_gap,
        "best_t": result.best_t,
        "output": "average" if args.average is not None else "last",
        "notes": result.notes,
        "loss": args.loss,
        "gamma": args.gamma,
        "lambda": args.lam,
        "sampling": args.sampling,
        "batch": scheme.batch,
        "machines": scheme.C,
        "weights": args.weights,
        "target_gap": args.target_gap,
        "max_epochs": args.max_epochs,
        "seed": args.seed,
    }
    (outdir / "summary.json").write_text(_json(summary))
    print(f"{result.status} gap={result.gap!r} iters={result.iterations} "
          f"epochs={result.epochs!r}")
    return 0 if result.converged else 2


def cmd_sweep(args) -> int:
    ds = _load_dataset(args)
    loss = loss_model(args.loss, args.gamma)
    batches = _parse_int_list(args.batches)
    machines = _parse_int_list(args.machines_list)
    if args.repeats < 1:
        raise ConfigError("repeats must be at least 1")

    rows = []
    all_converged = True
    for C in machines:
        for b in batches:
            kind = ("serial" if C == 1 and b == 1
                    else "nice" if C == 1 else "distributed")
            for r in range(args.repeats):
                seed = args.seed + r
                try:
                    scheme = make_sampling(kind, ds.n, b, C)
                    weights = _make_weights(args, ds, scheme)
                    config = SolveConfig(
                        loss=loss, lam=args.lam, scheme=scheme,
                        weights=weights, target_gap=args.target_gap,
                        max_epochs=args.max_epochs, max_iters=args.max_iters,
                        seed=seed, threads=_resolve_threads(args.threads),
                        backend=args.backend)
                    result = solve(ds, config)
                except DualbatchError as e:
                    print(f"cell {kind} C={C} b={b} seed={seed} failed: {e}",
                          file=sys.stderr)
                    rows.append([kind, C, b, seed, None, None, None])
                    all_converged = False
                    continue
                epochs = result.epochs if result.converged else None
                rows.append([kind, C, b, seed, result.iterations, epochs,
                             result.gap])
                all_converged = all_converged and result.converged
                print(f"{kind} C={C} b={b} seed={seed}: {result.status} "
                      f"epochs={result.epochs!r} gap={result.gap!r}")

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "sweep.csv", "w", newline="") as fh:
        fh.write("scheme,C,b,seed,iters,epochs_to_target,final_gap\n")
        for row in rows:
            fh.write(_csv_line(row))

    medians = {}
    for key in {(row[0], row[1], row[2]) for row in rows}:
        done = sorted(row[5] for row in rows
                      if (row[0], row[1], row[2]) == key and row[5] is not None)
        medians[key] = statistics.median(done) if done else None
    base = medians.get(("serial", 1, 1))
    with open(outdir / "sweep_summary.csv", "w", newline="") as fh:
        fh.write("scheme,C,b,runs,converged,median_epochs_to_target,"
                 "relative_epochs\n")
        for key in sorted(medians, key=lambda k: (k[1], k[2], k[0])):
            cell_rows = [row for row in rows
                         if (row[0], row[1], row[2]) == key]
            done = sum(1 for row in cell_rows if row[5] is not None)
            med = medians[key]
            rel = (med / base if med is not None and base else None)
            fh.write(_csv_line([key[0], key[1], key[2], len(cell_rows), done,
                                med, rel]))
    return 0 if all_converged else 2


def _parse_int_list(text: str) -> list[int]:
    try:
        values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(
            f"expected a comma-separated integer list, got {text!r}") from None
    if not values:
        raise ConfigError(f"empty integer list {text!r}")
    return values


def cmd_eso(args) -> int:
    ds = _load_dataset(args)
    scheme = _make_scheme(args, ds.n)
    w = eso_weights(ds, scheme, mode=args.eso_mode,
                    inflation=args.inflation, row_sparsity=args.row_sparsity)
    s2 = w.sigma_sq if w.sigma_sq is not None else sigma_sq(ds)
    b_val = w.beta if w.beta is not None else beta(
        _BETA_KIND[scheme.kind], ds.n, scheme.batch, scheme.C, s2)
    report = {
        "n": ds.n,
        "d": ds.d,
        "mode": w.mode,
        "b": scheme.batch,
        "C": scheme.C,
        "sigma_sq": float(s2),
        "omega": float(omega(ds, row=args.row_sparsity)),
        "beta": float(b_val),
        "v_max": float(np.max(w.v)),
        "v_min": float(np.min(w.v)),
    }
    sys.stdout.write(_json(report))
    return 0


def cmd_verify_eso(args) -> int:
    ds = _load_dataset(args)
    scheme = _make_scheme(args, ds.n)
    weights = _make_weights(args, ds, scheme)
    rep = verify_eso(ds, scheme, weights, lam=args.lam, pairs=args.pairs,
                     seed=args.seed, method=args.method,
                     mc_draws=args.mc_draws)
    sys.stdout.write(_json({
        "passed": rep.passed,
        "method": rep.method,
        "max_violation": rep.max_violation,
        "pairs": rep.pairs,
        "threshold": rep.threshold,
        "draws": rep.draws,
        "max_stderr": rep.max_stderr,
    }))
    return 0 if rep.passed else 2


def cmd_predict(args) -> int:
    ds = _load_dataset(args)
    loss = loss_model(args.loss, args.gamma)
    scheme = _make_scheme(args, ds.n)
    weights = _make_weights(args, ds, scheme)
    v = weights.v if isinstance(weights, EsoWeights) else weights
    s2 = None
    if isinstance(weights, EsoWeights) and weights.sigma_sq is not None:
        s2 = weights.sigma_sq
    elif scheme.kind != "serial":
        s2 = sigma_sq(ds)
    beta_val = (weights.beta if isinstance(weights, EsoWeights)
                and weights.beta is not None else
                beta(_BETA_KIND[scheme.kind], ds.n, scheme.batch,
                     scheme.C, s2))

    smooth = loss.smooth
    lipschitz = math.isfinite(loss.lipschitz)
    inputs = BoundInputs(
        n=ds.n, b=scheme.batch, C=scheme.C, lam=args.lam,
        eps_gap=args.target_gap, gamma=loss.gamma if smooth else None,
        L=loss.lipschitz if lipschitz else None,
        v_max=float(np.max(v)), v_sum=float(np.sum(v)), sigma_sq=s2,
        rho=args.rho, eps_dual0=args.eps_dual0)
    out = {
        "n": ds.n,
        "b": scheme.batch,
        "C": scheme.C,
        "lambda": args.lam,
        "loss": args.loss,
        "target_gap": args.target_gap,
        "v_max": inputs.v_max,
        "v_sum": inputs.v_sum,
        "beta": float(beta_val),
        "theorem1": theorem1_bounds(inputs) if smooth else None,
        "theorem2": theorem2_bounds(inputs) if lipschitz else None,
        "complexity_smooth": complexity_estimate(
            "smooth", beta_val, scheme.batch, ds.n, args.lam,
            gamma=loss.gamma) if smooth else None,
        "complexity_lipschitz": complexity_estimate(
            "lipschitz", beta_val, scheme.batch, ds.n, args.lam,
            L=loss.lipschitz, eps_gap=args.target_gap) if lipschitz else None,
    }
    sys.stdout.write(_json(out))
    return 0


def cmd_compare(args) -> int:
    ds = _load_dataset(args)
    cell_of = None
    if args.partition is not None:
        cell_of = load_partition(args.partition, ds.n, args.machines)
    scheme = make_sampling("distributed", ds.n, args.machines, args.machines,
                           cell_of)
    b = args.batch if args.batch is not None else args.machines

    s2 = sigma_sq(ds)
    st2 = sigma_tilde_sq(ds, scheme.cell_of)
    sp = (args.sigma_prime if args.sigma_prime is not None
          else sigma_prime_estimate(ds, scheme.cell_of, seed=args.seed))
    inputs = BoundInputs(n=ds.n, b=b, C=args.machines, lam=args.lam,
                         eps_gap=args.target_gap, sigma_sq=s2)
    rep = cocoa_vs_msdca_report(inputs, st2, sp)

    m, c = rep["msdca_terms"], rep["cocoa_terms"]
    ex = rep["extreme_b_eq_n"]
    lines = ["quantity,msdca,cocoa,ratio\n",
             _csv_line(["term1", m[0], c[0], c[0] / m[0]]),
             _csv_line(["term2", m[1], c[1], rep["ratios"]["term2"]]),
             _csv_line(["term3", m[2], c[2], rep["ratios"]["term3"]]),
             _csv_line(["term4", None, c[3], None]),
             _csv_line(["total", rep["msdca_total"], rep["cocoa_total"],
                        rep["cocoa_total"] / rep["msdca_total"]]),
             _csv_line(["extreme_b_eq_n", ex["msdca"], ex["cocoa"],
                        ex["cocoa"] / ex["msdca"]]),
             _csv_line(["sigma_sq", s2, None, None]),
             _csv_line(["sigma_tilde_sq", None, st2, None]),
             _csv_line(["sigma_prime", None, sp, None])]
    text = "".join(lines)
    sys.stdout.write(text)
    if args.out is not None:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "compare.csv", "w", newline="") as fh:
            fh.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser assembly

def _add_data_flags(p) -> None:
    p.add_argument("--data", metavar="PATH",
                   help="dataset file in svmlight/libsvm format")
    p.add_argument("--synthetic", metavar="SPEC",
                   help="generate data: n=..,d=..[,density=..][,seed=..]"
                        "[,noise=..][,norm=0|1]")


def _add_loss_flags(p) -> None:
    p.add_argument("--loss", choices=("hinge", "shinge", "logistic", "square"),
                   default="hinge")
    p.add_argument("--gamma", type=float, default=1.0,
                   help="smoothing width for shinge (default 1.0)")


def _add_scheme_flags(p) -> None:
    p.add_argument("--sampling", choices=("serial", "nice", "distributed"),
                   default="serial")
    p.add_argument("--batch", type=int, default=1, metavar="B",
                   help="coordinates updated per iteration")
    p.add_argument("--machines", type=int, default=1, metavar="C")
    p.add_argument("--partition", metavar="PATH",
                   help="cell id per line for distributed sampling")


def _add_weight_flags(p) -> None:
    p.add_argument("--weights", choices=("safe", "naive"), default="safe",
                   help="naive uses serial per-coordinate weights at any "
                        "batch size (unsafe; for demonstration)")
    p.add_argument("--eso-mode", default="auto",
                   choices=("auto", "serial", "standard_dense",
                            "standard_sparse", "distributed", "safe_any_b"))
    p.add_argument("--inflation", type=float, default=1e-3,
                   help="relative safety margin applied to a computed "
                        "sigma^2 (default 1e-3)")


def _add_run_flags(p) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=0.01,
                   metavar="LAM", help="regularization strength")
    p.add_argument("--target-gap", type=float, default=1e-6)
    p.add_argument("--max-epochs", type=float, default=100.0)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=None,
                   metavar="ITERS", help="gap checkpoint cadence "
                   "(default: one epoch equivalent)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="defaults to DUALBATCH_THREADS or 1; results do not "
                        "depend on it")
    p.add_argument("--backend", default="active",
                   choices=("active", "auto", "numba", "python"))
    p.add_argument("--wall", action="store_true",
                   help="record real wall-clock times in the trace "
                        "(breaks byte-for-byte reproducibility)")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dualbatch",
                     description="Safe mini-batch dual coordinate ascent for "
                                 "regularized linear models.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")

    p = sub.add_parser("solve", help="run the solver to a target duality gap")
    _add_data_flags(p)
    _add_loss_flags(p)
    _add_scheme_flags(p)
    _add_weight_flags(p)
    _add_run_flags(p)
    p.add_argument("--average", type=int, default=None, metavar="T0",
                   help="output the tail average of iterates after T0")
    p.add_argument("--cocoa", type=int, default=0, metavar="H",
                   help="use the local-solver comparison mode with H local "
                        "steps per machine (requires distributed sampling)")
    p.add_argument("--out", metavar="DIR", default=".",
                   help="directory for trace.csv and summary.json")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep",
                       help="solve over a grid of batch sizes and machine "
                            "counts, recording epochs to the target gap")
    _add_data_flags(p)
    _add_loss_flags(p)
    _add_weight_flags(p)
    _add_run_flags(p)
    p.add_argument("--batches", required=True, metavar="LIST",
                   help="comma-separated batch sizes, e.g. 1,8,32")
    p.add_argument("--machines-list", default="1", metavar="LIST",
                   help="comma-separated machine counts (default 1)")
    p.add_argument("--repeats", type=int, default=1,
                   help="seeded repeats per cell (seed, seed+1, ...)")
    p.add_argument("--out", metavar="DIR", default=".",
                   help="directory for sweep.csv and sweep_summary.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eso", help="print the weight report as JSON")
    _add_data_flags(p)
    _add_scheme_flags(p)
    _add_weight_flags(p)
    p.add_argument("--row-sparsity", action="store_true",
                   help="diagnostic: per-example nonzero counts in the "
                        "sparse formula (excluded from guarantees)")
    p.set_defaults(func=cmd_eso)

    p = sub.add_parser("verify-eso",
                       help="check the expected separable overapproximation "
                            "on random pairs (exit 2 on violation)")
    _add_data_flags(p)
    _add_scheme_flags(p)
    _add_weight_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   metavar="LAM")
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--method", choices=("exact", "mc"), default="exact")
    p.add_argument("--mc-draws", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_eso)

    p = sub.add_parser("predict",
                       help="evaluate the iteration-count bounds as JSON")
    _add_data_flags(p)
    _add_loss_flags(p)
    _add_scheme_flags(p)
    _add_weight_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=0.01,
                   metavar="LAM")
    p.add_argument("--target-gap", type=float, default=1e-6)
    p.add_argument("--rho", type=float, default=None,
                   help="failure probability for the high-probability bound")
    p.add_argument("--eps-dual0", type=float, default=1.0,
                   help="initial dual suboptimality bound")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare",
                       help="emit the local-solver bound comparison as CSV")
    _add_data_flags(p)
    p.add_argument("--machines", type=int, required=True, metavar="C")
    p.add_argument("--partition", metavar="PATH")
    p.add_argument("--batch", type=int, default=None, metavar="B",
                   help="batch size for the per-term table (default C)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.01,
                   metavar="LAM")
    p.add_argument("--target-gap", type=float, default=1e-6)
    p.add_argument("--sigma-prime", type=float, default=None,
                   help="override the estimated aggregation constant")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="DIR", default=None,
                   help="also write compare.csv under DIR")
    p.set_defaults(func=cmd_compare)

    return parser


def _apply_config(argv: list[str]) -> list[str]:
    """Expand `--config FILE` (key=value per line, # comments) into flags
    placed before the explicit ones, so explicit flags win."""
    path = None
    for k, tok in enumerate(argv):
        if tok == "--config":
            if k + 1 >= len(argv):
                raise ConfigError("--config requires a file path")
            path = argv[k + 1]
            del argv[k:k + 2]
            break
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            del argv[k]
            break
    if path is None:
        return argv
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    inject: list[str] = []
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().replace("_", "-"), value.strip()
        if not sep or not key:
            raise ConfigError(
                f"config line {ln}: expected key=value, got {line!r}")
        if key in _SWITCHES:
            if value.lower() in ("1", "true", "yes", "on"):
                inject.append(f"--{key}")
            elif value.lower() not in ("0", "false", "no", "off"):
                raise ConfigError(f"config line {ln}: {key} takes a boolean")
        else:
            inject.extend([f"--{key}", value])
    insert_at = 1 if argv and not argv[0].startswith("-") else 0
    return argv[:insert_at] + inject + argv[insert_at:]


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        argv = _apply_config(list(argv))
    except DualbatchError as e:
        print(f"dualbatch: error: {e}", file=sys.stderr)
        return 1
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    except DualbatchError as e:
        print(f"dualbatch: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"dualbatch: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
