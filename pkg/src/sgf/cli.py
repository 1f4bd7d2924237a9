"""Command-line surface: gen-data, train, navigate, evaluate, mds, baseline,
compare-linear.

Every command that produces a file writes it atomically and drops a
``<output>.manifest.json`` next to it with the fully resolved configuration,
seeds, paths, oracle-call totals, kernel backend, and wall-clock duration so
the run can be reproduced byte for byte (wall-clock aside).  On failure the
exit code is nonzero and partially computed outputs land at ``*.partial``.

Vector-valued flags take inline JSON (``--c1 "[0.9,0.1]"``) or ``@file``
references.  ``SGF_LOG=debug`` turns on stderr diagnostics.
"""

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, backend
from .auxmap import ArchConfig
from .baselines import latent_opt, path_deviation
from .errors import DivergedNavigationError, SgfError, TrainingDivergedError
from .evaluate import EvalConfig, run_mdc_evaluation
from .metrics import harmonic_mean, mds_accumulated, read_mdc_csv, select_best_strength, write_mdc_csv
from .navigator import NavConfig, navigate
from .numerics import RngState
from .oracle import build_oracle, parse_oracle_spec
from .trainer import PairDataset, TrainConfig, build_dataset, load_checkpoint, save_checkpoint, train

log = logging.getLogger("sgf.cli")


def _atomic_write(path, data):
    path = Path(path)
    tmp = Path(str(path) + ".tmp")
    if isinstance(data, str):
        tmp.write_text(data)
    else:
        tmp.write_bytes(data)
    os.replace(tmp, path)


def _partial_path(path):
    return Path(str(path) + ".partial")


def _write_manifest(out_path, command, config, seeds, inputs, outputs, t0, oracle_calls=None):
    doc = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "artifact_version": __version__,
        "backend": backend.active_backend(),
        "oracle_calls": oracle_calls,
        "duration_s": round(time.time() - t0, 6),
    }
    _atomic_write(Path(str(out_path) + ".manifest.json"),
                  json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _parse_vector(text, expect_len=None, name="vector"):
    text = text.strip()
    if text.startswith("@"):
        text = Path(text[1:]).read_text().strip()
    try:
        vals = json.loads(text)
    except json.JSONDecodeError:
        vals = [float(x) for x in text.replace(",", " ").split()]
    v = np.asarray(vals, dtype=np.float64).ravel()
    if expect_len is not None and v.shape[0] != expect_len:
        raise SgfError(f"{name} must have length {expect_len}, got {v.shape[0]}")
    return v


def _oracle_from_args(args, d=None, n_c=None):
    spec = parse_oracle_spec(args.oracle, d=getattr(args, "d", None) or d,
                             n_c=getattr(args, "nc", None) or n_c,
                             seed=args.seed)
    return build_oracle(spec)


def _resolve_z0(args, d):
    if args.z0 is not None:
        return _parse_vector(args.z0, d, "z0")
    return RngState(args.seed).normals(d)


def _resolve_c1(args, oracle, z0):
    if args.c1 is not None:
        return _parse_vector(args.c1, oracle.spec.n_c, "c1"), None
    if args.attr is None:
        raise SgfError("need --c1 or --attr/--target")
    c0 = oracle.eval(z0)
    c1 = np.asarray(c0, dtype=np.float64).copy()
    c1[args.attr] = args.target
    return c1, c0


def _nav_config(args, fast_final_default=True):
    return NavConfig(step_size=args.step_size, neumann_order=args.order,
                     max_steps=args.max_steps, converge_tol=args.tol,
                     fast=args.fast, inverse_mode=args.inverse,
                     fast_final_check=args.fast and fast_final_default
                     and not args.no_final_check)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args):
    t0 = time.time()
    oracle = _oracle_from_args(args)
    rng = RngState(args.seed)
    ds = build_dataset(oracle, args.count, rng)
    tmp = _partial_path(args.out)
    ds.save(tmp)
    os.replace(tmp, args.out)
    _write_manifest(args.out, "gen-data",
                    {"oracle": oracle.spec.canonical(), "count": args.count},
                    {"seed": args.seed}, [], [args.out], t0, oracle.call_count)
    print(f"wrote {args.out}: d={ds.d} n_c={ds.n_c} count={ds.count}")
    return 0


def cmd_train(args):
    t0 = time.time()
    ds = PairDataset.load(args.data)
    arch = ArchConfig(d=ds.d, n_c=ds.n_c, n_blocks=args.blocks, hidden=args.hidden)
    cfg = TrainConfig(iterations=args.iters, batch_size=args.batch, lr=args.lr,
                      seed=args.seed, sn_power_steps_per_update=args.sn_steps,
                      diag_interval=args.diag_interval)
    report_path = args.report or str(args.out) + ".report.json"
    try:
        f, report = train(ds, arch, cfg)
    except TrainingDivergedError as exc:
        _atomic_write(report_path, json.dumps(exc.report.to_dict(), indent=2) + "\n")
        print(f"training diverged after iteration {exc.last_finite_iteration}",
              file=sys.stderr)
        return 1
    meta = {"seed": args.seed, "iterations": cfg.iterations, "batch_size": cfg.batch_size,
            "lr": cfg.lr, "dataset_digest": ds.oracle_digest.hex(),
            "final_heldout_loss": report.final_heldout_loss}
    tmp = _partial_path(args.out)
    save_checkpoint(f, meta, tmp)
    os.replace(tmp, args.out)
    _atomic_write(report_path, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    _write_manifest(args.out, "train",
                    {"arch": arch.to_dict(), "train": cfg.__dict__, "data": str(args.data)},
                    {"seed": args.seed}, [args.data], [args.out, report_path], t0)
    print(f"wrote {args.out}: held-out loss {report.final_heldout_loss:.6g}, "
          f"relative error {report.final_relative_error:.4g}, "
          f"condition probe {report.final_probe_jvp_c:.4g}"
          + (" [DEGENERATE]" if report.degenerate else ""))
    return 0


def cmd_navigate(args):
    t0 = time.time()
    f, _ = load_checkpoint(args.ckpt)
    oracle = _oracle_from_args(args, d=f.arch.d, n_c=f.arch.n_c)
    z0 = _resolve_z0(args, f.arch.d)
    c1, _ = _resolve_c1(args, oracle, z0)
    cfg = _nav_config(args)
    try:
        trace = navigate(f, oracle, z0, c1, cfg)
    except DivergedNavigationError as exc:
        if exc.trace is not None and args.out:
            _atomic_write(_partial_path(args.out), exc.trace.to_json() + "\n")
        print(f"navigation diverged: {exc}", file=sys.stderr)
        return 1
    if args.out:
        _atomic_write(args.out, trace.to_json() + "\n")
        _write_manifest(args.out, "navigate",
                        {"nav": cfg.to_dict(), "oracle": oracle.spec.canonical(),
                         "ckpt": str(args.ckpt), "z0": z0.tolist(), "c1": c1.tolist()},
                        {"seed": args.seed}, [args.ckpt], [args.out], t0,
                        oracle.call_count)
    final_c = trace.final_c if trace.final_c is not None else trace.steps[-1].c
    final_dist = float(np.max(np.abs(final_c - trace.c1)))
    print(f"converged={trace.converged} steps={trace.executed_steps} "
          f"oracle_calls={trace.oracle_calls} final_dist={final_dist:.6g}")
    return 0


def cmd_evaluate(args):
    t0 = time.time()
    f, _ = load_checkpoint(args.ckpt)
    oracle = _oracle_from_args(args, d=f.arch.d, n_c=f.arch.n_c)
    strengths = tuple(int(x) for x in args.sweep.split(","))
    cfg = EvalConfig(samples=args.samples, strengths=strengths,
                     step_size=args.step_size, neumann_order=args.order,
                     converge_tol=args.tol, inverse_mode=args.inverse,
                     seed=args.seed, target_attr=args.attr,
                     target_value=args.target_value, jobs=args.jobs)
    result = run_mdc_evaluation(f, oracle, cfg)
    write_mdc_csv(_partial_path(args.out), result.curve)
    os.replace(_partial_path(args.out), args.out)
    summary_path = str(args.out) + ".summary.json"
    _atomic_write(summary_path, json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    _write_manifest(args.out, "evaluate",
                    {"eval": cfg.to_dict(), "oracle": oracle.spec.canonical(),
                     "ckpt": str(args.ckpt)},
                    {"seed": args.seed}, [args.ckpt], [args.out, summary_path], t0,
                    oracle.call_count)
    best = result.curve.points[result.best_index]
    print(f"MDS: {result.mds:.3f}")
    print(f"best strength {best.strength:g}: accuracy {best.accuracy:.3f}, "
          f"disentanglement {best.disentanglement:.3f}, "
          f"harmonic mean {harmonic_mean(best.accuracy, best.disentanglement):.3f}")
    if result.errors_total:
        print(f"navigation errors: {result.errors_total}", file=sys.stderr)
    return 0


def cmd_mds(args):
    curve = read_mdc_csv(args.csv)
    acc = mds_accumulated(curve)
    print("accumulated: " + " ".join(f"{x:.3f}" for x in acc))
    best = select_best_strength(curve)
    p = curve.points[best]
    print(f"best strength {p.strength:g} (harmonic mean "
          f"{harmonic_mean(p.accuracy, p.disentanglement):.3f})")
    print(f"MDS: {float(acc.max()):.3f}")
    return 0


def cmd_baseline(args):
    t0 = time.time()
    oracle = _oracle_from_args(args)
    z0 = _resolve_z0(args, oracle.spec.d)
    c1, _ = _resolve_c1(args, oracle, z0)
    trace = latent_opt(oracle, z0, c1, lr=args.lr, iters=args.iters, tol=args.tol,
                       record_every=args.record_every)
    if args.out:
        _atomic_write(args.out, trace.to_json() + "\n")
        _write_manifest(args.out, "baseline",
                        {"oracle": oracle.spec.canonical(), "lr": args.lr,
                         "iters": args.iters, "tol": args.tol,
                         "z0": z0.tolist(), "c1": c1.tolist()},
                        {"seed": args.seed}, [], [args.out], t0, oracle.call_count)
    print(f"converged={trace.converged} iterations={trace.iterations_run} "
          f"final_loss={trace.final_loss:.6g}")
    return 0


def cmd_compare_linear(args):
    t0 = time.time()
    f, _ = load_checkpoint(args.ckpt)
    oracle = _oracle_from_args(args, d=f.arch.d, n_c=f.arch.n_c)
    z0 = _resolve_z0(args, f.arch.d)
    c1, _ = _resolve_c1(args, oracle, z0)
    cfg = _nav_config(args)
    trace = navigate(f, oracle, z0, c1, cfg)
    deviation = path_deviation(trace)
    start, end = trace.steps[0].z, trace.steps[-1].z
    doc = {"deviation": deviation, "z_start": start.tolist(), "z_end": end.tolist(),
           "steps": trace.executed_steps, "converged": trace.converged}
    if args.out:
        _atomic_write(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
        _write_manifest(args.out, "compare-linear",
                        {"nav": cfg.to_dict(), "oracle": oracle.spec.canonical()},
                        {"seed": args.seed}, [args.ckpt], [args.out], t0,
                        oracle.call_count)
    print(f"path deviation: {deviation:.6g}")
    print(f"chord start: {json.dumps(start.tolist())}")
    print(f"chord end:   {json.dumps(end.tolist())}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p, oracle=True, out_required=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    if oracle:
        p.add_argument("--oracle", required=True,
                       help='oracle spec "kind:key=val,..." or "external:cmd=..."')
    p.add_argument("--out", required=out_required, default=None)


def _add_nav_flags(p):
    p.add_argument("--step-size", type=float, default=0.2)
    p.add_argument("--order", type=int, default=1, help="Neumann series order")
    p.add_argument("--max-steps", type=int, default=50)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--fast", action="store_true")
    p.add_argument("--no-final-check", action="store_true",
                   help="skip the one verification oracle call in --fast mode")
    p.add_argument("--inverse", choices=["neumann", "exact"], default="neumann")


def _add_target_flags(p):
    p.add_argument("--z0", default=None, help="inline JSON vector or @file")
    p.add_argument("--c1", default=None, help="inline JSON vector or @file")
    p.add_argument("--attr", type=int, default=None)
    p.add_argument("--target", type=float, default=0.95)


def build_parser():
    ap = argparse.ArgumentParser(prog="sgf", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample (z, condition) pairs from an oracle")
    _add_common(p)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--nc", type=int, default=None)
    p.add_argument("--count", type=int, required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train the auxiliary mapping on a dataset")
    _add_common(p, oracle=False)
    p.add_argument("--data", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--iters", type=int, default=20000)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--blocks", type=int, default=6)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--sn-steps", type=int, default=1)
    p.add_argument("--diag-interval", type=int, default=500)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("navigate", help="steer a latent toward a target condition")
    _add_common(p, out_required=False)
    p.add_argument("--ckpt", required=True)
    _add_target_flags(p)
    _add_nav_flags(p)
    p.set_defaults(fn=cmd_navigate)

    p = sub.add_parser("evaluate", help="strength sweep -> accuracy/disentanglement CSV")
    _add_common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sweep", default="5,10,15,20,25,30",
                   help="comma list of max-step strengths")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--attr", type=int, default=None,
                   help="fix the target attribute (default round-robin)")
    p.add_argument("--target-value", type=float, default=0.95)
    p.add_argument("--step-size", type=float, default=0.2)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--inverse", choices=["neumann", "exact"], default="neumann")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("mds", help="score an accuracy/disentanglement CSV")
    p.add_argument("--csv", required=True)
    p.set_defaults(fn=cmd_mds)

    p = sub.add_parser("baseline", help="latent-code optimization baseline")
    _add_common(p, out_required=False)
    _add_target_flags(p)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--record-every", type=int, default=1)
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("compare-linear",
                       help="navigate, then compare against the straight chord")
    _add_common(p, out_required=False)
    p.add_argument("--ckpt", required=True)
    _add_target_flags(p)
    _add_nav_flags(p)
    p.set_defaults(fn=cmd_compare_linear)

    return ap


def main(argv=None):
    if os.environ.get("SGF_LOG", "").lower() == "debug":
        logging.basicConfig(level=logging.DEBUG, stream=sys.stderr,
                            format="%(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SgfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
