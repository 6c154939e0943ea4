"""Command-line driver: run, reference, verify, sweep, report.

Exit codes: 0 success, 1 check/run failure, 2 usage or config errors.
Output directories are never silently overwritten; pass --force to reuse a
non-empty directory. The output root defaults to $QPINN_OUT_ROOT or ./runs.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import configio
from .errors import ConfigError, QpinnError, RunAborted
from .fdtd import run_reference
from .training import CollapseThresholds, detect_collapse, train
from .verify import run_suite

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _out_root() -> str:
    return os.environ.get("QPINN_OUT_ROOT", "runs")


def _prepare_outdir(path: str, force: bool) -> str:
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise ConfigError(f"output directory {path} is not empty "
                          f"(pass --force to reuse it)")
    os.makedirs(path, exist_ok=True)
    return path


def _load_with_overrides(args) -> dict:
    cfg = configio.load_experiment(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.setdefault("train", {})["seed"] = args.seed
        cfg.setdefault("model", {})["seed"] = args.seed
    configio.apply_overrides(cfg, getattr(args, "set", None))
    return cfg


def _ensure_reference(cfg: dict, outdir: str):
    """Reference snapshots for the L2 cadence, generated once per run dir."""
    from .fdtd import FieldHistory
    ref_dir = os.path.join(outdir, "reference")
    if os.path.isdir(ref_dir) and os.path.exists(os.path.join(ref_dir, "meta.json")):
        return FieldHistory.load(ref_dir)
    history = run_reference(configio.to_fdtd_config(cfg))
    history.save(ref_dir)
    return history


def cmd_run(args) -> int:
    cfg = _load_with_overrides(args)
    tc = configio.to_train_config(cfg)
    name = os.path.splitext(os.path.basename(args.config))[0]
    outdir = args.out or os.path.join(_out_root(), f"{name}-s{tc.seed}")
    _prepare_outdir(outdir, args.force)
    with open(os.path.join(outdir, "config.json"), "w") as f:
        json.dump(configio.experiment_dict(cfg), f, indent=1, sort_keys=True)
    reference = _ensure_reference(cfg, outdir) if tc.eval_cadence > 0 else None
    result = train(tc, reference=reference, outdir=outdir)
    summary = result.summary(tc)
    with open(os.path.join(outdir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
    print(f"run complete: {outdir}")
    print(f"  epochs={summary['epochs']} final_total={summary['final']['total']:.6g}"
          f" i_bh={summary['i_bh']} l2={summary['final_l2']}")
    return EXIT_OK


def cmd_reference(args) -> int:
    cfg = _load_with_overrides(args)
    fc = configio.to_fdtd_config(cfg)
    name = os.path.splitext(os.path.basename(args.config))[0]
    outdir = args.out or os.path.join(_out_root(), f"{name}-reference")
    _prepare_outdir(outdir, args.force)
    history = run_reference(fc)
    history.save(outdir)
    print(f"reference written: {outdir} "
          f"({len(history.times)} snapshots on {fc.nx}x{fc.ny})")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        checks = run_suite(args.suite)
    except KeyError:
        print(f"unknown suite {args.suite!r}", file=sys.stderr)
        return EXIT_USAGE
    failed = 0
    for name, value, tol, ok in checks:
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {name}: {value:.3e} (tol {tol:.0e})")
        failed += 0 if ok else 1
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAIL


def _sweep_cells(matrix: dict):
    base = dict(matrix.get("base", {}))
    base.setdefault("schema_version", configio.SCHEMA_VERSION)
    ansaetze = matrix.get("ansatz", [None])
    scales = matrix.get("scale", [None])
    energies = matrix.get("energy", [True])
    seeds = matrix.get("seeds", [0])
    for a, s, e, seed in itertools.product(ansaetze, scales, energies, seeds):
        cfg = json.loads(json.dumps(base))
        if a is not None:
            cfg.setdefault("model", {})["ansatz"] = a
        if s is not None:
            cfg.setdefault("model", {})["scale"] = s
        cfg.setdefault("train", {})["energy_loss_enabled"] = bool(e)
        cfg.setdefault("train", {})["seed"] = seed
        cfg.setdefault("model", {})["seed"] = seed
        tag = f"{a or 'model'}__{s or 'scale'}__en{int(bool(e))}__s{seed}"
        yield tag, cfg, {"ansatz": a, "scale": s, "energy": bool(e), "seed": seed}


def _run_cell(tag: str, cfg: dict, outdir: str) -> dict:
    cell_dir = os.path.join(outdir, tag)
    os.makedirs(cell_dir, exist_ok=True)
    try:
        configio.validate_experiment(cfg)
        tc = configio.to_train_config(cfg)
        reference = _ensure_reference(cfg, cell_dir) if tc.eval_cadence > 0 else None
        result = train(tc, reference=reference, outdir=cell_dir)
        summary = result.summary(tc)
        summary["status"] = "ok"
    except QpinnError as e:
        summary = {"status": "error", "error": str(e)}
    with open(os.path.join(cell_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
    return summary


def cmd_sweep(args) -> int:
    with open(args.config) as f:
        matrix = json.load(f)
    outdir = args.out or os.path.join(_out_root(), "sweep")
    _prepare_outdir(outdir, args.force)
    cells = list(_sweep_cells(matrix))
    results = {}
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futs = {tag: pool.submit(_run_cell, tag, cfg, outdir)
                    for tag, cfg, _ in cells}
            for tag, fut in futs.items():
                results[tag] = fut.result()
    else:
        for tag, cfg, _ in cells:
            results[tag] = _run_cell(tag, cfg, outdir)
    for tag, summary in results.items():
        print(f"{tag}: {summary.get('status')}"
              + (f" l2={summary.get('final_l2')}" if summary.get("status") == "ok" else ""))
    table = aggregate_summaries(outdir)
    agg_path = os.path.join(outdir, "aggregate.csv")
    write_aggregate_csv(table, agg_path)
    print(f"aggregate written: {agg_path}")
    n_err = sum(1 for s in results.values() if s.get("status") != "ok")
    return EXIT_OK if n_err == 0 else EXIT_FAIL


def _find_summaries(root: str):
    for dirpath, _, files in os.walk(root):
        if "summary.json" in files:
            with open(os.path.join(dirpath, "summary.json")) as f:
                yield json.load(f)


def aggregate_summaries(root: str) -> list:
    """Group per-run summaries into mean/std L2 and collapse fractions.

    Statistics pool over seeds only: one output row per
    (case, variant, ansatz, scale, energy flag) combination.
    """
    groups: dict = {}
    for s in _find_summaries(root):
        if s.get("status") not in (None, "ok"):
            key = ("error",)
            groups.setdefault(key, []).append(s)
            continue
        key = (s.get("case"), s.get("variant"), s.get("ansatz"),
               s.get("scale"), s.get("energy_loss_enabled"))
        groups.setdefault(key, []).append(s)
    rows = []
    for key, members in sorted(groups.items(), key=str):
        if key == ("error",):
            continue
        l2s = [m["final_l2"] for m in members if m.get("final_l2") is not None]
        collapsed = [bool(m.get("collapsed")) for m in members
                     if m.get("collapsed") is not None]
        rows.append({
            "case": key[0], "variant": key[1], "ansatz": key[2],
            "scale": key[3], "energy": key[4], "n_runs": len(members),
            "l2_mean": float(np.mean(l2s)) if l2s else None,
            "l2_std": float(np.std(l2s)) if l2s else None,
            "collapse_fraction": float(np.mean(collapsed)) if collapsed else None,
            "all_collapsed": bool(collapsed and all(collapsed)),
        })
    return rows


def write_aggregate_csv(rows: list, path: str) -> None:
    cols = ("case", "variant", "ansatz", "scale", "energy", "n_runs",
            "l2_mean", "l2_std", "collapse_fraction", "all_collapsed")
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for r in rows:
            f.write(",".join("" if r[c] is None else str(r[c]) for c in cols) + "\n")


def cmd_report(args) -> int:
    rows = aggregate_summaries(args.runs)
    if not rows:
        print(f"no summaries found under {args.runs}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out or os.path.join(args.runs, "report.csv")
    write_aggregate_csv(rows, out)
    for r in rows:
        l2 = f"{r['l2_mean']:.4g}+-{r['l2_std']:.2g}" if r["l2_mean"] is not None else "n/a"
        mark = " X" if r["all_collapsed"] else ""
        print(f"{r['case']}/{r['variant']}/{r['ansatz']}/{r['scale']}"
              f"/energy={r['energy']}: L2 {l2} over {r['n_runs']} run(s)"
              f" collapse={r['collapse_fraction']}{mark}")
    print(f"report written: {out}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qpinn",
                                description="Hybrid quantum-classical PINN "
                                            "experiments for 2D TEz Maxwell")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one configuration")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.add_argument("--seed", type=int)
    run.add_argument("--set", action="append", metavar="KEY=VALUE")
    run.add_argument("--force", action="store_true")
    run.set_defaults(fn=cmd_run)

    ref = sub.add_parser("reference", help="run the FDTD reference solver")
    ref.add_argument("--config", required=True)
    ref.add_argument("--out")
    ref.add_argument("--seed", type=int)
    ref.add_argument("--set", action="append", metavar="KEY=VALUE")
    ref.add_argument("--force", action="store_true")
    ref.set_defaults(fn=cmd_reference)

    ver = sub.add_parser("verify", help="run an oracle verification suite")
    ver.add_argument("suite", choices=["qsim", "grad", "physics", "all"])
    ver.set_defaults(fn=cmd_verify)

    sw = sub.add_parser("sweep", help="run an ablation matrix")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--force", action="store_true")
    sw.set_defaults(fn=cmd_sweep)

    rep = sub.add_parser("report", help="aggregate run summaries into a table")
    rep.add_argument("--runs", required=True)
    rep.add_argument("--out")
    rep.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except RunAborted as e:
        print(f"run aborted: {e}", file=sys.stderr)
        return EXIT_FAIL
    except QpinnError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
