"""Command-line front end: ``blockmt {adjust,sweep,example2,connectome}``.

Exit codes: 0 success, 2 usage or parse error, 3 data error. Every command
accepts ``--config FILE`` (JSON keyed by option name); flags given on the
command line take precedence over the file. ``BLOCKMT_THREADS`` sets the
default worker count for simulation sweeps.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, mtp
from . import connectome as conn
from . import simulator as sim
from .errors import DomainError, LoadError, PartitionError
from .stats import normal_sf

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    pass


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(t) for t in str(text).split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}") from None
    return parse


def _default_threads() -> int:
    raw = os.environ.get("BLOCKMT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the manifest time for reproducible builds of outputs
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch and epoch.isdigit() else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


_NOT_PARAMS = {"func", "config", "threads", "command", "out"}


def build_manifest(args, inputs=()) -> dict:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_PARAMS}
    files = {}
    for p in inputs:
        p = Path(p)
        if p.is_dir():
            for f in sorted(q for q in p.iterdir() if q.is_file() and not q.name.startswith(".")):
                files[str(f)] = _sha256(f)
        elif p.is_file():
            files[str(p)] = _sha256(p)
    return {"command": args.command, "params": params, "seed": params.get("seed"),
            "version": __version__, "inputs": files, "timestamp": _timestamp()}


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")


# --- adjust --------------------------------------------------------------------

def _read_numbers(stream) -> list[float]:
    values = []
    for lineno, raw in enumerate(stream, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        token = line.split(",")[0].split()[0]
        try:
            v = float(token)
        except ValueError:
            if not values and lineno == 1:
                continue  # header row of a single-column table
            raise UsageError(f"line {lineno}: not a number: {token!r}") from None
        if not math.isfinite(v):
            raise UsageError(f"line {lineno}: not a finite number: {token!r}")
        values.append(v)
    if not values:
        raise UsageError("no input values")
    return values


def cmd_adjust(args, out) -> int:
    if args.input in (None, "-"):
        values = _read_numbers(sys.stdin)
    else:
        try:
            with open(args.input, encoding="utf-8") as fh:
                values = _read_numbers(fh)
        except OSError as exc:
            raise LoadError(str(exc), args.input) from None
    arr = np.asarray(values)
    if args.z:
        p = normal_sf(arr)
    else:
        bad = np.flatnonzero((arr < 0) | (arr > 1))
        if bad.size:
            raise UsageError(f"value {arr[bad[0]]!r} is not a p-value (entry {bad[0] + 1})")
        p = arr
    adj = mtp.adjust_pvalues(p, args.method)
    out.write("p\tadjusted\treject\n")
    for pi, ai in zip(p.tolist(), adj.tolist()):
        out.write(f"{pi!r}\t{ai!r}\t{int(ai <= args.alpha)}\n")
    return EXIT_OK


# --- sweep ---------------------------------------------------------------------

def _grid_tasks(args):
    if not args.delta:
        raise UsageError("an explicit grid needs --delta")
    strategies = args.strategy or list(sim.STRATEGIES)
    methods = args.method or ["bonferroni"]
    bs = args.b or [5]
    tasks = []
    common = dict(alpha=args.alpha, n_sim=args.nsim, seed=args.seed, placement=args.placement)
    for s in strategies:
        if s not in sim.STRATEGIES:
            raise UsageError(f"unknown strategy {s!r}")
    for d in args.delta:
        for b in bs:
            if args.k:
                m = args.M // b if b else 0
                m2 = args.m2 if args.m2 is not None else m // 5
                cfgs = [sim.ScenarioConfig(M=args.M, b=b, m1=0, m2=m2, k=k, delta=d, **common)
                        for k in args.k]
            else:
                if b <= 0 or args.M1 % b:
                    raise UsageError(f"block size {b} must divide M1={args.M1}")
                cfgs = [sim.ScenarioConfig(M=args.M, b=b, m1=args.M1 // b, delta=d, **common)]
            for cfg in cfgs:
                for s in strategies:
                    for meth in methods:
                        tasks.append((cfg, s, meth))
    return tasks


def cmd_sweep(args, out) -> int:
    if args.figure:
        tasks = sim.figure_tasks(args.figure, deltas=args.delta, bs=args.b, n_sim=args.nsim,
                                 seed=args.seed, placement=args.placement, M=args.M, M1=args.M1,
                                 alpha=args.alpha)
    else:
        tasks = _grid_tasks(args)
    result = sim.power_sweep(tasks, threads=args.threads)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(args)
    sim.write_sweep_csv(outdir / "sweep.csv", result)
    sim.write_sweep_json(outdir / "sweep.json", result)
    _write_json(outdir / "manifest.json", manifest)
    out.write(f"wrote {len(result.cells)} cells to {outdir}\n")
    return EXIT_OK


# --- example2 ------------------------------------------------------------------

def _ratio(num: int, den: int) -> str:
    return "undefined" if den == 0 else str(Fraction(num, den))


def cmd_example2(args, out) -> int:
    report = sim.analyze_example2(args.alpha, args.method)
    if args.json:
        json.dump(report, out, indent=2)
        out.write("\n")
        return EXIT_OK
    srw = report["srw"]
    t = srw["table"]
    out.write(f"SRW {args.method}: critical value {srw['critical_value']:.4f}, "
              f"{t['R']} rejections\n")
    out.write(f"  U={t['U']} V={t['V']} T={t['T']} S={t['S']}\n")
    out.write(f"  typeI = {_ratio(t['V'], t['m0'])}, typeII = {_ratio(t['T'], t['m1'])}\n")
    for kind, res in report["bwa"].items():
        t = res["table"]
        values = ", ".join(f"{lab} {v:.4f}" for lab, v in res["summaries"].items())
        rejected = ", ".join(res["rejected"]) or "none"
        out.write(f"BWA {kind} {args.method}: {values}\n")
        out.write(f"  rejected: {rejected}\n")
        out.write(f"  U={t['U']} V={t['V']} T={t['T']} S={t['S']}\n")
        out.write(f"  typeI = {_ratio(t['V'], t['m0'])}, typeII = {_ratio(t['T'], t['m1'])}\n")
    return EXIT_OK


# --- connectome ----------------------------------------------------------------

def cmd_connectome(args, out) -> int:
    strategies = list(conn.CONN_STRATEGIES) if "all" in args.strategy else args.strategy
    # block strategies may be named without the "_bwa" suffix
    strategies = [s + "_bwa" if s + "_bwa" in conn.CONN_STRATEGIES else s for s in strategies]
    for s in strategies:
        if s not in conn.CONN_STRATEGIES:
            raise UsageError(f"unknown strategy {s!r}")
    if args.synthesize and args.treatments:
        raise UsageError("--synthesize and --treatments are mutually exclusive")
    methods = args.method or ["bonferroni"]
    inputs = []
    if args.hierarchy:
        hier = conn.load_hierarchy(args.hierarchy)
        inputs.append(args.hierarchy)
        fine = args.fine if args.fine is not None else hier.sizes[0]
        coarse = args.coarse if args.coarse is not None else hier.sizes[-1]
    else:
        fine = args.fine if args.fine is not None else 60
        coarse = args.coarse if args.coarse is not None else 12
        hier = conn.synthetic_hierarchy((fine, coarse) if fine != coarse else (fine,))
    index = conn.blocks_from_hierarchy(hier, fine, coarse, args.include_diagonal)

    if args.controls:
        controls = conn.load_group(args.controls)
        inputs.append(args.controls)
    else:
        controls = conn.synthetic_controls(fine, args.n_controls, args.seed)
    if controls.shape[1] != fine:
        raise LoadError(f"matrices are {controls.shape[1]} x {controls.shape[1]} but the "
                        f"parcellation level has {fine} ROIs", args.controls)

    affected_cells = None
    affected: dict[str, float] = {}
    if args.affected:
        affected = conn.load_affected_blocks(args.affected, index)
        inputs.append(args.affected)
    if args.treatments:
        treatments = conn.load_group(args.treatments)
        inputs.append(args.treatments)
        if treatments.shape[1:] != controls.shape[1:]:
            raise LoadError(f"treatment matrices are {treatments.shape[1]} x {treatments.shape[1]}, "
                            f"controls {controls.shape[1]} x {controls.shape[1]}", args.treatments)
        if affected:
            affected_cells = np.zeros(index.n_cells, dtype=bool)
            for lab in affected:
                affected_cells[index.partition.members[index.block_position(lab)]] = True
    else:
        if not args.affected:
            affected = conn.choose_affected_blocks(index, min(args.m1, index.m), args.seed)
        syn = conn.synthesize_treatment_group(controls, index, affected, args.delta,
                                              args.n_treatments, args.seed)
        treatments, affected_cells = syn.treatments, syn.affected_cells

    results = [conn.compare_groups(controls, treatments, index, s, m, args.alpha, affected_cells,
                                   args.threshold, args.reference, args.constant)
               for s in strategies for m in methods]
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(args, inputs)
    extra = {
        "blocks": index.m, "cells": index.n_cells, "fine_level": fine, "coarse_level": coarse,
        "affected_blocks": affected,
        "histograms": {
            "block_size": conn.block_size_histogram(index),
            "affected_fraction": conn.fraction_histogram(affected.values()),
        },
    }
    conn.write_results_json(outdir / "results.json", results, extra)
    conn.write_results_csv(outdir / "results.csv", results)
    _write_json(outdir / "manifest.json", manifest)
    if args.write_treatments and not args.treatments:
        conn.write_group(outdir / "treatments", treatments)
    out.write("strategy\tmethod\tunit\ttests\trejections\tpower\tfallback_blocks\n")
    for r in results:
        s = r.summary()
        power = "" if s["power"] is None else f"{s['power']!r}"
        out.write(f"{r.strategy}\t{r.method}\t{r.unit}\t{s['tests']}\t{s['rejections']}\t"
                  f"{power}\t{s['fallback_blocks']}\n")
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockmt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"blockmt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, method_list=False):
        p.add_argument("--config", help="JSON file of option values; flags override it")
        p.add_argument("--alpha", type=float, default=0.05)
        if method_list:
            p.add_argument("--method", type=_csv_list(str), default=None,
                           help="comma-separated procedures (default bonferroni)")
        else:
            p.add_argument("--method", default="bonferroni", choices=mtp.PROCEDURES)

    p = sub.add_parser("adjust", help="adjust p-values read one per line")
    common(p)
    p.add_argument("input", nargs="?", default="-", help="file of values, '-' for stdin")
    p.add_argument("--z", action="store_true", help="inputs are z-values; use upper-tail p")
    p.set_defaults(func=cmd_adjust)

    p = sub.add_parser("sweep", help="Monte Carlo power/FWER/FDR sweep")
    common(p, method_list=True)
    p.add_argument("--figure", choices=sim.FIGURES)
    p.add_argument("--strategy", type=_csv_list(str), default=None)
    p.add_argument("--delta", type=_csv_list(float), default=None)
    p.add_argument("--b", type=_csv_list(int), default=None)
    p.add_argument("--k", type=_csv_list(int), default=None,
                   help="affected regions per partial block (partial-affection grid)")
    p.add_argument("--M", type=int, default=1000)
    p.add_argument("--M1", type=int, default=100)
    p.add_argument("--m2", type=int, default=None)
    p.add_argument("--placement", choices=("fixed", "bernoulli"), default="fixed")
    p.add_argument("--nsim", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("example2", help="SRW and block-wise decisions on the 8x8 example")
    common(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_example2)

    p = sub.add_parser("connectome", help="two-group connectivity comparison")
    common(p, method_list=True)
    p.add_argument("--controls", help="directory of control matrices (synthetic if omitted)")
    p.add_argument("--treatments", help="directory of treatment matrices")
    p.add_argument("--synthesize", action="store_true",
                   help="generate treatments from the controls (default without --treatments)")
    p.add_argument("--hierarchy", help="parcellation hierarchy file (synthetic if omitted)")
    p.add_argument("--fine", type=int, default=None, help="matrix resolution level")
    p.add_argument("--coarse", type=int, default=None, help="block-defining level")
    p.add_argument("--include-diagonal", action="store_true")
    p.add_argument("--affected", help="'P Q fraction' file of affected blocks")
    p.add_argument("--m1", type=int, default=10, help="random affected blocks when synthesizing")
    p.add_argument("--delta", type=float, default=1.5)
    p.add_argument("--n-controls", type=int, default=15)
    p.add_argument("--n-treatments", type=int, default=15)
    p.add_argument("--strategy", type=_csv_list(str), default=["all"])
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--reference", choices=("t", "z"), default="t")
    p.add_argument("--constant", choices=("standard", "printed"), default="standard")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--write-treatments", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_connectome)
    return parser


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        action = known[dest]
        if isinstance(value, list) and action.type is not None:
            value = ",".join(map(str, value))
        if isinstance(value, str) and action.type is not None:
            value = action.type(value)
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.command == "sweep" and args.threads < 1:
            raise UsageError("--threads must be positive")
        return args.func(args, out)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        print(f"blockmt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LoadError as exc:
        print(f"blockmt: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DomainError, PartitionError) as exc:
        print(f"blockmt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
