"""Command-line front end: ``mono3d-dse {evaluate,sweep,optimize,compare}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import yaml

from .annealer import (OBJECTIVES, AnnealerConfig, DesignSpace, Problem, SpaceError, load_space,
                       optimize_with_reference)
from .evaluator import Constraints, EvalResult, Evaluator, LeakageDivergenceError
from .perf import DesignPoint
from .power import Calibration, CalibrationError, load_calibration
from .reporting import compare_csv, compare_row, format_table, pct_improvement, sweep_csv, trajectory_csv
from .thermal import FloorplanError, ThermalError, ThermalStack, load_stack
from .workload import NetworkSpec, TopologyError, load_network

log = logging.getLogger("mono3d_dse")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_INFEASIBLE = 4
EXIT_SOLVER = 5

SWEEP_CAP = 10_000
# smallest configuration of the default space at the lowest clock, 352 KB SRAM in total
UNOPTIMIZED = DesignPoint(64, 68, 32, 64, 256, 500)

_DEFAULTS = {
    "topology": "unet",
    "calibration": None,
    "stack": None,
    "space": None,
    "objective": "edap",
    "tmax": 80.0,
    "max_perf_loss": 0.10,
    "grid": "64x64",
    "seed": 0,
    "out": None,
    "strict": False,
    "workers": 1,
    "reference": "anneal",
    "cap": SWEEP_CAP,
}


class UsageError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


@dataclass
class RunConfig:
    net: NetworkSpec
    cal: Calibration
    stack: ThermalStack
    space: DesignSpace
    constraints: Constraints
    annealer: AnnealerConfig
    grid: Tuple[int, int]
    out: Optional[str]
    strict: bool
    workers: int
    reference: str
    cap: int

    def evaluator(self) -> Evaluator:
        return Evaluator(self.net, self.cal, self.stack, self.grid, self.space.aspect)


def _parse_grid(text: str) -> Tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", str(text))
    if not m:
        raise UsageError(f"--grid must look like NxN, got {text!r}", EXIT_PARSE)
    return int(m.group(1)), int(m.group(2))


def _merge(args: argparse.Namespace) -> Dict:
    opts = dict(_DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                raw = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}", EXIT_PARSE)
        for k, v in raw.items():
            opts[k.replace("-", "_")] = v
    for k, v in vars(args).items():
        if v is not None:
            opts[k] = v
    return opts


def build_config(args: argparse.Namespace) -> RunConfig:
    o = _merge(args)
    try:
        net = load_network(o["topology"])
        cal = load_calibration(o["calibration"])
        stack = load_stack(o["stack"])
        space = load_space(o["space"])
    except (TopologyError, CalibrationError, yaml.YAMLError, KeyError, TypeError) as exc:
        raise UsageError(f"parse error: {exc}", EXIT_PARSE)
    except OSError as exc:
        raise UsageError(str(exc), EXIT_PARSE)
    except (SpaceError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}", EXIT_VALIDATION)
    if o["objective"] not in OBJECTIVES:
        raise UsageError(f"objective must be one of {OBJECTIVES}", EXIT_VALIDATION)
    if float(o["tmax"]) <= stack.ambient_c:
        raise UsageError(f"--tmax {o['tmax']} must exceed ambient {stack.ambient_c}", EXIT_VALIDATION)
    out = o["out"]
    if out:
        os.makedirs(out, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise UsageError(f"output directory {out} is not writable", EXIT_VALIDATION)
    try:
        constraints = Constraints(t_max_c=float(o["tmax"]), max_perf_loss=float(o["max_perf_loss"]))
        annealer = AnnealerConfig(objective=o["objective"], seed=int(o["seed"]))
    except ValueError as exc:
        raise UsageError(str(exc), EXIT_VALIDATION)
    return RunConfig(net, cal, stack, space, constraints, annealer, _parse_grid(o["grid"]), out,
                     bool(o["strict"]), int(o["workers"]), o["reference"], int(o["cap"]))


def _write(cfg: RunConfig, name: str, text: str) -> Optional[str]:
    if not cfg.out:
        return None
    path = os.path.join(cfg.out, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _parse_point(args, space: DesignSpace) -> DesignPoint:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", args.point or "")
    if not m:
        raise UsageError("--point must look like ROWSxCOLS", EXIT_PARSE)
    try:
        srams = [int(s) for s in args.sram.split(",")]
        freq = float(args.freq)
    except (ValueError, AttributeError):
        raise UsageError("--sram must be IFMAP,FILTER,OFMAP in KB and --freq a number", EXIT_PARSE)
    if len(srams) != 3:
        raise UsageError("--sram needs exactly three sizes", EXIT_PARSE)
    p = DesignPoint(int(m.group(1)), int(m.group(2)), *srams, freq)
    problem = space.violated_invariant(p)
    if problem:
        raise UsageError(f"point {p.label()} is outside the design space: {problem}", EXIT_VALIDATION)
    return p


def cmd_evaluate(cfg: RunConfig, args) -> int:
    p = _parse_point(args, cfg.space)
    e = cfg.evaluator()(p, cfg.constraints)
    text = e.to_json() + "\n"
    sys.stdout.write(text)
    _write(cfg, "evaluate.json", text)
    if cfg.strict and not e.feasible:
        return EXIT_INFEASIBLE
    return EXIT_OK


def sweep(cfg: RunConfig) -> List[EvalResult]:
    n = len(cfg.space)
    if n > cfg.cap:
        raise UsageError(
            f"space has {n} points, above the sweep cap of {cfg.cap}; "
            f"increase the step or shrink the SRAM/frequency sets", EXIT_VALIDATION)
    ev = cfg.evaluator()
    return [ev(p, cfg.constraints) for p in cfg.space.enumerate()]


def cmd_sweep(cfg: RunConfig, args) -> int:
    text = sweep_csv(sweep(cfg))
    if not _write(cfg, "sweep.csv", text):
        sys.stdout.write(text)
    return EXIT_OK


def _report(result, ref: EvalResult) -> Dict:
    b = result.best
    rep = {
        "objective": result.objective,
        "best": b.point.to_dict(),
        "latency_s": b.latency_s,
        "total_power_w": b.total_power_w,
        "edap": b.edap,
        "max_c": b.max_c,
        "feasible": b.feasible,
        "violations": [{"kind": v.kind, "magnitude": v.magnitude} for v in b.violations],
        "latency_reference": {"point": ref.point.to_dict(), "latency_s": ref.latency_s},
    }
    if result.objective != "latency":
        rep["vs_latency_optimized"] = {
            "power_improvement_pct": pct_improvement(ref.total_power_w, b.total_power_w),
            "edap_improvement_pct": pct_improvement(ref.edap, b.edap),
            "latency_sacrifice_pct": 100.0 * (b.latency_s - ref.latency_s) / ref.latency_s,
        }
    return rep


def run_optimize(cfg: RunConfig, objective: str, ev: Optional[Evaluator] = None):
    ev = ev or cfg.evaluator()
    problem = Problem(cfg.space, ev, cfg.constraints)
    return optimize_with_reference(replace(cfg.annealer, objective=objective), problem, cfg.reference, cfg.workers)


def cmd_optimize(cfg: RunConfig, args) -> int:
    obj = cfg.annealer.objective
    result, ref = run_optimize(cfg, obj)
    rep = _report(result, ref)
    b = result.best
    print(f"objective: {obj}")
    print(f"best: {b.point.label()}  ({'feasible' if b.feasible else 'INFEASIBLE'})")
    print(f"latency {b.latency_s * 1e3:.4f} ms  power {b.total_power_w:.4f} W  EDAP {b.edap:.4e} J*s*mm2  "
          f"max {b.max_c:.2f} C")
    print(f"latency reference: {ref.point.label()}  {ref.latency_s * 1e3:.4f} ms")
    if "vs_latency_optimized" in rep:
        d = rep["vs_latency_optimized"]
        print(f"vs latency-optimized: power {d['power_improvement_pct']:+.1f}%  EDAP {d['edap_improvement_pct']:+.1f}%  "
              f"latency sacrifice {d['latency_sacrifice_pct']:.2f}%")
    _write(cfg, f"trajectory_{obj}.csv", trajectory_csv(result.trajectory))
    _write(cfg, f"best_{obj}.json", json.dumps(rep, indent=2, sort_keys=True) + "\n")
    if not b.feasible:
        print("no feasible configuration found", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args) -> int:
    ev = cfg.evaluator()
    results = {}
    ref = None
    for obj in OBJECTIVES:
        results[obj], ref = run_optimize(cfg, obj, ev)
        _write(cfg, f"trajectory_{obj}.csv", trajectory_csv(results[obj].trajectory))
    lat_best = results["latency"].best
    rows = [compare_row(obj, results[obj].best, lat_best) for obj in OBJECTIVES]
    rows.append(compare_row("unoptimized", ev(UNOPTIMIZED, results["latency"].constraints), lat_best))
    print(f"network: {cfg.net.name}")
    print(format_table(rows))
    _write(cfg, "compare.csv", compare_csv(rows))
    if not all(results[o].best.feasible for o in OBJECTIVES):
        return EXIT_INFEASIBLE
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file supplying any of these flags")
    p.add_argument("--topology", help="topology CSV or bundled name (unet, resnet50)")
    p.add_argument("--calibration", help="calibration YAML (default: bundled)")
    p.add_argument("--stack", help="thermal stack YAML (default: bundled)")
    p.add_argument("--space", help="design space YAML (default: bundled)")
    p.add_argument("--objective", choices=OBJECTIVES)
    p.add_argument("--tmax", type=float, help="peak temperature limit, C (default 80)")
    p.add_argument("--max-perf-loss", type=float, dest="max_perf_loss",
                   help="allowed latency loss vs the latency-optimized point (default 0.10)")
    p.add_argument("--grid", help="thermal grid per layer, e.g. 64x64")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--strict", action="store_true", default=None, help="nonzero exit for infeasible results")
    p.add_argument("--workers", type=int, help="threads for annealing starts")
    p.add_argument("--reference", choices=("anneal", "exhaustive"),
                   help="how the latency-optimized reference is found (default anneal)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mono3d-dse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("evaluate", help="evaluate one design point")
    _add_common(p)
    p.add_argument("--point", required=True, help="ROWSxCOLS, e.g. 64x68")
    p.add_argument("--sram", required=True, help="IFMAP,FILTER,OFMAP sizes in KB")
    p.add_argument("--freq", required=True, help="clock in MHz")
    p = sub.add_parser("sweep", help="evaluate every point of the space")
    _add_common(p)
    p.add_argument("--cap", type=int, help=f"refuse spaces larger than this (default {SWEEP_CAP})")
    p = sub.add_parser("optimize", help="multi-start simulated annealing for one objective")
    _add_common(p)
    p = sub.add_parser("compare", help="optimize latency, power and EDAP and tabulate")
    _add_common(p)
    return parser


COMMANDS = {"evaluate": cmd_evaluate, "sweep": cmd_sweep, "optimize": cmd_optimize, "compare": cmd_compare}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    command = args.command
    del args.command, args.verbose
    try:
        cfg = build_config(args)
        return COMMANDS[command](cfg, args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (LeakageDivergenceError, ThermalError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (FloorplanError, SpaceError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
