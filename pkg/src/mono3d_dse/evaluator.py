"""Per-configuration evaluation: performance, power, thermal, leakage loop, feasibility."""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from .perf import DesignPoint, PerfReport, network_perf
from .power import Calibration, PowerReport, edap, power_report
from .thermal import TemperatureMap, ThermalStack, build_floorplan, solve_steady
from .workload import NetworkSpec

CONVERGENCE_C = 1.0
MAX_ITERATIONS = 20
DAMPING_AFTER = 10
DAMPING = 0.5


class LeakageDivergenceError(RuntimeError):
    def __init__(self, point: DesignPoint, last_two: Tuple[float, float]):
        self.point = point
        self.last_two = last_two
        super().__init__(
            f"leakage-temperature loop did not converge for {point.label()} "
            f"within {MAX_ITERATIONS} iterations (last max temps {last_two[0]:.2f}, {last_two[1]:.2f} C)"
        )


@dataclass(frozen=True)
class Constraints:
    t_max_c: float = 80.0
    max_perf_loss: float = 0.10
    latency_ref_s: Optional[float] = None

    def __post_init__(self):
        if self.max_perf_loss < 0:
            raise ValueError("max_perf_loss must be >= 0")

    @property
    def latency_bound_s(self) -> Optional[float]:
        if self.latency_ref_s is None:
            return None
        return (1.0 + self.max_perf_loss) * self.latency_ref_s


@dataclass(frozen=True)
class Violation:
    kind: str  # "thermal" | "latency"
    magnitude: float  # degC or seconds over the bound


@dataclass(frozen=True)
class EvalResult:
    point: DesignPoint
    perf: PerfReport
    power: PowerReport
    temps: TemperatureMap = field(compare=False, repr=False)
    max_c: float
    iterations: int
    feasible: bool = True
    violations: Tuple[Violation, ...] = ()

    @property
    def latency_s(self) -> float:
        return self.perf.latency_s

    @property
    def total_power_w(self) -> float:
        return self.power.total_w

    @property
    def edap(self) -> float:
        return edap(self.power.energy_j, self.perf.latency_s, self.power.footprint_mm2)

    def objective(self, name: str) -> float:
        if name == "latency":
            return self.latency_s
        if name == "power":
            return self.total_power_w
        if name == "edap":
            return self.edap
        raise ValueError(f"unknown objective {name!r}")

    def violation(self, kind: str) -> float:
        return sum(v.magnitude for v in self.violations if v.kind == kind)

    def to_dict(self) -> Dict:
        return {
            "point": self.point.to_dict(),
            "objectives": {"latency_s": self.latency_s, "total_power_w": self.total_power_w, "edap": self.edap},
            "latency_s": self.latency_s,
            "total_power_w": self.total_power_w,
            "edap": self.edap,
            "max_c": self.max_c,
            "feasible": self.feasible,
            "violations": [{"kind": v.kind, "magnitude": v.magnitude} for v in self.violations],
            "leakage_iterations": self.iterations,
            "perf": {
                "total_cycles": self.perf.total_cycles,
                "latency_s": self.perf.latency_s,
                "mean_utilization": self.perf.mean_utilization,
                "mac_ops": self.perf.mac_ops,
                "sram_reads": dict(self.perf.sram_reads),
                "sram_writes": dict(self.perf.sram_writes),
                "per_layer": [
                    {"name": lp.name, "cycles": lp.cycles, "utilization": lp.utilization} for lp in self.perf.per_layer
                ],
            },
            "power": self.power.to_dict(),
            "thermal": {
                "grid": [self.temps.nx, self.temps.ny],
                "max_c": self.max_c,
                "block_mean_c": dict(self.temps.block_mean_c),
                "layer_max_c": {k: float(v.max()) for k, v in self.temps.layers.items()},
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def check_feasibility(e: EvalResult, c: Constraints) -> Tuple[bool, Tuple[Violation, ...]]:
    violations = []
    if e.max_c > c.t_max_c:
        violations.append(Violation("thermal", e.max_c - c.t_max_c))
    bound = c.latency_bound_s
    if bound is not None and e.latency_s > bound:
        violations.append(Violation("latency", e.latency_s - bound))
    return not violations, tuple(violations)


def apply_constraints(e: EvalResult, c: Constraints) -> EvalResult:
    ok, violations = check_feasibility(e, c)
    return replace(e, feasible=ok, violations=violations)


def _block_temps(tm: Optional[TemperatureMap], ambient: float) -> Dict[str, float]:
    names = ("array", "sram_ifmap", "sram_filter", "sram_ofmap")
    if tm is None:
        return {b: ambient for b in names}
    return {b: tm.block_mean_c.get(b, ambient) for b in names}


def evaluate(
    p: DesignPoint,
    net: NetworkSpec,
    cal: Calibration,
    stack: ThermalStack,
    grid: Tuple[int, int] = (64, 64),
    constraints: Optional[Constraints] = None,
    aspect_band: Tuple[float, float] = (0.94, 1.0),
) -> EvalResult:
    """Iterate leakage and temperature to a fixed point (< 1 C change in peak)."""
    perf = network_perf(net, p, cal.operand_bytes)
    base_fp = build_floorplan(p, cal, aspect_band)

    tm = None
    prev_max = None
    prev_leak = None
    history: List[float] = []
    for it in range(1, MAX_ITERATIONS + 1):
        try:
            pr = power_report(perf, p, cal, _block_temps(tm, stack.ambient_c))
        except OverflowError:  # thermal runaway
            raise LeakageDivergenceError(p, (history[-2] if len(history) > 1 else math.inf, history[-1])) from None
        if it > DAMPING_AFTER and prev_leak is not None:
            damped = {b: DAMPING * pr.leakage_w[b] + (1 - DAMPING) * prev_leak[b] for b in pr.leakage_w}
            pr = replace(pr, leakage_w=damped)
        prev_leak = pr.leakage_w
        tm = solve_steady(stack, base_fp.with_powers(pr.block_power()), grid)
        history.append(tm.max_c)
        if prev_max is not None and abs(tm.max_c - prev_max) < CONVERGENCE_C:
            result = EvalResult(p, perf, pr, tm, tm.max_c, it)
            return apply_constraints(result, constraints or Constraints())
        prev_max = tm.max_c
    raise LeakageDivergenceError(p, (history[-2], history[-1]))


def confirm_fixed_point(e: EvalResult, net: NetworkSpec, cal: Calibration, stack: ThermalStack,
                        grid: Tuple[int, int], aspect_band: Tuple[float, float] = (0.94, 1.0)) -> float:
    """One extra leakage update + solve from the converged state; returns |delta max_c|."""
    pr = power_report(e.perf, e.point, cal, _block_temps(e.temps, stack.ambient_c))
    fp = build_floorplan(e.point, cal, aspect_band).with_powers(pr.block_power())
    tm = solve_steady(stack, fp, grid)
    return abs(tm.max_c - e.max_c)


@dataclass
class Evaluator:
    """Binds a workload and models; memoizes results per design point."""

    net: NetworkSpec
    cal: Calibration
    stack: ThermalStack
    grid: Tuple[int, int] = (64, 64)
    aspect_band: Tuple[float, float] = (0.94, 1.0)
    _cache: Dict[DesignPoint, EvalResult] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __call__(self, p: DesignPoint, constraints: Optional[Constraints] = None) -> EvalResult:
        with self._lock:
            raw = self._cache.get(p)
        if raw is None:
            raw = evaluate(p, self.net, self.cal, self.stack, self.grid, Constraints(t_max_c=float("inf")),
                           self.aspect_band)
            with self._lock:
                self._cache[p] = raw
        return apply_constraints(raw, constraints or Constraints())

    @property
    def evaluations(self) -> int:
        return len(self._cache)
