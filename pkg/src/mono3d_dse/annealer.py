"""Multi-start simulated annealing over the accelerator design space.

Each start is pinned to one clock frequency and owns an RNG stream derived
from (seed, frequency, start index), so results do not depend on how starts
are scheduled. Constraint violations enter the cost as an additive penalty,
letting trajectories cross thermally infeasible regions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import cached_property
from importlib import resources
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .evaluator import Constraints, EvalResult, Evaluator
from .perf import DesignPoint

OBJECTIVES = ("latency", "power", "edap")
NEIGHBOR_ATTEMPTS = 32
COORDINATES = ("rows", "cols", "sram_ifmap_kb", "sram_filter_kb", "sram_ofmap_kb")


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class DesignSpace:
    rows: Tuple[int, int] = (64, 256)
    cols: Tuple[int, int] = (64, 256)
    step: int = 2
    aspect: Tuple[float, float] = (0.94, 1.0)
    sram_kb: Tuple[int, ...] = (32, 64, 128, 256, 512, 1024, 2048, 4096)
    freq_mhz: Tuple[float, ...] = (500, 600, 735)

    def __post_init__(self):
        for name in ("rows", "cols", "aspect"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "sram_kb", tuple(sorted(self.sram_kb)))
        object.__setattr__(self, "freq_mhz", tuple(sorted(self.freq_mhz)))
        if self.step < 1:
            raise SpaceError("step must be >= 1")
        if self.rows[0] < 1 or self.cols[0] < 1 or self.rows[0] > self.rows[1] or self.cols[0] > self.cols[1]:
            raise SpaceError("invalid row/col bounds")
        if not 0 < self.aspect[0] <= self.aspect[1] <= 1:
            raise SpaceError("aspect band must satisfy 0 < lo <= hi <= 1")
        if not self.sram_kb or not self.freq_mhz:
            raise SpaceError("SRAM level set and frequency set must be non-empty")
        if not self.arrays:
            raise SpaceError("no rows x cols pair satisfies the aspect band")

    @cached_property
    def row_values(self) -> Tuple[int, ...]:
        return tuple(range(self.rows[0], self.rows[1] + 1, self.step))

    @cached_property
    def col_values(self) -> Tuple[int, ...]:
        return tuple(range(self.cols[0], self.cols[1] + 1, self.step))

    def aspect_ok(self, rows: int, cols: int) -> bool:
        a = min(rows, cols) / max(rows, cols)
        return self.aspect[0] - 1e-12 <= a <= self.aspect[1] + 1e-12

    @cached_property
    def arrays(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((r, c) for r in self.row_values for c in self.col_values if self.aspect_ok(r, c))

    def __len__(self) -> int:
        return len(self.arrays) * len(self.sram_kb) ** 3 * len(self.freq_mhz)

    def __contains__(self, p: DesignPoint) -> bool:
        return (
            p.rows in self.row_values
            and p.cols in self.col_values
            and self.aspect_ok(p.rows, p.cols)
            and p.sram_ifmap_kb in self.sram_kb
            and p.sram_filter_kb in self.sram_kb
            and p.sram_ofmap_kb in self.sram_kb
            and p.freq_mhz in self.freq_mhz
        )

    def violated_invariant(self, p: DesignPoint) -> Optional[str]:
        if p.rows not in self.row_values:
            return f"rows={p.rows} not in {self.rows[0]}..{self.rows[1]} step {self.step}"
        if p.cols not in self.col_values:
            return f"cols={p.cols} not in {self.cols[0]}..{self.cols[1]} step {self.step}"
        if not self.aspect_ok(p.rows, p.cols):
            return f"aspect ratio {p.aspect:.4f} outside band [{self.aspect[0]}, {self.aspect[1]}]"
        for name in ("sram_ifmap_kb", "sram_filter_kb", "sram_ofmap_kb"):
            if getattr(p, name) not in self.sram_kb:
                return f"{name}={getattr(p, name)} not in SRAM levels {list(self.sram_kb)}"
        if p.freq_mhz not in self.freq_mhz:
            return f"freq_mhz={p.freq_mhz:g} not in {list(self.freq_mhz)}"
        return None

    def enumerate(self, freqs: Optional[Sequence[float]] = None) -> Iterator[DesignPoint]:
        for f in freqs if freqs is not None else self.freq_mhz:
            for r, c in self.arrays:
                for si in self.sram_kb:
                    for sf in self.sram_kb:
                        for so in self.sram_kb:
                            yield DesignPoint(r, c, si, sf, so, f)

    def reference_point(self) -> DesignPoint:
        """Smallest array, smallest SRAMs, lowest clock: the cost normalization anchor."""
        r, c = self.arrays[0]
        s = self.sram_kb[0]
        return DesignPoint(r, c, s, s, s, self.freq_mhz[0])

    def random_point(self, rng: np.random.Generator, freq: float) -> DesignPoint:
        r, c = self.arrays[int(rng.integers(len(self.arrays)))]
        si, sf, so = (self.sram_kb[int(i)] for i in rng.integers(len(self.sram_kb), size=3))
        return DesignPoint(r, c, si, sf, so, freq)

    def to_dict(self) -> Dict:
        return {
            "rows": list(self.rows),
            "cols": list(self.cols),
            "step": self.step,
            "aspect": list(self.aspect),
            "sram_kb": list(self.sram_kb),
            "freq_mhz": list(self.freq_mhz),
        }


def space_from_dict(raw) -> DesignSpace:
    return DesignSpace(
        rows=tuple(int(v) for v in raw.get("rows", (64, 256))),
        cols=tuple(int(v) for v in raw.get("cols", (64, 256))),
        step=int(raw.get("step", 2)),
        aspect=tuple(float(v) for v in raw.get("aspect", (0.94, 1.0))),
        sram_kb=tuple(int(v) for v in raw.get("sram_kb", (32, 64, 128, 256, 512, 1024, 2048, 4096))),
        freq_mhz=tuple(float(v) for v in raw.get("freq_mhz", (500, 600, 735))),
    )


def load_space(path=None) -> DesignSpace:
    if path is None:
        text = resources.files("mono3d_dse.data").joinpath("space.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return space_from_dict(yaml.safe_load(text) or {})


@dataclass(frozen=True)
class AnnealerConfig:
    objective: str = "edap"
    starts_per_freq: int = 6
    proposals_per_temp: int = 5
    t_init: float = 1.44
    t_final: float = 0.88
    cooling: float = 0.85
    seed: int = 0
    penalty: float = 10.0
    feasible_init: bool = False
    init_attempts: int = 200
    cost_scale: float = 100.0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if not 0 < self.cooling < 1:
            raise ValueError("cooling must be in (0, 1)")
        if not 0 < self.t_final < self.t_init:
            raise ValueError("need 0 < t_final < t_init")
        if self.starts_per_freq < 1 or self.proposals_per_temp < 1:
            raise ValueError("starts_per_freq and proposals_per_temp must be >= 1")
        if self.penalty <= 0:
            raise ValueError("penalty must be > 0")
        if self.cost_scale <= 0:
            raise ValueError("cost_scale must be > 0")


def temperature_schedule(t_init: float, t_final: float, cooling: float) -> List[float]:
    """Annealing temperatures, stopping before a step whose cooled value would fall below t_final."""
    temps = []
    t = t_init
    while t * cooling >= t_final * (1 - 1e-12):
        temps.append(t)
        t *= cooling
    return temps


def schedule_length(t_init: float, t_final: float, cooling: float) -> int:
    return int(math.floor(math.log(t_final / t_init) / math.log(cooling) + 1e-9))


@dataclass(frozen=True)
class Normalizer:
    """Divisors turning objective values and violations into unitless costs."""

    objective: float
    latency_s: float
    thermal_c: float


def score(e: EvalResult, objective: str, norm: Normalizer, penalty: float = 10.0, scale: float = 1.0) -> float:
    """Normalized objective plus weighted normalized violations, times ``scale``."""
    value = e.objective(objective) / norm.objective
    if not e.feasible:
        value += penalty * violation_size(e, norm)
    return scale * value


def violation_size(e: EvalResult, norm: Normalizer) -> float:
    return e.violation("thermal") / norm.thermal_c + e.violation("latency") / norm.latency_s


def neighbor(p: DesignPoint, space: DesignSpace, rng: np.random.Generator) -> DesignPoint:
    """Move one coordinate by one step or level; frequency stays fixed.

    Rows/cols moves that leave the aspect band drag the other dimension one
    step the same way, which keeps band-limited spaces connected.
    """
    levels = space.sram_kb
    for _ in range(NEIGHBOR_ATTEMPTS):
        coord = COORDINATES[int(rng.integers(len(COORDINATES)))]
        d = 1 if rng.random() < 0.5 else -1
        if coord in ("rows", "cols"):
            other = "cols" if coord == "rows" else "rows"
            q = replace(p, **{coord: getattr(p, coord) + d * space.step})
            if q not in space:
                q = replace(q, **{other: getattr(q, other) + d * space.step})
        else:
            i = levels.index(getattr(p, coord)) + d
            if not 0 <= i < len(levels):
                continue
            q = replace(p, **{coord: levels[i]})
        if q in space and q != p:
            return q
    return p


@dataclass(frozen=True)
class Step:
    freq_mhz: float
    start: int
    step: int
    result: EvalResult
    cost: float
    accepted: bool

    @property
    def point(self) -> DesignPoint:
        return self.result.point


@dataclass
class StartResult:
    freq_mhz: float
    start: int
    best: Optional[Step]
    trajectory: List[Step]


@dataclass
class Problem:
    """Everything a start needs: space, evaluator, constraints and cost normalization."""

    space: DesignSpace
    evaluator: Evaluator
    constraints: Constraints

    def normalizer(self, objective: str) -> Normalizer:
        ref = self.evaluator(self.space.reference_point(), self.constraints)
        obj = ref.objective(objective)
        headroom = self.constraints.t_max_c - self.evaluator.stack.ambient_c
        lat = self.constraints.latency_ref_s or ref.latency_s
        return Normalizer(objective=obj if obj > 0 else 1.0, latency_s=lat, thermal_c=headroom if headroom > 0 else 1.0)


def _rng(seed: int, freq: float, start: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(round(freq * 1000)), int(start)]))


def _rank(step: Step, norm: Normalizer) -> Tuple:
    # feasible first, then cost; infeasible-only sets rank by violation size
    if step.result.feasible:
        return (0, step.cost, step.point.key)
    return (1, violation_size(step.result, norm), step.cost, step.point.key)


def run_start(freq: float, start: int, cfg: AnnealerConfig, problem: Problem,
              norm: Optional[Normalizer] = None) -> StartResult:
    norm = norm or problem.normalizer(cfg.objective)
    rng = _rng(cfg.seed, freq, start)
    evaluate = problem.evaluator
    c = problem.constraints

    def cost_of(e):
        return score(e, cfg.objective, norm, cfg.penalty, cfg.cost_scale)

    current = None
    for _ in range(cfg.init_attempts if cfg.feasible_init else 1):
        e = evaluate(problem.space.random_point(rng, freq), c)
        if e.feasible or not cfg.feasible_init:
            current = e
            break
    if current is None:
        return StartResult(freq, start, None, [])

    cur_cost = cost_of(current)
    trajectory = [Step(freq, start, 0, current, cur_cost, True)]
    n = 0
    for t in temperature_schedule(cfg.t_init, cfg.t_final, cfg.cooling):
        for _ in range(cfg.proposals_per_temp):
            n += 1
            cand = evaluate(neighbor(current.point, problem.space, rng), c)
            cand_cost = cost_of(cand)
            delta = cand_cost - cur_cost
            accept = delta < 0 or rng.random() < math.exp(-delta / t)
            trajectory.append(Step(freq, start, n, cand, cand_cost, accept))
            if accept:
                current, cur_cost = cand, cand_cost
    best = min(trajectory, key=lambda s: _rank(s, norm))
    return StartResult(freq, start, best, trajectory)


@dataclass
class OptimizationResult:
    objective: str
    best: EvalResult
    best_cost: float
    starts: List[StartResult]
    constraints: Constraints
    normalizer: Normalizer

    @property
    def feasible(self) -> bool:
        return self.best.feasible

    @property
    def trajectory(self) -> List[Step]:
        return [s for st in self.starts for s in st.trajectory]


def optimize(cfg: AnnealerConfig, problem: Problem, incumbents: Sequence[EvalResult] = (),
             workers: int = 1) -> OptimizationResult:
    """Run ``starts_per_freq`` annealing starts at every frequency and keep the best point.

    ``incumbents`` are already-evaluated points (e.g. the latency reference)
    that compete for the global best without appearing in any trajectory.
    """
    norm = problem.normalizer(cfg.objective)
    jobs = [(f, s) for f in problem.space.freq_mhz for s in range(cfg.starts_per_freq)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            starts = list(pool.map(lambda j: run_start(j[0], j[1], cfg, problem, norm), jobs))
    else:
        starts = [run_start(f, s, cfg, problem, norm) for f, s in jobs]

    candidates = [st.best for st in starts if st.best is not None]
    for i, e in enumerate(incumbents):
        e = problem.evaluator(e.point, problem.constraints)
        candidates.append(Step(e.point.freq_mhz, -1 - i, 0, e, score(e, cfg.objective, norm, cfg.penalty, cfg.cost_scale), False))
    if not candidates:
        raise SpaceError("no start found an initial configuration")
    best = min(candidates, key=lambda s: _rank(s, norm))
    return OptimizationResult(cfg.objective, best.result, best.cost, starts, problem.constraints, norm)


def exhaustive(cfg: AnnealerConfig, problem: Problem, cap: int = 10_000) -> Tuple[EvalResult, float]:
    """Evaluate every point; same ranking as :func:`optimize`, ties go to enumeration order."""
    size = len(problem.space)
    if size > cap:
        raise SpaceError(f"space has {size} points, exceeding the exhaustive cap of {cap}")
    norm = problem.normalizer(cfg.objective)
    best = None
    best_rank = None
    for p in problem.space.enumerate():
        e = problem.evaluator(p, problem.constraints)
        step = Step(p.freq_mhz, 0, 0, e, score(e, cfg.objective, norm, cfg.penalty, cfg.cost_scale), False)
        rank = _rank(step, norm)[:-1]
        if best is None or rank < best_rank:
            best, best_rank = step, rank
    return best.result, best.cost


_REFERENCE_CACHE: Dict[Tuple, OptimizationResult] = {}


def latency_pass(cfg: AnnealerConfig, problem: Problem, method: str = "anneal",
                 workers: int = 1) -> OptimizationResult:
    """Latency-only optimization (thermal limit, no performance-loss bound), cached per problem."""
    ev = problem.evaluator
    lat_cfg = replace(cfg, objective="latency")
    key = (ev.net, ev.cal, ev.stack, ev.grid, ev.aspect_band, problem.space, problem.constraints.t_max_c,
           lat_cfg, method)
    if key not in _REFERENCE_CACHE:
        sub = Problem(problem.space, ev, replace(problem.constraints, latency_ref_s=None))
        if method == "exhaustive":
            best, cost = exhaustive(lat_cfg, sub)
            result = OptimizationResult("latency", best, cost, [], sub.constraints, sub.normalizer("latency"))
        elif method == "anneal":
            result = optimize(lat_cfg, sub, workers=workers)
        else:
            raise ValueError(f"unknown reference method {method!r}")
        _REFERENCE_CACHE[key] = result
    return _REFERENCE_CACHE[key]


def latency_reference(cfg: AnnealerConfig, problem: Problem, method: str = "anneal",
                      workers: int = 1) -> EvalResult:
    return latency_pass(cfg, problem, method, workers).best


def optimize_with_reference(cfg: AnnealerConfig, problem: Problem, method: str = "anneal",
                            workers: int = 1) -> Tuple[OptimizationResult, EvalResult]:
    """Latency pass first, then the requested objective under the performance-loss bound.

    For the latency objective the latency pass itself is the answer.
    """
    lat = latency_pass(cfg, problem, method, workers)
    ref = lat.best
    constraints = replace(problem.constraints, latency_ref_s=ref.latency_s)
    sub = Problem(problem.space, problem.evaluator, constraints)
    if cfg.objective == "latency":
        best = problem.evaluator(ref.point, constraints)
        result = replace(lat, best=best, constraints=constraints)
    else:
        result = optimize(cfg, sub, incumbents=[ref], workers=workers)
    return result, ref
