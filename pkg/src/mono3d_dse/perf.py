"""Analytical performance model of an output-stationary systolic array.

Latency is stall-free: SRAM capacity only affects access energy through a
refetch multiplier, never the cycle count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .oracle import oracle_cycles  # noqa: F401  (re-exported validation oracle)
from .workload import GemmDims, NetworkSpec, lower_to_gemm

REFETCH_MULTIPLIER = 2


@dataclass(frozen=True, order=True)
class DesignPoint:
    rows: int
    cols: int
    sram_ifmap_kb: int
    sram_filter_kb: int
    sram_ofmap_kb: int
    freq_mhz: float

    @property
    def aspect(self) -> float:
        return min(self.rows, self.cols) / max(self.rows, self.cols)

    @property
    def sram_total_kb(self) -> int:
        return self.sram_ifmap_kb + self.sram_filter_kb + self.sram_ofmap_kb

    @property
    def key(self) -> Tuple:
        return (self.freq_mhz, self.rows, self.cols, self.sram_ifmap_kb, self.sram_filter_kb, self.sram_ofmap_kb)

    def label(self) -> str:
        return (f"{self.rows}x{self.cols} @ {self.freq_mhz:g} MHz, SRAM "
                f"{self.sram_ifmap_kb}/{self.sram_filter_kb}/{self.sram_ofmap_kb} KB")

    def to_dict(self) -> Dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "sram_ifmap_kb": self.sram_ifmap_kb,
            "sram_filter_kb": self.sram_filter_kb,
            "sram_ofmap_kb": self.sram_ofmap_kb,
            "freq_mhz": self.freq_mhz,
        }


@dataclass(frozen=True)
class LayerPerf:
    name: str
    cycles: int
    utilization: float
    macs: int


@dataclass(frozen=True)
class AccessCounts:
    macs: int
    ifmap_reads: int
    filter_reads: int
    ofmap_reads: int
    ofmap_writes: int

    def __add__(self, other: "AccessCounts") -> "AccessCounts":
        return AccessCounts(*(a + b for a, b in zip(self.astuple(), other.astuple())))

    def astuple(self):
        return (self.macs, self.ifmap_reads, self.filter_reads, self.ofmap_reads, self.ofmap_writes)


@dataclass(frozen=True)
class PerfReport:
    total_cycles: int
    latency_s: float
    per_layer: List[LayerPerf]
    mean_utilization: float
    mac_ops: int
    sram_reads: Dict[str, int] = field(default_factory=dict)
    sram_writes: Dict[str, int] = field(default_factory=dict)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def fold_counts(g: GemmDims, rows: int, cols: int) -> Tuple[int, int]:
    return _ceil_div(g.m, rows), _ceil_div(g.n, cols)


def fold_cycles(k: int, rows: int, cols: int) -> int:
    """Skewed fill (rows-1 + cols-1), k operand pairs, then rows drain cycles."""
    return (rows - 1) + (cols - 1) + k + rows


def layer_cycles(g: GemmDims, rows: int, cols: int) -> int:
    fm, fn = fold_counts(g, rows, cols)
    return fm * fn * fold_cycles(g.k, rows, cols)


def utilization(g: GemmDims, rows: int, cols: int) -> float:
    """Fraction of PE slots doing useful MACs across all folds."""
    fm, fn = fold_counts(g, rows, cols)
    return (g.m * g.n) / (fm * fn * rows * cols)


def layer_access_counts(
    g: GemmDims,
    p: DesignPoint,
    operand_bytes: int = 1,
) -> AccessCounts:
    fm, fn = fold_counts(g, p.rows, p.cols)
    ifmap = fn * g.m * g.k
    filt = fm * g.k * g.n
    # per-fold working sets, double-buffered
    r, c = min(p.rows, g.m), min(p.cols, g.n)
    if 2 * r * g.k * operand_bytes > p.sram_ifmap_kb * 1024:
        ifmap *= REFETCH_MULTIPLIER
    if 2 * g.k * c * operand_bytes > p.sram_filter_kb * 1024:
        filt *= REFETCH_MULTIPLIER
    return AccessCounts(
        macs=g.m * g.n * g.k,
        ifmap_reads=ifmap,
        filter_reads=filt,
        ofmap_reads=0,
        ofmap_writes=g.m * g.n,
    )


def access_counts(net: NetworkSpec, p: DesignPoint, operand_bytes: int = 1) -> AccessCounts:
    total = AccessCounts(0, 0, 0, 0, 0)
    for layer in net.layers:
        total = total + layer_access_counts(lower_to_gemm(layer), p, operand_bytes)
    return total


def network_perf(net: NetworkSpec, p: DesignPoint, operand_bytes: int = 1) -> PerfReport:
    per_layer = []
    total_cycles = 0
    for layer in net.layers:
        g = lower_to_gemm(layer)
        cycles = layer_cycles(g, p.rows, p.cols)
        per_layer.append(LayerPerf(layer.name, cycles, utilization(g, p.rows, p.cols), g.m * g.n * g.k))
        total_cycles += cycles
    acc = access_counts(net, p, operand_bytes)
    return PerfReport(
        total_cycles=total_cycles,
        latency_s=total_cycles / (p.freq_mhz * 1e6),
        per_layer=per_layer,
        mean_utilization=sum(lp.utilization for lp in per_layer) / len(per_layer),
        mac_ops=acc.macs,
        sram_reads={"ifmap": acc.ifmap_reads, "filter": acc.filter_reads, "ofmap": acc.ofmap_reads},
        sram_writes={"ifmap": 0, "filter": 0, "ofmap": acc.ofmap_writes},
    )
