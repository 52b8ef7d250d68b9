"""Block-level power, area and EDAP.

SRAM numbers come either from a CACTI-style lookup table or from a square-root
/ linear scaling rule anchored at a reference macro. All default values live
in ``data/calibration.yaml`` and are illustrative only.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
import yaml

from .perf import DesignPoint, PerfReport

SRAM_BLOCKS = ("sram_ifmap", "sram_filter", "sram_ofmap")
DYNAMIC_BLOCKS = ("array",) + SRAM_BLOCKS + ("interconnect",)
LEAKY_BLOCKS = ("array",) + SRAM_BLOCKS

# Tiers whose area ratio (small/large) drops below this get flagged.
TIER_BALANCE_WARN = 0.5


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class SramEntry:
    read_pj: float
    write_pj: float
    leak_mw: float
    area_mm2: float


@dataclass(frozen=True)
class SramModel:
    """SRAM macro characteristics as a function of capacity.

    With ``table`` set, sizes are looked up exactly (log-log interpolation
    between entries). Otherwise energies scale as size**energy_exponent and
    leakage/area as size**size_exponent relative to ``reference``.
    """

    reference_kb: float = 32.0
    reference: SramEntry = SramEntry(read_pj=1.0, write_pj=1.2, leak_mw=1.0, area_mm2=0.28)
    energy_exponent: float = 0.5
    size_exponent: float = 1.0
    table: Optional[Tuple[Tuple[float, SramEntry], ...]] = None

    def lookup(self, size_kb: float) -> SramEntry:
        if size_kb <= 0:
            raise CalibrationError(f"SRAM size must be positive, got {size_kb}")
        if self.table:
            return self._interp(size_kb)
        e = (size_kb / self.reference_kb) ** self.energy_exponent
        s = (size_kb / self.reference_kb) ** self.size_exponent
        ref = self.reference
        return SramEntry(ref.read_pj * e, ref.write_pj * e, ref.leak_mw * s, ref.area_mm2 * s)

    def _interp(self, size_kb: float) -> SramEntry:
        sizes = np.array([s for s, _ in self.table])
        for s, entry in self.table:
            if s == size_kb:
                return entry
        if not sizes[0] <= size_kb <= sizes[-1]:
            raise CalibrationError(f"SRAM size {size_kb} KB outside lookup table range")
        i = int(np.searchsorted(sizes, size_kb))
        (s0, e0), (s1, e1) = self.table[i - 1], self.table[i]
        w = math.log(size_kb / s0) / math.log(s1 / s0)

        def li(a, b):
            if a <= 0 or b <= 0:
                return a + w * (b - a)
            return math.exp(math.log(a) + w * (math.log(b) - math.log(a)))

        return SramEntry(li(e0.read_pj, e1.read_pj), li(e0.write_pj, e1.write_pj),
                         li(e0.leak_mw, e1.leak_mw), li(e0.area_mm2, e1.area_mm2))


def load_sram_table(path) -> Tuple[Tuple[float, SramEntry], ...]:
    """Read ``size_kb,read_pj,write_pj,leak_mw,area_mm2`` rows."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.DictReader(fh), start=2):
            try:
                size = float(rec["size_kb"])
                entry = SramEntry(float(rec["read_pj"]), float(rec["write_pj"]),
                                  float(rec["leak_mw"]), float(rec["area_mm2"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise CalibrationError(f"{path}: row {lineno}: {exc}") from None
            if size <= 0 or min(entry.read_pj, entry.write_pj, entry.leak_mw, entry.area_mm2) < 0:
                raise CalibrationError(f"{path}: row {lineno}: negative or zero value")
            rows.append((size, entry))
    if not rows:
        raise CalibrationError(f"{path}: empty SRAM table")
    rows.sort(key=lambda r: r[0])
    return tuple(rows)


@dataclass(frozen=True)
class Calibration:
    mac_area_mm2: float = 0.001
    mac_energy_pj: float = 0.2
    mac_leak_mw: float = 0.002
    sram_model: SramModel = field(default_factory=SramModel)
    interconnect_fraction: float = 0.15
    mono3d_saving: float = 0.10
    leak_coeff_per_c: float = 0.02
    t_ref_c: float = 45.0
    operand_bytes: int = 1
    ofmap_bytes: int = 4

    def __post_init__(self):
        for name in ("mac_area_mm2", "mac_energy_pj", "mac_leak_mw"):
            if getattr(self, name) < 0:
                raise CalibrationError(f"{name} must be >= 0")
        if not 0 <= self.interconnect_fraction < 1:
            raise CalibrationError("interconnect_fraction must be in [0, 1)")
        if not 0 <= self.mono3d_saving < 1:
            raise CalibrationError("mono3d_saving must be in [0, 1)")
        if self.operand_bytes < 1 or self.ofmap_bytes < 1:
            raise CalibrationError("operand widths must be >= 1 byte")

    def with_(self, **kw) -> "Calibration":
        return replace(self, **kw)


def load_calibration(path=None) -> Calibration:
    """Load a calibration YAML file; ``None`` loads the bundled defaults."""
    if path is None:
        text = resources.files("mono3d_dse.data").joinpath("calibration.yaml").read_text()
        base = None
    else:
        with open(path) as fh:
            text = fh.read()
        base = os.path.dirname(os.fspath(path))
    raw = yaml.safe_load(text) or {}
    return calibration_from_dict(raw, base)


def calibration_from_dict(raw: Mapping, base_dir: Optional[str] = None) -> Calibration:
    raw = dict(raw)
    sram_raw = dict(raw.pop("sram_model", {}) or {})
    table = None
    table_path = sram_raw.pop("table", None)
    if table_path:
        if base_dir and not os.path.isabs(table_path):
            table_path = os.path.join(base_dir, table_path)
        table = load_sram_table(table_path)
    ref_raw = sram_raw.pop("reference", None)
    kw = {}
    if ref_raw is not None:
        kw["reference"] = SramEntry(**{k: float(v) for k, v in ref_raw.items()})
    kw.update({k: float(v) for k, v in sram_raw.items()})
    sram = SramModel(table=table, **kw)
    known = set(Calibration.__dataclass_fields__) - {"sram_model"}
    unknown = set(raw) - known
    if unknown:
        raise CalibrationError(f"unknown calibration keys: {sorted(unknown)}")
    return Calibration(sram_model=sram, **raw)


@dataclass(frozen=True)
class PowerReport:
    dynamic_w: Dict[str, float]
    leakage_w: Dict[str, float]
    latency_s: float
    tier1_mm2: float
    tier2_mm2: float
    footprint_mm2: float
    tier_imbalance: bool = False

    @property
    def dynamic_total_w(self) -> float:
        return sum(self.dynamic_w.values())

    @property
    def leakage_total_w(self) -> float:
        return sum(self.leakage_w.values())

    @property
    def total_w(self) -> float:
        return self.dynamic_total_w + self.leakage_total_w

    @property
    def energy_j(self) -> float:
        return self.total_w * self.latency_s

    def block_power(self) -> Dict[str, float]:
        """Dynamic + leakage per floorplan block; interconnect folded into blocks."""
        dyn = {b: self.dynamic_w[b] for b in LEAKY_BLOCKS}
        d0 = sum(dyn.values())
        ic = self.dynamic_w.get("interconnect", 0.0)
        out = {}
        for b in LEAKY_BLOCKS:
            share = dyn[b] / d0 if d0 > 0 else 0.0
            out[b] = dyn[b] + ic * share + self.leakage_w[b]
        return out

    def to_dict(self) -> Dict:
        return {
            "dynamic_w": dict(self.dynamic_w),
            "leakage_w": dict(self.leakage_w),
            "dynamic_total_w": self.dynamic_total_w,
            "leakage_total_w": self.leakage_total_w,
            "total_w": self.total_w,
            "energy_j": self.energy_j,
            "area_mm2": {"tier1": self.tier1_mm2, "tier2": self.tier2_mm2, "footprint": self.footprint_mm2},
            "tier_imbalance": self.tier_imbalance,
        }


def _sram_sizes(p: DesignPoint) -> Dict[str, float]:
    return {"sram_ifmap": p.sram_ifmap_kb, "sram_filter": p.sram_filter_kb, "sram_ofmap": p.sram_ofmap_kb}


def dynamic_power(perf: PerfReport, p: DesignPoint, cal: Calibration) -> Dict[str, float]:
    """Non-interconnect dynamic power per block, in W.

    SRAM energies are per operand-wide access; OFMAP words are
    ``ofmap_bytes / operand_bytes`` accesses wide.
    """
    if perf.latency_s <= 0:
        raise ValueError("latency must be positive")
    t = perf.latency_s
    out = {"array": perf.mac_ops * cal.mac_energy_pj * 1e-12 / t}
    widths = {"ifmap": 1.0, "filter": 1.0, "ofmap": cal.ofmap_bytes / cal.operand_bytes}
    for block, size in _sram_sizes(p).items():
        buf = block.split("_", 1)[1]
        e = cal.sram_model.lookup(size)
        pj = perf.sram_reads[buf] * e.read_pj + perf.sram_writes[buf] * e.write_pj
        out[block] = pj * widths[buf] * 1e-12 / t
    return out


def interconnect_power(d0: float, cal: Calibration) -> float:
    if d0 < 0:
        raise ValueError("dynamic power must be non-negative")
    return cal.interconnect_fraction * (1.0 - cal.mono3d_saving) * d0


def leakage_power(p: DesignPoint, cal: Calibration, t_c) -> Dict[str, float]:
    """Exponential leakage per block. ``t_c`` is a scalar or a per-block mapping."""
    if isinstance(t_c, Mapping):
        temps = {b: float(t_c[b]) for b in LEAKY_BLOCKS}
    else:
        temps = {b: float(t_c) for b in LEAKY_BLOCKS}
    for b, t in temps.items():
        if not math.isfinite(t):
            raise ValueError(f"non-finite temperature for {b}")
    ref = {"array": p.rows * p.cols * cal.mac_leak_mw * 1e-3}
    for block, size in _sram_sizes(p).items():
        ref[block] = cal.sram_model.lookup(size).leak_mw * 1e-3
    return {b: ref[b] * math.exp(cal.leak_coeff_per_c * (temps[b] - cal.t_ref_c)) for b in LEAKY_BLOCKS}


def chip_area(p: DesignPoint, cal: Calibration) -> Tuple[float, float, float]:
    tier1 = p.rows * p.cols * cal.mac_area_mm2
    tier2 = sum(cal.sram_model.lookup(s).area_mm2 for s in _sram_sizes(p).values())
    return tier1, tier2, max(tier1, tier2)


def tier_imbalance(tier1: float, tier2: float) -> bool:
    big = max(tier1, tier2)
    return big > 0 and min(tier1, tier2) / big < TIER_BALANCE_WARN


def edap(energy_j: float, latency_s: float, footprint_mm2: float) -> float:
    return energy_j * latency_s * footprint_mm2


def power_report(perf: PerfReport, p: DesignPoint, cal: Calibration, t_c) -> PowerReport:
    dyn = dynamic_power(perf, p, cal)
    dyn["interconnect"] = interconnect_power(sum(dyn.values()), cal)
    leak = leakage_power(p, cal, t_c)
    t1, t2, fp = chip_area(p, cal)
    return PowerReport(dyn, leak, perf.latency_s, t1, t2, fp, tier_imbalance(t1, t2))
