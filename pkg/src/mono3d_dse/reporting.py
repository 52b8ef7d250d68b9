"""CSV/JSON writers and readers for sweep, trajectory and comparison output."""

from __future__ import annotations

import csv
import io
from typing import Dict, Iterable, List, Sequence

from .annealer import Step
from .evaluator import EvalResult
from .perf import DesignPoint

TRAJECTORY_FIELDS = [
    "freq_mhz", "start", "step", "rows", "cols", "sram_i", "sram_f", "sram_o",
    "latency_s", "power_w", "edap", "max_c", "feasible",
]
_INT = {"start", "step", "rows", "cols", "sram_i", "sram_f", "sram_o"}
_FLOAT = {"freq_mhz", "latency_s", "power_w", "edap", "max_c"}


def trajectory_row(e: EvalResult, start: int = 0, step: int = 0) -> Dict:
    p = e.point
    return {
        "freq_mhz": p.freq_mhz,
        "start": start,
        "step": step,
        "rows": p.rows,
        "cols": p.cols,
        "sram_i": p.sram_ifmap_kb,
        "sram_f": p.sram_filter_kb,
        "sram_o": p.sram_ofmap_kb,
        "latency_s": e.latency_s,
        "power_w": e.total_power_w,
        "edap": e.edap,
        "max_c": e.max_c,
        "feasible": int(e.feasible),
    }


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(rows: Iterable[Dict], fh, fields: Sequence[str] = TRAJECTORY_FIELDS) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in fields])


def trajectory_csv(steps: Iterable[Step]) -> str:
    buf = io.StringIO()
    write_rows((trajectory_row(s.result, s.start, s.step) for s in steps), buf)
    return buf.getvalue()


def sweep_csv(results: Iterable[EvalResult]) -> str:
    ordered = sorted(results, key=lambda e: e.point.key)
    buf = io.StringIO()
    write_rows((trajectory_row(e, 0, i) for i, e in enumerate(ordered)), buf)
    return buf.getvalue()


def parse_trajectory_csv(text: str) -> List[Dict]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != TRAJECTORY_FIELDS:
        raise ValueError(f"unexpected trajectory header {reader.fieldnames!r}")
    rows = []
    for rec in reader:
        row = {}
        for k, v in rec.items():
            if k in _INT:
                row[k] = int(v)
            elif k in _FLOAT:
                row[k] = float(v)
            else:
                row[k] = bool(int(v))
        rows.append(row)
    return rows


def read_trajectory_csv(path) -> List[Dict]:
    with open(path, newline="") as fh:
        return parse_trajectory_csv(fh.read())


def row_point(row: Dict) -> DesignPoint:
    return DesignPoint(row["rows"], row["cols"], row["sram_i"], row["sram_f"], row["sram_o"], row["freq_mhz"])


def pct_improvement(ref: float, value: float) -> float:
    """Relative reduction from ``ref`` to ``value`` in percent (positive = better)."""
    return 100.0 * (ref - value) / ref


COMPARE_FIELDS = [
    "goal", "rows", "cols", "freq_mhz", "sram_i", "sram_f", "sram_o", "sram_total_kb",
    "latency_s", "power_w", "edap", "max_c", "feasible",
    "power_improvement_pct", "edap_improvement_pct", "latency_sacrifice_pct",
]


def compare_row(goal: str, e: EvalResult, ref: EvalResult) -> Dict:
    p = e.point
    return {
        "goal": goal,
        "rows": p.rows,
        "cols": p.cols,
        "freq_mhz": p.freq_mhz,
        "sram_i": p.sram_ifmap_kb,
        "sram_f": p.sram_filter_kb,
        "sram_o": p.sram_ofmap_kb,
        "sram_total_kb": p.sram_total_kb,
        "latency_s": e.latency_s,
        "power_w": e.total_power_w,
        "edap": e.edap,
        "max_c": e.max_c,
        "feasible": int(e.feasible),
        "power_improvement_pct": pct_improvement(ref.total_power_w, e.total_power_w),
        "edap_improvement_pct": pct_improvement(ref.edap, e.edap),
        "latency_sacrifice_pct": 100.0 * (e.latency_s - ref.latency_s) / ref.latency_s,
    }


def compare_csv(rows: Sequence[Dict]) -> str:
    buf = io.StringIO()
    write_rows(rows, buf, COMPARE_FIELDS)
    return buf.getvalue()


def parse_compare_csv(text: str) -> List[Dict]:
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in rec.items():
            if k == "goal":
                row[k] = v
            elif k in ("rows", "cols", "sram_i", "sram_f", "sram_o", "sram_total_kb"):
                row[k] = int(v)
            elif k == "feasible":
                row[k] = bool(int(v))
            else:
                row[k] = float(v)
        out.append(row)
    return out


def format_table(rows: Sequence[Dict]) -> str:
    head = f"{'goal':<12} {'array':>9} {'MHz':>5} {'SRAM KB':>8} {'latency ms':>11} {'power W':>8} " \
           f"{'EDAP':>10} {'max C':>6} {'ok':>3} {'dP %':>7} {'dEDAP %':>8} {'dLat %':>7}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r['goal']:<12} {str(r['rows']) + 'x' + str(r['cols']):>9} {r['freq_mhz']:>5g} {r['sram_total_kb']:>8d} "
            f"{r['latency_s'] * 1e3:>11.4f} {r['power_w']:>8.3f} {r['edap']:>10.3e} {r['max_c']:>6.1f} "
            f"{'y' if r['feasible'] else 'n':>3} {r['power_improvement_pct']:>7.1f} "
            f"{r['edap_improvement_pct']:>8.1f} {r['latency_sacrifice_pct']:>7.1f}"
        )
    return "\n".join(lines)
