"""Cycle-stepped simulator of an output-stationary systolic array.

Used to validate the closed-form cycle model in :mod:`mono3d_dse.perf`.
Operands enter from the left (IFMAP rows) and top (filter columns) edges with
a one-cycle skew per row/column and hop one PE per cycle. A PE fires a MAC in
any cycle where both of its operand registers hold valid data. Once every PE
has accumulated its k products, the outputs shift down one row per cycle and
leave through the bottom edge. Tiles smaller than the array are zero-padded,
so each fold occupies the full array.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .workload import GemmDims


def simulate_fold(a: np.ndarray, b: np.ndarray, rows: int, cols: int):
    """Run one fold computing ``a @ b`` on a rows x cols array.

    ``a`` is (r, k) with r <= rows, ``b`` is (k, c) with c <= cols.
    Returns (output tile of shape (r, c), cycles until the last output drains).
    """
    r, k = a.shape
    k2, c = b.shape
    if k != k2 or r > rows or c > cols:
        raise ValueError("tile does not fit the array")
    A = np.zeros((rows, k), dtype=np.int64)
    B = np.zeros((k, cols), dtype=np.int64)
    A[:r] = a
    B[:, :c] = b

    a_val = np.zeros((rows, cols), dtype=np.int64)
    b_val = np.zeros((rows, cols), dtype=np.int64)
    a_ok = np.zeros((rows, cols), dtype=bool)
    b_ok = np.zeros((rows, cols), dtype=bool)
    acc = np.zeros((rows, cols), dtype=np.int64)
    fired = np.zeros((rows, cols), dtype=np.int64)
    ri = np.arange(rows)
    cj = np.arange(cols)

    t = 0
    while fired.sum() < rows * cols * k:
        a_val[:, 1:] = a_val[:, :-1]
        a_ok[:, 1:] = a_ok[:, :-1]
        s = t - ri
        ok = (s >= 0) & (s < k)
        a_ok[:, 0] = ok
        a_val[:, 0] = np.where(ok, A[ri, np.clip(s, 0, k - 1)], 0)

        b_val[1:, :] = b_val[:-1, :]
        b_ok[1:, :] = b_ok[:-1, :]
        s = t - cj
        ok = (s >= 0) & (s < k)
        b_ok[0, :] = ok
        b_val[0, :] = np.where(ok, B[np.clip(s, 0, k - 1), cj], 0)

        fire = a_ok & b_ok
        acc += np.where(fire, a_val * b_val, 0)
        fired += fire
        t += 1
        if t > 4 * (rows + cols + k):
            raise RuntimeError("systolic simulation did not finish")

    # drain: bottom row leaves each cycle, everything else shifts down
    out = np.zeros((rows, cols), dtype=np.int64)
    regs = acc.copy()
    present = np.ones(rows, dtype=bool)
    src = np.arange(rows)
    drained = 0
    while drained < rows:
        out[src[-1]] = regs[-1]
        drained += int(present[-1])
        regs[1:] = regs[:-1]
        src[1:] = src[:-1]
        present[1:] = present[:-1]
        present[0] = False
        t += 1
    return out[:r, :c], t


@lru_cache(maxsize=None)
def _fold_cycles(rows: int, cols: int, k: int) -> int:
    # timing does not depend on operand values, so one padded run per shape suffices
    _, cycles = simulate_fold(np.ones((rows, k), dtype=np.int64), np.ones((k, cols), dtype=np.int64), rows, cols)
    return cycles


def simulate_gemm(a: np.ndarray, b: np.ndarray, rows: int, cols: int):
    """Tile ``a @ b`` over the array fold by fold; returns (product, total cycles)."""
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n), dtype=np.int64)
    t = 0
    for i0 in range(0, m, rows):
        for j0 in range(0, n, cols):
            tile, cycles = simulate_fold(a[i0:i0 + rows], b[:, j0:j0 + cols], rows, cols)
            out[i0:i0 + rows, j0:j0 + cols] = tile
            t += cycles
    return out, t


def oracle_cycles(g: GemmDims, rows: int, cols: int) -> int:
    """Completion cycle of the tiled GEMM, folds issued back to back."""
    total = 0
    for _ in range(0, g.m, rows):
        for _ in range(0, g.n, cols):
            total += _fold_cycles(rows, cols, g.k)
    return total
