"""Steady-state compact thermal model of a two-tier monolithic 3D stack.

Every (layer, grid cell) pair is a node of a resistive network. Vertical
links join cell centres through half-layer thicknesses, lateral links join
neighbouring cells inside a layer, the top face is tied to ambient through
an effective heat-transfer coefficient and the bottom face optionally through
a lumped secondary (board) resistance. Temperatures are solved relative to
ambient, so zero power gives exactly ambient everywhere.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import yaml

from .perf import DesignPoint
from .power import Calibration, chip_area

RESIDUAL_TOL = 1e-8
DIRECT_NODE_LIMIT = 400_000
AREA_TOL = 1e-9


class ThermalError(RuntimeError):
    pass


class NoHeatPathError(ThermalError):
    pass


class FloorplanError(ValueError):
    pass


@dataclass(frozen=True)
class Layer:
    name: str
    thickness_m: float
    conductivity: float  # W/(m K)
    active: bool = False
    lateral_conductivity: Optional[float] = None

    @property
    def k_lateral(self) -> float:
        return self.conductivity if self.lateral_conductivity is None else self.lateral_conductivity


@dataclass(frozen=True)
class ThermalStack:
    """Layers ordered from the heat-spreader face down to the substrate."""

    layers: Tuple[Layer, ...]
    ambient_c: float = 45.0
    htc_w_per_m2k: float = 2000.0
    secondary_c_per_w: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        active = [i for i, l in enumerate(self.layers) if l.active]
        if len(active) < 2:
            raise ValueError("stack needs at least two active layers")
        for a, b in zip(active, active[1:]):
            if b - a < 2:
                raise ValueError("active layers must be separated by a dielectric layer")
        for l in self.layers:
            if l.thickness_m <= 0 or l.conductivity <= 0 or l.k_lateral <= 0:
                raise ValueError(f"layer {l.name!r}: thickness and conductivity must be > 0")
        if self.htc_w_per_m2k < 0:
            raise ValueError("htc must be >= 0")
        if self.secondary_c_per_w is not None and self.secondary_c_per_w <= 0:
            raise ValueError("secondary path resistance must be > 0")

    @property
    def active_indices(self) -> List[int]:
        return [i for i, l in enumerate(self.layers) if l.active]

    @property
    def active_names(self) -> List[str]:
        return [self.layers[i].name for i in self.active_indices]

    def with_lateral_scale(self, factor: float) -> "ThermalStack":
        layers = tuple(replace(l, lateral_conductivity=l.k_lateral * factor) for l in self.layers)
        return replace(self, layers=layers)

    def with_(self, **kw) -> "ThermalStack":
        return replace(self, **kw)


def stack_from_dict(raw) -> ThermalStack:
    layers = []
    for rec in raw["layers"]:
        layers.append(Layer(
            name=str(rec["name"]),
            thickness_m=float(rec["thickness_m"]),
            conductivity=float(rec["conductivity_w_per_mk"]),
            active=bool(rec.get("active", False)),
            lateral_conductivity=(None if rec.get("lateral_conductivity_w_per_mk") is None
                                  else float(rec["lateral_conductivity_w_per_mk"])),
        ))
    sec = raw.get("secondary_c_per_w")
    return ThermalStack(
        layers=tuple(layers),
        ambient_c=float(raw.get("ambient_c", 45.0)),
        htc_w_per_m2k=float(raw.get("htc_w_per_m2k", 2000.0)),
        secondary_c_per_w=None if sec is None else float(sec),
    )


def load_stack(path=None) -> ThermalStack:
    if path is None:
        text = resources.files("mono3d_dse.data").joinpath("stack.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return stack_from_dict(yaml.safe_load(text))


@dataclass(frozen=True)
class Block:
    name: str
    x: float
    y: float
    w: float
    h: float
    power_w: float = 0.0

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Floorplan:
    """Die outline plus one list of blocks per active tier (tier 0 nearest the spreader)."""

    width_m: float
    height_m: float
    tiers: Tuple[Tuple[Block, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "tiers", tuple(tuple(t) for t in self.tiers))
        tol = AREA_TOL * max(self.width_m, self.height_m)
        for ti, tier in enumerate(self.tiers):
            for b in tier:
                if b.w < 0 or b.h < 0 or b.power_w < 0:
                    raise FloorplanError(f"block {b.name!r}: negative size or power")
                if b.x < -tol or b.y < -tol or b.x + b.w > self.width_m + tol or b.y + b.h > self.height_m + tol:
                    raise FloorplanError(f"block {b.name!r} on tier {ti} lies outside the die")
            for i, a in enumerate(tier):
                for b in tier[i + 1:]:
                    ox = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
                    oy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
                    if ox > tol and oy > tol:
                        raise FloorplanError(f"blocks {a.name!r} and {b.name!r} overlap on tier {ti}")

    @property
    def die_area(self) -> float:
        return self.width_m * self.height_m

    def whitespace_area(self, tier: int) -> float:
        return max(0.0, self.die_area - sum(b.area for b in self.tiers[tier]))

    def block(self, name: str) -> Block:
        for tier in self.tiers:
            for b in tier:
                if b.name == name:
                    return b
        raise KeyError(name)

    def with_powers(self, powers: Dict[str, float]) -> "Floorplan":
        tiers = tuple(tuple(replace(b, power_w=powers.get(b.name, b.power_w)) for b in tier) for tier in self.tiers)
        return replace(self, tiers=tiers)

    @property
    def total_power(self) -> float:
        return sum(b.power_w for tier in self.tiers for b in tier)


def die_dimensions(area_m2: float, aspect: float, wide: bool = True) -> Tuple[float, float]:
    """(width, height) of a rectangle with the given area and short/long ratio."""
    long_side = math.sqrt(area_m2 / aspect)
    short_side = area_m2 / long_side
    return (long_side, short_side) if wide else (short_side, long_side)


def build_floorplan(p: DesignPoint, cal: Calibration, aspect_band: Tuple[float, float] = (0.94, 1.0)) -> Floorplan:
    """Array centred on tier 0; IFMAP|Filter|OFMAP full-height slices on tier 1.

    Columns run along x. The die takes the array's aspect ratio clamped to
    ``aspect_band`` and the footprint of the larger tier.
    """
    tier1, _, footprint = chip_area(p, cal)
    mm2 = 1e-6
    aspect = min(max(p.aspect, aspect_band[0]), aspect_band[1])
    wide = p.cols >= p.rows
    W, H = die_dimensions(footprint * mm2, aspect, wide)

    aw, ah = die_dimensions(tier1 * mm2, p.aspect, wide)
    if aw > W * (1 + AREA_TOL) or ah > H * (1 + AREA_TOL):
        raise FloorplanError(f"array block {aw:.3e}x{ah:.3e} m does not fit die {W:.3e}x{H:.3e} m")
    aw, ah = min(aw, W), min(ah, H)
    array = Block("array", (W - aw) / 2, (H - ah) / 2, aw, ah)

    areas = [cal.sram_model.lookup(s).area_mm2 * mm2 for s in (p.sram_ifmap_kb, p.sram_filter_kb, p.sram_ofmap_kb)]
    widths = [a / H for a in areas]
    if sum(widths) > W * (1 + AREA_TOL):
        raise FloorplanError("SRAM blocks exceed die area")
    x = max(0.0, (W - sum(widths)) / 2)
    srams = []
    for name, w in zip(("sram_ifmap", "sram_filter", "sram_ofmap"), widths):
        w = min(w, W - x)
        srams.append(Block(name, x, 0.0, w, H))
        x += w
    return Floorplan(W, H, ((array,), tuple(srams)))


@dataclass
class TemperatureMap:
    nx: int
    ny: int
    layers: Dict[str, np.ndarray]  # active layer name -> (ny, nx) array, degC
    block_mean_c: Dict[str, float]
    ambient_c: float
    heat_out_top_w: float = 0.0
    heat_out_bottom_w: float = 0.0
    injected_w: float = 0.0
    residual: float = 0.0

    @property
    def max_c(self) -> float:
        return max(float(a.max()) for a in self.layers.values())

    def rise(self, layer: str) -> np.ndarray:
        return self.layers[layer] - self.ambient_c


def max_temp(tm: TemperatureMap) -> float:
    return tm.max_c


def _overlap_1d(lo: float, hi: float, n: int, pitch: float) -> np.ndarray:
    edges = np.arange(n + 1) * pitch
    return np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, None)


def block_weights(b: Block, fp: Floorplan, nx: int, ny: int) -> np.ndarray:
    """Fraction of the block's area falling in each grid cell, shape (ny, nx)."""
    if b.area <= 0:
        return np.zeros((ny, nx))
    ox = _overlap_1d(b.x, b.x + b.w, nx, fp.width_m / nx)
    oy = _overlap_1d(b.y, b.y + b.h, ny, fp.height_m / ny)
    return np.outer(oy, ox) / b.area


def power_grid(fp: Floorplan, tier: int, nx: int, ny: int) -> np.ndarray:
    grid = np.zeros((ny, nx))
    for b in fp.tiers[tier]:
        if b.power_w > 0:
            grid += b.power_w * block_weights(b, fp, nx, ny)
    return grid


class _Network:
    """Assembled conductance matrix for one (stack, die size, grid) triple."""

    def __init__(self, stack: ThermalStack, width: float, height: float, nx: int, ny: int):
        self.stack, self.nx, self.ny = stack, nx, ny
        L = len(stack.layers)
        n_cell = nx * ny
        self.n = L * n_cell
        dx, dy = width / nx, height / ny
        A = dx * dy
        idx = np.arange(n_cell).reshape(ny, nx)

        rows, cols, vals = [], [], []
        diag = np.zeros(self.n)

        def link(a, b, g):
            rows.extend((a, b))
            cols.extend((b, a))
            vals.extend((-g, -g))
            np.add.at(diag, a, g)
            np.add.at(diag, b, g)

        for l, layer in enumerate(stack.layers):
            off = l * n_cell
            kt = layer.k_lateral * layer.thickness_m
            if nx > 1:
                link(off + idx[:, :-1].ravel(), off + idx[:, 1:].ravel(), np.full((nx - 1) * ny, kt * dy / dx))
            if ny > 1:
                link(off + idx[:-1, :].ravel(), off + idx[1:, :].ravel(), np.full(nx * (ny - 1), kt * dx / dy))
            if l + 1 < L:
                nxt = stack.layers[l + 1]
                r = layer.thickness_m / (2 * layer.conductivity * A) + nxt.thickness_m / (2 * nxt.conductivity * A)
                link(off + idx.ravel(), off + n_cell + idx.ravel(), np.full(n_cell, 1.0 / r))

        top = stack.layers[0]
        self.g_top = 0.0
        if stack.htc_w_per_m2k > 0:
            self.g_top = 1.0 / (top.thickness_m / (2 * top.conductivity * A) + 1.0 / (stack.htc_w_per_m2k * A))
            diag[:n_cell] += self.g_top
        bot = stack.layers[-1]
        self.g_bottom = 0.0
        if stack.secondary_c_per_w is not None:
            r_cell = stack.secondary_c_per_w * n_cell  # lumped resistance split over parallel cells
            self.g_bottom = 1.0 / (bot.thickness_m / (2 * bot.conductivity * A) + r_cell)
            diag[-n_cell:] += self.g_bottom
        if self.g_top == 0 and self.g_bottom == 0:
            raise NoHeatPathError("no path from the die to ambient (htc = 0 and no secondary path)")

        rows = np.concatenate([np.atleast_1d(np.asarray(r)) for r in rows] + [np.arange(self.n)])
        cols = np.concatenate([np.atleast_1d(np.asarray(c)) for c in cols] + [np.arange(self.n)])
        vals = np.concatenate([np.atleast_1d(np.asarray(v)) for v in vals] + [diag])
        self.G = sp.csc_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        self._lu = None

    def solve(self, rhs: np.ndarray) -> Tuple[np.ndarray, float]:
        norm = np.linalg.norm(rhs)
        if norm == 0:
            return np.zeros_like(rhs), 0.0
        if self.n <= DIRECT_NODE_LIMIT:
            if self._lu is None:
                self._lu = spla.splu(self.G, permc_spec="MMD_AT_PLUS_A")
            x = self._lu.solve(rhs)
            res = np.linalg.norm(self.G @ x - rhs) / norm
            if res > RESIDUAL_TOL:  # one step of iterative refinement
                x = x + self._lu.solve(rhs - self.G @ x)
                res = np.linalg.norm(self.G @ x - rhs) / norm
        else:
            M = sp.diags(1.0 / self.G.diagonal())
            x, info = spla.cg(self.G, rhs, rtol=RESIDUAL_TOL * 0.1, maxiter=20 * int(math.sqrt(self.n)) + 1000, M=M)
            res = np.linalg.norm(self.G @ x - rhs) / norm
        if res > RESIDUAL_TOL:
            raise ThermalError(f"thermal solve did not converge: relative residual {res:.3e}")
        return x, float(res)


@lru_cache(maxsize=8)  # each 64x64 factorization holds ~35 MB
def _network(stack: ThermalStack, width: float, height: float, nx: int, ny: int) -> _Network:
    return _Network(stack, width, height, nx, ny)


def solve_steady(stack: ThermalStack, fp: Floorplan, grid: Tuple[int, int] = (64, 64)) -> TemperatureMap:
    nx, ny = grid
    if nx < 4 or ny < 4:
        raise ValueError("grid must be at least 4x4")
    active = stack.active_indices
    if len(fp.tiers) > len(active):
        raise ValueError("floorplan has more tiers than the stack has active layers")
    net = _network(stack, fp.width_m, fp.height_m, nx, ny)
    n_cell = nx * ny
    rhs = np.zeros(net.n)
    for tier, l in enumerate(active[: len(fp.tiers)]):
        rhs[l * n_cell:(l + 1) * n_cell] = power_grid(fp, tier, nx, ny).ravel()
    rise, res = net.solve(rhs)

    layers = {}
    for l in active:
        layers[stack.layers[l].name] = stack.ambient_c + rise[l * n_cell:(l + 1) * n_cell].reshape(ny, nx)
    means = {}
    for tier, l in enumerate(active[: len(fp.tiers)]):
        t_layer = layers[stack.layers[l].name]
        for b in fp.tiers[tier]:
            w = block_weights(b, fp, nx, ny)
            means[b.name] = float((w * t_layer).sum()) if w.sum() > 0 else stack.ambient_c
    return TemperatureMap(
        nx=nx,
        ny=ny,
        layers=layers,
        block_mean_c=means,
        ambient_c=stack.ambient_c,
        heat_out_top_w=float(net.g_top * rise[:n_cell].sum()),
        heat_out_bottom_w=float(net.g_bottom * rise[-n_cell:].sum()),
        injected_w=float(rhs.sum()),
        residual=res,
    )


def write_temperature_csv(tm: TemperatureMap, directory, prefix: str = "temperature") -> List[str]:
    """One CSV grid per active layer (row 0 = lowest y). Returns the file paths."""
    paths = []
    for name, grid in tm.layers.items():
        path = os.path.join(directory, f"{prefix}_{name}.csv")
        np.savetxt(path, grid, delimiter=",", fmt="%.6f")
        paths.append(path)
    return paths


def read_temperature_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


FLOORPLAN_FIELDS = ["tier", "name", "x_m", "y_m", "w_m", "h_m", "power_w"]


def write_floorplan_csv(fp: Floorplan, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# die {fp.width_m!r} {fp.height_m!r}\n")
        w = csv.writer(fh)
        w.writerow(FLOORPLAN_FIELDS)
        for t, tier in enumerate(fp.tiers):
            for b in tier:
                w.writerow([t, b.name, repr(b.x), repr(b.y), repr(b.w), repr(b.h), repr(b.power_w)])


def read_floorplan_csv(path) -> Floorplan:
    with open(path, newline="") as fh:
        first = fh.readline().split()
        if first[:2] != ["#", "die"]:
            raise FloorplanError(f"{path}: missing die header")
        W, H = float(first[2]), float(first[3])
        tiers: Dict[int, List[Block]] = {}
        for rec in csv.DictReader(fh):
            b = Block(rec["name"], float(rec["x_m"]), float(rec["y_m"]), float(rec["w_m"]),
                      float(rec["h_m"]), float(rec["power_w"]))
            tiers.setdefault(int(rec["tier"]), []).append(b)
    return Floorplan(W, H, tuple(tuple(tiers[t]) for t in sorted(tiers)))
