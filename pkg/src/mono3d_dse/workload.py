"""DNN topologies and their lowering to GEMM dimensions.

Topology files use the column layout common to systolic-array simulators::

    Layer name, IFMAP Height, IFMAP Width, Filter Height, Filter Width, Channels, Num Filter, Strides,

An optional ninth ``Padding`` column adds symmetric zero padding per layer;
without it convolutions are "valid" (unpadded). Only MAC-dominated layers
(convolutions, fully-connected layers written as 1x1 convolutions) belong in
these files.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, List, Tuple

HEADER = [
    "Layer name",
    "IFMAP Height",
    "IFMAP Width",
    "Filter Height",
    "Filter Width",
    "Channels",
    "Num Filter",
    "Strides",
]
_INT_FIELDS = HEADER[1:]

BUNDLED = {"unet": "unet.csv", "resnet50": "resnet50.csv"}


class TopologyError(ValueError):
    """Malformed topology file or invalid layer geometry."""


@dataclass(frozen=True)
class LayerSpec:
    name: str
    ifmap_h: int
    ifmap_w: int
    channels: int
    filter_h: int
    filter_w: int
    num_filters: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for field in ("ifmap_h", "ifmap_w", "channels", "filter_h", "filter_w", "num_filters", "stride"):
            if getattr(self, field) < 1:
                raise TopologyError(f"layer {self.name!r}: {field} must be >= 1")
        if self.padding < 0:
            raise TopologyError(f"layer {self.name!r}: padding must be >= 0")
        if self.filter_h > self.ifmap_h + 2 * self.padding or self.filter_w > self.ifmap_w + 2 * self.padding:
            raise TopologyError(f"layer {self.name!r}: filter larger than padded input")

    @property
    def mac_ops(self) -> int:
        g = lower_to_gemm(self)
        return g.m * g.n * g.k


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: Tuple[LayerSpec, ...]

    def __post_init__(self):
        if not self.layers:
            raise TopologyError(f"network {self.name!r} has no layers")
        object.__setattr__(self, "layers", tuple(self.layers))

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)


@dataclass(frozen=True)
class GemmDims:
    m: int  # output pixels
    k: int  # reduction length
    n: int  # filters

    def __post_init__(self):
        if min(self.m, self.k, self.n) < 1:
            raise TopologyError(f"GEMM dims must be >= 1, got {self}")


def output_dims(layer: LayerSpec) -> Tuple[int, int]:
    out_h = (layer.ifmap_h + 2 * layer.padding - layer.filter_h) // layer.stride + 1
    out_w = (layer.ifmap_w + 2 * layer.padding - layer.filter_w) // layer.stride + 1
    if out_h < 1 or out_w < 1:
        raise TopologyError(f"layer {layer.name!r}: output dims ({out_h}, {out_w}) < 1")
    return out_h, out_w


def lower_to_gemm(layer: LayerSpec) -> GemmDims:
    """im2col lowering: one GEMM row per output pixel, one column per filter."""
    out_h, out_w = output_dims(layer)
    return GemmDims(
        m=out_h * out_w,
        k=layer.filter_h * layer.filter_w * layer.channels,
        n=layer.num_filters,
    )


def _parse_rows(reader: Iterable[List[str]], source: str) -> List[LayerSpec]:
    rows = iter(reader)
    try:
        header = next(rows)
    except StopIteration:
        raise TopologyError(f"{source}: empty topology file") from None
    header = [h.strip() for h in header]
    while header and header[-1] == "":
        header.pop()
    if [h.lower() for h in header[: len(HEADER)]] != [h.lower() for h in HEADER]:
        raise TopologyError(f"{source}: unexpected header {header!r}")
    has_padding = len(header) > len(HEADER) and header[len(HEADER)].lower() == "padding"

    layers = []
    for lineno, row in enumerate(rows, start=2):
        cells = [c.strip() for c in row]
        while cells and cells[-1] == "":
            cells.pop()
        if not cells:
            continue
        ncols = len(HEADER) + (1 if has_padding else 0)
        if len(cells) not in (len(HEADER), ncols):
            raise TopologyError(f"{source}: row {lineno}: expected {ncols} columns, got {len(cells)}")
        values = []
        for col, (title, text) in enumerate(zip(_INT_FIELDS + ["Padding"], cells[1:]), start=2):
            try:
                v = int(text)
            except ValueError:
                raise TopologyError(f"{source}: row {lineno}, column {col} ({title}): non-numeric {text!r}") from None
            if v < (0 if title == "Padding" else 1):
                raise TopologyError(f"{source}: row {lineno}, column {col} ({title}): invalid value {v}")
            values.append(v)
        ih, iw, fh, fw, ch, nf, st = values[:7]
        pad = values[7] if len(values) > 7 else 0
        try:
            layer = LayerSpec(cells[0], ih, iw, ch, fh, fw, nf, st, pad)
            output_dims(layer)
        except TopologyError as exc:
            raise TopologyError(f"{source}: row {lineno}: {exc}") from None
        layers.append(layer)
    return layers


def load_network(path, name: str | None = None) -> NetworkSpec:
    """Read a topology CSV. ``path`` may also be a bundled name ("unet", "resnet50")."""
    if str(path) in BUNDLED:
        return bundled_network(str(path))
    path = os.fspath(path)
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    with open(path, newline="") as fh:
        layers = _parse_rows(csv.reader(fh), path)
    return NetworkSpec(name, tuple(layers))


def parse_network(text: str, name: str = "network") -> NetworkSpec:
    return NetworkSpec(name, tuple(_parse_rows(csv.reader(io.StringIO(text)), name)))


def bundled_network(name: str) -> NetworkSpec:
    text = resources.files("mono3d_dse.data").joinpath(BUNDLED[name]).read_text()
    return parse_network(text, name)


def dump_network(net: NetworkSpec) -> str:
    """Serialize to topology CSV text (inverse of :func:`parse_network`)."""
    with_pad = any(layer.padding for layer in net.layers)
    header = HEADER + (["Padding"] if with_pad else [])
    lines = [", ".join(header) + ","]
    for layer in net.layers:
        vals = [layer.name, layer.ifmap_h, layer.ifmap_w, layer.filter_h, layer.filter_w,
                layer.channels, layer.num_filters, layer.stride]
        if with_pad:
            vals.append(layer.padding)
        lines.append(", ".join(str(v) for v in vals) + ",")
    return "\n".join(lines) + "\n"


def save_network(net: NetworkSpec, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(dump_network(net))
