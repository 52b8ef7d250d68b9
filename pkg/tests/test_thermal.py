import numpy as np
import pytest

from mono3d_dse.perf import DesignPoint
from mono3d_dse.thermal import (Block, Floorplan, FloorplanError, Layer, NoHeatPathError, ThermalStack, build_floorplan,
                                load_stack, max_temp, read_floorplan_csv, read_temperature_csv, solve_steady,
                                write_floorplan_csv, write_temperature_csv)

W = H = 5e-3
GRID = (16, 16)


def plan(tier1=(), tier2=(), w=W, h=H):
    return Floorplan(w, h, (tuple(tier1), tuple(tier2)))


def uniform(power, tier=0):
    b = Block("all", 0, 0, W, H, power)
    return plan((b,), ()) if tier == 0 else plan((), (b,))


def one_d_rise(stack, power, area, tier):
    """Series/parallel resistance oracle for uniform power on one active layer."""
    idx = stack.active_indices[tier]
    ls = stack.layers
    up = ls[idx].thickness_m / (2 * ls[idx].conductivity * area)
    up += sum(l.thickness_m / (l.conductivity * area) for l in ls[:idx])
    up += 1.0 / (stack.htc_w_per_m2k * area)
    if stack.secondary_c_per_w is None:
        return power * up
    down = ls[idx].thickness_m / (2 * ls[idx].conductivity * area)
    down += sum(l.thickness_m / (l.conductivity * area) for l in ls[idx + 1:])
    down += stack.secondary_c_per_w
    return power * up * down / (up + down)


@pytest.mark.parametrize("tier", [0, 1])
@pytest.mark.parametrize("secondary", [None, 40.0])
def test_one_d_series_oracle(stack, tier, secondary):
    s = stack.with_(secondary_c_per_w=secondary)
    tm = solve_steady(s, uniform(2.0, tier), GRID)
    layer = s.active_names[tier]
    expected = one_d_rise(s, 2.0, W * H, tier)
    assert tm.rise(layer).mean() == pytest.approx(expected, rel=0.02)
    assert tm.rise(layer).max() == pytest.approx(expected, rel=0.02)


def test_zero_power_is_ambient(stack):
    tm = solve_steady(stack, uniform(0.0), GRID)
    for grid in tm.layers.values():
        assert np.all(grid == stack.ambient_c)
    assert max_temp(tm) == stack.ambient_c == 45.0


def test_linearity(stack):
    fp = plan((Block("a", 1e-3, 1e-3, 2e-3, 2e-3, 1.0),), (Block("s", 0, 0, 1e-3, H, 0.5),))
    one = solve_steady(stack, fp, GRID)
    two = solve_steady(stack, fp.with_powers({"a": 2.0, "s": 1.0}), GRID)
    for name in one.layers:
        np.testing.assert_allclose(two.rise(name), 2 * one.rise(name), rtol=1e-9)


def test_superposition(stack):
    a = Block("a", 0, 0, 2e-3, 2e-3, 1.5)
    b = Block("b", 3e-3, 2e-3, 1e-3, 3e-3, 0.7)
    ta = solve_steady(stack, plan((a,), (b.__class__("b", b.x, b.y, b.w, b.h, 0.0),)), GRID)
    tb = solve_steady(stack, plan((a.__class__("a", 0, 0, 2e-3, 2e-3, 0.0),), (b,)), GRID)
    tab = solve_steady(stack, plan((a,), (b,)), GRID)
    for name in tab.layers:
        np.testing.assert_allclose(ta.rise(name) + tb.rise(name), tab.rise(name), rtol=1e-6)


def test_monotonicity(stack):
    fp = plan((Block("a", 1e-3, 1e-3, 2e-3, 2e-3, 1.0),), (Block("s", 0, 0, 1e-3, H, 0.5),))
    base = solve_steady(stack, fp, GRID)
    for name, pw in [("a", 1.5), ("s", 0.8)]:
        more = solve_steady(stack, fp.with_powers({name: pw}), GRID)
        for layer in base.layers:
            assert np.all(more.layers[layer] >= base.layers[layer] - 1e-12)


def test_energy_balance(stack):
    fp = plan((Block("a", 1e-3, 1e-3, 2e-3, 2e-3, 1.3),), (Block("s", 0, 0, 1e-3, H, 0.4),))
    tm = solve_steady(stack, fp, GRID)
    assert tm.heat_out_top_w + tm.heat_out_bottom_w == pytest.approx(tm.injected_w, rel=1e-6)
    assert tm.injected_w == pytest.approx(1.7)
    assert tm.residual <= 1e-8


def test_grid_refinement(stack, cal):
    p = DesignPoint(194, 192, 4096, 128, 32, 735)
    fp = build_floorplan(p, cal).with_powers({"array": 2.5, "sram_ifmap": 0.6, "sram_filter": 0.15, "sram_ofmap": 0.05})
    coarse = solve_steady(stack, fp, (32, 32)).max_c
    fine = solve_steady(stack, fp, (64, 64)).max_c
    assert abs(fine - coarse) / fine < 0.01


def test_inter_tier_coupling(stack):
    fp = plan((Block("a", 1.5e-3, 1.5e-3, 2e-3, 2e-3, 1.0),), ())
    tm = solve_steady(stack, fp, GRID)
    t1, t2 = stack.active_names
    assert tm.rise(t2).max() >= 0.8 * tm.rise(t1).max()


def test_hot_spot_in_block(stack):
    b = Block("hot", 3e-3, 0.5e-3, 1e-3, 1e-3, 1.0)
    tm = solve_steady(stack, plan((b,), ()), (20, 20))
    layer = stack.active_names[0]
    iy, ix = np.unravel_index(np.argmax(tm.layers[layer]), tm.layers[layer].shape)
    assert tm.layers[layer][iy, ix] == tm.max_c
    cx, cy = (ix + 0.5) * W / 20, (iy + 0.5) * H / 20
    assert b.x <= cx <= b.x + b.w and b.y <= cy <= b.y + b.h
    assert tm.max_c >= tm.block_mean_c["hot"]


def test_every_cell_at_least_ambient(stack, cal):
    fp = build_floorplan(DesignPoint(64, 68, 32, 64, 256, 500), cal).with_powers({"array": 0.3, "sram_ofmap": 0.1})
    tm = solve_steady(stack, fp, GRID)
    assert all(np.all(g >= stack.ambient_c) for g in tm.layers.values())


def test_no_heat_path(stack):
    with pytest.raises(NoHeatPathError):
        solve_steady(stack.with_(htc_w_per_m2k=0.0, secondary_c_per_w=None), uniform(1.0), GRID)


def test_secondary_path_only_still_solves(stack):
    tm = solve_steady(stack.with_(htc_w_per_m2k=0.0), uniform(0.1), GRID)
    assert tm.heat_out_bottom_w == pytest.approx(0.1, rel=1e-6)


def test_grid_too_small(stack):
    with pytest.raises(ValueError):
        solve_steady(stack, uniform(1.0), (3, 8))


@pytest.mark.parametrize("layers", [
    (Layer("a", 1e-7, 100, True), Layer("b", 1e-6, 1.0, True)),  # adjacent actives
    (Layer("a", 1e-7, 100, True), Layer("d", 1e-6, 1.0)),  # only one active
    (Layer("a", 0, 100, True), Layer("d", 1e-6, 1.0), Layer("b", 1e-7, 100, True)),
])
def test_stack_validation(layers):
    with pytest.raises(ValueError):
        ThermalStack(layers)


def test_default_stack_shape(stack):
    assert stack.active_names == ["tier1_si", "tier2_si"]
    assert stack.ambient_c == 45.0
    assert load_stack() == stack


class TestFloorplan:
    def test_equal_srams_equal_slices(self, cal):
        fp = build_floorplan(DesignPoint(128, 128, 256, 256, 256, 500), cal)
        widths = [b.w for b in fp.tiers[1]]
        assert widths[0] == pytest.approx(widths[1]) == pytest.approx(widths[2])
        assert [b.name for b in fp.tiers[1]] == ["sram_ifmap", "sram_filter", "sram_ofmap"]
        assert [b.name for b in fp.tiers[0]] == ["array"]

    def test_aspect_162x172(self, cal):
        fp = build_floorplan(DesignPoint(162, 172, 32, 32, 32, 500), cal)
        short, long = sorted((fp.width_m, fp.height_m))
        assert short / long == pytest.approx(162 / 172, rel=1e-9)
        assert 0.94 <= short / long <= 1.0

    def test_out_of_band_array_does_not_fit(self, cal):
        # the die is clamped to the band, so a 1:2 array block cannot fit inside it
        with pytest.raises(FloorplanError):
            build_floorplan(DesignPoint(64, 128, 32, 32, 32, 500), cal)

    def test_array_fills_die_no_whitespace(self, cal):
        p = DesignPoint(128, 128, 32, 32, 32, 500)
        fp = build_floorplan(p, cal)
        assert fp.whitespace_area(0) == pytest.approx(0.0, abs=1e-15)
        assert fp.whitespace_area(1) > 0
        a = fp.block("array")
        assert a.x + a.w / 2 == pytest.approx(fp.width_m / 2)

    def test_sram_dominated_die(self, cal):
        fp = build_floorplan(DesignPoint(64, 64, 4096, 4096, 4096, 500), cal)
        assert fp.whitespace_area(1) == pytest.approx(0.0, abs=1e-12)
        assert fp.whitespace_area(0) > 0

    def test_out_of_die_rejected(self):
        with pytest.raises(FloorplanError):
            plan((Block("x", 4e-3, 0, 2e-3, 1e-3),))

    def test_overlap_rejected(self):
        with pytest.raises(FloorplanError):
            plan((Block("x", 0, 0, 2e-3, 2e-3), Block("y", 1e-3, 1e-3, 2e-3, 2e-3)))

    def test_area_exceeds_die(self):
        with pytest.raises(FloorplanError):
            plan((Block("x", 0, 0, 6e-3, 1e-3),))


def test_csv_round_trips(stack, cal, tmp_path):
    fp = build_floorplan(DesignPoint(132, 138, 2048, 32, 32, 735), cal).with_powers({"array": 1.0, "sram_ifmap": 0.2})
    path = tmp_path / "fp.csv"
    write_floorplan_csv(fp, path)
    assert read_floorplan_csv(path) == fp
    tm = solve_steady(stack, fp, GRID)
    paths = write_temperature_csv(tm, tmp_path)
    assert len(paths) == 2
    for p, name in zip(paths, tm.layers):
        np.testing.assert_allclose(read_temperature_csv(p), tm.layers[name], atol=1e-6)
