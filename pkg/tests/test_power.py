import math

import pytest
from hypothesis import given, strategies as st

from mono3d_dse.perf import DesignPoint, PerfReport, network_perf
from mono3d_dse.power import (Calibration, CalibrationError, SramModel, chip_area, calibration_from_dict, dynamic_power,
                              edap, interconnect_power, leakage_power, load_calibration, load_sram_table, power_report)

P = DesignPoint(64, 68, 32, 64, 256, 500)


def perf_with(macs, latency_s, reads=None, writes=None):
    zero = {"ifmap": 0, "filter": 0, "ofmap": 0}
    return PerfReport(total_cycles=1, latency_s=latency_s, per_layer=(), mean_utilization=0.0, mac_ops=macs,
                      sram_reads=reads or dict(zero), sram_writes=writes or dict(zero))


def test_zero_mac_dynamic_is_zero():
    dyn = dynamic_power(perf_with(0, 1.0), P, Calibration())
    assert all(v == 0 for v in dyn.values())


def test_unit_arithmetic():
    dyn = dynamic_power(perf_with(10**9, 1.0), P, Calibration(mac_energy_pj=1.0))
    assert dyn["array"] == pytest.approx(1e-3, rel=1e-12)


def test_sram_dynamic_formula():
    cal = Calibration()
    reads = {"ifmap": 1000, "filter": 500, "ofmap": 0}
    writes = {"ifmap": 0, "filter": 0, "ofmap": 200}
    dyn = dynamic_power(perf_with(0, 2.0, reads, writes), P, cal)
    e_if = cal.sram_model.lookup(32)
    e_of = cal.sram_model.lookup(256)
    assert dyn["sram_ifmap"] == pytest.approx(1000 * e_if.read_pj * 1e-12 / 2.0, rel=1e-12)
    # OFMAP words are ofmap_bytes/operand_bytes accesses wide
    assert dyn["sram_ofmap"] == pytest.approx(200 * 4 * e_of.write_pj * 1e-12 / 2.0, rel=1e-12)


def test_latency_must_be_positive():
    with pytest.raises(ValueError):
        dynamic_power(perf_with(1, 0.0), P, Calibration())


def test_doubling_frequency_doubles_dynamic(unet):
    cal = Calibration()
    slow = dynamic_power(network_perf(unet, P), P, cal)
    fast_p = DesignPoint(64, 68, 32, 64, 256, 1000)
    fast = dynamic_power(network_perf(unet, fast_p), fast_p, cal)
    for b in slow:
        assert fast[b] == pytest.approx(2 * slow[b], rel=1e-12)


@pytest.mark.parametrize("d0, kw, expected", [
    (100.0, {}, 13.5),
    (0.0, {}, 0.0),
    (100.0, {"mono3d_saving": 0.0}, 15.0),
])
def test_interconnect(d0, kw, expected):
    assert interconnect_power(d0, Calibration(**kw)) == pytest.approx(expected, rel=1e-12)


def test_interconnect_rejects_negative():
    with pytest.raises(ValueError):
        interconnect_power(-1.0, Calibration())


def test_total_dynamic_is_1135_d0(unet):
    cal = Calibration()
    perf = network_perf(unet, P)
    rep = power_report(perf, P, cal, 45.0)
    d0 = sum(v for k, v in rep.dynamic_w.items() if k != "interconnect")
    assert rep.dynamic_total_w == pytest.approx(1.135 * d0, rel=1e-12)


def test_leakage_examples():
    cal = Calibration()
    ref = leakage_power(P, cal, cal.t_ref_c)
    assert ref["array"] == 64 * 68 * cal.mac_leak_mw * 1e-3
    assert ref["sram_ofmap"] == cal.sram_model.lookup(256).leak_mw * 1e-3
    hot = leakage_power(P, cal, cal.t_ref_c + 34.66)
    assert hot["array"] / ref["array"] == pytest.approx(2.0, rel=1e-3)


def test_leakage_per_block_temperatures():
    cal = Calibration()
    temps = {"array": 70.0, "sram_ifmap": 50.0, "sram_filter": 45.0, "sram_ofmap": 60.0}
    leak = leakage_power(P, cal, temps)
    for b, t in temps.items():
        assert leak[b] == pytest.approx(leakage_power(P, cal, t)[b], rel=1e-15)


def test_leakage_rejects_non_finite():
    with pytest.raises(ValueError):
        leakage_power(P, Calibration(), float("nan"))


@given(st.floats(-20, 150), st.floats(0.01, 50))
def test_leakage_log_linear(t1, dt):
    cal = Calibration()
    a = leakage_power(P, cal, t1)["array"]
    b = leakage_power(P, cal, t1 + dt)["array"]
    assert b > a
    assert math.log(b) - math.log(a) == pytest.approx(cal.leak_coeff_per_c * dt, rel=1e-9, abs=1e-12)


def test_chip_area_examples():
    cal = Calibration(mac_area_mm2=0.5)
    t1, _, _ = chip_area(DesignPoint(64, 64, 32, 32, 32, 500), cal)
    assert t1 == 4096 * 0.5
    # 3 x 32 KB = 0.84 mm2; choose mac area so both tiers match
    sym = Calibration(mac_area_mm2=3 * 0.28 / 4096)
    t1, t2, fp = chip_area(DesignPoint(64, 64, 32, 32, 32, 500), sym)
    assert t1 == pytest.approx(t2) and fp == pytest.approx(t1)


def test_footprint_direction_default_calibration(cal):
    big = chip_area(DesignPoint(194, 192, 4096, 128, 32, 500), cal)[2]
    small = chip_area(DesignPoint(132, 138, 2048, 32, 32, 735), cal)[2]
    assert small < big


def test_tier_imbalance_flag(cal, unet):
    p = DesignPoint(64, 64, 4096, 4096, 4096, 500)
    rep = power_report(network_perf(unet, p), p, cal, 45.0)
    assert rep.tier_imbalance
    p = DesignPoint(194, 192, 4096, 128, 32, 500)
    rep = power_report(network_perf(unet, p), p, cal, 45.0)
    assert not rep.tier_imbalance


@pytest.mark.parametrize("args, expected", [((1, 1, 1), 1), ((2, 3, 4), 24), ((0.5, 3, 4), 6)])
def test_edap(args, expected):
    assert edap(*args) == expected


def test_report_totals_and_non_negative(cal, resnet):
    for p in [DesignPoint(64, 64, 32, 32, 32, 500), DesignPoint(256, 256, 4096, 4096, 4096, 735),
              DesignPoint(186, 196, 2048, 1024, 64, 735)]:
        rep = power_report(network_perf(resnet, p), p, cal, 60.0)
        assert rep.total_w == pytest.approx(sum(rep.dynamic_w.values()) + sum(rep.leakage_w.values()), rel=1e-12)
        assert sum(rep.block_power().values()) == pytest.approx(rep.total_w, rel=1e-12)
        assert rep.energy_j == pytest.approx(rep.total_w * rep.latency_s, rel=1e-12)
        d = rep.to_dict()
        assert min(list(rep.dynamic_w.values()) + list(rep.leakage_w.values())) >= 0
        assert d["area_mm2"]["footprint"] == max(rep.tier1_mm2, rep.tier2_mm2)
        # summation order does not matter beyond rounding
        e1 = edap(rep.energy_j, rep.latency_s, rep.footprint_mm2)
        total_rev = sum(reversed(list(rep.dynamic_w.values()) + list(rep.leakage_w.values())))
        assert edap(total_rev * rep.latency_s, rep.latency_s, rep.footprint_mm2) == pytest.approx(e1, rel=1e-12)


def test_sram_analytic_scaling():
    m = SramModel()
    e32, e128 = m.lookup(32), m.lookup(128)
    assert e128.read_pj == pytest.approx(2 * e32.read_pj)
    assert e128.leak_mw == pytest.approx(4 * e32.leak_mw)
    assert e128.area_mm2 == pytest.approx(4 * e32.area_mm2)
    with pytest.raises(CalibrationError):
        m.lookup(0)


def test_sram_table(tmp_path):
    path = tmp_path / "sram.csv"
    path.write_text("size_kb,read_pj,write_pj,leak_mw,area_mm2\n64,2,3,4,0.2\n32,1,1.5,2,0.1\n")
    table = load_sram_table(path)
    assert [s for s, _ in table] == [32, 64]
    m = SramModel(table=table)
    assert m.lookup(64).read_pj == 2
    mid = m.lookup(32 * math.sqrt(2))
    assert mid.read_pj == pytest.approx(math.sqrt(2))
    with pytest.raises(CalibrationError):
        m.lookup(128)
    cfg = tmp_path / "cal.yaml"
    cfg.write_text("sram_model:\n  table: sram.csv\n")
    assert load_calibration(cfg).sram_model.lookup(64).area_mm2 == 0.2


def test_sram_table_bad_row(tmp_path):
    path = tmp_path / "sram.csv"
    path.write_text("size_kb,read_pj,write_pj,leak_mw,area_mm2\n32,1,x,2,0.1\n")
    with pytest.raises(CalibrationError, match="row 2"):
        load_sram_table(path)


@pytest.mark.parametrize("raw", [
    {"interconnect_fraction": 1.0},
    {"mono3d_saving": -0.1},
    {"mac_energy_pj": -1},
    {"bogus_key": 1},
])
def test_calibration_validation(raw):
    with pytest.raises(CalibrationError):
        calibration_from_dict(raw)


def test_bundled_calibration_matches_defaults(cal):
    assert cal == Calibration()
