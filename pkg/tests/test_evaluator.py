import json

import pytest

from mono3d_dse.evaluator import (MAX_ITERATIONS, Constraints, Evaluator, LeakageDivergenceError, apply_constraints,
                                  check_feasibility, confirm_fixed_point, evaluate)
from mono3d_dse.perf import DesignPoint
from mono3d_dse.power import SramEntry, SramModel, power_report
from mono3d_dse.workload import LayerSpec, NetworkSpec

GRID = (16, 16)
P = DesignPoint(132, 138, 2048, 32, 32, 600)


def test_no_leakage_feedback_two_iterations(unet, cal, stack):
    e = evaluate(P, unet, cal.with_(leak_coeff_per_c=0.0), stack, GRID)
    assert e.iterations == 2


def test_zero_power_is_ambient(cal, stack):
    dead = cal.with_(mac_energy_pj=0.0, mac_leak_mw=0.0,
                     sram_model=SramModel(reference=SramEntry(0.0, 0.0, 0.0, 0.28)))
    net = NetworkSpec("one", (LayerSpec("l", 4, 4, 1, 1, 1, 1),))
    e = evaluate(DesignPoint(64, 64, 32, 32, 32, 500), net, dead, stack, GRID)
    assert e.max_c == stack.ambient_c
    assert e.feasible


def test_fixed_point_confirmed(unet, cal, stack):
    e = evaluate(P, unet, cal, stack, GRID)
    assert e.iterations <= MAX_ITERATIONS
    assert confirm_fixed_point(e, unet, cal, stack, GRID) < 1.0


def test_converged_power_at_least_first_iteration(resnet, cal, stack):
    e = evaluate(P, resnet, cal, stack, GRID)
    cold = power_report(e.perf, P, cal, stack.ambient_c)
    assert e.total_power_w >= cold.total_w


def test_divergence_raises(unet, cal, stack):
    with pytest.raises(LeakageDivergenceError) as info:
        evaluate(DesignPoint(256, 256, 4096, 4096, 4096, 735), unet, cal.with_(leak_coeff_per_c=0.5), stack, GRID)
    assert len(info.value.last_two) == 2


def test_strong_feedback_still_converges(unet, cal, stack):
    strong = cal.with_(leak_coeff_per_c=0.04)
    e = evaluate(DesignPoint(194, 192, 4096, 128, 32, 735), unet, strong, stack, GRID)
    assert e.iterations >= 4
    assert confirm_fixed_point(e, unet, strong, stack, GRID) < 1.0


def test_feasibility_boundaries(unet, cal, stack):
    e = evaluate(P, unet, cal, stack, GRID)
    at_limit = apply_constraints(e, Constraints(t_max_c=e.max_c))
    assert at_limit.feasible and at_limit.violations == ()
    over = apply_constraints(e, Constraints(t_max_c=e.max_c - 0.5))
    assert not over.feasible
    assert over.violation("thermal") == pytest.approx(0.5)
    ref = e.latency_s / 1.10
    ok = apply_constraints(e, Constraints(t_max_c=1e9, latency_ref_s=ref))
    assert ok.feasible == (e.latency_s <= 1.10 * ref)
    slow = apply_constraints(e, Constraints(t_max_c=1e9, latency_ref_s=e.latency_s / 1.2))
    assert not slow.feasible and slow.violation("latency") > 0


def test_exact_80_is_feasible(unet, cal, stack):
    e = evaluate(P, unet, cal, stack, GRID)
    shifted = type(e)(**{**e.__dict__, "max_c": 80.0})
    ok, violations = check_feasibility(shifted, Constraints())
    assert ok and not violations


def test_feasible_iff_no_violations(resnet_eval):
    for p in [DesignPoint(64, 64, 32, 32, 32, 500), DesignPoint(256, 256, 4096, 4096, 4096, 735)]:
        for c in [Constraints(), Constraints(t_max_c=50.0), Constraints(latency_ref_s=1e-6)]:
            e = resnet_eval(p, c)
            assert e.feasible == (len(e.violations) == 0)


def test_max_c_monotone_in_frequency(unet_eval):
    temps = [unet_eval(DesignPoint(194, 192, 4096, 128, 32, f)).max_c for f in (500, 600, 735)]
    assert temps == sorted(temps)


def test_unet_hot_point_infeasible_at_735(unet_eval):
    e = unet_eval(DesignPoint(194, 192, 4096, 128, 32, 735))
    assert not e.feasible
    assert e.violation("thermal") > 0


def test_objectives_consistent(unet_eval):
    e = unet_eval(P)
    assert e.objective("latency") == e.perf.latency_s
    assert e.objective("power") == e.power.total_w
    assert e.objective("edap") == pytest.approx(e.power.energy_j * e.perf.latency_s * e.power.footprint_mm2)
    with pytest.raises(ValueError):
        e.objective("speed")


def test_json_round_trip(unet_eval):
    e = unet_eval(P)
    d = json.loads(e.to_json())
    for key in ("latency_s", "total_power_w", "edap", "max_c", "feasible", "leakage_iterations"):
        assert key in d
    assert d["max_c"] == e.max_c
    assert e.to_json() == unet_eval(P).to_json()


def test_evaluator_memoizes(unet, cal, stack):
    ev = Evaluator(unet, cal, stack, GRID)
    a = ev(P)
    b = ev(P, Constraints(t_max_c=40.0))
    assert ev.evaluations == 1
    assert a.max_c == b.max_c
    assert b.violation("thermal") == pytest.approx(a.max_c - 40.0)


def test_constraints_validation():
    with pytest.raises(ValueError):
        Constraints(max_perf_loss=-0.1)
    assert Constraints(latency_ref_s=2.0).latency_bound_s == pytest.approx(2.2)
