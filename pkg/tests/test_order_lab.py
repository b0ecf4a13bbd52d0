import asyncio
import json

import numpy as np
import pytest

from obx.analysis.steady_state import ac_solve
from obx.coefficients import make_scheme
from obx.errors import ConfigError, TooFewSamplesError
from obx.lab.manager import StudyManager
from obx.lab.order_study import (
    H_WIDEN_LIMIT,
    MIN_FIT_SAMPLES,
    WIDEN_TARGET,
    OrderSample,
    compare_orders,
    default_h_values,
    fit_slope,
    one_step_errors,
    predicted_order,
    report_to_json,
    run_study,
    samples_to_csv,
    summarize,
    widening_steps,
)
from obx.model.benchmarks import builtin_system

from .conftest import make_dae

# One decade of larger steps for the fifth-order cases, keeping their
# truncation error well clear of roundoff.
WIDE_H = np.logspace(np.log10(5e-2), np.log10(5e-3), 10)


@pytest.mark.parametrize("l,m,k,i,expected", [
    (1, 1, 0, 0, 3),
    (1, 2, 0, 0, 4),
    (1, 2, 0, 2, 6),
    (0, 2, 2, 0, 3),
    (0, 2, 2, 1, 2),
    (0, 2, 2, 2, 2),
    (1, 2, 3, 0, 2),
    (1, 3, 3, 0, 5),
    (1, 3, 1, 0, 5),
])
def test_predicted_order(l, m, k, i, expected):
    assert predicted_order(l, m, k, i) == expected


def test_predicted_order_rejects_out_of_range():
    with pytest.raises(ValueError):
        predicted_order(1, 2, 1, 3)
    with pytest.raises(ValueError):
        predicted_order(1, 2, -1, 0)


@pytest.mark.parametrize("scale,power", [(1.0, 3.0), (2.0, 2.5), (0.3, 1.0)])
def test_fit_slope_recovers_power_law(scale, power):
    h = np.logspace(-3, -2, 10)
    assert fit_slope(h, scale * h ** power) == pytest.approx(power, abs=1e-6)


def test_fit_slope_needs_four_usable_samples():
    h = np.logspace(-3, -2, 6)
    errors = np.array([1e-6, 1e-7, 1e-8, 0.0, 0.0, 0.0])
    with pytest.raises(TooFewSamplesError):
        fit_slope(h, errors)
    with pytest.raises(TooFewSamplesError):
        fit_slope(h[:3], h[:3] ** 2)


def test_default_h_values():
    h = default_h_values(2 * np.pi)
    assert len(h) == 10
    assert h[0] == pytest.approx(1e-2) and h[-1] == pytest.approx(1e-3)
    assert np.all(np.diff(h) < 0)
    np.testing.assert_allclose(default_h_values(0.0, 5), np.logspace(-2, -3, 5))
    np.testing.assert_allclose(default_h_values(1.0, 4, h_min=1e-4, h_max=1e-1), [1e-1, 1e-2, 1e-3, 1e-4])


@pytest.mark.parametrize("kwargs", [{"points": 1}, {"h_min": 1e-2, "h_max": 1e-3}, {"h_min": -1.0}])
def test_default_h_values_rejects_bad_window(kwargs):
    with pytest.raises(ConfigError):
        default_h_values(1.0, **kwargs)


def test_constant_source_is_reproduced_exactly():
    system = builtin_system("index2").dae
    dae = make_dae(system.C, system.G, system.source.b_c, np.zeros(system.dim), 0.0)
    phasor = ac_solve(dae)
    scale = max(1.0, np.linalg.norm(phasor.X_c))
    for sample in one_step_errors(dae, make_scheme(1, 2), [1e-2, 1e-3], phasor):
        assert sample.error <= 1e-12 * scale


@pytest.mark.parametrize("l,m", [(1, 3), (1, 4), (0, 4)])
@pytest.mark.parametrize("h", [1e-1, 1e-2, 1e-3])
def test_algebraic_components_are_exact_with_enough_derivatives(l, m, h):
    dae = builtin_system("algebraic").dae
    assert builtin_system("algebraic").declared_index == 3
    phasor = ac_solve(dae)
    scale = max(1.0, np.linalg.norm(phasor.X_c) + np.linalg.norm(phasor.X_s))
    checked = 0
    for sample in one_step_errors(dae, make_scheme(l, m), [h], phasor):
        if m - sample.i >= 3:
            assert sample.error <= 1e-12 * scale, f"i={sample.i}: {sample.error:.3e}"
            checked += 1
    assert checked == m - 2


def test_trapezoidal_error_ratio_on_halving():
    dae = builtin_system("ode").dae
    samples = one_step_errors(dae, make_scheme(1, 1), [2e-3, 1e-3])
    coarse, fine = (s.error for s in samples if s.i == 0)
    assert coarse / fine == pytest.approx(8.0, rel=0.1)


@pytest.mark.parametrize("kind,l,m,h_values,orders", [
    ("ode", 1, 1, None, {0: 3}),
    ("ode", 1, 2, None, {0: 4}),
    ("index2", 0, 2, None, {0: 3, 1: 2, 2: 2}),
    ("index3", 1, 2, None, {0: 2}),
    ("index1", 1, 3, WIDE_H, {0: 5}),
    ("index3", 1, 3, WIDE_H, {0: 5}),
])
def test_measured_slopes_match_prediction(kind, l, m, h_values, orders):
    report = run_study(builtin_system(kind).dae, make_scheme(l, m), h_values=h_values)
    assert report.index_k == builtin_system(kind).declared_index
    assert len(report.h_values) == 10
    for i, expected in orders.items():
        result = report.result(i)
        assert result.predicted == expected
        assert result.passed is True, f"i={i}: slope {result.slope} vs {expected}"
        assert abs(result.slope - expected) <= 0.2


def test_order_reduction_with_index():
    scheme = make_scheme(1, 2)
    low = run_study(builtin_system("index1").dae, scheme)
    high = run_study(builtin_system("index3").dae, scheme)
    comparison = compare_orders(low, high)
    assert comparison["baseline"]["k"] == 1 and comparison["other"]["k"] == 3
    assert comparison["difference"] <= -1.7


def test_order_recovery_with_more_derivatives():
    dae = builtin_system("index3").dae
    short = run_study(dae, make_scheme(1, 2))
    long = run_study(dae, make_scheme(1, 3), h_values=WIDE_H)
    comparison = compare_orders(short, long)
    assert comparison["difference"] >= 2.5
    assert comparison["other"]["m"] == 3


def test_samples_below_floor_leave_slope_unresolved():
    h = np.logspace(-2, -3, 6)
    samples = [OrderSample(h=float(x), i=0, error=1e-20, floor=1e-15) for x in h]
    samples += [OrderSample(h=float(x), i=1, error=float(x) ** 3, floor=1e-15) for x in h]
    report = summarize(make_scheme(0, 1), 0, h, samples)
    assert report.result(0).slope is None
    assert report.result(0).passed is None
    assert report.result(0).below_floor == 6
    assert report.result(1).slope == pytest.approx(3.0)
    assert report.result(1).passed is True
    assert not report.all_passed
    assert report_to_json(report)["passed"] is False


def test_unresolved_higher_order_does_not_fail_the_report():
    h = np.logspace(-2, -3, 6)
    samples = [OrderSample(h=float(x), i=0, error=float(x) ** 2, floor=1e-15) for x in h]
    samples += [OrderSample(h=float(x), i=1, error=1e-20, floor=1e-15) for x in h]
    report = summarize(make_scheme(0, 1), 0, h, samples)
    assert report.result(0).passed is True
    assert report.result(1).passed is None
    assert report.all_passed


def test_widening_steps_continue_the_grid():
    h = [1e-2, 5e-3, 2.5e-3]
    np.testing.assert_allclose(widening_steps(h, 2, 2 * np.pi), [4e-2, 2e-2])
    # capped at H_WIDEN_LIMIT of the period
    np.testing.assert_allclose(widening_steps(h, 5, 2 * np.pi), [4e-2, 2e-2])
    assert max(widening_steps(h, 5, 1.0)) <= H_WIDEN_LIMIT * 2 * np.pi
    assert widening_steps(h, 0, 2 * np.pi) == []
    assert widening_steps(h[::-1], 3, 2 * np.pi) == []


def test_default_window_widens_until_slope_is_resolved():
    dae = builtin_system("index3").dae
    report = run_study(dae, make_scheme(1, 3))
    result = report.result(0)
    assert result.predicted == 5
    assert result.slope is not None
    assert result.used >= WIDEN_TARGET
    assert len(report.h_values) >= 10
    assert np.all(np.diff(report.h_values) < 0)
    assert report.h_values[0] <= H_WIDEN_LIMIT * (1 + 1e-9)
    assert report.h_values[-1] == pytest.approx(1e-3)
    assert len(report.samples) == len(report.h_values) * 4


def test_explicit_grid_is_never_widened():
    h = default_h_values(2 * np.pi)
    report = run_study(builtin_system("index3").dae, make_scheme(1, 3), h_values=h)
    assert report.h_values == tuple(h)


@pytest.mark.parametrize("kind,l,m", [("ode", 1, 1), ("index2", 0, 2), ("index3", 1, 2)])
def test_errors_decrease_along_the_grid(kind, l, m):
    report = run_study(builtin_system(kind).dae, make_scheme(l, m))
    for i in range(m + 1):
        usable = [s for s in report.samples if s.i == i and not s.below_floor]
        assert len(usable) >= MIN_FIT_SAMPLES
        assert [s.h for s in usable] == sorted((s.h for s in usable), reverse=True)
        errors = np.array([s.error for s in usable])
        assert np.all(np.diff(errors) < 0), f"i={i}: {errors}"


def test_failed_slope_fails_the_report():
    h = np.logspace(-2, -3, 6)
    samples = [OrderSample(h=float(x), i=i, error=float(x), floor=0.0) for x in h for i in (0, 1)]
    report = summarize(make_scheme(0, 1), 0, h, samples)
    assert report.result(0).passed is False
    assert not report.all_passed
    assert report_to_json(report)["passed"] is False


def test_report_outputs_are_deterministic():
    dae = builtin_system("index2").dae
    scheme = make_scheme(0, 2)
    first = run_study(dae, scheme, points=8)
    second = run_study(dae, scheme, points=8)
    assert samples_to_csv(first) == samples_to_csv(second)
    assert json.dumps(report_to_json(first)) == json.dumps(report_to_json(second))

    lines = samples_to_csv(first).splitlines()
    assert lines[0] == "h,i,error,log10_h,log10_error"
    assert len(lines) == 1 + 8 * 3
    assert [int(line.split(",")[1]) for line in lines[1:]] == [0] * 8 + [1] * 8 + [2] * 8

    data = report_to_json(first)
    assert data["scheme"] == {"l": 0, "m": 2}
    assert data["k"] == 2
    assert [o["i"] for o in data["orders"]] == [0, 1, 2]
    assert {"slope", "predicted", "pass", "samples_used", "samples_below_floor"} <= set(data["orders"][0])


def test_manager_matches_sequential_study():
    dae = builtin_system("index1").dae
    scheme = make_scheme(1, 2)

    async def concurrent():
        async with StudyManager(max_workers=3) as manager:
            return await manager.run_study(dae, scheme)

    parallel = asyncio.run(concurrent())
    sequential = run_study(dae, scheme)
    assert parallel.h_values == sequential.h_values
    assert [(s.h, s.i) for s in parallel.samples] == [(s.h, s.i) for s in sequential.samples]
    np.testing.assert_allclose([s.error for s in parallel.samples], [s.error for s in sequential.samples], rtol=1e-12)
    assert parallel.all_passed == sequential.all_passed


def test_manager_widens_like_sequential_study():
    dae = builtin_system("index3").dae
    scheme = make_scheme(1, 3)

    async def concurrent():
        async with StudyManager(max_workers=3) as manager:
            return await manager.run_study(dae, scheme)

    parallel = asyncio.run(concurrent())
    sequential = run_study(dae, scheme)
    assert parallel.h_values == sequential.h_values
    assert [(s.h, s.i) for s in parallel.samples] == [(s.h, s.i) for s in sequential.samples]
    assert parallel.result(0).used == sequential.result(0).used


def test_manager_requires_start():
    manager = StudyManager()
    with pytest.raises(RuntimeError):
        asyncio.run(manager.run_study(builtin_system("ode").dae, make_scheme(1, 1)))


def test_manager_worker_count_from_env(monkeypatch):
    monkeypatch.setenv("OBX_STUDY_WORKERS", "2")
    assert StudyManager().max_workers == 2
    monkeypatch.setenv("OBX_STUDY_WORKERS", "zero")
    assert StudyManager().max_workers == 4
