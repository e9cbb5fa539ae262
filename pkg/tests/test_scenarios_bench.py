from fractions import Fraction

import pytest

from stlenforce.services import bench, jobs
from stlenforce.services.encoder import sign_encode
from stlenforce.services.scenarios import (
    SAFE_STOPPING,
    ScenarioError,
    get_scenario,
    safe_charging_signal,
    safe_deceleration_signal,
    safe_stopping_signal,
    scenario_names,
)
from stlenforce.services.stl import parse_formula


@pytest.mark.parametrize("violations", [0, 2, 4, 10, 20])
def test_stopping_word_length_tracks_violations(violations):
    phi = parse_formula(SAFE_STOPPING)
    signal = safe_stopping_signal(violations, seed=violations)
    assert len(sign_encode(signal, phi)) == violations + 4
    halted = safe_stopping_signal(violations, seed=violations, stops=False)
    assert len(sign_encode(halted, phi)) == violations + 3


def test_generators_are_seeded():
    assert safe_stopping_signal(4, seed=7) == safe_stopping_signal(4, seed=7)
    assert safe_stopping_signal(4, seed=7) != safe_stopping_signal(4, seed=8)
    assert safe_charging_signal(2, seed=1) == safe_charging_signal(2, seed=1)


def test_generated_shapes():
    charging = safe_charging_signal(4, seed=0)
    assert charging.variables == ("V", "I")
    assert charging.duration == 12
    assert charging.column("V")[-1] == Fraction(21, 5)
    assert sum(1 for value in charging.column("I") if value > 10) == 2
    decel = safe_deceleration_signal(6, seed=0)
    assert decel.variables == ("w", "m")
    assert decel.point_at(Fraction(10)) == {"w": 0, "m": 0}


@pytest.mark.parametrize("violations", [3, -2, 102])
def test_bad_violation_counts(violations):
    with pytest.raises(ScenarioError):
        safe_stopping_signal(violations)


def test_scenario_registry():
    assert scenario_names() == ("safe-stopping", "safe-charging", "safe-deceleration")
    assert get_scenario("safe-charging").property == "(V == 4.2) R[2,10] (I < 10)"
    with pytest.raises(ScenarioError) as info:
        get_scenario("safe-landing")
    assert "safe-stopping" in info.value.user_message


def test_map_jobs_inline_keeps_order(inline_jobs):
    assert jobs.map_jobs(lambda n: n * n, [3, 1, 2]) == [9, 1, 4]


def test_map_jobs_on_executor_keeps_order():
    assert jobs.map_jobs(lambda n: -n, range(5), label="negate") == [0, -1, -2, -3, -4]


def test_resolve_max_workers(monkeypatch):
    monkeypatch.setenv("STLENFORCE_JOBS_MAX_WORKERS", "4")
    assert jobs._resolve_max_workers() == 4
    monkeypatch.setenv("STLENFORCE_JOBS_MAX_WORKERS", "many")
    assert jobs._resolve_max_workers() == 1


def test_bench_scales_roughly_linearly(inline_jobs):
    records = bench.run_bench("safe-stopping", counts=(2, 20), repetitions=3, seed=0)
    assert [r.violations for r in records] == [2, 20]
    assert [r.word_length for r in records] == [6, 24]
    assert records[1].time_ms <= 25 * records[0].time_ms


def test_fit_trend_and_csv():
    records = [bench.BenchRecord(2, 6, 1.0), bench.BenchRecord(4, 8, 2.0), bench.BenchRecord(6, 10, 3.0)]
    trend = bench.fit_trend(records)
    assert trend.slope == pytest.approx(0.5)
    assert trend.intercept == pytest.approx(0.0, abs=1e-9)
    assert trend.r_squared == pytest.approx(1.0)
    assert bench.records_to_csv(records).splitlines() == [
        "violations,word_length,time_ms",
        "2,6,1.000",
        "4,8,2.000",
        "6,10,3.000",
    ]
    assert bench.records_to_csv(records, include_time=False).splitlines()[1] == "2,6"
    with pytest.raises(ValueError):
        bench.fit_trend(records[:1])


def test_bench_medians_fit_a_line(inline_jobs):
    records = bench.run_bench("safe-stopping", counts=bench.DEFAULT_COUNTS, repetitions=7, seed=0)
    assert [r.word_length for r in records] == [v + 4 for v in bench.DEFAULT_COUNTS]
    assert bench.fit_trend(records).r_squared >= 0.9
