import csv
import io
import math

import pytest

from cbpre.actors import ScenarioConfig, run_scenario
from cbpre.bench import CSV_COLUMNS, SCALE_LOADS, bench_impact, bench_scale, metrics_rows, rows_to_csv

from oracles import block_hops_lower_bound


def parse(text):
    return list(csv.reader(io.StringIO(text)))


@pytest.fixture(scope="module")
def impact():
    return bench_impact(repetitions=4)


@pytest.fixture(scope="module")
def scale():
    return bench_scale(repetitions=2, loads=(1, 10, 50))


def test_metrics_columns_and_phase_sum():
    trace = run_scenario(ScenarioConfig(n_requesters=2, seed=5))
    table = parse(rows_to_csv(metrics_rows(trace, "pre")))
    assert table[0] == CSV_COLUMNS
    assert len(table) == 3
    for row in table[1:]:
        assert row[0] == "pre" and row[1] == "2"
        latency, phases = float(row[3]), [float(x) for x in row[4:]]
        assert all(p >= 0 for p in phases)
        assert math.isclose(sum(phases), latency, abs_tol=5e-6)


def test_impact_shape(impact):
    assert len(impact.pre) == len(impact.baseline) == 4
    labels = {r.scenario.split("/")[0] for r in impact.rows}
    assert labels == {"pre", "baseline"}
    assert impact.overhead == pytest.approx(impact.pre_mean / impact.baseline_mean - 1)
    summary = parse(impact.to_csv())[-1]
    assert summary[0] == "summary" and float(summary[3]) == pytest.approx(impact.overhead, abs=1e-6)


def test_impact_reuses_seeds_across_modes(impact):
    # same block arrivals: rep r in both modes is seeded identically
    cfg = ScenarioConfig()
    assert impact.pre[0] == pytest.approx(run_scenario(cfg).latencies()[0])
    assert impact.baseline[1] == pytest.approx(
        run_scenario(ScenarioConfig(seed=1, pre_enabled=False)).latencies()[0])


def test_csv_byte_stable(impact):
    assert bench_impact(repetitions=4).to_csv() == impact.to_csv()


def test_rejects_zero_reps():
    with pytest.raises(ValueError):
        bench_impact(repetitions=0)


def test_default_loads():
    assert SCALE_LOADS == (1, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50)


def test_hops_respect_queueing_bound(scale):
    cap = ScenarioConfig().block_capacity
    for n in scale.loads:
        assert scale.mean_block_hops[n] >= block_hops_lower_bound(n, cap)


def test_last_request_at_fifty_waits_for_the_queue():
    # 150 sequential-ish txs through blocks of 10: the slowest request
    # cannot finish before the pool has drained most of the backlog
    cap = ScenarioConfig().block_capacity
    trace = run_scenario(ScenarioConfig(readings_per_sensor=1, n_sensors=1, n_requesters=50))
    hops = max(rec.block_hops for rec in trace.requests.values())
    assert hops >= 1 + math.ceil((150 - cap) / cap)


def test_latency_grows_with_load(scale):
    # ten requests still fit one block each hop, so no queueing yet
    assert scale.mean_latency[10] == pytest.approx(scale.mean_latency[1])
    assert scale.mean_latency[10] < scale.mean_latency[50]
    assert scale.inversions() == 0
    summary = [r for r in parse(scale.to_csv()) if r[0] == "load"]
    assert [r[1] for r in summary[1:]] == ["1", "10", "50"]


def test_baseline_below_pre_in_every_repetition():
    result = bench_impact(repetitions=30)
    assert all(b < p for p, b in zip(result.pre, result.baseline))
    assert 39 <= result.pre_mean <= 58 and 0.4 <= result.overhead <= 1.0
