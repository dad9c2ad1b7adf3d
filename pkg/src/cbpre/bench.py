"""Latency experiments: PRE versus baseline, and a load sweep.

Repetition ``r`` of every experiment runs with seed ``seed + r``, and the
same seeds are reused across modes and load levels, so the compared runs
see the same block arrival process.
"""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence

from .actors import ScenarioConfig, ScenarioTrace, run_scenario

__all__ = [
    "CSV_COLUMNS",
    "MetricsRow",
    "metrics_rows",
    "rows_to_csv",
    "ImpactResult",
    "bench_impact",
    "ScaleResult",
    "SCALE_LOADS",
    "bench_scale",
]

CSV_COLUMNS = ["scenario", "n_requests", "request_id", "latency_s", "t_request_mine", "t_rekey_mine",
               "t_reencrypt", "t_addr_mine", "t_fetch_decrypt"]

# one request, then steps of five up to fifty
SCALE_LOADS = (1,) + tuple(range(5, 51, 5))


@dataclass(frozen=True)
class MetricsRow:
    scenario: str
    n_requests: int
    request_id: int
    latency_s: float
    t_request_mine: float
    t_rekey_mine: float
    t_reencrypt: float
    t_addr_mine: float
    t_fetch_decrypt: float

    def as_list(self) -> list:
        return [self.scenario, self.n_requests, self.request_id] + [
            f"{getattr(self, c):.6f}" for c in CSV_COLUMNS[3:]]


def metrics_rows(trace: ScenarioTrace, scenario: str) -> List[MetricsRow]:
    n = len(trace.requests)
    return [MetricsRow(scenario, n, rid, rec.latency_s, **rec.phases())
            for rid, rec in sorted(trace.requests.items())]


def rows_to_csv(rows: Iterable[MetricsRow], extra: Sequence[Sequence] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow(row.as_list())
    for row in extra:
        w.writerow(row)
    return buf.getvalue()


@dataclass
class ImpactResult:
    pre: List[float]  # mean latency per repetition
    baseline: List[float]
    rows: List[MetricsRow]

    @property
    def pre_mean(self) -> float:
        return statistics.fmean(self.pre)

    @property
    def baseline_mean(self) -> float:
        return statistics.fmean(self.baseline)

    @property
    def overhead(self) -> float:
        return self.pre_mean / self.baseline_mean - 1.0

    def to_csv(self) -> str:
        summary = [["summary", "pre_mean", "baseline_mean", "overhead_ratio"],
                   ["summary", f"{self.pre_mean:.6f}", f"{self.baseline_mean:.6f}", f"{self.overhead:.6f}"]]
        return rows_to_csv(self.rows, summary)


def bench_impact(repetitions: int = 30, config: Optional[ScenarioConfig] = None) -> ImpactResult:
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    base = config or ScenarioConfig()
    pre, baseline, rows = [], [], []
    for r in range(repetitions):
        for enabled, sink, label in ((True, pre, "pre"), (False, baseline, "baseline")):
            cfg = replace(base, seed=base.seed + r, pre_enabled=enabled)
            trace = run_scenario(cfg)
            sink.append(statistics.fmean(trace.latencies()))
            rows.extend(metrics_rows(trace, f"{label}/rep{r}"))
    return ImpactResult(pre, baseline, rows)


@dataclass
class ScaleResult:
    loads: List[int]
    mean_latency: Dict[int, float]
    mean_block_hops: Dict[int, float]
    rows: List[MetricsRow]

    def inversions(self, tol: float = 1e-9) -> int:
        # loads that fit in one block give equal means up to summation order
        means = [self.mean_latency[n] for n in self.loads]
        return sum(1 for a, b in zip(means, means[1:]) if b < a - tol)

    def to_csv(self) -> str:
        summary = [["load", "n_requests", "mean_latency_s", "mean_block_hops"]]
        summary += [["load", n, f"{self.mean_latency[n]:.6f}", f"{self.mean_block_hops[n]:.6f}"]
                    for n in self.loads]
        return rows_to_csv(self.rows, summary)


def bench_scale(repetitions: int = 10, loads: Sequence[int] = SCALE_LOADS,
                config: Optional[ScenarioConfig] = None) -> ScaleResult:
    """Concurrent requesters against one sensor, one request each."""
    base = config or ScenarioConfig(readings_per_sensor=1)
    mean_latency, mean_hops, rows = {}, {}, []
    for n in loads:
        lat, hops = [], []
        for r in range(repetitions):
            cfg = replace(base, seed=base.seed + r, n_sensors=1, n_requesters=n)
            trace = run_scenario(cfg)
            lat.extend(trace.latencies())
            hops.extend(rec.block_hops for rec in trace.requests.values())
            rows.extend(metrics_rows(trace, f"scale/n{n}/rep{r}"))
        mean_latency[n] = statistics.fmean(lat)
        mean_hops[n] = statistics.fmean(hops)
    return ScaleResult(list(loads), mean_latency, mean_hops, rows)
