"""Session metrics: loss, latency distribution, plan churn, overhead.

Reports serialize to JSON (full, including the CDF) and to CSV (summary row
plus a separate CDF table). Serialization is deterministic: identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

REPORT_SCHEMA_VERSION = 1

PERCENTILE_KEYS = (0.10, 0.50, 0.90, 0.99)


def percentile_nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """Nearest-rank percentile, lower value at even-count midpoints."""
    n = sorted_values.size
    if n == 0:
        raise ValueError("no values")
    if not (0 < q <= 1):
        raise ValueError("q must be in (0, 1]")
    rank = math.ceil(q * n)
    if rank < 1:
        rank = 1
    return float(sorted_values[rank - 1])


def compute_cdf(latencies: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical CDF over delivered latencies: (value, cumulative fraction).

    One row per distinct latency, ascending; the last fraction is 1.0.
    Empty input gives an empty table.
    """
    arr = np.sort(np.asarray(latencies, dtype=np.float64))
    if arr.size == 0:
        return []
    values, counts = np.unique(arr, return_counts=True)
    fractions = np.cumsum(counts) / arr.size
    return [(float(v), float(f)) for v, f in zip(values, fractions)]


@dataclass
class MetricsReport:
    schema_version: int
    method: str
    router_kind: str
    jitter_kind: str
    endpoint: str
    user: str
    seed: int
    packet_count: int
    interval_ms: float
    warmup_ms: float
    delivered: int
    dropped_late: int
    tail_flushed: int
    loss_rate: float
    latency_mean_ms: float
    latency_p10_ms: float
    latency_p50_ms: float
    latency_p90_ms: float
    latency_p99_ms: float
    latency_max_ms: float
    plan_update_count: int
    path_changes: list[tuple[float, int, int]]
    control_messages: int
    overhead_per_packet_ms: float
    candidate_paths: int
    topk_paths: list[int]
    feedback_delay_model: str
    control_delay_model: str
    estimator_implementation: str
    loss_threshold: float | None
    loss_threshold_exceeded: bool | None
    config: dict = field(default_factory=dict)
    cdf: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["path_changes"] = [list(row) for row in self.path_changes]
        d["cdf"] = [list(row) for row in self.cdf]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    def write_cdf_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["schema_version", REPORT_SCHEMA_VERSION])
            writer.writerow(["latency_ms", "cumulative_fraction"])
            for value, frac in self.cdf:
                writer.writerow([repr(value), repr(frac)])
        return path


SUMMARY_FIELDS = [
    "method", "endpoint", "user", "seed", "packet_count", "delivered",
    "dropped_late", "tail_flushed", "loss_rate", "latency_mean_ms",
    "latency_p10_ms", "latency_p50_ms", "latency_p90_ms", "latency_p99_ms",
    "latency_max_ms", "plan_update_count", "overhead_per_packet_ms",
]


def write_summary_csv(reports: Sequence[MetricsReport], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["schema_version", REPORT_SCHEMA_VERSION])
        writer.writerow(SUMMARY_FIELDS)
        for report in reports:
            d = report.to_dict()
            writer.writerow([d[k] if not isinstance(d[k], float) else repr(d[k]) for k in SUMMARY_FIELDS])
    return path


def build_report(
    *,
    method: str,
    router_kind: str,
    jitter_kind: str,
    endpoint: str,
    user: str,
    seed: int,
    packet_count: int,
    interval_ms: float,
    warmup_ms: float,
    delivered_latencies: Sequence[float],
    dropped_late: int,
    tail_flushed: int,
    plan_update_count: int,
    path_changes: list[tuple[float, int, int]],
    control_messages: int,
    overhead_sum_ms: float,
    candidate_paths: int,
    topk_paths: Sequence[int],
    estimator_implementation: str,
    loss_threshold: float | None,
    config: dict,
) -> MetricsReport:
    arr = np.sort(np.asarray(delivered_latencies, dtype=np.float64))
    if arr.size:
        mean = float(np.mean(arr))
        p10, p50, p90, p99 = (percentile_nearest_rank(arr, q) for q in PERCENTILE_KEYS)
        lat_max = float(arr[-1])
    else:
        mean = p10 = p50 = p90 = p99 = lat_max = 0.0
    loss_rate = dropped_late / packet_count if packet_count > 0 else 0.0
    return MetricsReport(
        schema_version=REPORT_SCHEMA_VERSION,
        method=method,
        router_kind=router_kind,
        jitter_kind=jitter_kind,
        endpoint=endpoint,
        user=user,
        seed=seed,
        packet_count=packet_count,
        interval_ms=interval_ms,
        warmup_ms=warmup_ms,
        delivered=int(arr.size),
        dropped_late=dropped_late,
        tail_flushed=tail_flushed,
        loss_rate=loss_rate,
        latency_mean_ms=mean,
        latency_p10_ms=p10,
        latency_p50_ms=p50,
        latency_p90_ms=p90,
        latency_p99_ms=p99,
        latency_max_ms=lat_max,
        plan_update_count=plan_update_count,
        path_changes=path_changes,
        control_messages=control_messages,
        overhead_per_packet_ms=overhead_sum_ms / packet_count if packet_count > 0 else 0.0,
        candidate_paths=candidate_paths,
        topk_paths=list(topk_paths),
        feedback_delay_model="reverse-direct-oneway",
        control_delay_model="forward-direct-oneway",
        estimator_implementation=estimator_implementation,
        loss_threshold=loss_threshold,
        loss_threshold_exceeded=(loss_rate > loss_threshold) if loss_threshold is not None else None,
        config=config,
        cdf=compute_cdf(delivered_latencies),
    )
