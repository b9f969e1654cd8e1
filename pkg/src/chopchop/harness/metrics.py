"""Run metrics and their CSV export."""
from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import asdict, dataclass, fields
from pathlib import Path


@dataclass
class Metrics:
    intents: int = 0
    completed: int = 0
    delivered: int = 0
    batches: int = 0
    throughput: float = 0.0
    latency_mean: float = math.nan
    latency_p50: float = math.nan
    latency_p99: float = math.nan
    distillation_ratio: float = math.nan
    entries: int = 0
    signers: int = 0
    ingress_bytes: int = 0
    ingress_bytes_per_message: float = math.nan
    line_rate_ratio: float = math.nan
    verify_calls: int = 0
    aggregate_verify_calls: int = 0
    store_watermark: int = 0
    messages_sent: int = 0
    messages_lost: int = 0
    sim_time: float = 0.0

    def as_row(self) -> dict:
        return asdict(self)

    def write_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=[f.name for f in fields(self)])
            w.writeheader()
            w.writerow(self.as_row())

    def to_json(self) -> str:
        return json.dumps({k: (None if isinstance(v, float) and math.isnan(v) else v)
                           for k, v in self.as_row().items()})


def percentile(values, q: float) -> float:
    if not values:
        return math.nan
    s = sorted(values)
    i = min(len(s) - 1, max(0, math.ceil(q * len(s)) - 1))
    return s[i]


def summarize_latency(latencies) -> tuple[float, float, float]:
    if not latencies:
        return math.nan, math.nan, math.nan
    return statistics.fmean(latencies), percentile(latencies, 0.5), percentile(latencies, 0.99)
