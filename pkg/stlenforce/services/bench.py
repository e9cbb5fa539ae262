"""Scaling benchmark: enforcement time against the number of violation points."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
import io
import logging
import statistics
import time
from typing import Iterable, Sequence

import numpy as np

from stlenforce.core.config import settings
from stlenforce.services import jobs
from stlenforce.services.encoder import sign_encode
from stlenforce.services.enforcer import enforce
from stlenforce.services.scenarios import Scenario, get_scenario
from stlenforce.services.stl import parse_formula


_LOGGER = logging.getLogger(__name__)

DEFAULT_COUNTS = tuple(range(2, 21, 2))


@dataclass(frozen=True)
class BenchRecord:
    violations: int
    word_length: int
    time_ms: float


@dataclass(frozen=True)
class Trend:
    slope: float
    intercept: float
    r_squared: float


def measure(scenario: Scenario, violations: int, seed: int, repetitions: int, eps: Fraction) -> BenchRecord:
    signal = scenario.generate(violations, seed)
    phi = parse_formula(scenario.property)
    word_length = len(sign_encode(signal, phi))

    def timed(_: int) -> float:
        start = time.perf_counter()
        enforce(signal, phi, eps)
        return (time.perf_counter() - start) * 1000

    samples = jobs.map_jobs(timed, range(repetitions), label=f"{scenario.name}-{violations}")
    elapsed = max(statistics.median(samples), 1e-6)
    _LOGGER.info("%s #v=%d len=%d median %.3f ms", scenario.name, violations, word_length, elapsed)
    return BenchRecord(violations, word_length, elapsed)


def run_bench(
    scenario: Scenario | str,
    counts: Sequence[int] = DEFAULT_COUNTS,
    repetitions: int | None = None,
    seed: int = 0,
    eps: Fraction | None = None,
) -> list[BenchRecord]:
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    repetitions = repetitions or settings.bench_repetitions
    eps = settings.eps if eps is None else eps
    return [measure(scenario, count, seed, repetitions, eps) for count in counts]


def fit_trend(records: Sequence[BenchRecord]) -> Trend:
    """Least-squares line through (violations, median ms)."""
    if len(records) < 2:
        raise ValueError("need at least two records to fit a trend")
    x = np.array([r.violations for r in records], dtype=float)
    y = np.array([r.time_ms for r in records], dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sum((y - (slope * x + intercept)) ** 2))
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if total == 0 else 1.0 - residual / total
    return Trend(float(slope), float(intercept), r_squared)


def records_to_csv(records: Iterable[BenchRecord], include_time: bool = True) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["violations", "word_length", "time_ms"] if include_time else ["violations", "word_length"])
    for record in records:
        row = [record.violations, record.word_length]
        if include_time:
            row.append(f"{record.time_ms:.3f}")
        writer.writerow(row)
    return buffer.getvalue()
