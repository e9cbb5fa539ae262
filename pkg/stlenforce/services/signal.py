"""Piecewise-linear multivariate signals over exact rational time."""

from __future__ import annotations

from bisect import bisect_left
import csv
from dataclasses import dataclass
from functools import cached_property
from fractions import Fraction
import io
import json
import logging
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from stlenforce.core import storage
from stlenforce.core.errors import StlEnforceError
from stlenforce.core.numbers import format_rational, parse_rational


_LOGGER = logging.getLogger(__name__)


class SignalError(StlEnforceError):
    pass


@dataclass(frozen=True)
class Sample:
    time: Fraction
    values: tuple[Fraction, ...]


@dataclass(frozen=True)
class Signal:
    variables: tuple[str, ...]
    samples: tuple[Sample, ...]

    def __post_init__(self) -> None:
        if not self.variables:
            raise SignalError("signal needs at least one variable")
        if len(set(self.variables)) != len(self.variables):
            raise SignalError(f"duplicate variable names: {list(self.variables)}")
        if not self.samples:
            raise SignalError("signal has no samples", user_message="Signal file has no data rows.")
        if self.samples[0].time != 0:
            raise SignalError(f"first sample must be at time 0, got {format_rational(self.samples[0].time)}")
        width = len(self.variables)
        previous: Fraction | None = None
        for sample in self.samples:
            if len(sample.values) != width:
                raise SignalError(f"sample at {format_rational(sample.time)} has {len(sample.values)} values, expected {width}")
            if previous is not None and sample.time <= previous:
                raise SignalError(
                    f"non-increasing time at {format_rational(sample.time)}",
                    user_message="Signal times must be strictly increasing.",
                )
            previous = sample.time

    @classmethod
    def from_columns(cls, times: Sequence, columns: Mapping[str, Sequence]) -> Signal:
        """Build from ``{"x": [...], ...}``; values may be ints, Fractions or rational strings."""
        names = tuple(columns)
        rows = []
        for index, t in enumerate(times):
            values = tuple(parse_rational(_as_text(columns[name][index])) for name in names)
            rows.append(Sample(parse_rational(_as_text(t)), values))
        return cls(names, tuple(rows))

    @property
    def duration(self) -> Fraction:
        return self.samples[-1].time

    @cached_property
    def times(self) -> tuple[Fraction, ...]:
        return tuple(sample.time for sample in self.samples)

    def index_of(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise SignalError(f"signal has no variable {name!r}") from None

    def value_at(self, t: Fraction) -> tuple[Fraction, ...]:
        t = Fraction(t)
        if t < 0 or t > self.duration:
            raise SignalError(f"time {format_rational(t)} outside [0, {format_rational(self.duration)}]")
        times = self.times
        index = bisect_left(times, t)
        if times[index] == t:
            return self.samples[index].values
        left, right = self.samples[index - 1], self.samples[index]
        ratio = (t - left.time) / (right.time - left.time)
        return tuple(a + (b - a) * ratio for a, b in zip(left.values, right.values))

    def point_at(self, t: Fraction) -> dict[str, Fraction]:
        return dict(zip(self.variables, self.value_at(t)))

    def column(self, name: str) -> tuple[Fraction, ...]:
        index = self.index_of(name)
        return tuple(sample.values[index] for sample in self.samples)

    def with_points(self, points: Mapping[Fraction, Sequence[Fraction]]) -> Signal:
        """Copy of the signal with samples inserted or replaced at the given times."""
        merged = {sample.time: sample.values for sample in self.samples}
        for t, values in points.items():
            if t < 0 or t > self.duration:
                raise SignalError(f"time {format_rational(t)} outside the signal")
            merged[Fraction(t)] = tuple(values)
        return Signal(self.variables, tuple(Sample(t, merged[t]) for t in sorted(merged)))


def _as_text(value: object) -> str | int | Fraction:
    if isinstance(value, (int, Fraction, str)):
        return value
    raise SignalError(f"unsupported sample value {value!r}; use int, Fraction or a rational string")


def value_at(s: Signal, t: Fraction) -> tuple[Fraction, ...]:
    return s.value_at(t)


def parse_csv(text: str, source: str = "<string>") -> Signal:
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise SignalError(f"{source}: empty file", user_message="Signal file is empty.")
    header = [cell.strip() for cell in rows[0]]
    if not header or header[0] != "time":
        raise SignalError(f"{source}: header must start with 'time'", user_message="Signal header must start with 'time'.")
    if len(header) < 2:
        raise SignalError(f"{source}: missing variable columns", user_message="Signal has no variable columns.")
    samples = []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise SignalError(
                f"{source}:{line_no}: expected {len(header)} cells, got {len(row)}",
                user_message=f"Malformed row {line_no} in signal file.",
            )
        try:
            values = [parse_rational(cell) for cell in row]
        except ValueError as exc:
            raise SignalError(f"{source}:{line_no}: {exc}", user_message=f"Malformed row {line_no} in signal file.") from exc
        samples.append(Sample(values[0], tuple(values[1:])))
    if not samples:
        raise SignalError(f"{source}: no data rows", user_message="Signal file has no data rows.")
    signal = Signal(tuple(header[1:]), tuple(samples))
    _LOGGER.debug("Loaded %s: %d samples over %s", source, len(samples), signal.variables)
    return signal


def load_csv(path: Path) -> Signal:
    return parse_csv(storage.read_text(path), source=str(path))


def to_csv(s: Signal) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["time", *s.variables])
    for sample in s.samples:
        writer.writerow([format_rational(sample.time), *(format_rational(v) for v in sample.values)])
    return buffer.getvalue()


def emit_csv(s: Signal, path: Path) -> Path:
    return storage.write_text(path, to_csv(s))


def merge_times(*groups: Iterable[Fraction]) -> list[Fraction]:
    return sorted({Fraction(t) for group in groups for t in group})


def to_json(s: Signal) -> str:
    payload = {
        "variables": list(s.variables),
        "samples": [
            {"time": format_rational(sample.time), "values": [format_rational(v) for v in sample.values]}
            for sample in s.samples
        ],
    }
    return json.dumps(payload, indent=2)
