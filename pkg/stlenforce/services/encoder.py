"""Encode a signal into a timed word of predicate valuations."""

from __future__ import annotations

from bisect import bisect_left
import csv
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
import io
import json
import logging
from typing import Iterator, Mapping, Sequence

from stlenforce.core.errors import StlEnforceError
from stlenforce.core.numbers import format_rational, midpoint
from stlenforce.services.signal import Signal
from stlenforce.services.stl import Comparison, Predicate, StlFormula, horizon, predicates, relevant_points


_LOGGER = logging.getLogger(__name__)


class EncodingError(StlEnforceError):
    pass


class EventKind(str, Enum):
    VARIABLE_POINT = "variable"
    RELEVANT_POINT = "relevant"
    BOTH = "both"


@dataclass(frozen=True)
class Valuation:
    """Total truth assignment, ordered like the formula's predicates."""

    bits: tuple[tuple[str, bool], ...]

    @classmethod
    def of(cls, mapping: Mapping[str, bool]) -> Valuation:
        return cls(tuple((pid, bool(value)) for pid, value in mapping.items()))

    def __getitem__(self, pid: str) -> bool:
        for name, value in self.bits:
            if name == pid:
                return value
        raise KeyError(pid)

    def __contains__(self, pid: object) -> bool:
        return any(name == pid for name, _ in self.bits)

    def __iter__(self) -> Iterator[str]:
        return (name for name, _ in self.bits)

    def as_dict(self) -> dict[str, bool]:
        return dict(self.bits)

    def flipped(self, pids: frozenset[str] | set[str]) -> Valuation:
        return Valuation(tuple((name, (not value) if name in pids else value) for name, value in self.bits))

    def updated(self, values: Mapping[str, bool]) -> Valuation:
        return Valuation(tuple((name, values.get(name, value)) for name, value in self.bits))

    def __str__(self) -> str:
        return " & ".join(name if value else f"!{name}" for name, value in self.bits) or "true"


@dataclass(frozen=True)
class TimedEvent:
    """``action`` holds on the open gap after ``time``; ``at_point`` is set only when the instant differs."""

    time: Fraction
    action: Valuation
    kind: EventKind = EventKind.RELEVANT_POINT
    at_point: Valuation | None = None

    @property
    def letters(self) -> tuple[Valuation, ...]:
        return (self.action,) if self.at_point is None else (self.at_point, self.action)

    @property
    def point_action(self) -> Valuation:
        return self.action if self.at_point is None else self.at_point


@dataclass(frozen=True)
class TimedWord:
    events: tuple[TimedEvent, ...]
    predicates: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        previous: Fraction | None = None
        for event in self.events:
            if previous is not None and event.time <= previous:
                raise EncodingError(f"timed word times must increase strictly (at {format_rational(event.time)})")
            previous = event.time

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[TimedEvent]:
        return iter(self.events)

    @property
    def times(self) -> tuple[Fraction, ...]:
        return tuple(event.time for event in self.events)

    @classmethod
    def of(cls, rows: Sequence[tuple[Fraction | int | str, Mapping[str, bool]]]) -> TimedWord:
        events = tuple(TimedEvent(Fraction(t), Valuation.of(bits)) for t, bits in rows)
        order = tuple(events[0].action) if events else ()
        return cls(events, order)


def _truth(op: Comparison, value: Fraction) -> bool:
    if op is Comparison.GE:
        return value >= 0
    if op is Comparison.GT:
        return value > 0
    return value == 0


class _Trace:
    """mu_p along the signal, linear between samples."""

    def __init__(self, s: Signal, p: Predicate) -> None:
        self.predicate = p
        self.times = s.times
        self.values = [p.expr.evaluate(dict(zip(s.variables, sample.values))) for sample in s.samples]

    def mu(self, t: Fraction) -> Fraction:
        index = bisect_left(self.times, t)
        if index < len(self.times) and self.times[index] == t:
            return self.values[index]
        t0, t1 = self.times[index - 1], self.times[index]
        m0, m1 = self.values[index - 1], self.values[index]
        return m0 + (m1 - m0) * (t - t0) / (t1 - t0)

    def truth(self, t: Fraction) -> bool:
        return _truth(self.predicate.op, self.mu(t))

    def breakpoints(self) -> list[Fraction]:
        points = set(self.times)
        for index in range(len(self.times) - 1):
            m0, m1 = self.values[index], self.values[index + 1]
            if m0 * m1 < 0:
                t0, t1 = self.times[index], self.times[index + 1]
                points.add(t0 + (t1 - t0) * m0 / (m0 - m1))
        return sorted(points)


def predicate_breakpoints(s: Signal, p: Predicate) -> list[Fraction]:
    """Sample times plus zero crossings; truth of p is constant on each open gap."""
    return _Trace(s, p).breakpoints()


def variable_points(s: Signal, p: Predicate) -> tuple[Fraction, ...]:
    return _variable_points(_Trace(s, p))


def _variable_points(trace: _Trace) -> tuple[Fraction, ...]:
    """Interior breakpoints where truth changes, including isolated instants."""
    points = trace.breakpoints()
    result = []
    for k in range(1, len(points) - 1):
        left = trace.truth(midpoint(points[k - 1], points[k]))
        right = trace.truth(midpoint(points[k], points[k + 1]))
        if left != right or trace.truth(points[k]) != left:
            result.append(points[k])
    return tuple(result)


def sign_encode(s: Signal, phi: StlFormula, lead: Fraction | int = 0) -> TimedWord:
    lead = Fraction(lead)
    if lead < 0:
        raise EncodingError("lead time must be nonnegative")
    end = horizon(phi)
    if s.duration < end:
        raise EncodingError(
            f"signal shorter than formula horizon ({format_rational(s.duration)} < {format_rational(end)})",
            user_message="Signal is shorter than the property horizon.",
        )
    preds = predicates(phi)
    traces = [_Trace(s, p) for p in preds]
    vps: set[Fraction] = set()
    for trace in traces:
        vps.update(_variable_points(trace))
    rps = {Fraction(0), *relevant_points(phi)}
    if lead:
        rps.update(max(Fraction(0), r - lead) for r in list(rps))
        rps.update(max(Fraction(0), v - lead) for v in vps)
    times = sorted(vps | rps)

    def valuation(t: Fraction) -> Valuation:
        return Valuation(tuple((p.id, trace.truth(t)) for p, trace in zip(preds, traces)))

    events = []
    for index, t in enumerate(times):
        if t in vps:
            kind = EventKind.BOTH if t in rps else EventKind.VARIABLE_POINT
        else:
            kind = EventKind.RELEVANT_POINT
        at_point = valuation(t)
        action = valuation(midpoint(t, times[index + 1])) if index + 1 < len(times) else at_point
        events.append(TimedEvent(t, action, kind, None if action == at_point else at_point))
    _LOGGER.debug("Encoded %d events (%d variable points)", len(events), len(vps))
    return TimedWord(tuple(events), tuple(p.id for p in preds))


def events_to_csv(word: TimedWord) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["time", "kind", *word.predicates])
    for event in word.events:
        writer.writerow([format_rational(event.time), event.kind.value, *(int(event.action[p]) for p in word.predicates)])
    return buffer.getvalue()


def events_to_json(word: TimedWord) -> str:
    payload = []
    for event in word.events:
        entry = {"time": format_rational(event.time), "kind": event.kind.value, "action": event.action.as_dict()}
        if event.at_point is not None:
            entry["at_point"] = event.at_point.as_dict()
        payload.append(entry)
    return json.dumps({"predicates": list(word.predicates), "events": payload}, indent=2)
