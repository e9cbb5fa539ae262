"""Runtime enforcement loop: encode, step the transducer, modify on Bottom outputs."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
import logging
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field

from stlenforce.core.config import settings
from stlenforce.core.errors import StlEnforceError
from stlenforce.core.numbers import format_rational, midpoint
from stlenforce.services.encoder import TimedEvent, Valuation, sign_encode
from stlenforce.services.modifier import InfeasibleModification, ModificationRequest, ModificationResult, modify
from stlenforce.services.signal import Signal, merge_times
from stlenforce.services.stl import Predicate, StlFormula, predicates
from stlenforce.services.transducer import (
    EventOrderError,
    EventStep,
    OutputSymbol,
    TimedTransducer,
    TransducerError,
    TransducerState,
    compile_formula,
    step_event,
)


_LOGGER = logging.getLogger(__name__)

PointLookup = Callable[[Fraction], Mapping[str, Fraction]]

__all__ = [
    "EnforcedSignal",
    "EnforcementError",
    "EnforcementReport",
    "EnforcementSession",
    "EventOrderError",
    "EventRecord",
    "enforce",
    "enforce_stream",
    "report_to_json",
]


class EnforcementError(StlEnforceError):
    """A Bottom output whose correction has no feasible signal value; ``index`` names the event."""

    def __init__(self, message: str, user_message: str | None = None, index: int | None = None) -> None:
        super().__init__(message, user_message)
        self.index = index


@dataclass(frozen=True)
class EventRecord:
    index: int
    time: Fraction
    action: Valuation
    source: str
    target: str
    clocks: tuple[tuple[str, Fraction], ...]
    output: OutputSymbol
    accepting: bool
    modification: ModificationResult | None = None
    original: Mapping[str, Fraction] | None = None
    at_point: Valuation | None = None
    point_output: OutputSymbol | None = None
    action_output: OutputSymbol | None = None

    @property
    def interval_output(self) -> OutputSymbol:
        """Decision for the open gap after the event."""
        return self.output if self.action_output is None else self.action_output


@dataclass(frozen=True)
class EnforcementReport:
    events: tuple[EventRecord, ...]
    accepted: bool
    modified_count: int


@dataclass(frozen=True)
class EnforcedSignal:
    signal: Signal
    substitutions: dict[Fraction, dict[str, Fraction]] = field(default_factory=dict)

    @property
    def changed(self) -> bool:
        return bool(self.substitutions)


def _modify_at(request: ModificationRequest, eps: Fraction, index: int, t: Fraction) -> ModificationResult:
    try:
        return modify(request, eps)
    except InfeasibleModification as exc:
        where = f"event {index} at t={format_rational(t)}"
        raise EnforcementError(f"{where}: {exc}", f"{exc.user_message} ({where})", index=index) from exc


def _instant_action(event: TimedEvent, taken: EventStep) -> Valuation:
    """At-point valuation with the action letter's fixed predicates set to their after-gap truth."""
    if event.at_point is None:
        return event.action
    return event.at_point.updated({pid: event.action[pid] for pid in taken.action_output.fix})


class EnforcementSession:
    """Per-event transducer step plus the instant modification on Bottom outputs."""

    def __init__(
        self,
        transducer: TimedTransducer,
        preds: Sequence[Predicate],
        point_at: PointLookup,
        eps: Fraction | None = None,
    ) -> None:
        self.transducer = transducer
        self.predicates = tuple(preds)
        self.point_at = point_at
        self.eps = settings.eps if eps is None else Fraction(eps)
        self.state: TransducerState = transducer.initial_state()
        self.index = 0

    @property
    def accepted(self) -> bool:
        return self.state.location in self.transducer.accepting

    def step(self, event: TimedEvent) -> EventRecord:
        index = self.index
        source = self.state.location
        try:
            taken = step_event(self.transducer, self.state, event)
        except TransducerError as exc:
            raise type(exc)(f"event {index}: {exc}", exc.user_message, index=index) from exc
        state, output = taken.state, taken.output
        modification = original = None
        if not output.is_top:
            original = dict(self.point_at(event.time))
            request = ModificationRequest(original, _instant_action(event, taken), output, self.predicates)
            modification = _modify_at(request, self.eps, index, event.time)
            _LOGGER.info(
                "Bottom %s at t=%s (%s -> %s); instant distance %.6g",
                output,
                format_rational(event.time),
                source,
                state.location,
                modification.distance,
            )
        self.state = state
        self.index += 1
        split = event.at_point is not None
        return EventRecord(
            index,
            event.time,
            event.action,
            source,
            state.location,
            state.clocks,
            output,
            state.location in self.transducer.accepting,
            modification,
            original,
            event.at_point,
            taken.point_output,
            taken.action_output if split else None,
        )


def enforce_stream(
    events: Iterable[TimedEvent],
    phi: StlFormula,
    point_at: PointLookup,
    eps: Fraction | None = None,
) -> Iterator[EventRecord]:
    """Online decisions for events arriving one by one."""
    session = EnforcementSession(compile_formula(phi), predicates(phi), point_at, eps)
    for event in events:
        yield session.step(event)


def _violates(point: Mapping[str, Fraction], fixed: Sequence[tuple[Predicate, bool]]) -> bool:
    return any(p.holds(point) != truth for p, truth in fixed)


def enforce(s: Signal, phi: StlFormula, eps: Fraction | None = None) -> tuple[EnforcedSignal, EnforcementReport]:
    eps = settings.eps if eps is None else Fraction(eps)
    word = sign_encode(s, phi)
    preds = predicates(phi)
    by_id = {p.id: p for p in preds}
    session = EnforcementSession(compile_formula(phi), preds, s.point_at, eps)
    records = [session.step(event) for event in word]

    event_times = word.times
    grid = list(merge_times(s.times, event_times))
    values: dict[Fraction, dict[str, Fraction]] = {t: s.point_at(t) for t in grid}
    modified_by: dict[Fraction, int] = {}
    closures: list[tuple[int, Fraction]] = []

    def substitute(t: Fraction, point: Mapping[str, Fraction], index: int) -> None:
        if dict(point) != values[t]:
            values[t] = dict(point)
            modified_by[t] = index

    def fixed_literals(record: EventRecord) -> list[tuple[Predicate, bool]]:
        return [(by_id[pid], not record.action[pid]) for pid in record.interval_output.fix]

    def project(t: Fraction, record: EventRecord) -> None:
        request = ModificationRequest(values[t], record.action, record.interval_output, preds)
        substitute(t, _modify_at(request, eps, record.index, t).point, record.index)

    def hold_after(record: EventRecord) -> None:
        """Extend the corrected gap valuation to a new sample just after the event."""
        t = record.time
        position = bisect_right(grid, t)
        if position == len(grid):
            return
        following = grid[position]
        m = midpoint(t, following)
        point = {name: (values[t][name] + values[following][name]) / 2 for name in s.variables}
        corrected = record.action.flipped(record.interval_output.fix)
        if all(p.holds(point) == corrected[p.id] for p in preds):
            return
        request = ModificationRequest(point, record.action, record.interval_output, preds)
        grid.insert(position, m)
        values[m] = point
        substitute(m, _modify_at(request, eps, record.index, m).point, record.index)

    for record in records:
        if record.output.is_top:
            continue
        i = record.index
        substitute(record.time, record.modification.point, i)
        if record.interval_output.is_top or i + 1 == len(event_times):
            continue
        if record.accepting:
            if record.at_point is not None:
                hold_after(record)
            continue
        upper = event_times[i + 1]
        fixed = fixed_literals(record)
        for t in grid:
            if record.time < t < upper and _violates(values[t], fixed):
                project(t, record)
        closures.append((i, upper))

    for i, t in closures:
        record = records[i]
        if modified_by.get(t) != i + 1 and _violates(values[t], fixed_literals(record)):
            project(t, record)

    report = EnforcementReport(tuple(records), session.accepted, len(set(modified_by.values())))
    if not modified_by:
        _LOGGER.info("Signal satisfied the property; output equals input")
        return EnforcedSignal(s), report
    enforced = s.with_points({t: tuple(values[t][name] for name in s.variables) for t in grid})
    substitutions = {t: values[t] for t in sorted(modified_by)}
    _LOGGER.info("Enforced signal: %d samples changed across %d events", len(substitutions), report.modified_count)
    return EnforcedSignal(enforced, substitutions), report


# ---------------------------------------------------------------------------
# Report JSON


class _ModificationDoc(BaseModel):
    vars: list[str]
    old: dict[str, str]
    new: dict[str, str]
    distance: float


class _EventDoc(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    t: str
    action: dict[str, bool]
    source: str = Field(alias="from")
    to: str
    clock: dict[str, str]
    output: str
    modification: Optional[_ModificationDoc] = None


class ReportDocument(BaseModel):
    accepted: bool
    events: list[_EventDoc]
    modified_count: int


def _event_doc(record: EventRecord) -> _EventDoc:
    modification = None
    if record.modification is not None:
        changed = sorted(record.modification.deltas)
        modification = _ModificationDoc(
            vars=changed,
            old={name: format_rational(record.original[name]) for name in changed},
            new={name: format_rational(record.modification.point[name]) for name in changed},
            distance=record.modification.distance,
        )
    return _EventDoc(
        t=format_rational(record.time),
        action=record.action.as_dict(),
        source=record.source,
        to=record.target,
        clock={name: format_rational(value) for name, value in record.clocks},
        output=str(record.output),
        modification=modification,
    )


def report_to_json(report: EnforcementReport) -> str:
    doc = ReportDocument(
        accepted=report.accepted,
        events=[_event_doc(record) for record in report.events],
        modified_count=report.modified_count,
    )
    return doc.model_dump_json(indent=2, by_alias=True, exclude_none=True)
