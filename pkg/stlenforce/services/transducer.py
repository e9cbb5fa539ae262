"""Timed transducers: data model, runs, Until/Release constructions and products."""

from __future__ import annotations

from collections import deque
import csv
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property
import io
from itertools import combinations, count, product as cartesian
import json
import logging
from typing import Iterable, Literal, Mapping, Sequence, Union

from pydantic import BaseModel, ValidationError, model_validator

from stlenforce.core.errors import StlEnforceError
from stlenforce.core.numbers import format_rational, parse_rational
from stlenforce.services.encoder import TimedEvent, TimedWord, Valuation
from stlenforce.services.stl import (
    And,
    Interval,
    Lit,
    Or,
    Predicate,
    Release,
    StlFormula,
    TrueFormula,
    Until,
    temporal_terms,
    walk,
)


_LOGGER = logging.getLogger(__name__)


class TransducerError(StlEnforceError):
    def __init__(self, message: str, user_message: str | None = None, index: int | None = None) -> None:
        super().__init__(message, user_message)
        self.index = index


class NoEnabledTransition(TransducerError):
    pass


class AmbiguousTransition(TransducerError):
    pass


class EventOrderError(TransducerError):
    pass


class TransducerSchemaError(TransducerError):
    pass


class UnsupportedFormulaError(TransducerError):
    pass


# ---------------------------------------------------------------------------
# Guards


class ClockOp(str, Enum):
    LT = "<"
    LE = "<="
    EQ = "=="
    GE = ">="
    GT = ">"


@dataclass(frozen=True)
class ClockAtom:
    clock: str
    op: ClockOp
    bound: Fraction

    def holds(self, value: Fraction) -> bool:
        if self.op is ClockOp.LT:
            return value < self.bound
        if self.op is ClockOp.LE:
            return value <= self.bound
        if self.op is ClockOp.EQ:
            return value == self.bound
        if self.op is ClockOp.GE:
            return value >= self.bound
        return value > self.bound

    def __str__(self) -> str:
        return f"{self.clock} {self.op.value} {format_rational(self.bound)}"


@dataclass(frozen=True)
class _Span:
    """Set of values allowed for one clock; hi=None means unbounded."""

    lo: Fraction = Fraction(0)
    lo_open: bool = False
    hi: Fraction | None = None
    hi_open: bool = False

    def tighten(self, atom: ClockAtom) -> _Span:
        span = self
        if atom.op in (ClockOp.GE, ClockOp.GT, ClockOp.EQ):
            is_open = atom.op is ClockOp.GT
            if atom.bound > span.lo or (atom.bound == span.lo and is_open):
                span = _Span(atom.bound, is_open, span.hi, span.hi_open)
        if atom.op in (ClockOp.LE, ClockOp.LT, ClockOp.EQ):
            is_open = atom.op is ClockOp.LT
            if span.hi is None or atom.bound < span.hi or (atom.bound == span.hi and is_open):
                span = _Span(span.lo, span.lo_open, atom.bound, is_open)
        return span

    @property
    def empty(self) -> bool:
        if self.hi is None:
            return False
        return self.lo > self.hi or (self.lo == self.hi and (self.lo_open or self.hi_open))

    def within(self, other: _Span) -> bool:
        """self is a subset of other."""
        if self.empty:
            return True
        if self.lo < other.lo or (self.lo == other.lo and other.lo_open and not self.lo_open):
            return False
        if other.hi is None:
            return True
        if self.hi is None:
            return False
        return self.hi < other.hi or (self.hi == other.hi and (self.hi_open or not other.hi_open))


@dataclass(frozen=True)
class Guard:
    atoms: tuple[ClockAtom, ...] = ()

    @classmethod
    def of(cls, *atoms: tuple[str, str, Fraction | int | str]) -> Guard:
        return cls(tuple(ClockAtom(clock, ClockOp(op), parse_rational(bound)) for clock, op, bound in atoms))

    @property
    def clocks(self) -> frozenset[str]:
        return frozenset(atom.clock for atom in self.atoms)

    def holds(self, clocks: Mapping[str, Fraction]) -> bool:
        return all(atom.holds(clocks[atom.clock]) for atom in self.atoms)

    def conjoin(self, other: Guard) -> Guard:
        return Guard(self.atoms + other.atoms)

    def span(self, clock: str) -> _Span:
        span = _Span()
        for atom in self.atoms:
            if atom.clock == clock:
                span = span.tighten(atom)
        return span

    def is_satisfiable(self) -> bool:
        return not any(self.span(clock).empty for clock in self.clocks)

    def implies(self, other: Guard) -> bool:
        if not self.is_satisfiable():
            return True
        return all(self.span(clock).within(other.span(clock)) for clock in other.clocks)

    def renamed(self, mapping: Mapping[str, str]) -> Guard:
        return Guard(tuple(ClockAtom(mapping.get(a.clock, a.clock), a.op, a.bound) for a in self.atoms))

    def __str__(self) -> str:
        return " & ".join(str(atom) for atom in self.atoms) or "true"


TRUE_GUARD = Guard()


# ---------------------------------------------------------------------------
# Labels and outputs


@dataclass(frozen=True)
class Label:
    """Required predicate literals; the empty label is Sigma."""

    literals: tuple[tuple[str, bool], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "literals", tuple(sorted(self.literals)))
        ids = [pid for pid, _ in self.literals]
        if len(ids) != len(set(ids)):
            raise TransducerError(f"label mentions a predicate twice: {ids}")

    @classmethod
    def of(cls, mapping: Mapping[str, bool]) -> Label:
        return cls(tuple(mapping.items()))

    def as_dict(self) -> dict[str, bool]:
        return dict(self.literals)

    def matches(self, action: Valuation) -> bool:
        try:
            return all(action[pid] == value for pid, value in self.literals)
        except KeyError as exc:
            raise TransducerError(f"action has no truth value for predicate {exc.args[0]!r}") from None

    def merge(self, other: Label) -> Label | None:
        merged = self.as_dict()
        for pid, value in other.literals:
            if merged.get(pid, value) != value:
                return None
            merged[pid] = value
        return Label.of(merged)

    def flipped(self, pids: Iterable[str]) -> Label:
        flip = set(pids)
        return Label(tuple((pid, (not v) if pid in flip else v) for pid, v in self.literals))

    def entails(self, other: Label) -> bool:
        mine = self.as_dict()
        return all(mine.get(pid) == value for pid, value in other.literals)

    def __str__(self) -> str:
        return " & ".join(pid if v else f"!{pid}" for pid, v in self.literals) or "Sigma"


SIGMA = Label()


@dataclass(frozen=True)
class OutputSymbol:
    """Top when ``fix`` is empty, otherwise Bottom naming the predicates to flip."""

    fix: frozenset[str] = frozenset()

    @classmethod
    def bottom(cls, *pids: str) -> OutputSymbol:
        if not pids:
            raise TransducerError("Bottom output needs a nonempty fix-set")
        return cls(frozenset(pids))

    @property
    def is_top(self) -> bool:
        return not self.fix

    def __str__(self) -> str:
        return "top" if self.is_top else f"bot({','.join(sorted(self.fix))})"


TOP = OutputSymbol()


@dataclass(frozen=True)
class Transition:
    source: str
    label: Label
    guard: Guard
    resets: frozenset[str]
    target: str
    output: OutputSymbol

    def __str__(self) -> str:
        resets = f", {','.join(sorted(self.resets))}:=0" if self.resets else ""
        return f"{self.source} -[{self.label}, {self.guard}{resets} | {self.output}]-> {self.target}"


@dataclass(frozen=True)
class TransducerState:
    location: str
    clocks: tuple[tuple[str, Fraction], ...] = ()
    last_time: Fraction | None = None

    def clock_values(self) -> dict[str, Fraction]:
        return dict(self.clocks)


@dataclass(frozen=True)
class TimedTransducer:
    locations: tuple[str, ...]
    initial: str
    clocks: tuple[str, ...]
    predicates: tuple[str, ...]
    transitions: tuple[Transition, ...]
    accepting: frozenset[str]

    def __post_init__(self) -> None:
        known = set(self.locations)
        if self.initial not in known:
            raise TransducerError(f"initial location {self.initial!r} is not a location")
        if not self.accepting <= known:
            raise TransducerError(f"accepting locations {sorted(self.accepting - known)} are unknown")
        clocks, preds = set(self.clocks), set(self.predicates)
        for t in self.transitions:
            if t.source not in known or t.target not in known:
                raise TransducerError(f"transition references unknown location: {t}")
            if not (t.guard.clocks | t.resets) <= clocks:
                raise TransducerError(f"transition references unknown clock: {t}")
            if not ({pid for pid, _ in t.label.literals} | t.output.fix) <= preds:
                raise TransducerError(f"transition references unknown predicate: {t}")

    @cached_property
    def _outgoing(self) -> dict[str, tuple[Transition, ...]]:
        table: dict[str, list[Transition]] = {loc: [] for loc in self.locations}
        for t in self.transitions:
            table[t.source].append(t)
        return {loc: tuple(ts) for loc, ts in table.items()}

    def outgoing(self, location: str) -> tuple[Transition, ...]:
        return self._outgoing[location]

    def initial_state(self) -> TransducerState:
        return TransducerState(self.initial, tuple((c, Fraction(0)) for c in self.clocks))


# ---------------------------------------------------------------------------
# Runs


@dataclass(frozen=True)
class EventStep:
    """Transitions fired by one event; an event with an at-point valuation fires two."""

    state: TransducerState
    transitions: tuple[Transition, ...]

    @property
    def point_output(self) -> OutputSymbol | None:
        return self.transitions[0].output if len(self.transitions) > 1 else None

    @property
    def action_output(self) -> OutputSymbol:
        return self.transitions[-1].output

    @property
    def output(self) -> OutputSymbol:
        return OutputSymbol(frozenset().union(*(t.output.fix for t in self.transitions)))


@dataclass(frozen=True)
class RunStep:
    index: int
    event: TimedEvent
    before: TransducerState
    after: TransducerState
    transitions: tuple[Transition, ...]

    @property
    def output(self) -> OutputSymbol:
        return OutputSymbol(frozenset().union(*(t.output.fix for t in self.transitions)))


@dataclass(frozen=True)
class RunResult:
    steps: tuple[RunStep, ...]
    final_state: TransducerState
    accepted: bool

    @property
    def outputs(self) -> tuple[tuple[Fraction, OutputSymbol], ...]:
        return tuple((step.event.time, step.output) for step in self.steps)

    @property
    def all_top(self) -> bool:
        return all(step.output.is_top for step in self.steps)

    @property
    def satisfied(self) -> bool:
        """Accepted with an all-Top output word."""
        return self.accepted and self.all_top


def _advance(st: TransducerState, ev: TimedEvent) -> dict[str, Fraction]:
    if st.last_time is not None and ev.time <= st.last_time:
        raise EventOrderError(
            f"event at {format_rational(ev.time)} does not follow {format_rational(st.last_time)}",
            user_message="Events must arrive in strictly increasing time order.",
        )
    delta = ev.time - (st.last_time if st.last_time is not None else Fraction(0))
    return {name: value + delta for name, value in st.clocks}


def _select(
    A: TimedTransducer, location: str, clocks: Mapping[str, Fraction], action: Valuation, time: Fraction
) -> Transition:
    enabled = [t for t in A.outgoing(location) if t.label.matches(action) and t.guard.holds(clocks)]
    if not enabled:
        raise NoEnabledTransition(
            f"no transition from {location} for {action} at {format_rational(time)} "
            f"with clocks {_format_clocks(clocks)}"
        )
    if len(enabled) > 1:
        raise AmbiguousTransition(
            f"{len(enabled)} transitions enabled from {location} for {action} at {format_rational(time)}"
        )
    return enabled[0]


def step_event(A: TimedTransducer, st: TransducerState, ev: TimedEvent) -> EventStep:
    """Fire the at-point letter (if any) and then the action letter at the same clock values."""
    clocks = _advance(st, ev)
    location = st.location
    taken = []
    for letter in ev.letters:
        transition = _select(A, location, clocks, letter, ev.time)
        for name in transition.resets:
            clocks[name] = Fraction(0)
        location = transition.target
        taken.append(transition)
    return EventStep(TransducerState(location, tuple((c, clocks[c]) for c in A.clocks), ev.time), tuple(taken))


def make_transition(
    A: TimedTransducer, st: TransducerState, ev: TimedEvent
) -> tuple[TransducerState, OutputSymbol]:
    taken = step_event(A, st, ev)
    return taken.state, taken.output


def run(A: TimedTransducer, w: TimedWord | Sequence[TimedEvent]) -> RunResult:
    events = tuple(w)
    if not events:
        raise TransducerError("cannot run on an empty word")
    state = A.initial_state()
    steps = []
    for index, event in enumerate(events):
        try:
            taken = step_event(A, state, event)
        except TransducerError as exc:
            raise type(exc)(f"event {index}: {exc}", exc.user_message, index=index) from exc
        steps.append(RunStep(index, event, state, taken.state, taken.transitions))
        state = taken.state
    return RunResult(tuple(steps), state, state.location in A.accepting)


def _format_clocks(clocks: Mapping[str, Fraction]) -> str:
    return ", ".join(f"{name}={format_rational(value)}" for name, value in clocks.items()) or "-"


def format_trace(result: RunResult) -> str:
    """One row per event: from-state, time, action, to-state, output."""

    def state_text(st: TransducerState) -> str:
        values = ",".join(format_rational(v) for _, v in st.clocks)
        return f"({st.location},{values})" if values else f"({st.location})"

    rows = [
        f"{state_text(step.before)} | {format_rational(step.event.time)} | {step.event.action} | "
        f"{state_text(step.after)} | {step.output}"
        for step in result.steps
    ]
    return "\n".join(rows)


# ---------------------------------------------------------------------------
# Until / Release constructions

OperandSource = Union[Predicate, StlFormula]


def _operand(node: OperandSource) -> StlFormula:
    if isinstance(node, Predicate):
        return Lit(node)
    if isinstance(node, (Lit, TrueFormula)):
        return node
    if isinstance(node, (And, Or)):
        _operand(node.left)
        _operand(node.right)
        return node
    raise UnsupportedFormulaError(
        "temporal operands must be predicate-level formulas",
        user_message="Until/Release operands cannot contain temporal operators.",
    )


def _holds(operand: StlFormula, assignment: Mapping[str, bool]) -> bool:
    if isinstance(operand, TrueFormula):
        return True
    if isinstance(operand, Lit):
        return assignment[operand.predicate.id] == operand.polarity
    if isinstance(operand, And):
        return _holds(operand.left, assignment) and _holds(operand.right, assignment)
    return _holds(operand.left, assignment) or _holds(operand.right, assignment)


def _predicate_ids(operands: Iterable[StlFormula]) -> tuple[str, ...]:
    ids: dict[str, None] = {}
    for operand in operands:
        for node in walk(operand):
            if isinstance(node, Lit):
                ids.setdefault(node.predicate.id)
    return tuple(ids)


class _Builder:
    def __init__(self, left: StlFormula, right: StlFormula, clock: str) -> None:
        self.operands = {"left": left, "right": right}
        self.clock = clock
        self.transitions: list[Transition] = []

    def edge(
        self,
        source: str,
        left: bool | None,
        right: bool | None,
        guard: Guard,
        target: str,
        fix: Sequence[str] = (),
        reset: bool = False,
    ) -> None:
        """One transition per operand-predicate assignment giving the wanted operand truths.

        ``fix`` names the operands the Bottom output must make true; combinations
        no assignment produces (such as ``true`` failing) add nothing.
        """
        wanted = {side: value for side, value in (("left", left), ("right", right)) if value is not None}
        names = _predicate_ids(self.operands[side] for side in wanted)
        corrected = {side: value or side in fix for side, value in wanted.items()}
        resets = frozenset({self.clock}) if reset else frozenset()
        for bits in cartesian((True, False), repeat=len(names)):
            assignment = dict(zip(names, bits))
            if any(_holds(self.operands[side], assignment) != value for side, value in wanted.items()):
                continue
            repair = self._repair(assignment, corrected, source, target) if fix else frozenset()
            self.transitions.append(Transition(source, Label.of(assignment), guard, resets, target, OutputSymbol(repair)))

    def _repair(
        self, assignment: Mapping[str, bool], corrected: Mapping[str, bool], source: str, target: str
    ) -> frozenset[str]:
        """Smallest predicate flip giving the corrected operand truths.

        When no flip keeps the other operand unchanged, accept one that only turns
        operands true; Until and Release are monotone in both operands.
        """
        candidates = [
            frozenset(flip)
            for size in range(1, len(assignment) + 1)
            for flip in combinations(sorted(assignment), size)
        ]
        for exact in (True, False):
            for flip in candidates:
                trial = {pid: (not value) if pid in flip else value for pid, value in assignment.items()}
                truths = {side: _holds(self.operands[side], trial) for side in corrected}
                if exact and truths == corrected:
                    return flip
                if not exact and all(truths[side] for side, value in corrected.items() if value):
                    return flip
        raise UnsupportedFormulaError(
            f"no predicate flip makes the operands hold together on {source} -> {target} for {Label.of(assignment)}",
            user_message="The Until/Release operands can never hold together, so violations cannot be corrected.",
        )

    def lt(self, bound: Fraction) -> Guard:
        return Guard((ClockAtom(self.clock, ClockOp.LT, bound),))

    def eq(self, bound: Fraction) -> Guard:
        return Guard((ClockAtom(self.clock, ClockOp.EQ, bound),))

    def window(self, lo: Fraction, hi: Fraction, hi_open: bool) -> Guard:
        return Guard(
            (
                ClockAtom(self.clock, ClockOp.GE, lo),
                ClockAtom(self.clock, ClockOp.LT if hi_open else ClockOp.LE, hi),
            )
        )

    def finish(self, locations: Sequence[str]) -> TimedTransducer:
        self.transitions.append(Transition("l2", SIGMA, TRUE_GUARD, frozenset(), "l2", TOP))
        preds = _predicate_ids(self.operands.values())
        return TimedTransducer(
            tuple(locations), "l0", (self.clock,), preds, tuple(self.transitions), frozenset({"l2"})
        )


def build_until(
    p1: OperandSource, p2: OperandSource, interval: Interval, clock: str = "c"
) -> TimedTransducer:
    b = _Builder(_operand(p1), _operand(p2), clock)
    t1, t2 = interval.lo, interval.hi
    punctual = interval.punctual

    def decide(source: str, guard: Guard, reset: bool) -> None:
        pending = "l2" if punctual else "l3"
        b.edge(source, True, True, guard, "l2", reset=reset)
        b.edge(source, False, True, guard, "l2", fix=("left",), reset=reset)
        b.edge(source, True, False, guard, pending, fix=("right",) if punctual else (), reset=reset)
        b.edge(source, False, False, guard, pending, fix=("left", "right") if punctual else ("left",), reset=reset)

    locations = ["l0"]
    if t1 == 0:
        decide("l0", TRUE_GUARD, reset=True)
    else:
        locations.append("l1")
        b.edge("l0", True, None, TRUE_GUARD, "l1", reset=True)
        b.edge("l0", False, None, TRUE_GUARD, "l1", fix=("left",), reset=True)
        b.edge("l1", True, None, b.lt(t1), "l1")
        b.edge("l1", False, None, b.lt(t1), "l1", fix=("left",))
        decide("l1", b.eq(t1), reset=False)
    locations.append("l2")
    if not punctual:
        locations.append("l3")
        b.edge("l3", True, False, b.window(t1, t2, hi_open=True), "l3")
        b.edge("l3", False, False, b.window(t1, t2, hi_open=True), "l3", fix=("left",))
        b.edge("l3", True, True, b.window(t1, t2, hi_open=False), "l2")
        b.edge("l3", False, True, b.window(t1, t2, hi_open=False), "l2", fix=("left",))
        b.edge("l3", True, False, b.eq(t2), "l2", fix=("right",))
        b.edge("l3", False, False, b.eq(t2), "l2", fix=("left", "right"))
    return b.finish(locations)


def build_release(
    p1: OperandSource, p2: OperandSource, interval: Interval, clock: str = "c"
) -> TimedTransducer:
    """Any instant where p1 holds at or before the window's end discharges the obligation."""
    b = _Builder(_operand(p1), _operand(p2), clock)
    t1, t2 = interval.lo, interval.hi
    punctual = interval.punctual
    pending = "l2" if punctual else "l3"

    locations = ["l0"]
    if t1 == 0:
        b.edge("l0", True, None, TRUE_GUARD, "l2", reset=True)
        b.edge("l0", False, True, TRUE_GUARD, pending, reset=True)
        b.edge("l0", False, False, TRUE_GUARD, pending, fix=("right",), reset=True)
    else:
        locations.append("l1")
        b.edge("l0", False, None, TRUE_GUARD, "l1", reset=True)
        b.edge("l0", True, None, TRUE_GUARD, "l2", reset=True)
        b.edge("l1", False, None, b.lt(t1), "l1")
        b.edge("l1", True, None, b.lt(t1), "l2")
        b.edge("l1", False, False, b.eq(t1), pending, fix=("right",))
        b.edge("l1", False, True, b.eq(t1), pending)
        b.edge("l1", True, None, b.eq(t1), "l2")
    locations.append("l2")
    if not punctual:
        locations.append("l3")
        b.edge("l3", False, False, b.window(t1, t2, hi_open=True), "l3", fix=("right",))
        b.edge("l3", False, True, b.window(t1, t2, hi_open=True), "l3")
        b.edge("l3", True, None, b.window(t1, t2, hi_open=False), "l2")
        b.edge("l3", False, False, b.eq(t2), "l2", fix=("right",))
        b.edge("l3", False, True, b.eq(t2), "l2")
    return b.finish(locations)


def build_trivial() -> TimedTransducer:
    """Single accepting location that outputs Top on everything."""
    loop = Transition("t0", SIGMA, TRUE_GUARD, frozenset(), "t0", TOP)
    return TimedTransducer(("t0",), "t0", (), (), (loop,), frozenset({"t0"}))


# ---------------------------------------------------------------------------
# Products


class ProductOp(str, Enum):
    AND = "and"
    OR = "or"


def _rename_clocks(a: TimedTransducer, b: TimedTransducer) -> TimedTransducer:
    taken = set(a.clocks)
    mapping: dict[str, str] = {}
    for clock in b.clocks:
        name = clock
        while name in taken:
            name = f"{name}'"
        taken.add(name)
        if name != clock:
            mapping[clock] = name
    if not mapping:
        return b
    transitions = tuple(
        Transition(
            t.source,
            t.label,
            t.guard.renamed(mapping),
            frozenset(mapping.get(c, c) for c in t.resets),
            t.target,
            t.output,
        )
        for t in b.transitions
    )
    return TimedTransducer(
        b.locations, b.initial, tuple(mapping.get(c, c) for c in b.clocks), b.predicates, transitions, b.accepting
    )


_BOTH, _LEFT, _RIGHT = "both", "left", "right"


@dataclass(frozen=True)
class _Pair:
    mode: str
    left: str | None
    right: str | None

    @property
    def name(self) -> str:
        return f"({self.left or '*'},{self.right or '*'})"


def product(a: TimedTransducer, b: TimedTransducer, op: ProductOp | str, prune: bool = True) -> TimedTransducer:
    op = ProductOp(op)
    b = _rename_clocks(a, b)
    preds = a.predicates + tuple(p for p in b.predicates if p not in a.predicates)
    clocks = a.clocks + b.clocks

    def successors(pair: _Pair) -> list[tuple[Transition, _Pair]]:
        result = []
        if pair.mode == _LEFT:
            for t in a.outgoing(pair.left):
                result.append((t, _Pair(_LEFT, t.target, None)))
            return result
        if pair.mode == _RIGHT:
            for t in b.outgoing(pair.right):
                result.append((t, _Pair(_RIGHT, None, t.target)))
            return result
        for t1, t2 in cartesian(a.outgoing(pair.left), b.outgoing(pair.right)):
            label = t1.label.merge(t2.label)
            guard = t1.guard.conjoin(t2.guard)
            if label is None or not guard.is_satisfiable():
                continue
            out1, out2 = t1.output, t2.output
            target = _Pair(_BOTH, t1.target, t2.target)
            if op is ProductOp.AND or (out1.is_top == out2.is_top):
                output = TOP if out1.is_top and out2.is_top else OutputSymbol(out1.fix | out2.fix)
            elif out1.is_top:
                output, target = TOP, _Pair(_LEFT, t1.target, None)
            else:
                output, target = TOP, _Pair(_RIGHT, None, t2.target)
            merged = Transition("", label, guard, t1.resets | t2.resets, "", output)
            result.append((merged, target))
        return result

    start = _Pair(_BOTH, a.initial, b.initial)
    if prune:
        order = [start]
        seen = {start}
        queue = deque([start])
        while queue:
            pair = queue.popleft()
            for _, target in successors(pair):
                if target not in seen:
                    seen.add(target)
                    order.append(target)
                    queue.append(target)
    else:
        order = [_Pair(_BOTH, la, lb) for la, lb in cartesian(a.locations, b.locations)]
        if op is ProductOp.OR:
            order += [_Pair(_LEFT, la, None) for la in a.locations]
            order += [_Pair(_RIGHT, None, lb) for lb in b.locations]

    transitions = []
    for pair in order:
        for t, target in successors(pair):
            transitions.append(Transition(pair.name, t.label, t.guard, t.resets, target.name, t.output))

    def accepting(pair: _Pair) -> bool:
        in_left = pair.left is not None and pair.left in a.accepting
        in_right = pair.right is not None and pair.right in b.accepting
        if op is ProductOp.AND:
            return in_left and in_right
        return in_left or in_right

    result = TimedTransducer(
        tuple(pair.name for pair in order),
        start.name,
        clocks,
        preds,
        tuple(transitions),
        frozenset(pair.name for pair in order if accepting(pair)),
    )
    _LOGGER.debug("%s-product: %d locations, %d transitions", op.value, len(result.locations), len(transitions))
    return result


def compile_formula(phi: StlFormula, prune: bool = True) -> TimedTransducer:
    """Fold Until/Release leaves under And/Or products following the formula tree."""
    if not temporal_terms(phi):
        raise UnsupportedFormulaError(
            "formula has no temporal term", user_message="The property needs at least one Until/Release term."
        )
    clocks = count()

    def build(node: StlFormula) -> TimedTransducer:
        if isinstance(node, Until):
            return build_until(node.left, node.right, node.interval, clock=f"c{next(clocks)}")
        if isinstance(node, Release):
            return build_release(node.left, node.right, node.interval, clock=f"c{next(clocks)}")
        if isinstance(node, And):
            return product(build(node.left), build(node.right), ProductOp.AND, prune)
        if isinstance(node, Or):
            return product(build(node.left), build(node.right), ProductOp.OR, prune)
        if isinstance(node, TrueFormula):
            return build_trivial()
        raise UnsupportedFormulaError("a bare predicate cannot appear outside a temporal operator")

    return build(phi)


# ---------------------------------------------------------------------------
# Structural checks


def check_determinism(A: TimedTransducer) -> list[str]:
    problems = []
    for location in A.locations:
        outgoing = A.outgoing(location)
        for bits in cartesian((False, True), repeat=len(A.predicates)):
            action = Valuation(tuple(zip(A.predicates, bits)))
            enabled = [t for t in outgoing if t.label.matches(action)]
            for i, first in enumerate(enabled):
                for second in enabled[i + 1 :]:
                    if first.guard.conjoin(second.guard).is_satisfiable():
                        problems.append(f"{location} on {action}: '{first}' overlaps '{second}'")
    return problems


def check_self_correction(A: TimedTransducer) -> list[str]:
    problems = []
    for t in A.transitions:
        if t.output.is_top:
            continue
        corrected = t.label.flipped(t.output.fix)
        twin = [
            u
            for u in A.outgoing(t.source)
            if u.output.is_top and u.target == t.target and corrected.entails(u.label) and t.guard.implies(u.guard)
        ]
        if not twin:
            problems.append(f"no Top twin for '{t}'")
    return problems


# ---------------------------------------------------------------------------
# JSON


class _GuardAtomDoc(BaseModel):
    clock: str
    op: Literal["<", "<=", "==", ">=", ">"]
    bound: str


class _OutputDoc(BaseModel):
    top: bool
    fix: list[str] = []

    @model_validator(mode="after")
    def _consistent(self) -> "_OutputDoc":
        if self.top == bool(self.fix):
            raise ValueError("top outputs have no fix-set and bottom outputs need one")
        return self


class _TransitionDoc(BaseModel):
    src: str
    label: dict[str, Union[bool, Literal["*"]]]
    guard: list[_GuardAtomDoc] = []
    resets: list[str] = []
    dst: str
    output: _OutputDoc


class TransducerDocument(BaseModel):
    locations: list[str]
    initial: str
    accepting: list[str]
    clocks: list[str]
    predicates: list[str]
    transitions: list[_TransitionDoc]


def to_document(A: TimedTransducer) -> TransducerDocument:
    transitions = []
    for t in A.transitions:
        required = t.label.as_dict()
        transitions.append(
            _TransitionDoc(
                src=t.source,
                label={pid: required.get(pid, "*") for pid in A.predicates},
                guard=[_GuardAtomDoc(clock=a.clock, op=a.op.value, bound=format_rational(a.bound)) for a in t.guard.atoms],
                resets=sorted(t.resets),
                dst=t.target,
                output=_OutputDoc(top=t.output.is_top, fix=sorted(t.output.fix)),
            )
        )
    return TransducerDocument(
        locations=list(A.locations),
        initial=A.initial,
        accepting=[loc for loc in A.locations if loc in A.accepting],
        clocks=list(A.clocks),
        predicates=list(A.predicates),
        transitions=transitions,
    )


def to_json(A: TimedTransducer) -> str:
    return json.dumps(to_document(A).model_dump(), indent=2)


def transitions_to_csv(A: TimedTransducer) -> str:
    """Flat transition table; ``*`` marks predicates a label leaves free."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["src", *A.predicates, "guard", "resets", "dst", "output", "accepting"])
    for t in A.transitions:
        required = t.label.as_dict()
        cells = [("*" if pid not in required else int(required[pid])) for pid in A.predicates]
        writer.writerow(
            [t.source, *cells, str(t.guard), ",".join(sorted(t.resets)), t.target, str(t.output), int(t.target in A.accepting)]
        )
    return buffer.getvalue()


def from_json(text: str) -> TimedTransducer:
    try:
        doc = TransducerDocument.model_validate_json(text)
    except ValidationError as exc:
        raise TransducerSchemaError(
            f"transducer JSON does not match the schema: {exc}", user_message="Transducer file is invalid."
        ) from exc
    try:
        transitions = tuple(
            Transition(
                t.src,
                Label(tuple((pid, v) for pid, v in t.label.items() if v != "*")),
                Guard(tuple(ClockAtom(a.clock, ClockOp(a.op), parse_rational(a.bound)) for a in t.guard)),
                frozenset(t.resets),
                t.dst,
                OutputSymbol(frozenset(t.output.fix)),
            )
            for t in doc.transitions
        )
        return TimedTransducer(
            tuple(doc.locations),
            doc.initial,
            tuple(doc.clocks),
            tuple(doc.predicates),
            transitions,
            frozenset(doc.accepting),
        )
    except (ValueError, TransducerError) as exc:
        raise TransducerSchemaError(f"transducer JSON is inconsistent: {exc}", user_message="Transducer file is invalid.") from exc
