"""Offline satisfaction check for non-nested STL over piecewise-linear signals."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import json
import logging
from typing import Iterator

from stlenforce.core.errors import StlEnforceError
from stlenforce.core.numbers import format_rational, midpoint
from stlenforce.services.encoder import predicate_breakpoints
from stlenforce.services.signal import Signal
from stlenforce.services.stl import (
    And,
    Interval,
    Lit,
    Or,
    Release,
    StlFormula,
    TrueFormula,
    Until,
    eval_lit,
    horizon,
    predicates,
)


_LOGGER = logging.getLogger(__name__)


class MonitorError(StlEnforceError):
    pass


@dataclass(frozen=True)
class Verdict:
    satisfied: bool
    witness: Fraction | None = None

    def __bool__(self) -> bool:
        return self.satisfied


@dataclass(frozen=True)
class _Element:
    """A partition point, or the open cell (lo, hi) between two points."""

    lo: Fraction
    hi: Fraction

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    @property
    def sample_time(self) -> Fraction:
        return self.lo if self.is_point else midpoint(self.lo, self.hi)


def _partition(s: Signal, operands: tuple[StlFormula, ...], interval: Interval) -> Iterator[_Element]:
    points = {Fraction(0), interval.lo, interval.hi}
    for operand in operands:
        for p in predicates(operand):
            points.update(predicate_breakpoints(s, p))
    ordered = sorted(t for t in points if t <= interval.hi)
    for index, t in enumerate(ordered):
        yield _Element(t, t)
        if index + 1 < len(ordered):
            yield _Element(t, ordered[index + 1])


def _until(s: Signal, phi: Until) -> Verdict:
    lo = phi.interval.lo
    for element in _partition(s, (phi.left, phi.right), phi.interval):
        point = s.point_at(element.sample_time)
        if element.lo >= lo and eval_lit(phi.right, point) and eval_lit(phi.left, point):
            return Verdict(True, element.sample_time)
        if not eval_lit(phi.left, point):
            return Verdict(False)
    return Verdict(False)


def _release(s: Signal, phi: Release) -> Verdict:
    lo = phi.interval.lo
    for element in _partition(s, (phi.left, phi.right), phi.interval):
        point = s.point_at(element.sample_time)
        if eval_lit(phi.left, point):
            return Verdict(True)
        if element.lo >= lo and not eval_lit(phi.right, point):
            return Verdict(False, element.sample_time)
    return Verdict(True)


def _check(s: Signal, phi: StlFormula) -> Verdict:
    if isinstance(phi, TrueFormula):
        return Verdict(True)
    if isinstance(phi, Lit):
        return Verdict(eval_lit(phi, s.point_at(Fraction(0))))
    if isinstance(phi, Until):
        return _until(s, phi)
    if isinstance(phi, Release):
        return _release(s, phi)
    if isinstance(phi, And):
        for child in (phi.left, phi.right):
            verdict = _check(s, child)
            if not verdict:
                return verdict
        return Verdict(True)
    if isinstance(phi, Or):
        for child in (phi.left, phi.right):
            verdict = _check(s, child)
            if verdict:
                return verdict
        return Verdict(False)
    raise MonitorError(f"unsupported formula node {type(phi).__name__}")


def satisfies(s: Signal, phi: StlFormula) -> Verdict:
    end = horizon(phi)
    if s.duration < end:
        raise MonitorError(
            f"formula horizon {format_rational(end)} exceeds signal duration {format_rational(s.duration)}",
            user_message="Signal is shorter than the property horizon.",
        )
    verdict = _check(s, phi)
    _LOGGER.debug("Monitor verdict %s (witness %s)", verdict.satisfied, verdict.witness)
    return verdict


def verdict_to_json(verdict: Verdict) -> str:
    witness = format_rational(verdict.witness) if verdict.witness is not None else None
    return json.dumps({"satisfied": verdict.satisfied, "witness": witness}, indent=2)


def verdict_to_csv(verdict: Verdict) -> str:
    witness = format_rational(verdict.witness) if verdict.witness is not None else ""
    return f"satisfied,witness\n{str(verdict.satisfied).lower()},{witness}\n"
