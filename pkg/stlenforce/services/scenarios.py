"""Seeded case-study signals: safe stopping, safe charging and safe deceleration."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import logging
import math
import random
from typing import Callable, Sequence

from stlenforce.core.errors import StlEnforceError
from stlenforce.services.signal import Sample, Signal


_LOGGER = logging.getLogger(__name__)

SAFE_STOPPING = "(v <= 30) U[5,10] (v == 0)"
SAFE_CHARGING = "(V == 4.2) R[2,10] (I < 10)"
SAFE_DECELERATION = "(w <= 30) U[5,10] (w == 0) and (m <= 30) U[5,10] (m == 0)"

_DENOM = 1000
_MAX_SPIKES = 50

Column = list[tuple[Fraction, Fraction]]


class ScenarioError(StlEnforceError):
    pass


def _uniform(rng: random.Random, lo: Fraction | int, hi: Fraction | int) -> Fraction:
    """Random rational on the 1/1000 grid strictly inside (lo, hi)."""
    low = math.floor(Fraction(lo) * _DENOM) + 1
    high = math.ceil(Fraction(hi) * _DENOM) - 1
    if low > high:
        raise ScenarioError(f"interval ({lo}, {hi}) too narrow for the generator grid")
    return Fraction(rng.randint(low, high), _DENOM)


def _spike_count(violations: int) -> int:
    if violations < 0 or violations % 2:
        raise ScenarioError(
            f"violation count must be a nonnegative even number, got {violations}",
            user_message="Each spike adds two violation points; use an even count.",
        )
    spikes = violations // 2
    if spikes > _MAX_SPIKES:
        raise ScenarioError(f"cannot place {spikes} spikes inside the property window (max {_MAX_SPIKES})")
    return spikes


def _spikes(
    rng: random.Random,
    count: int,
    window: tuple[Fraction, Fraction],
    base: tuple[Fraction, Fraction],
    peak: tuple[Fraction, Fraction],
) -> Column:
    """Triangles above the threshold, one per equal slot of ``window``, each crossing it twice."""
    column: Column = []
    lo, hi = window
    width = (hi - lo) / count if count else Fraction(0)
    for k in range(count):
        slot_lo = lo + k * width
        start = _uniform(rng, slot_lo + width / 10, slot_lo + width / 4)
        top = _uniform(rng, slot_lo + 2 * width / 5, slot_lo + 3 * width / 5)
        end = _uniform(rng, slot_lo + 3 * width / 4, slot_lo + 9 * width / 10)
        column += [(start, _uniform(rng, *base)), (top, _uniform(rng, *peak)), (end, _uniform(rng, *base))]
    return column


def _stopping_column(rng: random.Random, spikes: int, stops: bool) -> Column:
    base = (Fraction(10), Fraction(25))
    column: Column = [(Fraction(0), _uniform(rng, *base))]
    column += _spikes(rng, spikes, (Fraction(0), Fraction(5)), base, (Fraction(31), Fraction(45)))
    stop = _uniform(rng, Fraction(13, 2), 9)
    column.append((_uniform(rng, Fraction(11, 2), stop - Fraction(1, 2)), _uniform(rng, *base)))
    if stops:
        column += [(stop, Fraction(0)), (Fraction(10), Fraction(0))]
    else:
        column += [(stop, _uniform(rng, 1, 5)), (Fraction(10), _uniform(rng, Fraction(1, 10), 1))]
    return column


def _interpolate(column: Column, t: Fraction) -> Fraction:
    for (t0, v0), (t1, v1) in zip(column, column[1:]):
        if t0 <= t <= t1:
            return v0 if t == t0 else v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    raise ScenarioError(f"time {t} outside generated column")


def _signal(columns: dict[str, Column]) -> Signal:
    times = sorted({t for column in columns.values() for t, _ in column})
    samples = tuple(Sample(t, tuple(_interpolate(columns[name], t) for name in columns)) for t in times)
    return Signal(tuple(columns), samples)


def safe_stopping_signal(violations: int, seed: int = 0, *, stops: bool = True) -> Signal:
    """Speed trace with ``violations`` crossings of 30 before t=5; stops at some t in (6.5, 9) when ``stops``."""
    rng = random.Random(seed)
    return _signal({"v": _stopping_column(rng, _spike_count(violations), stops)})


def safe_charging_signal(violations: int, seed: int = 0) -> Signal:
    rng = random.Random(seed)
    spikes = _spike_count(violations)
    full = _uniform(rng, 6, 11)
    voltage: Column = [(Fraction(0), _uniform(rng, Fraction(36, 10), 4)), (full, Fraction(21, 5)), (Fraction(12), Fraction(21, 5))]
    base = (Fraction(2), Fraction(9))
    current: Column = [(Fraction(0), _uniform(rng, *base)), (Fraction(2), _uniform(rng, *base))]
    current += _spikes(rng, spikes, (Fraction(2), min(full, Fraction(10))), base, (Fraction(11), Fraction(20)))
    current.append((Fraction(12), _uniform(rng, *base)))
    return _signal({"V": voltage, "I": current})


def safe_deceleration_signal(violations: int, seed: int = 0) -> Signal:
    rng = random.Random(seed)
    spikes = _spike_count(violations)
    wheel = _stopping_column(rng, (spikes + 1) // 2, stops=True)
    motor = _stopping_column(rng, spikes // 2, stops=True)
    return _signal({"w": wheel, "m": motor})


@dataclass(frozen=True)
class Scenario:
    name: str
    property: str
    generate: Callable[[int, int], Signal]


SCENARIOS: dict[str, Scenario] = {
    "safe-stopping": Scenario("safe-stopping", SAFE_STOPPING, safe_stopping_signal),
    "safe-charging": Scenario("safe-charging", SAFE_CHARGING, safe_charging_signal),
    "safe-deceleration": Scenario("safe-deceleration", SAFE_DECELERATION, safe_deceleration_signal),
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ScenarioError(
            f"unknown scenario {name!r}", user_message=f"Scenario must be one of {sorted(SCENARIOS)}."
        ) from None


def scenario_names() -> Sequence[str]:
    return tuple(SCENARIOS)
