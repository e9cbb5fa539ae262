"""Exact rational parsing and formatting."""

from __future__ import annotations

from fractions import Fraction


def parse_rational(value: str | int | Fraction) -> Fraction:
    """Parse a decimal literal or ``p/q`` into an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    raw = value.strip()
    if not raw:
        raise ValueError("empty rational literal")
    try:
        return Fraction(raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"invalid rational literal: {value!r}") from exc


def _decimal_places(denominator: int) -> int | None:
    twos = fives = 0
    while denominator % 2 == 0:
        denominator //= 2
        twos += 1
    while denominator % 5 == 0:
        denominator //= 5
        fives += 1
    if denominator != 1:
        return None
    return max(twos, fives)


def format_rational(value: Fraction | int) -> str:
    """Render exactly: a finite decimal when one exists, otherwise ``p/q``."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    places = _decimal_places(value.denominator)
    if places is None:
        return f"{value.numerator}/{value.denominator}"
    sign = "-" if value < 0 else ""
    scaled = abs(value.numerator) * (10**places // value.denominator)
    digits = str(scaled).rjust(places + 1, "0")
    whole, frac = digits[:-places], digits[-places:].rstrip("0")
    return f"{sign}{whole}.{frac}"


def midpoint(a: Fraction, b: Fraction) -> Fraction:
    return (a + b) / 2
