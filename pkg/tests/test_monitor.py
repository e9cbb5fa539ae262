import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from stlenforce.services.monitor import MonitorError, Verdict, satisfies, verdict_to_json
from stlenforce.services.signal import Signal
from stlenforce.services.stl import Release, negate, parse_formula


def _ramp(y_end="1"):
    return Signal.from_columns(["0", "10"], {"x": ["0", "10"], "y": ["1", y_end]})


def test_running_signal_violates_until(running_signal, running_formula):
    verdict = satisfies(running_signal, running_formula)
    assert verdict == Verdict(False)
    assert not verdict


@pytest.mark.parametrize(
    "text, y_end, expected",
    [
        ("(y >= 0) U[2,5] (x >= 3)", "1", Verdict(True, Fraction(3))),
        ("(y >= 0) U[2,5] (x > 3)", "1", Verdict(True, Fraction(4))),
        ("(y >= 0) U[2,5] (x >= 6)", "1", Verdict(False)),
        ("(y >= 0) U[2,5] (x >= 3)", "-9", Verdict(False)),
        ("F[2,5] (x >= 1)", "1", Verdict(True, Fraction(2))),
        ("(x >= 1) R[2,5] (y >= 0)", "-1", Verdict(True)),
        ("(x >= 20) R[2,5] (y >= 0)", "-1.5", Verdict(False, Fraction(9, 2))),
        ("(x >= 20) R[2,5] (y >= 0)", "-1", Verdict(True)),
        ("(x >= 20) R[0,0] (y >= 0)", "-1", Verdict(True)),
    ],
)
def test_monitor_examples(text, y_end, expected):
    assert satisfies(_ramp(y_end), parse_formula(text)) == expected


def test_boolean_combinations_report_deciding_child():
    s = _ramp()
    both = parse_formula("(y >= 0) U[2,5] (x >= 3) and (y >= 0) U[2,5] (x >= 6)")
    assert satisfies(s, both) == Verdict(False)
    either = parse_formula("(y >= 0) U[2,5] (x >= 6) or (y >= 0) U[2,5] (x >= 4)")
    assert satisfies(s, either) == Verdict(True, Fraction(4))


def test_horizon_longer_than_signal(running_formula):
    short = Signal.from_columns(["0", "4"], {"x1": ["1", "1"], "x2": ["1", "1"]})
    with pytest.raises(MonitorError):
        satisfies(short, running_formula)


def test_verdict_to_json():
    assert json.loads(verdict_to_json(Verdict(True, Fraction(47, 10)))) == {"satisfied": True, "witness": "4.7"}
    assert json.loads(verdict_to_json(Verdict(False))) == {"satisfied": False, "witness": None}


_values = st.integers(-4, 4).map(lambda n: Fraction(n, 2))


@st.composite
def _signals(draw):
    steps = draw(st.lists(st.integers(1, 3), min_size=4, max_size=8))
    times = [0]
    for step in steps:
        times.append(times[-1] + step)
    size = len(times)
    columns = {
        "x": draw(st.lists(_values, min_size=size, max_size=size)),
        "y": draw(st.lists(_values, min_size=size, max_size=size)),
    }
    return Signal.from_columns(times, columns)


@hyp_settings(max_examples=60, deadline=None)
@given(
    _signals(),
    st.integers(0, 2),
    st.integers(0, 2),
    st.sampled_from([">=", ">", "=="]),
    st.sampled_from([">=", ">"]),
)
def test_release_is_dual_of_until(signal, lo, width, left_op, right_op):
    phi = parse_formula(f"(x {left_op} 0) U[{lo},{lo + width}] (y {right_op} 1/2)")
    dual = Release(negate(phi.left), phi.interval, negate(phi.right))
    assert satisfies(signal, dual).satisfied != satisfies(signal, phi).satisfied


@hyp_settings(max_examples=60, deadline=None)
@given(_signals(), st.integers(0, 2))
def test_until_witness_lies_in_window(signal, lo):
    verdict = satisfies(signal, parse_formula(f"F[{lo},{lo + 1}] (x >= 0)"))
    if verdict:
        assert lo <= verdict.witness <= lo + 1
        assert signal.point_at(verdict.witness)["x"] >= 0


_DENSE = np.arange(10001) / 1000
_UNIT = st.sampled_from([-1, 0, 1])


@st.composite
def _unit_signals(draw):
    """Integer sample times and values in {-1, 0, 1}: every crossing or touch lands on the 1/1000 grid."""
    columns = {name: draw(st.lists(_UNIT, min_size=11, max_size=11)) for name in ("x", "y")}
    return Signal.from_columns(list(range(11)), columns)


def _dense_truth(signal, name, comparison, polarity):
    values = np.interp(_DENSE, [float(t) for t in signal.times], [float(v) for v in signal.column(name)])
    truth = values >= 0 if comparison == ">=" else values > 0
    return truth if polarity else ~truth


@hyp_settings(max_examples=150, deadline=None)
@given(
    _unit_signals(),
    st.integers(0, 8),
    st.integers(0, 2),
    st.sampled_from(["U", "R"]),
    st.tuples(st.sampled_from([">=", ">"]), st.booleans()),
    st.tuples(st.sampled_from([">=", ">"]), st.booleans()),
)
def test_verdict_matches_dense_sampling(signal, lo, width, op, left, right):
    def text(name, spec):
        body = f"{name} {spec[0]} 0"
        return body if spec[1] else f"!({body})"

    phi = parse_formula(f"({text('x', left)}) {op}[{lo},{lo + width}] ({text('y', right)})")
    p1 = _dense_truth(signal, "x", *left)
    p2 = _dense_truth(signal, "y", *right)
    window = (_DENSE >= lo) & (_DENSE <= lo + width)
    if op == "U":
        expected = bool(np.any(window & p2 & np.logical_and.accumulate(p1)))
    else:
        expected = bool(np.all(~window | p2 | np.logical_or.accumulate(p1)))
    assert satisfies(signal, phi).satisfied == expected
