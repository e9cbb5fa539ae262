"""Transducer runs agree with the offline monitor, including thresholds met exactly at samples."""

from fractions import Fraction

from hypothesis import given, settings as hyp_settings, strategies as st

from stlenforce.services.encoder import sign_encode
from stlenforce.services.monitor import satisfies
from stlenforce.services.signal import Signal
from stlenforce.services.stl import parse_formula
from stlenforce.services.transducer import check_determinism, compile_formula, run

VARIABLES = ("x", "y", "z", "w")
# x, y and w sit on the sample grid, so touches and crossings land on samples and window bounds.
THRESHOLDS = {"x": "0", "y": "1/2", "z": "1/4", "w": "-1"}

_values = st.integers(-4, 4).map(lambda n: Fraction(n, 2))


@st.composite
def _signals(draw):
    steps = draw(st.lists(st.integers(1, 3), min_size=5, max_size=9))
    times = [0]
    for step in steps:
        times.append(times[-1] + step)
    size = len(times)
    columns = {name: draw(st.lists(_values, min_size=size, max_size=size)) for name in VARIABLES}
    return Signal.from_columns(times, columns)


@st.composite
def _literals(draw, name):
    comparison = draw(st.sampled_from([">=", ">"]))
    text = f"{name} {comparison} {THRESHOLDS[name]}"
    return f"!({text})" if draw(st.booleans()) else f"({text})"


@st.composite
def _terms(draw, left, right):
    lo = draw(st.integers(0, 3))
    hi = lo + draw(st.integers(0, 2))
    op = draw(st.sampled_from(["U", "R"]))
    return f"({draw(_literals(left))}) {op}[{lo},{hi}] ({draw(_literals(right))})"


@st.composite
def _compound_terms(draw):
    lo = draw(st.integers(0, 3))
    hi = lo + draw(st.integers(0, 2))
    op = draw(st.sampled_from(["U", "R"]))
    left = f"{draw(_literals('x'))} {draw(st.sampled_from(['&&', '||']))} {draw(_literals('y'))}"
    right = f"{draw(_literals('z'))} {draw(st.sampled_from(['&&', '||']))} {draw(_literals('w'))}"
    return f"({left}) {op}[{lo},{hi}] ({right})"


def _agree(signal, text):
    phi = parse_formula(text)
    A = compile_formula(phi)
    result = run(A, sign_encode(signal, phi))
    assert result.satisfied == satisfies(signal, phi).satisfied, text


@hyp_settings(max_examples=400, deadline=None)
@given(_signals(), _terms("x", "y"))
def test_single_term_matches_monitor(signal, text):
    _agree(signal, text)


@hyp_settings(max_examples=400, deadline=None)
@given(
    _signals(),
    _terms("x", "y"),
    st.sampled_from([("z", "w"), ("y", "x"), ("x", "w")]),
    st.data(),
    st.sampled_from([" and ", " or "]),
)
def test_product_matches_monitor(signal, first, names, data, joiner):
    second = data.draw(_terms(*names))
    _agree(signal, first + joiner + second)


@hyp_settings(max_examples=200, deadline=None)
@given(_signals(), st.integers(0, 3), st.integers(0, 2), st.sampled_from(["x >= 0", "x > 0", "!(x > 0)", "y >= 1/2"]))
def test_eventually_matches_monitor(signal, lo, width, body):
    _agree(signal, f"F[{lo},{lo + width}] ({body})")


@hyp_settings(max_examples=200, deadline=None)
@given(_signals(), _compound_terms())
def test_compound_operands_match_monitor(signal, text):
    _agree(signal, text)
    assert check_determinism(compile_formula(parse_formula(text))) == []


def test_running_example_agrees(running_signal, running_formula):
    result = run(compile_formula(running_formula), sign_encode(running_signal, running_formula))
    assert result.satisfied is False
    assert satisfies(running_signal, running_formula).satisfied is False


def test_touching_threshold_at_window_start():
    signal = Signal.from_columns(["0", "2", "4"], {"x": ["1", "0", "1"], "y": ["0", "1", "0"]})
    for text in ("(x > 0) U[2,3] (y >= 1)", "(x >= 0) U[2,3] (y >= 1)", "(x > 0) R[2,3] (y >= 1)", "(y >= 1) R[2,2] (x > 0)"):
        _agree(signal, text)
