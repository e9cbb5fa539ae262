import json
from fractions import Fraction

import pytest

from stlenforce.services.encoder import (
    EncodingError,
    EventKind,
    TimedWord,
    events_to_csv,
    events_to_json,
    predicate_breakpoints,
    sign_encode,
    variable_points,
)
from stlenforce.services.signal import Signal
from stlenforce.services.stl import parse_formula, predicates


RUNNING_TIMES = ["0", "0.5", "1.2", "2.2", "3.2", "4", "4.5", "4.7", "5"]
RUNNING_ACTIONS = [
    (False, True),
    (True, True),
    (True, False),
    (False, False),
    (True, False),
    (True, False),
    (False, False),
    (False, True),
    (False, True),
]


def _bits(word):
    return [(event.action["p1"], event.action["p2"]) for event in word]


def test_running_example_word(running_signal, running_formula):
    word = sign_encode(running_signal, running_formula)
    assert word.times == tuple(Fraction(t) for t in RUNNING_TIMES)
    assert _bits(word) == RUNNING_ACTIONS
    assert word.predicates == ("p1", "p2")
    kinds = {event.time: event.kind for event in word}
    assert kinds[Fraction(0)] is EventKind.RELEVANT_POINT
    assert kinds[Fraction(4)] is EventKind.RELEVANT_POINT
    assert kinds[Fraction(1, 2)] is EventKind.VARIABLE_POINT


def test_variable_points_of_running_predicate(running_signal, running_formula):
    p1 = predicates(running_formula)[0]
    assert variable_points(running_signal, p1) == (Fraction(1, 2), Fraction(11, 5), Fraction(16, 5), Fraction(9, 2))
    assert Fraction(12, 5) in predicate_breakpoints(running_signal, p1)


def test_zero_crossing_is_exact_rational():
    signal = Signal.from_columns(["0", "1"], {"x": ["0", "1"]})
    phi = parse_formula("(x >= 1/9) U[0,1] (x >= 0)")
    word = sign_encode(signal, phi)
    assert Fraction(1, 9) in word.times
    event = next(e for e in word if e.time == Fraction(1, 9))
    assert event.action["p1"] is True


def test_equality_predicate_variable_points():
    signal = Signal.from_columns(["0", "1", "2", "3"], {"v": ["5", "0", "0", "3"]})
    p = predicates(parse_formula("(v >= 0) U[0,3] (v == 0)"))[1]
    assert variable_points(signal, p) == (1, 2)
    touch = Signal.from_columns(["0", "1", "2"], {"v": ["1", "0", "1"]})
    assert variable_points(touch, p) == (1,)


def test_truth_is_constant_between_consecutive_events(running_signal, running_formula):
    word = sign_encode(running_signal, running_formula)
    preds = predicates(running_formula)
    for left, right in zip(word.events, word.events[1:]):
        for k in range(1, 8):
            t = left.time + (right.time - left.time) * Fraction(k, 8)
            point = running_signal.point_at(t)
            for p in preds:
                assert p.holds(point) == left.action[p.id]


def test_lead_adds_anticipation_events(running_signal, running_formula):
    word = sign_encode(running_signal, running_formula, lead=1)
    added = set(word.times) - {Fraction(t) for t in RUNNING_TIMES}
    assert added == {Fraction(3), Fraction(1, 5), Fraction(7, 2), Fraction(37, 10)}
    assert len(word) == len(RUNNING_TIMES) + 4
    with pytest.raises(EncodingError):
        sign_encode(running_signal, running_formula, lead=-1)


def test_lead_widens_variable_points():
    signal = Signal.from_columns(["0", "2", "6"], {"x": ["-1", "1", "1"]})
    word = sign_encode(signal, parse_formula("F[0,6] (x >= 0)"), lead=Fraction(1, 2))
    assert Fraction(1, 2) in word.times
    assert next(e for e in word if e.time == Fraction(1, 2)).action["p1"] is False


def test_downward_crossing_splits_the_event(running_signal, running_formula):
    word = sign_encode(running_signal, running_formula)
    split = {event.time: event.at_point for event in word if event.at_point is not None}
    assert set(split) == {Fraction(6, 5), Fraction(11, 5), Fraction(9, 2)}
    event = next(e for e in word if e.time == Fraction(11, 5))
    assert event.at_point.as_dict() == {"p1": True, "p2": False}
    assert event.action.as_dict() == {"p1": False, "p2": False}
    assert event.letters == (event.at_point, event.action)
    assert event.point_action == event.at_point


def test_isolated_instant_is_an_event():
    touch = Signal.from_columns(["0", "1", "2"], {"v": ["1", "0", "1"]})
    phi = parse_formula("F[0,2] (v > 0)")
    assert variable_points(touch, predicates(phi)[0]) == (1,)
    event = next(e for e in sign_encode(touch, phi) if e.time == 1)
    assert event.at_point.as_dict() == {"p1": False}
    assert event.action.as_dict() == {"p1": True}
    assert variable_points(touch, predicates(parse_formula("F[0,2] (v >= 0)"))[0]) == ()


def test_signal_shorter_than_horizon(running_formula):
    short = Signal.from_columns(["0", "4"], {"x1": ["1", "1"], "x2": ["1", "1"]})
    with pytest.raises(EncodingError) as info:
        sign_encode(short, running_formula)
    assert "horizon" in info.value.user_message


def test_timed_word_rejects_non_increasing_times():
    with pytest.raises(EncodingError):
        TimedWord.of([(0, {"p1": True}), (0, {"p1": False})])


def test_event_serializers(running_signal, running_formula):
    word = sign_encode(running_signal, running_formula)
    lines = events_to_csv(word).splitlines()
    assert lines[0] == "time,kind,p1,p2"
    assert lines[1] == "0,relevant,0,1"
    assert len(lines) == 10
    payload = json.loads(events_to_json(word))
    assert payload["predicates"] == ["p1", "p2"]
    assert payload["events"][3]["action"] == {"p1": False, "p2": False}
    assert payload["events"][3]["at_point"] == {"p1": True, "p2": False}
    assert "at_point" not in payload["events"][4]
