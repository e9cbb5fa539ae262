import json
from fractions import Fraction

import pytest

from stlenforce.core import storage
from stlenforce.services.signal import (
    Signal,
    SignalError,
    emit_csv,
    load_csv,
    merge_times,
    parse_csv,
    to_csv,
    to_json,
    value_at,
)

from conftest import RUNNING_SIGNAL_CSV


def test_parse_csv_keeps_exact_values():
    signal = parse_csv(RUNNING_SIGNAL_CSV)
    assert signal.variables == ("x1", "x2")
    assert signal.times[3] == Fraction(12, 5)
    assert signal.column("x2")[5] == Fraction(43, 100)
    assert signal.duration == 5


def test_value_at_interpolates_linearly(running_signal):
    assert running_signal.value_at(Fraction(1, 2)) == (Fraction(7, 10), Fraction(7, 10))
    assert running_signal.point_at(Fraction(22, 10))["x1"] == Fraction(7, 10)
    assert running_signal.value_at(4) == (Fraction(9, 10), Fraction(43, 100))
    with pytest.raises(SignalError):
        running_signal.value_at(Fraction(51, 10))


def test_with_points_inserts_and_replaces(running_signal):
    patched = running_signal.with_points({Fraction(1, 2): (Fraction(7, 10), Fraction(7, 10)), Fraction(0): (1, 1)})
    assert patched.times[:3] == (0, Fraction(1, 2), 1)
    assert patched.samples[0].values == (1, 1)
    assert running_signal.samples[0].values == (Fraction(3, 5), Fraction(4, 5))


def test_to_csv_round_trips(running_signal):
    text = to_csv(running_signal)
    assert text.splitlines()[0] == "time,x1,x2"
    assert parse_csv(text) == running_signal


def test_emit_csv_creates_parent_dirs(tmp_path, running_signal):
    path = emit_csv(running_signal, tmp_path / "nested" / "signal.csv")
    assert path.read_text(encoding="utf-8") == to_csv(running_signal)
    assert load_csv(path) == running_signal


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "empty"),
        ("t,x\n0,1\n", "time"),
        ("time\n0\n", "variable columns"),
        ("time,x\n", "no data rows"),
        ("time,x\n0,1\n1\n", "Malformed row 3"),
        ("time,x\n0,abc\n", "Malformed row 2"),
        ("time,x\n0,1\n0,2\n", "strictly increasing"),
    ],
)
def test_parse_csv_rejects_malformed_files(text, fragment):
    with pytest.raises(SignalError) as info:
        parse_csv(text)
    assert fragment in info.value.user_message or fragment in str(info.value)


def test_signal_must_start_at_zero():
    with pytest.raises(SignalError):
        Signal.from_columns(["1", "2"], {"x": ["0", "1"]})


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(storage.MissingInputError):
        load_csv(tmp_path / "nope.csv")


def test_merge_times_dedupes_and_sorts():
    assert merge_times([Fraction(1, 2), 0], [1, Fraction(2, 4)]) == [0, Fraction(1, 2), 1]


def test_module_value_at_hits_threshold_exactly():
    signal = Signal.from_columns(["0", "1"], {"x": ["0.6", "1.5"]})
    assert value_at(signal, Fraction(1, 9)) == (Fraction(7, 10),)


def test_to_json_lists_exact_samples(running_signal):
    payload = json.loads(to_json(running_signal))
    assert payload["variables"] == ["x1", "x2"]
    assert payload["samples"][3] == {"time": "2.4", "values": ["0.5", "0.2"]}
