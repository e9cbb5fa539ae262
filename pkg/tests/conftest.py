import sys
from fractions import Fraction
from pathlib import Path

import pytest

ROOT_DIR = Path(__file__).resolve().parents[1]
if str(ROOT_DIR) not in sys.path:
    sys.path.insert(0, str(ROOT_DIR))

from stlenforce.services import jobs  # noqa: E402
from stlenforce.services.signal import Signal  # noqa: E402
from stlenforce.services.stl import parse_formula  # noqa: E402

RUNNING_PROPERTY = "(x1 >= 0.7) U[4,5] (x2 >= 0.5)"

RUNNING_SIGNAL_CSV = """time,x1,x2
0,0.6,0.8
1,0.8,0.6
2,0.9,0.1
2.4,0.5,0.2
3.4,0.75,0.3
4,0.9,0.43
5,0.5,0.53
"""


def F(value) -> Fraction:
    return Fraction(value)


@pytest.fixture()
def running_signal() -> Signal:
    times = ["0", "1", "2", "2.4", "3.4", "4", "5"]
    return Signal.from_columns(
        times,
        {
            "x1": ["0.6", "0.8", "0.9", "0.5", "0.75", "0.9", "0.5"],
            "x2": ["0.8", "0.6", "0.1", "0.2", "0.3", "0.43", "0.53"],
        },
    )


@pytest.fixture()
def running_formula():
    return parse_formula(RUNNING_PROPERTY)


@pytest.fixture()
def running_csv(tmp_path) -> Path:
    path = tmp_path / "signal.csv"
    path.write_text(RUNNING_SIGNAL_CSV, encoding="utf-8")
    return path


@pytest.fixture()
def inline_jobs(monkeypatch):
    monkeypatch.setattr(jobs, "RUN_JOBS_INLINE", True)
