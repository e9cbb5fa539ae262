"""Runtime configuration for stlenforce."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import logging
import os
from pathlib import Path

from stlenforce.core.numbers import parse_rational


BASE_DIR = Path(__file__).resolve().parents[2]
OUTPUT_DIR = Path(os.getenv("STLENFORCE_OUTPUT_DIR", str(BASE_DIR / "out")))

_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}


@dataclass(frozen=True)
class Settings:
    eps: Fraction
    bench_repetitions: int
    qp_max_iter: int
    log_level: str


def _positive_int(name: str, default: str) -> int:
    raw = os.getenv(name, default)
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"{name} must be an integer, got: {raw!r}") from exc
    if value <= 0:
        raise ValueError(f"{name} must be positive")
    return value


def load_settings() -> Settings:
    eps_str = os.getenv("STLENFORCE_EPS", "1/1000000")
    try:
        eps = parse_rational(eps_str)
    except ValueError as exc:
        raise ValueError(f"STLENFORCE_EPS must be a rational, got: {eps_str!r}") from exc
    if eps <= 0:
        raise ValueError("STLENFORCE_EPS must be positive")
    log_level = os.getenv("STLENFORCE_LOG_LEVEL", "WARNING").upper()
    if log_level not in _LOG_LEVELS:
        raise ValueError(f"STLENFORCE_LOG_LEVEL must be one of {sorted(_LOG_LEVELS)}, got: {log_level!r}")
    return Settings(
        eps=eps,
        bench_repetitions=_positive_int("STLENFORCE_BENCH_REPETITIONS", "3"),
        qp_max_iter=_positive_int("STLENFORCE_QP_MAX_ITER", "100"),
        log_level=log_level,
    )


settings = load_settings()


def configure_logging(verbose: bool = False) -> None:
    level = logging.INFO if verbose else getattr(logging, settings.log_level)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def override_paths(output_dir: Path | None = None) -> None:
    """Override OUTPUT_DIR (used by tests)."""
    global OUTPUT_DIR
    if output_dir is not None:
        OUTPUT_DIR = Path(output_dir)
