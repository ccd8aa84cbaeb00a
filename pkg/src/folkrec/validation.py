"""Input validation helpers shared by the estimator classes."""

from __future__ import annotations

from .corpus import Folksonomy


def check_folksonomy(x) -> Folksonomy:
    if not isinstance(x, Folksonomy):
        raise TypeError(f"expected a Folksonomy, got {type(x).__name__}")
    return x


def check_positive_int(name: str, value: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return value


def check_unit_interval(name: str, value: float) -> float:
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must be in [0, 1], got {value!r}")
    return float(value)


def check_choice(name: str, value: str, choices: tuple[str, ...]) -> str:
    if value not in choices:
        raise ValueError(f"{name} must be one of {choices}, got {value!r}")
    return value
