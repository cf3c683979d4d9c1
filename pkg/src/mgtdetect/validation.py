"""Input validation helpers shared across the package."""

from __future__ import annotations

from typing import Sequence


def check_text(text: str, name: str = "text") -> str:
    if not isinstance(text, str):
        raise TypeError(f"{name} must be a string, got {type(text).__name__}")
    return text


def check_nonempty(seq: Sequence, name: str = "input") -> Sequence:
    if len(seq) == 0:
        raise ValueError(f"{name} must be non-empty")
    return seq


def check_equal_lengths(a: Sequence, b: Sequence, names: str = "inputs") -> None:
    if len(a) != len(b):
        raise ValueError(f"{names} must have equal lengths, got {len(a)} and {len(b)}")


def check_positive(value: float, name: str) -> None:
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")


def check_fraction(value: float, name: str = "ratio") -> None:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must be in (0, 1), got {value}")


def token_count(text: str) -> int:
    """Number of whitespace tokens; the unit used for boundaries and buckets."""
    return len(text.split())
