"""Predicates for validating manifest values."""

from typing import Any


def can_be_float(value: Any) -> bool:
    if isinstance(value, bool):
        return False
    try:
        float(value)
        return True
    except (TypeError, ValueError):
        return False


def can_be_pos_float(value: Any) -> bool:
    return can_be_float(value) and float(value) > 0


def can_be_pos_int(value: Any) -> bool:
    if isinstance(value, bool):
        return False
    try:
        return int(value) == value and int(value) > 0
    except (TypeError, ValueError):
        return False


def can_be_nonneg_int(value: Any) -> bool:
    return can_be_pos_int(value) or (can_be_float(value) and value == 0)


def in_unit_interval(value: Any) -> bool:
    """True for reals strictly between 0 and 1."""
    return can_be_float(value) and 0 < float(value) < 1


def is_point(value: Any, dim: int) -> bool:
    try:
        return len(value) == dim and all(can_be_float(c) for c in value)
    except TypeError:
        return False
