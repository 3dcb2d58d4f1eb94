"""Errors and argument checks shared by every module."""

from __future__ import annotations

import math
import numbers


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


class AccuracyError(ArithmeticError):
    """The requested accuracy cannot be certified.

    ``achieved`` carries the best bound that could be certified.
    """

    def __init__(self, message: str, achieved: float = math.nan):
        super().__init__(message)
        self.achieved = achieved


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise DomainError(f"{name} must be a positive integer, got {value!r}")
    if value < 1:
        raise DomainError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_nonnegative_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise DomainError(f"{name} must be a nonnegative integer, got {value!r}")
    if value < 0:
        raise DomainError(f"{name} must be a nonnegative integer, got {value!r}")
    return int(value)


def _as_float(value, name: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise DomainError(f"{name} must be a real number, got {value!r}") from None
    if math.isnan(out):
        raise DomainError(f"{name} must not be NaN")
    return out


def check_half_open_unit(x, name: str = "x") -> float:
    """Return ``x`` as a float after checking ``0 <= x < 1``."""
    x = _as_float(x, name)
    if not 0.0 <= x < 1.0:
        raise DomainError(f"{name} must lie in [0, 1), got {x!r}")
    return x


def check_closed_unit(x, name: str = "x") -> float:
    x = _as_float(x, name)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {x!r}")
    return x


def check_open_unit(x, name: str) -> float:
    x = _as_float(x, name)
    if not 0.0 < x < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {x!r}")
    return x


def check_eps(eps, name: str = "eps", upper: float = 1e-2) -> float:
    """Series tolerances live in (0, upper]."""
    eps = _as_float(eps, name)
    if not 0.0 < eps <= upper:
        raise DomainError(f"{name} must lie in (0, {upper:g}], got {eps!r}")
    return eps


def check_positive_real(value, name: str) -> float:
    value = _as_float(value, name)
    if not value > 0.0 or math.isinf(value):
        raise DomainError(f"{name} must be a positive finite real, got {value!r}")
    return value


class WorkLimitError(AccuracyError):
    """The exact computation would exceed the configured work limit."""
