"""Exception hierarchy shared across the toolkit.

Every error carries an ``exit_code`` so the command line can map failures to
distinct process exit statuses without inspecting messages.
"""

from __future__ import annotations


class PairSourceError(Exception):
    exit_code = 1


class DomainError(PairSourceError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 3


class RegimeError(PairSourceError):
    """Mean pair number per pulse too large for the low-gain model."""

    exit_code = 4


class ConfigError(PairSourceError):
    exit_code = 2


class DataError(PairSourceError):
    """Malformed or structurally inconsistent measurement data."""

    exit_code = 3


class RangeError(DataError):
    pass


class DegenerateDataError(DataError):
    pass


class InsufficientRepeatsError(DataError):
    pass


class FitError(PairSourceError):
    exit_code = 5

    def __init__(self, message: str, residual_norm: float | None = None):
        super().__init__(message)
        self.residual_norm = residual_norm


class SingularDesignError(FitError):
    pass


class InvalidCoefficientError(FitError):
    pass


class UndefinedCarError(DataError):
    """No accidental counts in the adjacent peaks, so the ratio does not exist.

    Both raw counts are kept on the exception. ``car_lower_bound`` is the value
    the ratio would take had a single accidental count been observed.
    """

    def __init__(self, n_central: int, n_accidental: float, window: float):
        self.n_central = int(n_central)
        self.n_accidental = float(n_accidental)
        self.window = window
        self.car_lower_bound = float(n_central) - 1.0
        super().__init__(
            f"CAR undefined: no accidental counts (central={self.n_central}, "
            f"adjacent={self.n_accidental:g}); car >= {self.car_lower_bound:g} "
            "if at most one accidental count was missed"
        )


def with_context(exc: PairSourceError, context: str) -> PairSourceError:
    """Return a copy of ``exc`` whose message is prefixed by ``context``."""
    if isinstance(exc, UndefinedCarError):
        return exc
    if isinstance(exc, FitError):
        new = type(exc)(f"{context}: {exc}", exc.residual_norm)
    else:
        new = type(exc)(f"{context}: {exc}")
    return new
