from __future__ import annotations

from typing import Sequence


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


class ConfigError(ValueError):
    """Raised when a run configuration is missing a value or holds an invalid one."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class InputFileError(ValueError):
    """Raised when an input file cannot be read or interpreted."""

    def __init__(self, path: object, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


class NumericalError(ValueError):
    """Raised when a computation produces a non-finite or otherwise unusable result."""


class IntegrationError(NumericalError):
    """A quadrature integrand returned NaN or inf at a grid point."""

    def __init__(self, point: Sequence[float], value: complex) -> None:
        coords = ", ".join(f"{c:.6g}" for c in point)
        super().__init__(f"Non-finite integrand {value!r} at point ({coords}).")
        self.point = tuple(float(c) for c in point)
        self.value = value


class ForwardSingularityError(NumericalError):
    """The plane-wave amplitude was requested at zero momentum transfer."""
