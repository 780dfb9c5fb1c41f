# MIT License
# Copyright (c) 2025 Ronnie Garrison
"""Exception hierarchy for utc_equilibria."""
from __future__ import annotations

from typing import Any, Dict, Optional


class UtcEquilibriaError(Exception):
    """Base class for errors raised by the utc_equilibria package."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.context: Dict[str, Any] = dict(context or {})


class MalformedGameError(UtcEquilibriaError):
    """Raised when a game tree or game document is structurally invalid."""


class PerfectRecallError(UtcEquilibriaError):
    """Raised when a builder needs perfect recall and the game lacks it."""

    def __init__(self, report: Any) -> None:
        super().__init__(
            f"perfect recall violated at infoset {report.infoset!r}",
            {"infoset": report.infoset, "histories": report.histories},
        )
        self.report = report


class DimensionMismatchError(UtcEquilibriaError):
    """Raised when a vector or matrix does not fit its decision problem."""


class InfeasibleStrategyError(UtcEquilibriaError):
    """Raised when a strategy or deviation leaves its polytope beyond tolerance."""

    def __init__(self, message: str, residual: float) -> None:
        super().__init__(f"{message} (residual {residual:.3e})", {"residual": residual})
        self.residual = residual


class EnumerationLimitError(UtcEquilibriaError):
    """Raised when an enumeration would exceed its configured bound."""

    def __init__(self, what: str, count: int, bound: int) -> None:
        super().__init__(
            f"{what}: {count} items exceed the enumeration bound {bound}",
            {"count": count, "bound": bound},
        )
        self.count = count
        self.bound = bound


class FixedPointError(UtcEquilibriaError):
    """Raised when no fixed point within tolerance could be produced."""

    def __init__(self, message: str, best_residual: float) -> None:
        super().__init__(f"{message} (best residual {best_residual:.3e})", {"best_residual": best_residual})
        self.best_residual = best_residual


class ConfigError(UtcEquilibriaError, ValueError):
    """Raised for invalid run or game configuration."""


__all__ = [
    "UtcEquilibriaError",
    "MalformedGameError",
    "PerfectRecallError",
    "DimensionMismatchError",
    "InfeasibleStrategyError",
    "EnumerationLimitError",
    "FixedPointError",
    "ConfigError",
]
