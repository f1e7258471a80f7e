"""Exception hierarchy for bermudan_fixpoint.

Every error raised by the library derives from :class:`PricingError`.
Errors caused by invalid input also derive from :class:`ValueError` so that
callers can treat them like any other bad-argument error.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .iteration import IterationReport


class PricingError(Exception):
    """Base class for all bermudan_fixpoint errors."""


class InvalidGrid(PricingError, ValueError):
    """Support abscissas are not finite and strictly increasing."""


class CoincidentAbscissas(PricingError, ValueError):
    """A harmonic interpolation was requested through two equal abscissas."""


class IllConditioned(PricingError, ValueError):
    """The 2x2 harmonic basis system is numerically singular."""


class LengthMismatch(PricingError, ValueError):
    """A value vector does not match the grid it is attached to."""


class DiscontinuousPieces(PricingError, ValueError):
    """Adjacent harmonic pieces disagree at a shared breakpoint."""


class InvalidParams(PricingError, ValueError):
    """Model or generator parameters are outside their admissible range."""


class InvalidInterval(PricingError, ValueError):
    """An integration interval has lower > upper or a nonpositive variance."""


class SetupInvalid(PricingError, ValueError):
    """A payoff setup violates c <= g <= h or h >= 0."""


class HarmonicityViolated(SetupInvalid):
    """Built-in setups need r == delta so that the payoff is harmonic."""


class GridBoundViolated(SetupInvalid):
    """The support grid does not respect the strike bound of a built-in setup."""


class InvalidOrder(PricingError, ValueError):
    """A cubature rule was requested with an invalid order, dimension or time."""


class InvalidRule(PricingError, ValueError):
    """Cubature weights are not convex or points are not distinct."""


class DimensionMismatch(PricingError, ValueError):
    """Rule, lattice and payoff dimensions disagree."""


class LatticeTooSmall(PricingError):
    """The safe interior of a lattice became empty."""


class GridsIncomparable(PricingError, ValueError):
    """Two result files cannot be matched node by node."""


class ConfigError(PricingError, ValueError):
    """A job configuration file is missing, unreadable or inconsistent."""


class InvariantViolation(PricingError):
    """A property guaranteed by construction failed during a run."""


class NotConverged(PricingError):
    """A fixed-point iteration stopped before reaching its tolerance.

    Attributes:
        report: The iteration report accumulated up to the stop.
        result: The last iterate, in the pricer's native result type.
    """

    def __init__(self, message: str, report: IterationReport, result: Any = None) -> None:
        super().__init__(message)
        self.report = report
        self.result = result
