"""Closed-form Gaussian semigroup on piecewise harmonic functions.

``P_t f(x) = E[f(x + Z)]`` with ``Z ~ Normal(μt, t)``. Every segment of a
:class:`~bermudan_fixpoint.harmonic_core.PiecewiseHarmonic` is a constant plus
an exponential (or affine) term, so its contribution is a truncated Gaussian
moment with a closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import erfc

from .errors import InvalidInterval, InvalidParams
from .harmonic_core import AFFINE_THRESHOLD, GeneratorParams, PiecewiseHarmonic

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SemigroupParams:
    """Drift and elapsed time of the Gaussian transition, unit volatility.

    Attributes:
        mu: Drift per unit time.
        t: Elapsed time, ``> 0``.
    """

    mu: float
    t: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mu):
            raise InvalidParams(f"mu must be finite, got {self.mu}")
        if not (math.isfinite(self.t) and self.t > 0.0):
            raise InvalidParams(f"t must be finite and > 0, got {self.t}")

    @property
    def variance(self) -> float:
        return self.t

    @classmethod
    def from_generator(cls, params: GeneratorParams) -> SemigroupParams:
        """The semigroup matching a generator: drift ``β`` over one exercise mesh."""
        return cls(mu=params.beta, t=params.mesh)


def gaussian_cdf(x: ArrayLike) -> float | NDArray[np.float64]:
    """Standard normal CDF via the complementary error function."""
    values = 0.5 * erfc(-np.asarray(x, dtype=float) / _SQRT2)
    return float(values) if np.ndim(values) == 0 else values


def _gaussian_pdf(x: NDArray[np.float64]) -> NDArray[np.float64]:
    with np.errstate(over="ignore"):
        return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def _mass_between(lower: NDArray[np.float64], upper: NDArray[np.float64]) -> NDArray[np.float64]:
    """``Φ(upper) - Φ(lower)`` evaluated on the smaller tail."""
    right_tail = lower > 0.0
    with np.errstate(invalid="ignore"):
        direct = 0.5 * erfc(-upper / _SQRT2) - 0.5 * erfc(-lower / _SQRT2)
        mirrored = 0.5 * erfc(lower / _SQRT2) - 0.5 * erfc(upper / _SQRT2)
    return np.maximum(np.where(right_tail, mirrored, direct), 0.0)


def _exp_moment(
    lam: NDArray[np.float64] | float,
    lower: NDArray[np.float64],
    upper: NDArray[np.float64],
    mean: NDArray[np.float64],
    variance: float,
    log_shift: NDArray[np.float64] | float = 0.0,
) -> NDArray[np.float64]:
    """``exp(log_shift)·E[e^{λY}; lower < Y <= upper]`` for ``Y ~ Normal(mean, variance)``.

    The prefactor and the Gaussian mass are combined in log space so that a
    huge prefactor times a vanishing mass does not overflow.
    """
    sd = math.sqrt(variance)
    centre = mean + lam * variance
    mass = _mass_between((lower - centre) / sd, (upper - centre) / sd)
    log_prefactor = lam * mean + 0.5 * lam * lam * variance + log_shift
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        combined = np.exp(log_prefactor + np.log(mass))
    return np.where(mass > 0.0, combined, 0.0)


def partial_expectation_exp(
    lam: float, lower: float, upper: float, mean: float, variance: float
) -> float:
    """``E[e^{λZ}·1{lower <= Z <= upper}]`` for ``Z ~ Normal(mean, variance)``.

    Args:
        lam: Exponent coefficient.
        lower: Lower bound, ``-inf`` allowed.
        upper: Upper bound, ``+inf`` allowed.
        mean: Mean of ``Z``.
        variance: Variance of ``Z``, ``> 0``.

    Raises:
        InvalidInterval: If ``lower > upper`` or ``variance <= 0``.

    Examples:
        >>> round(partial_expectation_exp(1.0, -math.inf, math.inf, 0.0, 1.0), 6)
        1.648721
    """
    if lower > upper:
        raise InvalidInterval(f"lower bound {lower} exceeds upper bound {upper}")
    if not variance > 0.0:
        raise InvalidInterval(f"variance must be > 0, got {variance}")
    value = _exp_moment(
        lam, np.asarray(lower, dtype=float), np.asarray(upper, dtype=float),
        np.asarray(mean, dtype=float), variance,
    )
    return float(value)


def apply_semigroup(
    pw: PiecewiseHarmonic, params: SemigroupParams, x: ArrayLike
) -> float | NDArray[np.float64]:
    """Evaluate ``P_t pw`` at ``x`` in closed form.

    The sum runs over every segment of ``pw`` including both half-lines. For
    the exponential basis ``e^{-2β(y - anchor)}`` each segment contributes a
    truncated log-normal moment with ``λ = -2β``; for the affine basis the
    truncated first moment of the Gaussian.
    """
    points = np.asarray(x, dtype=float)
    mean = points.reshape(-1, 1) + params.mu * params.t
    variance = params.variance
    sd = math.sqrt(variance)
    lower, upper = pw.segment_bounds()
    gamma0, gamma1, anchors = pw.gamma0, pw.gamma1, pw.anchors

    std_lower = (lower - mean) / sd
    std_upper = (upper - mean) / sd
    mass = _mass_between(std_lower, std_upper)
    total = mass @ gamma0

    active = gamma1 != 0.0
    if np.any(active):
        lo, hi, anc, g1 = lower[active], upper[active], anchors[active], gamma1[active]
        if abs(pw.beta) < AFFINE_THRESHOLD:
            m_active = mass[:, active]
            first_moment = (mean - anc) * m_active + sd * (
                _gaussian_pdf(std_lower[:, active]) - _gaussian_pdf(std_upper[:, active])
            )
            total = total + first_moment @ g1
        else:
            lam = -2.0 * pw.beta
            moment = _exp_moment(lam, lo, hi, mean, variance, log_shift=-lam * anc)
            total = total + moment @ g1
    values = total.reshape(points.shape)
    return float(values) if values.ndim == 0 else values
