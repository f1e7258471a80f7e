"""Independent reference prices for tests and acceptance runs.

Nothing here uses the harmonic or cubature machinery: European prices come
from the Black–Scholes formula, Bermudan prices from plain backward induction
on a dense log-price grid with the Gaussian kernel integrated by the
trapezoid rule, and the perpetual American bounds from the closed-form free
boundary. Everything is in original units (rates per year, volatility per
square-root year, log-price ``x = ln S``).
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats
from scipy.signal import fftconvolve

from .errors import InvalidParams, NotConverged
from .iteration import FixedPointLoop, IterationConfig, IterationReport, StepStatus
from .logging import fields, get_logger

logger = get_logger(__name__)

OptionKind = Literal["call", "put"]

MIN_POINTS_1D = 1001
MIN_POINTS_2D = 201
MIN_QUAD_POINTS = 8001


def bs_european(
    spot: ArrayLike,
    strike: float,
    r: float,
    delta: float,
    sigma: float,
    T: float,
    kind: OptionKind = "put",
) -> float | NDArray[np.float64]:
    """Black–Scholes price of a European option with continuous dividend yield.

    Args:
        spot: Spot price(s), ``> 0``.
        strike: Strike, ``> 0``.
        r: Risk-free rate.
        delta: Dividend yield.
        sigma: Volatility, ``> 0``.
        T: Time to maturity in years, ``> 0``.
        kind: ``"call"`` or ``"put"``.

    Raises:
        InvalidParams: On nonpositive spot, strike, sigma or T.
    """
    S = np.asarray(spot, dtype=float)
    if np.any(S <= 0.0) or not (strike > 0.0 and sigma > 0.0 and T > 0.0):
        raise InvalidParams("spot, strike, sigma and T must be > 0")
    if kind not in ("call", "put"):
        raise InvalidParams(f"unknown option kind {kind!r}")
    vol = sigma * math.sqrt(T)
    d1 = (np.log(S / strike) + (r - delta + 0.5 * sigma**2) * T) / vol
    d2 = d1 - vol
    carry = S * math.exp(-delta * T)
    discounted = strike * math.exp(-r * T)
    if kind == "call":
        value = carry * stats.norm.cdf(d1) - discounted * stats.norm.cdf(d2)
    else:
        value = discounted * stats.norm.cdf(-d2) - carry * stats.norm.cdf(-d1)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class OracleModel:
    """Black–Scholes dynamics shared by every asset, plus the exercise mesh ``t`` in years."""

    r: float
    delta: float
    sigma: float
    t: float

    def __post_init__(self) -> None:
        if not (self.sigma > 0.0 and self.t > 0.0):
            raise InvalidParams("sigma and t must be > 0")
        if self.r < 0.0:
            raise InvalidParams("r must be >= 0")

    @property
    def discount(self) -> float:
        return math.exp(-self.r * self.t)

    @property
    def log_drift(self) -> float:
        """Mean move of ``ln S`` over one period."""
        return (self.r - self.delta - 0.5 * self.sigma**2) * self.t

    @property
    def log_sd(self) -> float:
        return self.sigma * math.sqrt(self.t)


@dataclass(frozen=True)
class OraclePayoff:
    """Basket call or put on ``Σβᵢ e^{xᵢ}``; one asset when ``betas == (1.0,)``."""

    kind: OptionKind
    strike: float
    betas: tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        if self.kind not in ("call", "put"):
            raise InvalidParams(f"unknown option kind {self.kind!r}")
        if any(b < 0.0 for b in self.betas) or abs(sum(self.betas) - 1.0) > 1e-12:
            raise InvalidParams("basket weights must be nonnegative and sum to one")

    @property
    def dimension(self) -> int:
        return len(self.betas)

    def __call__(self, axes: Sequence[NDArray[np.float64]]) -> NDArray[np.float64]:
        """Payoff on the open mesh spanned by one coordinate array per asset."""
        mesh = np.ix_(*axes)
        basket = sum(b * np.exp(x) for b, x in zip(self.betas, mesh, strict=True))
        basket = np.broadcast_to(basket, tuple(a.size for a in axes))
        return self.strike - basket if self.kind == "put" else basket - self.strike


@dataclass(frozen=True)
class DenseGridSpec:
    """Dense log-price grid used for backward induction.

    Attributes:
        lower: Lower bound of every axis.
        upper: Upper bound of every axis.
        n_points: Odd node count per axis; at least 1001 in one dimension and
            201 in two.
        sd_width: Kernel truncation in standard deviations.
        quad_points: Trapezoid nodes across the truncated kernel, at least
            ``MIN_QUAD_POINTS``.
        dimension: Number of assets.
    """

    lower: float
    upper: float
    n_points: int = 4001
    sd_width: float = 8.0
    quad_points: int = MIN_QUAD_POINTS
    dimension: int = 1

    def __post_init__(self) -> None:
        if not self.lower < self.upper:
            raise InvalidParams(f"grid needs lower < upper, got [{self.lower}, {self.upper}]")
        if self.n_points % 2 == 0:
            raise InvalidParams(f"n_points must be odd, got {self.n_points}")
        if self.dimension not in (1, 2):
            raise InvalidParams("dense grids support one or two assets")
        minimum = MIN_POINTS_1D if self.dimension == 1 else MIN_POINTS_2D
        if self.n_points < minimum:
            raise InvalidParams(
                f"{self.dimension}-D dense grids need at least {minimum} points, "
                f"got {self.n_points}"
            )
        if not self.sd_width > 0.0:
            raise InvalidParams("sd_width must be > 0")
        if self.quad_points < MIN_QUAD_POINTS:
            raise InvalidParams(
                f"quad_points must be >= {MIN_QUAD_POINTS}, got {self.quad_points}"
            )

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.n_points - 1)

    def axis(self) -> NDArray[np.float64]:
        return np.linspace(self.lower, self.upper, self.n_points)

    @classmethod
    def centred(
        cls, strike: float, half_width: float, n_points: int = 4001, dimension: int = 1
    ) -> DenseGridSpec:
        """A grid centred on ``ln K`` so that the middle node sits on the strike."""
        centre = math.log(strike)
        return cls(centre - half_width, centre + half_width, n_points, dimension=dimension)


@dataclass
class DenseGridResult:
    """Node values of a backward induction run."""

    axes: list[NDArray[np.float64]]
    values: NDArray[np.float64]
    n_dates: int | None
    report: IterationReport | None = field(default=None)

    def nodes(self) -> NDArray[np.float64]:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)


def _kernel(
    model: OracleModel, spacing: float, sd_width: float, quad_points: int
) -> NDArray[np.float64]:
    """Weights of the one-period log-price move on the grid offsets ``j·spacing``.

    Each weight integrates the transition density against the hat function of
    its offset, with the trapezoid rule on a sub-grid of the offsets that puts
    at least ``quad_points`` nodes across ``mean ± sd_width·sd``.
    """
    mean, sd = model.log_drift, model.log_sd
    reach = int(math.ceil((abs(mean) + sd_width * sd) / spacing))
    refine = max(1, math.ceil(quad_points * spacing / (2.0 * sd_width * sd)))
    steps = np.arange(-reach * refine, reach * refine + 1)
    z = steps * (spacing / refine)
    mass = stats.norm.pdf(z, loc=mean, scale=sd) * (spacing / refine)
    mass[[0, -1]] *= 0.5
    left, part = np.divmod(steps, refine)
    share = part / refine
    size = 2 * reach + 1
    # the last sub-node sits on the outermost offset with no share to its right
    right = np.minimum(left + 1, reach)
    weights = np.bincount(left + reach, (1.0 - share) * mass, minlength=size)
    weights += np.bincount(right + reach, share * mass, minlength=size)
    return weights / weights.sum()


class _Expectation:
    """Discounted one-period expectation on the dense grid, ``g ∨ 0`` beyond it."""

    def __init__(self, spec: DenseGridSpec, payoff: OraclePayoff, model: OracleModel) -> None:
        self.model = model
        weights = _kernel(model, spec.spacing, spec.sd_width, spec.quad_points)
        self.pad = (weights.size - 1) // 2
        kernel = weights
        for _ in range(spec.dimension - 1):
            kernel = np.multiply.outer(kernel, weights)
        # correlation, since E[f(x + Z)] pairs node i with node i + j
        self.kernel = kernel[(slice(None, None, -1),) * spec.dimension]
        axis = spec.axis()
        padded_axis = spec.lower + spec.spacing * np.arange(-self.pad, spec.n_points + self.pad)
        self.axes = [axis] * spec.dimension
        self.padded = np.maximum(payoff([padded_axis] * spec.dimension), 0.0)
        self.inner = (slice(self.pad, self.pad + spec.n_points),) * spec.dimension

    def __call__(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        extended = self.padded.copy()
        extended[self.inner] = values
        return self.model.discount * fftconvolve(extended, self.kernel, mode="valid")


def dense_dp_bermudan(
    spec: DenseGridSpec,
    payoff: OraclePayoff,
    model: OracleModel,
    n_dates: int | None = None,
    *,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> DenseGridResult:
    """Backward induction for ``n_dates`` exercise dates, or to the perpetual limit.

    Args:
        spec: Dense grid.
        payoff: Option payoff; its dimension must match the grid.
        model: Black–Scholes parameters and exercise mesh.
        n_dates: Number of exercise dates, or None for the perpetual price.
        tol: Sup-norm stopping tolerance in perpetual mode.
        max_iter: Iteration cap in perpetual mode.

    Raises:
        NotConverged: If the perpetual iteration hits ``max_iter``.
    """
    if payoff.dimension != spec.dimension:
        raise InvalidParams(f"{payoff.dimension}-asset payoff on a {spec.dimension}-D grid")
    expectation = _Expectation(spec, payoff, model)
    exercise = payoff(expectation.axes)
    values = np.maximum(exercise, 0.0)

    if n_dates is not None:
        if n_dates < 0:
            raise InvalidParams(f"n_dates must be >= 0, got {n_dates}")
        for _ in range(n_dates):
            values = np.maximum(expectation(values), exercise)
        return DenseGridResult(expectation.axes, values, n_dates)

    loop = FixedPointLoop(
        IterationConfig(tol=tol, max_iter=max_iter, stagnation_window=max_iter),
        name="oracle",
        contraction_bound=model.discount,
    )
    loop.start(kind=payoff.kind, dimension=spec.dimension, n_points=spec.n_points)
    while True:
        updated = np.maximum(expectation(values), exercise)
        status = loop.step(values, updated)
        values = updated
        if status is not StepStatus.CONTINUE:
            break
    result = DenseGridResult(expectation.axes, values, None, loop.report)
    if status is not StepStatus.CONVERGED:
        raise NotConverged(
            f"dense grid iteration stopped after {loop.report.iterations} steps",
            loop.report,
            result,
        )
    logger.info("dense grid perpetual price computed",
                extra=fields(iterations=loop.report.iterations, nodes=values.size))
    return result


def _perpetual_exponents(r: float, sigma: float, delta: float) -> tuple[float, float]:
    """Roots of ``½σ²β(β - 1) + (r - δ)β - r = 0``, negative root first."""
    a = 0.5 * sigma**2
    b = r - delta - a
    root = math.sqrt(b * b + 4.0 * a * r)
    return (-b - root) / (2.0 * a), (-b + root) / (2.0 * a)


def perpetual_american_put_bound(
    spot: ArrayLike, strike: float, r: float, sigma: float, delta: float = 0.0
) -> float | NDArray[np.float64]:
    """Perpetual American put, an upper bound for every perpetual Bermudan put.

    Below the exercise boundary ``S* = Kβ/(β - 1)`` the value is ``K - S``;
    above it ``(K - S*)(S/S*)^β`` with ``β`` the negative root.

    Raises:
        InvalidParams: If ``r <= 0``, ``sigma <= 0`` or ``strike <= 0``.
    """
    if not (r > 0.0 and sigma > 0.0 and strike > 0.0):
        raise InvalidParams("perpetual put needs r, sigma and strike > 0")
    S = np.asarray(spot, dtype=float)
    beta, _ = _perpetual_exponents(r, sigma, delta)
    boundary = strike * beta / (beta - 1.0)
    with np.errstate(divide="ignore"):
        continuation = (strike - boundary) * (S / boundary) ** beta
    value = np.where(S <= boundary, strike - S, continuation)
    return float(value) if value.ndim == 0 else value


def perpetual_american_call_bound(
    spot: ArrayLike, strike: float, r: float, sigma: float, delta: float
) -> float | NDArray[np.float64]:
    """Perpetual American call; needs a positive dividend yield to be finite.

    Raises:
        InvalidParams: If ``delta <= 0``, ``r < 0``, ``sigma <= 0`` or ``strike <= 0``.
    """
    if not (delta > 0.0 and r >= 0.0 and sigma > 0.0 and strike > 0.0):
        raise InvalidParams("perpetual call needs delta, sigma and strike > 0 and r >= 0")
    S = np.asarray(spot, dtype=float)
    _, beta = _perpetual_exponents(r, sigma, delta)
    boundary = strike * beta / (beta - 1.0)
    value = np.where(S >= boundary, S - strike, (boundary - strike) * (S / boundary) ** beta)
    return float(value) if value.ndim == 0 else value
