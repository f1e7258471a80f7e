"""One-dimensional Bermudan pricing by piecewise harmonic fixed-point iteration.

The pricing map on support values ``f`` is

    K f = max(e^{-rt} · P_t(max(I(f), c)), g)   evaluated at the support nodes,

where ``I`` is piecewise harmonic interpolation, ``c`` a harmonic lower bound
of the payoff on the grid hull and ``P_t`` the Gaussian semigroup. Prices for
``n`` exercise dates are ``Kⁿ(g ∨ 0)``; the perpetual price is the limit.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal, cast

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    GridBoundViolated,
    HarmonicityViolated,
    InvalidParams,
    LengthMismatch,
    NotConverged,
    SetupInvalid,
)
from .gaussian_semigroup import SemigroupParams, apply_semigroup
from .harmonic_core import (
    GeneratorParams,
    HarmonicFunction,
    PiecewiseHarmonic,
    SupportGrid,
    interpolate,
    max_with_harmonic,
)
from .iteration import Direction, FixedPointLoop, IterationConfig, IterationReport, StepStatus
from .logging import fields, get_logger

logger = get_logger(__name__)

PayoffKind = Literal["call", "put", "custom"]
Payoff = Callable[[NDArray[np.float64]], NDArray[np.float64]]
Start = Literal["payoff", "upper"]

SETUP_TOL = 1e-10
ADMISSIBLE_TOL = 1e-9
# r == delta means beta == -1/2 after the unit-volatility rescale
BLACK_SCHOLES_BETA = -0.5
_FINE_MESH_POINTS = 4097
_WIDE_MARGIN = 20.0


@dataclass(frozen=True)
class PayoffSetup:
    """Payoff ``g`` with a harmonic lower bound ``c`` and harmonic majorant ``h``.

    Attributes:
        kind: ``"call"``, ``"put"`` or ``"custom"``.
        strike: Strike price ``K >= 0``.
        g: Payoff as a function of log-price.
        c: Harmonic function with ``c <= g`` on the grid hull.
        h: Nonnegative harmonic function with ``g <= h`` and ``c <= h`` on ℝ.
    """

    kind: PayoffKind
    strike: float
    g: Payoff
    c: HarmonicFunction
    h: HarmonicFunction

    def payoff(self, x: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(self.g(np.asarray(x, dtype=float)), dtype=float)

    def start_values(self, grid: SupportGrid, start: Start = "payoff") -> NDArray[np.float64]:
        """``g ∨ 0`` or the majorant ``h`` at the support nodes."""
        nodes = grid.abscissas
        if start == "payoff":
            return np.maximum(self.payoff(nodes), 0.0)
        if start == "upper":
            return np.asarray(self.h(nodes), dtype=float)
        raise InvalidParams(f"unknown start {start!r}")


def _tolerance(reference: NDArray[np.float64]) -> NDArray[np.float64]:
    return SETUP_TOL * (1.0 + np.abs(reference))


def validate_setup(setup: PayoffSetup, grid: SupportGrid) -> None:
    """Check ``c <= g`` on the grid hull, and ``g <= h``, ``c <= h``, ``h >= 0`` widely.

    Raises:
        SetupInvalid: Naming the first relation that fails.
    """
    hull = np.union1d(np.linspace(grid.lower, grid.upper, _FINE_MESH_POINTS), grid.abscissas)
    wide = np.union1d(
        np.linspace(grid.lower - _WIDE_MARGIN, grid.upper + _WIDE_MARGIN, 4 * _FINE_MESH_POINTS),
        hull,
    )
    g_hull, c_hull = setup.payoff(hull), np.asarray(setup.c(hull))
    if np.any(c_hull > g_hull + _tolerance(g_hull)):
        raise SetupInvalid("lower bound c exceeds the payoff g on the grid hull")
    g_wide = setup.payoff(wide)
    c_wide, h_wide = np.asarray(setup.c(wide)), np.asarray(setup.h(wide))
    if np.any(g_wide > h_wide + _tolerance(h_wide)):
        raise SetupInvalid("payoff g exceeds the majorant h")
    if np.any(c_wide > h_wide + _tolerance(h_wide)):
        raise SetupInvalid("lower bound c exceeds the majorant h")
    if np.any(h_wide < -SETUP_TOL):
        raise SetupInvalid("majorant h takes negative values")


def _sup_beyond(gap: HarmonicFunction, end: float, side: Literal["left", "right"]) -> float:
    """Supremum of the harmonic ``gap`` over the half-line that starts at ``end``."""
    at_end = float(gap(end))
    if gap.is_constant:
        return at_end
    if gap.is_affine:
        rising = gap.gamma1 > 0.0 if side == "right" else gap.gamma1 < 0.0
        return math.inf if rising else at_end
    # exp(-2β(x - anchor)) vanishes at -inf for β < 0 and at +inf for β > 0
    if (gap.beta < 0.0) == (side == "left"):
        return max(at_end, gap.gamma0)
    return math.inf if gap.gamma1 > 0.0 else at_end


def _beyond_gap(
    piece: HarmonicFunction, majorant: HarmonicFunction, tol: float
) -> HarmonicFunction:
    upper = majorant.rebased(piece.anchor)
    slope = piece.gamma1 - upper.gamma1
    if abs(slope) <= tol * (1.0 + abs(piece.gamma1) + abs(upper.gamma1)):
        slope = 0.0
    return HarmonicFunction(piece.gamma0 - upper.gamma0, slope, piece.beta, piece.anchor)


def check_admissible(
    values: ArrayLike,
    setup: PayoffSetup,
    grid: SupportGrid,
    params: GeneratorParams,
    *,
    tol: float = ADMISSIBLE_TOL,
) -> PiecewiseHarmonic:
    """Check that the interpolant of ``values`` is subharmonic with ``c <= I(f) <= h``.

    ``c`` is required on the grid hull and ``h`` on all of ℝ, including the
    half-lines where the interpolant continues its outermost pieces. Between
    nodes both relations follow from the node values, since the difference of
    two harmonic functions is monotone.

    Returns:
        The interpolant of ``values``.

    Raises:
        SetupInvalid: Naming the first relation that fails.
        LengthMismatch: If ``values`` does not match the grid.
    """
    nodes = np.asarray(values, dtype=float)
    interpolant = interpolate(nodes, grid, params)
    a = grid.abscissas
    slack = tol * (1.0 + np.abs(nodes))
    if np.any(nodes < np.asarray(setup.c(a)) - slack):
        raise SetupInvalid("node values fall below the lower bound c")
    if np.any(nodes > np.asarray(setup.h(a)) + slack):
        raise SetupInvalid("node values exceed the majorant h")
    pieces = interpolant.pieces
    continued = np.array([piece(a[i + 2]) for i, piece in enumerate(pieces[:-1])])
    if np.any(continued > nodes[2:] + slack[2:]):
        raise SetupInvalid("node values are not subharmonic")
    for side, piece, end in (
        ("left", interpolant.left_ext, grid.lower),
        ("right", interpolant.right_ext, grid.upper),
    ):
        gap = _beyond_gap(piece, setup.h, tol)
        level = tol * (1.0 + abs(piece(end)) + abs(piece.gamma0))
        if _sup_beyond(gap, end, cast(Literal["left", "right"], side)) > level:
            raise SetupInvalid(f"interpolant exceeds the majorant h on the {side} half-line")
    return interpolant


def _require_black_scholes_harmonicity(params: GeneratorParams) -> None:
    if abs(params.beta - BLACK_SCHOLES_BETA) > 1e-12:
        raise HarmonicityViolated(
            "built-in call/put setups require r == delta (generator drift -1/2 after "
            f"rescaling), got beta={params.beta:.12g}"
        )


def make_call_setup(strike: float, grid: SupportGrid, params: GeneratorParams) -> PayoffSetup:
    """Call ``g = e^x - K`` with ``c = e^{a₀} - K`` and ``h = a_h + e^x``.

    Raises:
        HarmonicityViolated: Unless ``r == delta``.
        GridBoundViolated: If ``a₀ < ln K``.
    """
    if not (math.isfinite(strike) and strike >= 0.0):
        raise InvalidParams(f"strike must be >= 0, got {strike}")
    _require_black_scholes_harmonicity(params)
    if strike > 0.0 and grid.lower < math.log(strike):
        raise GridBoundViolated(
            f"call setups need a0 >= ln K = {math.log(strike):.6g}, got a0={grid.lower:.6g}"
        )
    beta = params.beta
    c0 = math.exp(grid.lower) - strike
    return PayoffSetup(
        kind="call",
        strike=strike,
        g=HarmonicFunction(-strike, 1.0, beta),
        c=HarmonicFunction.constant(c0, beta),
        h=HarmonicFunction(max(0.0, -strike, c0), 1.0, beta),
    )


def make_put_setup(strike: float, grid: SupportGrid, params: GeneratorParams) -> PayoffSetup:
    """Put ``g = K - e^x`` with ``c = K - e^{a_m}`` and ``h = K``.

    Raises:
        HarmonicityViolated: Unless ``r == delta``.
        GridBoundViolated: If ``a_m > ln K``.
    """
    if not (math.isfinite(strike) and strike >= 0.0):
        raise InvalidParams(f"strike must be >= 0, got {strike}")
    _require_black_scholes_harmonicity(params)
    if strike == 0.0 or grid.upper > math.log(strike):
        bound = math.log(strike) if strike > 0.0 else -math.inf
        raise GridBoundViolated(
            f"put setups need a_m <= ln K = {bound:.6g}, got a_m={grid.upper:.6g}"
        )
    beta = params.beta
    return PayoffSetup(
        kind="put",
        strike=strike,
        g=HarmonicFunction(strike, -1.0, beta),
        c=HarmonicFunction.constant(strike - math.exp(grid.upper), beta),
        h=HarmonicFunction.constant(strike, beta),
    )


def continuation(
    values: ArrayLike,
    setup: PayoffSetup,
    grid: SupportGrid,
    params: GeneratorParams,
) -> NDArray[np.float64]:
    """Discounted expectation ``e^{-rt}·P_t(max(I(values), c))`` at the support nodes."""
    interpolant = interpolate(values, grid, params)
    lifted = max_with_harmonic(interpolant, setup.c)
    expected = apply_semigroup(lifted, SemigroupParams.from_generator(params), grid.abscissas)
    return params.discount * np.asarray(expected)


def operator_K(
    values: ArrayLike,
    setup: PayoffSetup,
    grid: SupportGrid,
    params: GeneratorParams,
    *,
    validate: bool = True,
) -> NDArray[np.float64]:
    """Apply the pricing map once to support values.

    Args:
        values: Current values at the support nodes.
        setup: Payoff with its harmonic bounds.
        grid: Support grid.
        params: Generator parameters.
        validate: Check the setup and the admissibility of ``values`` first; loops
            validate once and pass False.

    Raises:
        SetupInvalid: If the setup bounds do not hold or ``values`` is not admissible
            (see :func:`check_admissible`).
        LengthMismatch: If ``values`` does not match the grid.
    """
    current = np.asarray(values, dtype=float)
    if current.shape != (len(grid),):
        raise LengthMismatch(f"expected {len(grid)} values, got shape {current.shape}")
    if validate:
        validate_setup(setup, grid)
        check_admissible(current, setup, grid, params)
    held = continuation(current, setup, grid, params)
    return np.maximum(held, setup.payoff(grid.abscissas))


def price_bermudan(
    n_dates: int,
    setup: PayoffSetup,
    grid: SupportGrid,
    params: GeneratorParams,
) -> tuple[NDArray[np.float64], PiecewiseHarmonic]:
    """Price with ``n_dates`` exercise opportunities: ``Kⁿ(g ∨ 0)``.

    ``n_dates = 0`` returns ``g ∨ 0`` at the nodes.

    Returns:
        The node values and their piecewise harmonic interpolant.
    """
    if n_dates < 0:
        raise InvalidParams(f"n_dates must be >= 0, got {n_dates}")
    validate_setup(setup, grid)
    values = setup.start_values(grid)
    for _ in range(n_dates):
        values = operator_K(values, setup, grid, params, validate=False)
    logger.info(
        "bermudan price computed",
        extra=fields(kind=setup.kind, n_dates=n_dates, nodes=len(grid), max_value=values.max()),
    )
    return values, interpolate(values, grid, params)


def price_perpetual(
    setup: PayoffSetup,
    grid: SupportGrid,
    params: GeneratorParams,
    config: IterationConfig | None = None,
    *,
    start: Start | ArrayLike = "payoff",
) -> tuple[PiecewiseHarmonic, IterationReport]:
    """Iterate the pricing map to its fixed point.

    Starting from ``g ∨ 0`` the iterates increase to the minimal nonnegative
    fixed point; starting from ``h`` they decrease to a fixed point above it.

    Args:
        setup: Payoff with its harmonic bounds.
        grid: Support grid.
        params: Generator parameters.
        config: Stopping rule, defaults to :class:`IterationConfig`.
        start: ``"payoff"``, ``"upper"`` or explicit admissible node values.

    Raises:
        SetupInvalid: If explicit start values are not admissible.
        NotConverged: With the report and the last interpolant attached.
    """
    config = config or IterationConfig()
    validate_setup(setup, grid)
    if isinstance(start, str):
        values = setup.start_values(grid, cast(Start, start))
        direction: Direction = "down" if start == "upper" else "up"
    else:
        values = np.asarray(start, dtype=float)
        if values.shape != (len(grid),):
            raise LengthMismatch(f"expected {len(grid)} start values, got {values.shape}")
        check_admissible(values, setup, grid, params)
        direction = "up"
    upper = np.asarray(setup.h(grid.abscissas), dtype=float)

    loop = FixedPointLoop(config, name="harmonic", direction=direction)
    loop.start(kind=setup.kind, nodes=len(grid), beta=params.beta, rate=params.rate,
               mesh=params.mesh, start=start if isinstance(start, str) else "custom")
    while True:
        updated = operator_K(values, setup, grid, params, validate=False)
        status = loop.step(values, updated, upper=upper)
        values = updated
        if status is not StepStatus.CONTINUE:
            break
    interpolant = interpolate(values, grid, params)
    if status is not StepStatus.CONVERGED:
        raise NotConverged(
            f"harmonic iteration {status.value} after {loop.report.iterations} steps "
            f"(residual {loop.report.final_residual:.3g}, tol {config.tol:.3g})",
            loop.report,
            interpolant,
        )
    return interpolant, loop.report
