"""Exact piecewise harmonic functions for the generator ``L f = β f' + ½ f''``.

For β ≠ 0 every harmonic function has the form ``γ₀ + γ₁·exp(-2β(x - anchor))``;
for β = 0 the harmonic functions are the affine ones, ``γ₀ + γ₁·(x - anchor)``.
A :class:`PiecewiseHarmonic` stores one such function per breakpoint interval,
plus the two functions used on the outer half-lines, as coefficient arrays so
that evaluation and the Gaussian semigroup can work on whole vectors at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import pairwise
from typing import overload

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq

from .errors import (
    CoincidentAbscissas,
    DiscontinuousPieces,
    IllConditioned,
    InvalidGrid,
    InvalidParams,
    LengthMismatch,
)
from .logging import fields, get_logger

logger = get_logger(__name__)

AFFINE_THRESHOLD = 1e-12
MAX_CONDITION = 1e12
CONTINUITY_RTOL = 1e-12


def _basis(offset: NDArray[np.float64], beta: float) -> NDArray[np.float64]:
    if abs(beta) < AFFINE_THRESHOLD:
        return offset
    with np.errstate(over="ignore"):
        return np.exp(-2.0 * beta * offset)


@dataclass(frozen=True)
class GeneratorParams:
    """Drift, discount rate and exercise mesh, in unit-volatility time.

    Attributes:
        beta: Drift coefficient of the generator.
        rate: Discount rate per unit time, ``>= 0``.
        mesh: Time between exercise dates, ``> 0``.
    """

    beta: float
    rate: float = 0.0
    mesh: float = 1.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.beta):
            raise InvalidParams(f"beta must be finite, got {self.beta}")
        if not (math.isfinite(self.rate) and self.rate >= 0.0):
            raise InvalidParams(f"rate must be finite and >= 0, got {self.rate}")
        if not (math.isfinite(self.mesh) and self.mesh > 0.0):
            raise InvalidParams(f"mesh must be finite and > 0, got {self.mesh}")

    @property
    def is_affine(self) -> bool:
        return abs(self.beta) < AFFINE_THRESHOLD

    @property
    def discount(self) -> float:
        """One-period discount factor ``exp(-rate·mesh)``."""
        return math.exp(-self.rate * self.mesh)

    @classmethod
    def from_black_scholes(
        cls, r: float, delta: float, sigma: float, t: float
    ) -> GeneratorParams:
        """Rescale Black–Scholes inputs to unit volatility.

        With ``τ = σ²t`` the log-price is a Brownian motion with drift
        ``(r - δ)/σ² - ½`` per unit of τ, and the discount rate per unit of τ
        is ``r/σ²``; the discount factor per period is unchanged.
        """
        if not (sigma > 0.0 and t > 0.0):
            raise InvalidParams(f"sigma and t must be > 0, got sigma={sigma}, t={t}")
        variance = sigma * sigma
        return cls(beta=(r - delta) / variance - 0.5, rate=r / variance, mesh=variance * t)


@dataclass(frozen=True)
class HarmonicFunction:
    """``x ↦ γ₀ + γ₁·exp(-2β(x - anchor))``, or ``γ₀ + γ₁·(x - anchor)`` when β ≈ 0."""

    gamma0: float
    gamma1: float
    beta: float
    anchor: float = 0.0

    @classmethod
    def constant(cls, value: float, beta: float) -> HarmonicFunction:
        return cls(gamma0=float(value), gamma1=0.0, beta=beta, anchor=0.0)

    @property
    def is_affine(self) -> bool:
        return abs(self.beta) < AFFINE_THRESHOLD

    @property
    def is_constant(self) -> bool:
        return self.gamma1 == 0.0

    @overload
    def __call__(self, x: float) -> float: ...

    @overload
    def __call__(self, x: NDArray[np.float64]) -> NDArray[np.float64]: ...

    def __call__(self, x: ArrayLike) -> float | NDArray[np.float64]:
        points = np.asarray(x, dtype=float)
        if self.is_constant:
            values = np.full_like(points, self.gamma0)
        else:
            values = self.gamma0 + self.gamma1 * _basis(points - self.anchor, self.beta)
        return float(values) if values.ndim == 0 else values

    def rebased(self, anchor: float) -> HarmonicFunction:
        """Return the same function expressed with a different anchor."""
        if self.is_constant or anchor == self.anchor:
            return replace(self, anchor=anchor)
        if self.is_affine:
            return replace(
                self, gamma0=self.gamma0 + self.gamma1 * (anchor - self.anchor), anchor=anchor
            )
        scale = math.exp(-2.0 * self.beta * (anchor - self.anchor))
        return replace(self, gamma1=self.gamma1 * scale, anchor=anchor)


@dataclass(frozen=True, eq=False)
class SupportGrid:
    """Strictly increasing, finite support abscissas ``a₀ < … < a_m`` with ``m >= 1``."""

    abscissas: NDArray[np.float64]

    def __post_init__(self) -> None:
        points = np.array(self.abscissas, dtype=float)
        if points.ndim != 1 or points.size < 2:
            raise InvalidGrid("a support grid needs at least two abscissas")
        if not np.all(np.isfinite(points)):
            raise InvalidGrid("support abscissas must be finite")
        if np.any(np.diff(points) <= 0.0):
            raise InvalidGrid("support abscissas must be strictly increasing")
        points.setflags(write=False)
        object.__setattr__(self, "abscissas", points)

    @classmethod
    def uniform(cls, lower: float, upper: float, n_points: int) -> SupportGrid:
        return cls(np.linspace(lower, upper, n_points))

    @property
    def m(self) -> int:
        """Number of intervals."""
        return self.abscissas.size - 1

    @property
    def lower(self) -> float:
        return float(self.abscissas[0])

    @property
    def upper(self) -> float:
        return float(self.abscissas[-1])

    def __len__(self) -> int:
        return int(self.abscissas.size)


def _solve_pairs(
    lo: NDArray[np.float64],
    c_lo: NDArray[np.float64],
    hi: NDArray[np.float64],
    c_hi: NDArray[np.float64],
    beta: float,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Coefficients of the harmonic functions through ``(lo, c_lo)`` and ``(hi, c_hi)``.

    Every function is anchored at its ``lo``; ``lo < hi`` elementwise.
    """
    width = hi - lo
    if abs(beta) < AFFINE_THRESHOLD:
        matrices = np.stack(
            [np.ones_like(width), np.zeros_like(width), np.ones_like(width), width], axis=-1
        ).reshape(-1, 2, 2)
        gamma1 = (c_hi - c_lo) / width
        gamma0 = np.array(c_lo, dtype=float)
    else:
        with np.errstate(over="ignore"):
            em1 = np.expm1(-2.0 * beta * width)
        if not np.all(np.isfinite(em1)):
            raise IllConditioned("exponential basis overflows on a support interval")
        ones = np.ones_like(width)
        matrices = np.stack([ones, ones, ones, 1.0 + em1], axis=-1).reshape(-1, 2, 2)
        gamma1 = (c_hi - c_lo) / em1
        gamma0 = c_lo - gamma1
    condition = np.linalg.cond(matrices)
    if not np.all(condition <= MAX_CONDITION):
        worst = float(np.nanmax(np.where(np.isfinite(condition), condition, np.inf)))
        raise IllConditioned(f"harmonic basis system has condition number {worst:.3g}")
    return gamma0, gamma1


def solve_harmonic_through(
    a0: float, c0: float, a1: float, c1: float, params: GeneratorParams
) -> HarmonicFunction:
    """Return the unique harmonic function with ``h(a0) = c0`` and ``h(a1) = c1``.

    The basis is anchored at ``min(a0, a1)``.

    Raises:
        CoincidentAbscissas: If ``a0 == a1``.
        IllConditioned: If the basis system is numerically singular.
    """
    if not all(math.isfinite(v) for v in (a0, c0, a1, c1)):
        raise InvalidParams("interpolation nodes and values must be finite")
    if a0 == a1:
        raise CoincidentAbscissas(f"cannot interpolate through two points at x={a0}")
    (lo, c_lo), (hi, c_hi) = sorted(((a0, c0), (a1, c1)))
    gamma0, gamma1 = _solve_pairs(
        np.array([lo]), np.array([c_lo]), np.array([hi]), np.array([c_hi]), params.beta
    )
    return HarmonicFunction(float(gamma0[0]), float(gamma1[0]), params.beta, lo)


@dataclass(frozen=True, eq=False)
class PiecewiseHarmonic:
    """A continuous function that is harmonic between consecutive breakpoints.

    ``gamma0``, ``gamma1`` and ``anchors`` hold one entry per segment: the left
    half-line ``(-inf, b₀]``, the ``k`` intervals ``(b_i, b_{i+1}]`` and the right
    half-line ``(b_k, +inf)``.

    Attributes:
        breakpoints: Strictly increasing breakpoints ``b₀ < … < b_k``.
        gamma0: Constant coefficients, length ``k + 2``.
        gamma1: Basis coefficients, length ``k + 2``.
        anchors: Basis anchors, length ``k + 2``.
        beta: Generator drift shared by all segments.
        used_bisection: True when a crossing had to be located numerically.
    """

    breakpoints: NDArray[np.float64]
    gamma0: NDArray[np.float64]
    gamma1: NDArray[np.float64]
    anchors: NDArray[np.float64]
    beta: float
    used_bisection: bool = False

    def __post_init__(self) -> None:
        breakpoints = np.array(self.breakpoints, dtype=float)
        arrays = [np.array(a, dtype=float) for a in (self.gamma0, self.gamma1, self.anchors)]
        if breakpoints.ndim != 1 or breakpoints.size < 1:
            raise InvalidGrid("a piecewise harmonic function needs at least one breakpoint")
        if not np.all(np.isfinite(breakpoints)) or np.any(np.diff(breakpoints) <= 0.0):
            raise InvalidGrid("breakpoints must be finite and strictly increasing")
        if any(a.shape != (breakpoints.size + 1,) for a in arrays):
            raise LengthMismatch(
                f"expected {breakpoints.size + 1} segment coefficients per array"
            )
        for name, value in zip(
            ("breakpoints", "gamma0", "gamma1", "anchors"), [breakpoints, *arrays], strict=True
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        gap, tolerance = self._continuity_gaps()
        if np.any(gap > tolerance):
            worst = int(np.argmax(gap - tolerance))
            raise DiscontinuousPieces(
                f"pieces disagree by {gap[worst]:.3g} at x={breakpoints[worst]:.17g}"
            )

    def _continuity_gaps(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        b = self.breakpoints
        left_terms = self.gamma1[:-1] * _basis(b - self.anchors[:-1], self.beta)
        right_terms = self.gamma1[1:] * _basis(b - self.anchors[1:], self.beta)
        left = self.gamma0[:-1] + left_terms
        right = self.gamma0[1:] + right_terms
        magnitude = (
            np.abs(self.gamma0[:-1])
            + np.abs(left_terms)
            + np.abs(self.gamma0[1:])
            + np.abs(right_terms)
        )
        return np.abs(left - right), CONTINUITY_RTOL * (1.0 + magnitude)

    def continuity_gap(self) -> float:
        """Largest disagreement between neighbouring segments at a breakpoint."""
        gap, _ = self._continuity_gaps()
        return float(gap.max())

    @property
    def grid(self) -> SupportGrid:
        return SupportGrid(self.breakpoints)

    @property
    def functions(self) -> list[HarmonicFunction]:
        """All segment functions, left extension first and right extension last."""
        return [
            HarmonicFunction(float(g0), float(g1), self.beta, float(anchor))
            for g0, g1, anchor in zip(self.gamma0, self.gamma1, self.anchors, strict=True)
        ]

    @property
    def pieces(self) -> list[HarmonicFunction]:
        return self.functions[1:-1]

    @property
    def left_ext(self) -> HarmonicFunction:
        return self.functions[0]

    @property
    def right_ext(self) -> HarmonicFunction:
        return self.functions[-1]

    def segment_bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Lower and upper end of every segment, with ``±inf`` for the half-lines."""
        lower = np.concatenate(([-np.inf], self.breakpoints))
        upper = np.concatenate((self.breakpoints, [np.inf]))
        return lower, upper

    @overload
    def __call__(self, x: float) -> float: ...

    @overload
    def __call__(self, x: NDArray[np.float64]) -> NDArray[np.float64]: ...

    def __call__(self, x: ArrayLike) -> float | NDArray[np.float64]:
        points = np.asarray(x, dtype=float)
        # a point equal to a breakpoint belongs to the segment on its left
        segment = np.searchsorted(self.breakpoints, points, side="left")
        values = self.gamma0[segment] + self.gamma1[segment] * _basis(
            points - self.anchors[segment], self.beta
        )
        return float(values) if values.ndim == 0 else values


def evaluate(pw: PiecewiseHarmonic, x: ArrayLike) -> float | NDArray[np.float64]:
    """Evaluate ``pw`` at ``x``; breakpoints take the value of the piece on their left."""
    return pw(np.asarray(x, dtype=float))


def interpolate(
    values: ArrayLike,
    grid: SupportGrid,
    params: GeneratorParams,
) -> PiecewiseHarmonic:
    """Piecewise harmonic interpolation of ``values`` given at the grid abscissas.

    Args:
        values: One value per abscissa.
        grid: The support grid.
        params: Generator parameters (only ``beta`` is used).

    Raises:
        LengthMismatch: If ``values`` does not have one entry per abscissa.
    """
    nodes = np.asarray(values, dtype=float)
    if nodes.shape != (len(grid),):
        raise LengthMismatch(f"expected {len(grid)} values, got shape {nodes.shape}")
    if not np.all(np.isfinite(nodes)):
        raise InvalidParams("interpolation values must be finite")
    a = grid.abscissas
    gamma0, gamma1 = _solve_pairs(a[:-1], nodes[:-1], a[1:], nodes[1:], params.beta)
    anchors = a[:-1]
    # the half-lines continue the outermost pieces
    return PiecewiseHarmonic(
        breakpoints=a,
        gamma0=np.concatenate((gamma0[:1], gamma0, gamma0[-1:])),
        gamma1=np.concatenate((gamma1[:1], gamma1, gamma1[-1:])),
        anchors=np.concatenate((anchors[:1], anchors, anchors[-1:])),
        beta=params.beta,
    )


def _inner_point(lower: float, upper: float) -> float:
    """An interior point of a (possibly unbounded) segment."""
    if math.isinf(lower):
        return upper - 1.0
    if math.isinf(upper):
        return lower + 1.0
    return 0.5 * (lower + upper)


def _crossing(
    func: HarmonicFunction, other: HarmonicFunction, lower: float, upper: float
) -> tuple[float | None, bool]:
    """The point in ``(lower, upper)`` where two harmonic functions cross, if any.

    Two distinct harmonic functions agree in at most one point, so the root is
    unique. Returns the root and whether it had to be found by bracketing.
    """
    rebased = other.rebased(func.anchor)
    d0 = func.gamma0 - rebased.gamma0
    d1 = func.gamma1 - rebased.gamma1

    def difference(x: float) -> float:
        return d0 + d1 * float(_basis(np.asarray(x - func.anchor), func.beta))

    root: float | None = None
    if d1 != 0.0:
        if func.is_affine:
            root = func.anchor - d0 / d1
        elif -d0 / d1 > 0.0:
            root = func.anchor - math.log(-d0 / d1) / (2.0 * func.beta)
    margin = 1e-12 * (1.0 + max(abs(v) for v in (lower, upper) if math.isfinite(v)))
    if root is not None and not (lower + margin < root < upper - margin):
        root = None
    if math.isfinite(lower) and math.isfinite(upper):
        f_lo, f_hi = difference(lower), difference(upper)
        if f_lo * f_hi < 0.0 and root is None:
            root = float(brentq(difference, lower, upper, xtol=1e-14, rtol=4 * np.finfo(float).eps))
            if not lower < root < upper:
                return None, False
            logger.warning(
                "closed-form crossing disagreed with sign change, used bracketing",
                extra=fields(lower=lower, upper=upper, root=root),
            )
            return root, True
    return root, False


def max_with_harmonic(pw: PiecewiseHarmonic, h: HarmonicFunction) -> PiecewiseHarmonic:
    """Exact piecewise harmonic representation of ``x ↦ max(pw(x), h(x))``.

    Within each segment the crossing with ``h`` is inserted as a new
    breakpoint; consecutive segments where ``h`` dominates are merged.
    """
    if not math.isclose(pw.beta, h.beta, rel_tol=1e-12, abs_tol=1e-15):
        raise InvalidParams(f"beta mismatch: {pw.beta} vs {h.beta}")
    lower, upper = pw.segment_bounds()
    breakpoints: list[float] = []
    gamma0: list[float] = []
    gamma1: list[float] = []
    anchors: list[float] = []
    used_bisection = pw.used_bisection
    previous_was_h = False
    for func, lo, hi in zip(pw.functions, lower, upper, strict=True):
        root, bisected = _crossing(func, h, float(lo), float(hi))
        used_bisection = used_bisection or bisected
        cuts = [float(lo), float(hi)] if root is None else [float(lo), root, float(hi)]
        for seg_lo, seg_hi in pairwise(cuts):
            inner = _inner_point(seg_lo, seg_hi)
            keep = func(inner) >= h(inner)
            if not keep and previous_was_h:
                continue
            if math.isfinite(seg_lo):
                breakpoints.append(seg_lo)
            chosen = func if keep else h.rebased(seg_lo if math.isfinite(seg_lo) else seg_hi)
            gamma0.append(chosen.gamma0)
            gamma1.append(chosen.gamma1)
            anchors.append(chosen.anchor)
            previous_was_h = not keep
    if not breakpoints:
        # h dominates everywhere; keep one breakpoint so the representation stays valid
        anchor = float(pw.breakpoints[0])
        rebased = h.rebased(anchor)
        return PiecewiseHarmonic(
            breakpoints=np.array([anchor]),
            gamma0=np.array([rebased.gamma0, rebased.gamma0]),
            gamma1=np.array([rebased.gamma1, rebased.gamma1]),
            anchors=np.array([anchor, anchor]),
            beta=pw.beta,
            used_bisection=used_bisection,
        )
    return PiecewiseHarmonic(
        breakpoints=np.array(breakpoints),
        gamma0=np.array(gamma0),
        gamma1=np.array(gamma1),
        anchors=np.array(anchors),
        beta=pw.beta,
        used_bisection=used_bisection,
    )
