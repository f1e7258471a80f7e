"""Multi-asset perpetual Bermudan pricing by cubature and monotone iteration.

The averaging operator ``A f = Σ αₖ f(· - xₖ)`` replaces the Gaussian
transition by a few-point cubature rule. Iterating

    D f = max(c · A f, g),   c = e^{-rt},

from ``g ∨ 0`` gives nondecreasing iterates that converge linearly, with
rate ``c``, to the least nonnegative fixed point. Functions live on a
rectangular lattice; queries falling off the lattice use ``g ∨ 0`` exactly.
"""

from __future__ import annotations

import functools
import itertools
import math
from collections.abc import Callable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .errors import (
    DimensionMismatch,
    InvalidOrder,
    InvalidParams,
    InvalidRule,
    InvariantViolation,
    LatticeTooSmall,
    NotConverged,
)
from .iteration import Direction, FixedPointLoop, IterationConfig, IterationReport, StepStatus
from .logging import fields, get_logger
from .settings import RuntimeSettings

logger = get_logger(__name__)

WEIGHT_SUM_TOL = 1e-14
NORMALIZATION_TOL = 1e-12
SNAP_TOL = 1e-9
EXERCISE_TOL = 1e-10
PREVIOUS_EXERCISE_TOL = 1e-9
MAX_HORIZON_STEPS = 25

BasketKind = Literal["put", "call"]
Start = Literal["payoff", "upper"]
OutsideValues = Callable[[NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True, eq=False)
class CubatureRule:
    """Points ``xₖ ∈ ℝᵈ`` with convex weights ``αₖ``.

    Attributes:
        points: Array of shape ``(m, d)``; a 1-D array is read as ``d = 1``.
        weights: Array of shape ``(m,)``, nonnegative and summing to one.
    """

    points: NDArray[np.float64]
    weights: NDArray[np.float64]

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if points.ndim != 2 or points.shape[0] == 0 or points.shape[0] != weights.size:
            raise InvalidRule(
                f"need one weight per point, got points {points.shape} and weights {weights.shape}"
            )
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(weights))):
            raise InvalidRule("cubature points and weights must be finite")
        if np.any(weights < 0.0):
            raise InvalidRule("cubature weights must be nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidRule(f"cubature weights sum to {weights.sum():.17g}, not 1")
        if np.unique(points, axis=0).shape[0] != points.shape[0]:
            raise InvalidRule("cubature points must be pairwise distinct")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def reach(self) -> NDArray[np.float64]:
        """Largest displacement per axis, ``maxₖ |xₖ,ᵢ|``."""
        return np.max(np.abs(self.points), axis=0)

    def mean(self) -> NDArray[np.float64]:
        return self.weights @ self.points

    def second_moment(self) -> NDArray[np.float64]:
        """``Σ αₖ xₖ xₖᵀ``."""
        return (self.points * self.weights[:, None]).T @ self.points

    def moment(self, power: int, axis: int = 0) -> float:
        return float(self.weights @ self.points[:, axis] ** power)


@dataclass(frozen=True, eq=False)
class NormalizedRule(CubatureRule):
    """A rule with ``Σₖ αₖ e^{-xₖ,ᵢ} = 1`` on every axis.

    Under this condition each ``x ↦ e^{xᵢ}`` is invariant under ``A``.

    Attributes:
        shift: The per-axis displacement that was added to the original points.
    """

    shift: NDArray[np.float64]

    def __post_init__(self) -> None:
        super().__post_init__()
        shift = np.array(self.shift, dtype=float).reshape(-1)
        if shift.shape != (self.dimension,):
            raise DimensionMismatch(f"shift has {shift.size} entries for a {self.dimension}-D rule")
        shift.setflags(write=False)
        object.__setattr__(self, "shift", shift)
        residual = np.abs(self.weights @ np.exp(-self.points) - 1.0)
        if np.any(residual > NORMALIZATION_TOL):
            raise InvalidRule(f"rule is not normalized, max defect {residual.max():.3g}")


def _renormalized(weights: NDArray[np.float64]) -> NDArray[np.float64]:
    return weights / weights.sum()


def gauss_hermite_rule(n_points: int, t: float, mu: float = 0.0) -> CubatureRule:
    """One-dimensional Gauss–Hermite rule for ``Normal(μt, t)``; exact to degree ``2n - 1``.

    Raises:
        InvalidOrder: If ``n_points < 1`` or ``t <= 0``.
    """
    if n_points < 1:
        raise InvalidOrder(f"n_points must be >= 1, got {n_points}")
    if not (math.isfinite(t) and t > 0.0):
        raise InvalidOrder(f"t must be > 0, got {t}")
    nodes, weights = hermgauss(n_points)
    points = math.sqrt(2.0 * t) * nodes + mu * t
    return CubatureRule(points.reshape(-1, 1), _renormalized(weights / math.sqrt(math.pi)))


def tensor_rule(rule_1d: CubatureRule, d: int) -> CubatureRule:
    """``d``-fold tensor product of a one-dimensional rule (``mᵈ`` points)."""
    if rule_1d.dimension != 1:
        raise DimensionMismatch(f"tensor_rule needs a 1-D rule, got d={rule_1d.dimension}")
    if d < 1:
        raise InvalidOrder(f"d must be >= 1, got {d}")
    grids = np.meshgrid(*([rule_1d.points[:, 0]] * d), indexing="ij")
    points = np.stack([g.reshape(-1) for g in grids], axis=-1)
    weight_grids = np.meshgrid(*([rule_1d.weights] * d), indexing="ij")
    weights = functools.reduce(np.multiply, weight_grids).reshape(-1)
    return CubatureRule(points, _renormalized(weights))


def degree3_rule(d: int, t: float, mu: float = 0.0) -> CubatureRule:
    """``2d`` points ``μt ± √(dt)·eᵢ`` with weights ``1/(2d)``.

    Matches the Gaussian moments ``Normal(μt, t·I)`` up to degree three.
    """
    if d < 1:
        raise InvalidOrder(f"d must be >= 1, got {d}")
    if not (math.isfinite(t) and t > 0.0):
        raise InvalidOrder(f"t must be > 0, got {t}")
    radius = math.sqrt(d * t)
    axes = np.eye(d) * radius
    points = np.concatenate([axes, -axes]) + mu * t
    return CubatureRule(points, np.full(2 * d, 1.0 / (2 * d)))


def normalize_rule(rule: CubatureRule) -> NormalizedRule:
    """Shift the points by ``δᵢ = ln Σₖ αₖ e^{-yₖ,ᵢ}`` so the rule is normalized.

    Weights, and therefore central moments, are unchanged.
    """
    shift = logsumexp(-rule.points, axis=0, b=rule.weights[:, None])
    return NormalizedRule(rule.points + shift, rule.weights, shift)


@dataclass(frozen=True, eq=False)
class LatticeFunction:
    """Values on a regular rectangular lattice.

    Attributes:
        origin: Coordinates of the first node, one per axis.
        spacing: Step per axis, ``> 0``.
        values: Array whose shape is the lattice extents.
    """

    origin: NDArray[np.float64]
    spacing: NDArray[np.float64]
    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        origin = np.array(self.origin, dtype=float).reshape(-1)
        spacing = np.array(self.spacing, dtype=float).reshape(-1)
        if values.ndim == 0 or origin.size != values.ndim or spacing.size != values.ndim:
            raise DimensionMismatch(
                f"origin/spacing of length {origin.size}/{spacing.size} "
                f"for values of shape {values.shape}"
            )
        if np.any(spacing <= 0.0) or not np.all(np.isfinite(origin)):
            raise InvalidParams("lattice spacing must be > 0 and the origin finite")
        if not np.all(np.isfinite(values)):
            raise InvalidParams("lattice values must be finite")
        for name, array in (("origin", origin), ("spacing", spacing), ("values", values)):
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(int(n) for n in self.values.shape)

    @property
    def dimension(self) -> int:
        return self.values.ndim

    @property
    def axes(self) -> list[NDArray[np.float64]]:
        return [
            o + h * np.arange(n)
            for o, h, n in zip(self.origin, self.spacing, self.extents, strict=True)
        ]

    def nodes(self) -> NDArray[np.float64]:
        """Node coordinates, shape ``extents + (d,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def with_values(self, values: ArrayLike) -> LatticeFunction:
        array = np.asarray(values, dtype=float)
        if array.shape != self.extents:
            raise DimensionMismatch(f"expected values of shape {self.extents}, got {array.shape}")
        return LatticeFunction(self.origin, self.spacing, array)


@dataclass(frozen=True)
class LatticeSpec:
    """Bounds and spacing of a lattice plus its safe-interior policy.

    Attributes:
        lower: Lower bound per axis.
        upper: Upper bound per axis.
        spacing: Step per axis.
        interior_steps: Safe-interior margin in units of the rule reach.
            The default is a fixed one-reach margin, so the interior never
            shrinks and LatticeTooSmall only fires for lattices narrower
            than two reaches.
        grow_interior: Add one more reach to the margin after every
            iteration, so after n steps the margin is
            ``(interior_steps + n)`` reaches. This tracks the nodes whose
            values no off-lattice read can have reached.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    spacing: tuple[float, ...]
    interior_steps: int = 1
    grow_interior: bool = False

    def __post_init__(self) -> None:
        if not (len(self.lower) == len(self.upper) == len(self.spacing) >= 1):
            raise DimensionMismatch("lower, upper and spacing need one entry per axis")
        for lo, hi, h in zip(self.lower, self.upper, self.spacing, strict=True):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi and h > 0.0):
                raise InvalidParams(f"invalid lattice axis [{lo}, {hi}] step {h}")
        if self.interior_steps < 0:
            raise InvalidParams("interior_steps must be >= 0")

    @classmethod
    def uniform(
        cls,
        lower: float,
        upper: float,
        spacing: float,
        dimension: int,
        *,
        interior_steps: int = 1,
        grow_interior: bool = False,
    ) -> LatticeSpec:
        return cls(
            (lower,) * dimension,
            (upper,) * dimension,
            (spacing,) * dimension,
            interior_steps=interior_steps,
            grow_interior=grow_interior,
        )

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(
            int(math.floor((hi - lo) / h + 1e-9)) + 1
            for lo, hi, h in zip(self.lower, self.upper, self.spacing, strict=True)
        )

    def build(self, values: ArrayLike | float = 0.0) -> LatticeFunction:
        """A lattice function on this lattice, constant or from an array."""
        data = np.broadcast_to(np.asarray(values, dtype=float), self.extents)
        return LatticeFunction(np.array(self.lower), np.array(self.spacing), data)


def default_lattice_spec(
    strike: float,
    discount: float,
    t: float,
    dimension: int,
    *,
    tol: float = 1e-10,
    spacing: float = 0.02,
) -> LatticeSpec:
    """Lattice ``[ln K - 6√(t·n), ln K + 2√(t·n)]`` per axis.

    ``n = ⌈ln tol / ln c⌉`` estimates the iteration count. It is capped at
    ``MAX_HORIZON_STEPS`` (25); for slower discounts the lattice no longer
    covers ``n`` rule reaches on the left. The returned spec uses the fixed
    one-reach interior margin.
    """
    if not strike > 0.0:
        raise InvalidParams(f"default lattice needs a positive strike, got {strike}")
    if not 0.0 < discount < 1.0:
        raise InvalidParams(f"discount must lie in (0, 1), got {discount}")
    n_est = min(math.ceil(math.log(tol) / math.log(discount)), MAX_HORIZON_STEPS)
    width = math.sqrt(t * max(n_est, 1))
    centre = math.log(strike)
    return LatticeSpec.uniform(centre - 6.0 * width, centre + 2.0 * width, spacing, dimension)


def _outer_and(masks: Sequence[NDArray[np.bool_]]) -> NDArray[np.bool_]:
    """Outer AND of one boolean mask per axis, shaped like the lattice."""
    return np.logical_and.reduce(np.meshgrid(*masks, indexing="ij"))


def interior_mask(
    lattice: LatticeFunction, rule: CubatureRule, steps: float
) -> NDArray[np.bool_]:
    """Nodes at least ``steps · reach`` away from the lattice boundary on every axis."""
    masks = []
    for n, h, reach in zip(lattice.extents, lattice.spacing, rule.reach, strict=True):
        index = np.arange(n)
        margin = steps * reach - 1e-12
        masks.append((index * h >= margin) & ((n - 1 - index) * h >= margin))
    return _outer_and(masks)


@dataclass(frozen=True, eq=False)
class BasketPayoff:
    """Basket put ``K - Σβᵢe^{xᵢ}`` or call ``Σβᵢe^{xᵢ} - K``, discounted by ``c`` per period.

    Attributes:
        strike: ``K >= 0``.
        betas: Convex basket weights.
        kind: ``"put"`` or ``"call"``.
        discount: ``c = e^{-rt}`` in ``(0, 1)``.
    """

    strike: float
    betas: NDArray[np.float64]
    kind: BasketKind = "put"
    discount: float = math.exp(-0.05)

    def __post_init__(self) -> None:
        betas = np.array(self.betas, dtype=float).reshape(-1)
        if betas.size == 0 or np.any(betas < 0.0) or abs(betas.sum() - 1.0) > 1e-12:
            raise InvalidParams("basket weights must be nonnegative and sum to one")
        if not (math.isfinite(self.strike) and self.strike >= 0.0):
            raise InvalidParams(f"strike must be >= 0, got {self.strike}")
        if not 0.0 < self.discount < 1.0:
            raise InvalidParams(f"discount must lie in (0, 1), got {self.discount}")
        if self.kind not in ("put", "call"):
            raise InvalidParams(f"unknown basket kind {self.kind!r}")
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)

    @classmethod
    def from_rate(
        cls, strike: float, betas: Sequence[float], r: float, t: float, kind: BasketKind = "put"
    ) -> BasketPayoff:
        return cls(strike, np.asarray(betas, dtype=float), kind, math.exp(-r * t))

    @property
    def dimension(self) -> int:
        return int(self.betas.size)

    def basket(self, coords: ArrayLike) -> NDArray[np.float64]:
        return np.exp(np.asarray(coords, dtype=float)) @ self.betas

    def __call__(self, coords: ArrayLike) -> NDArray[np.float64]:
        """Payoff at log-price coordinates of shape ``(..., d)``."""
        basket = self.basket(coords)
        return self.strike - basket if self.kind == "put" else basket - self.strike

    def positive_part(self, coords: ArrayLike) -> NDArray[np.float64]:
        return np.maximum(self(coords), 0.0)

    def upper_bound(self, coords: ArrayLike) -> NDArray[np.float64]:
        """The A-invariant majorant: ``K`` for puts, ``Σβᵢe^{xᵢ}`` for calls."""
        if self.kind == "put":
            return np.full(np.shape(coords)[:-1], self.strike)
        return self.basket(coords)

    def on_lattice(self, lattice: LatticeFunction) -> NDArray[np.float64]:
        return self(lattice.nodes())


def check_basket_subharmonicity(r: float, betas: Sequence[float] | NDArray[np.float64]) -> bool:
    """Sufficient condition ``r >= max βᵢ / 2`` for the basket payoff to be subharmonic."""
    weights = np.asarray(betas, dtype=float)
    if weights.size == 0 or np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-12:
        raise InvalidParams("basket weights must be nonnegative and sum to one")
    return bool(r >= weights.max() / 2.0)


def _shifted(values: NDArray[np.float64], offsets: Sequence[int]) -> NDArray[np.float64]:
    """``values[i + offset]`` with indices clamped to the lattice."""
    index = np.ix_(
        *[np.clip(np.arange(n) + o, 0, n - 1) for n, o in zip(values.shape, offsets, strict=True)]
    )
    return values[index]


def _average_at_point(
    f: LatticeFunction, point: NDArray[np.float64], outside: OutsideValues | None
) -> NDArray[np.float64]:
    """``f(· - point)`` at every node, multilinear between nodes."""
    steps = -point / f.spacing
    base = np.floor(steps)
    frac = steps - base
    snap_up = frac > 1.0 - SNAP_TOL
    base[snap_up] += 1.0
    frac[snap_up] = 0.0
    frac[frac < SNAP_TOL] = 0.0
    offsets = base.astype(int)

    result = np.zeros(f.extents)
    for corner in itertools.product((0, 1), repeat=f.dimension):
        weight = math.prod(
            fi if ci else 1.0 - fi for fi, ci in zip(frac, corner, strict=True)
        )
        if weight == 0.0:
            continue
        result += weight * _shifted(f.values, offsets + np.asarray(corner))

    if outside is not None:
        inside_axes = [
            (np.arange(n) + s >= -SNAP_TOL) & (np.arange(n) + s <= n - 1 + SNAP_TOL)
            for n, s in zip(f.extents, steps, strict=True)
        ]
        inside = _outer_and(inside_axes)
        if not np.all(inside):
            off = np.nonzero(~inside)
            axes = f.axes
            coords = np.stack([axes[i][off[i]] - point[i] for i in range(f.dimension)], axis=-1)
            result[off] = outside(coords)
    return result


def apply_A(
    f: LatticeFunction,
    rule: CubatureRule,
    outside: OutsideValues | None = None,
    *,
    threads: int | None = None,
) -> LatticeFunction:
    """``(A f)(x) = Σₖ αₖ f̂(x - xₖ)`` at every lattice node.

    Args:
        f: The lattice function.
        rule: Cubature rule of the same dimension.
        outside: Exact values for queries that leave the lattice; when None
            the nearest boundary values are used.
        threads: Worker threads over rule points; defaults to the
            ``BERMUDAN_FIXPOINT_THREADS`` setting. Contributions are summed
            in rule order so the result does not depend on this.

    Raises:
        DimensionMismatch: If the rule and lattice dimensions differ.
    """
    if rule.dimension != f.dimension:
        raise DimensionMismatch(f"{rule.dimension}-D rule on a {f.dimension}-D lattice")
    workers = threads if threads is not None else RuntimeSettings.from_env().threads

    def contribution(k: int) -> NDArray[np.float64]:
        return rule.weights[k] * _average_at_point(f, rule.points[k], outside)

    if workers > 1 and rule.size > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(contribution, range(rule.size)))
    else:
        parts = [contribution(k) for k in range(rule.size)]
    total = np.zeros(f.extents)
    for part in parts:
        total += part
    return f.with_values(total)


def apply_D(
    f: LatticeFunction,
    rule: CubatureRule,
    payoff: BasketPayoff,
    *,
    threads: int | None = None,
) -> LatticeFunction:
    """``D f = max(c · A f, g)`` nodewise, with off-lattice queries valued at ``g ∨ 0``."""
    if payoff.dimension != f.dimension:
        raise DimensionMismatch(f"{payoff.dimension}-asset payoff on a {f.dimension}-D lattice")
    averaged = apply_A(f, rule, payoff.positive_part, threads=threads)
    return f.with_values(np.maximum(payoff.discount * averaged.values, payoff.on_lattice(f)))


def _exercise_masks(
    previous: NDArray[np.float64], current: NDArray[np.float64], payoff_values: NDArray[np.float64]
) -> tuple[NDArray[np.bool_], NDArray[np.bool_]]:
    now = np.abs(current - payoff_values) <= EXERCISE_TOL
    before = np.abs(previous - payoff_values) <= PREVIOUS_EXERCISE_TOL
    return now, before


def exercise_region(
    q_n: LatticeFunction,
    q_next: LatticeFunction,
    payoff: BasketPayoff,
    interior: NDArray[np.bool_] | None = None,
) -> NDArray[np.bool_]:
    """Nodes where ``q_next`` equals the payoff.

    Raises:
        InvariantViolation: If such a node was not already in the exercise
            region of ``q_n`` (restricted to ``interior`` when given).
    """
    now, before = _exercise_masks(q_n.values, q_next.values, payoff.on_lattice(q_next))
    escaped = now & ~before
    if interior is not None:
        escaped &= interior
    if np.any(escaped):
        raise InvariantViolation(
            f"exercise region grew at {int(escaped.sum())} nodes between iterations"
        )
    return now


def iterate_perpetual(
    payoff: BasketPayoff,
    rule: CubatureRule,
    lattice: LatticeSpec,
    config: IterationConfig | None = None,
    *,
    start: Start = "payoff",
    threads: int | None = None,
) -> tuple[LatticeFunction, IterationReport]:
    """Iterate ``D`` from ``g ∨ 0`` (or from the majorant) to its fixed point.

    Residuals, contraction ratios and monotonicity counters are measured on
    the whole lattice; the clamped operator is itself monotone and
    ``c``-Lipschitz there. The exercise-region nesting check runs on the safe
    interior, whose margin grows each step when ``lattice.grow_interior``.

    Raises:
        DimensionMismatch: If payoff, rule and lattice dimensions differ.
        LatticeTooSmall: If the safe interior is or becomes empty.
        NotConverged: With the report and the last iterate attached.
    """
    config = config or IterationConfig()
    if not (payoff.dimension == rule.dimension == lattice.dimension):
        raise DimensionMismatch(
            f"payoff d={payoff.dimension}, rule d={rule.dimension}, lattice d={lattice.dimension}"
        )
    if not isinstance(rule, NormalizedRule):
        logger.warning("cubature rule is not normalized; the majorant is not A-invariant")

    q = lattice.build()
    payoff_values = payoff.on_lattice(q)
    if start == "payoff":
        q = q.with_values(np.maximum(payoff_values, 0.0))
        direction: Direction = "up"
    else:
        q = q.with_values(payoff.upper_bound(q.nodes()))
        direction = "down"
    upper = payoff.upper_bound(q.nodes())

    interior = interior_mask(q, rule, lattice.interior_steps)
    if not np.any(interior):
        raise LatticeTooSmall("lattice has no safe interior for this rule")

    loop = FixedPointLoop(config, name="cubature", direction=direction,
                          contraction_bound=payoff.discount)
    loop.start(kind=payoff.kind, dimension=payoff.dimension, nodes=int(np.prod(q.extents)),
               rule_points=rule.size, discount=payoff.discount, start=start)
    while True:
        updated = apply_D(q, rule, payoff, threads=threads)
        if direction == "up":
            now, before = _exercise_masks(q.values, updated.values, payoff_values)
            escaped = int(np.count_nonzero(now & ~before & interior))
            if escaped:
                loop.report.exercise_violations += escaped
                logger.warning("exercise region grew", extra=fields(nodes=escaped))
        status = loop.step(q.values, updated.values, upper=upper)
        q = updated
        if status is not StepStatus.CONTINUE:
            break
        if lattice.grow_interior:
            interior = interior_mask(q, rule, lattice.interior_steps + loop.report.iterations)
            if not np.any(interior):
                raise LatticeTooSmall(
                    f"safe interior emptied after {loop.report.iterations} iterations"
                )
    if status is not StepStatus.CONVERGED:
        raise NotConverged(
            f"cubature iteration {status.value} after {loop.report.iterations} steps "
            f"(residual {loop.report.final_residual:.3g}, tol {config.tol:.3g})",
            loop.report,
            q,
        )
    return q, loop.report


def export_rows(
    q: LatticeFunction, payoff: BasketPayoff
) -> Iterator[tuple[float, ...]]:
    """One row per node in C order: coordinates, price, payoff, exercise flag."""
    nodes = q.nodes().reshape(-1, q.dimension)
    prices = q.values.reshape(-1)
    payoffs = payoff(nodes)
    exercise = np.abs(prices - payoffs) <= EXERCISE_TOL
    for coords, price, value, flag in zip(nodes, prices, payoffs, exercise, strict=True):
        yield (*(float(c) for c in coords), float(price), float(value), float(flag))
