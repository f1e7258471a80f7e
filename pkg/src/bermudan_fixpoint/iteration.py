"""Bookkeeping shared by the fixed-point pricers.

Both pricers iterate a monotone operator from a start vector and need the
same diagnostics: sup-norm residuals between successive iterates, contraction
ratios, counters for decreases that monotonicity rules out, and a stopping
verdict. :class:`FixedPointLoop` owns that logic so the pricers only supply
the operator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidParams
from .logging import fields, get_logger

logger = get_logger(__name__)

MONOTONICITY_TOL = 1e-10
CONTRACTION_SLACK = 1e-6
RATIO_FLOOR_FACTOR = 10.0

Direction = Literal["up", "down"]


@dataclass(frozen=True)
class IterationConfig:
    """Stopping rule of a fixed-point iteration.

    Attributes:
        tol: Sup-norm tolerance on successive iterates.
        max_iter: Hard iteration cap.
        record_trace: Log every step at DEBUG level.
        stagnation_window: Give up when the residual has not reached a new
            minimum for this many steps.
    """

    tol: float = 1e-10
    max_iter: int = 100_000
    record_trace: bool = False
    stagnation_window: int = 50

    def __post_init__(self) -> None:
        if not (math.isfinite(self.tol) and self.tol > 0.0):
            raise InvalidParams(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise InvalidParams(f"max_iter must be >= 1, got {self.max_iter}")
        if self.stagnation_window < 1:
            raise InvalidParams(f"stagnation_window must be >= 1, got {self.stagnation_window}")


@dataclass(frozen=True)
class IterationStep:
    """Diagnostics of one application of the operator."""

    iteration: int
    residual: float
    ratio: float | None
    monotonicity_violations: int
    min_slack_to_h: float | None


@dataclass
class IterationReport:
    """Per-step diagnostics and the final verdict of a fixed-point run.

    ``contraction_ratios`` only holds ratios whose denominator exceeded
    ``10·tol``; ``monotonicity_violations`` counts node decreases (or
    increases, for runs started from above) beyond ``1e-10``.
    """

    tol: float
    contraction_bound: float | None = None
    steps: list[IterationStep] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = "running"
    monotonicity_violations: int = 0
    contraction_violations: int = 0
    exercise_violations: int = 0

    @property
    def iterations(self) -> int:
        return len(self.steps)

    @property
    def residuals(self) -> list[float]:
        return [step.residual for step in self.steps]

    @property
    def contraction_ratios(self) -> list[float]:
        return [step.ratio for step in self.steps if step.ratio is not None]

    @property
    def final_residual(self) -> float:
        return self.steps[-1].residual if self.steps else math.inf

    @property
    def min_slack_to_h(self) -> float | None:
        slacks = [s.min_slack_to_h for s in self.steps if s.min_slack_to_h is not None]
        return min(slacks) if slacks else None

    @property
    def violations(self) -> int:
        return self.monotonicity_violations + self.contraction_violations + self.exercise_violations

    def summary(self) -> dict[str, Any]:
        """Scalar fields suitable for logging and the run summary."""
        return {
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "iterations": self.iterations,
            "final_residual": self.final_residual if self.steps else None,
            "max_contraction_ratio": max(self.contraction_ratios, default=None),
            "monotonicity_violations": self.monotonicity_violations,
            "contraction_violations": self.contraction_violations,
            "exercise_violations": self.exercise_violations,
            "min_slack_to_h": self.min_slack_to_h,
        }


class StepStatus(StrEnum):
    CONTINUE = "continue"
    CONVERGED = "converged"
    STAGNATED = "stagnated"
    EXHAUSTED = "exhausted"


class FixedPointLoop:
    """Records successive iterates of a monotone operator and decides when to stop.

    Args:
        config: Stopping rule.
        name: Label used in log records.
        direction: ``"up"`` when iterates must not decrease (start below the
            fixed point), ``"down"`` when they must not increase.
        contraction_bound: Known Lipschitz constant of the operator; ratios
            above ``bound + 1e-6`` are counted as violations.
    """

    def __init__(
        self,
        config: IterationConfig,
        *,
        name: str,
        direction: Direction = "up",
        contraction_bound: float | None = None,
    ) -> None:
        self.config = config
        self.name = name
        self.direction = direction
        self.report = IterationReport(tol=config.tol, contraction_bound=contraction_bound)
        self._best_residual = math.inf
        self._best_step = 0

    def start(self, **params: Any) -> None:
        logger.info(
            "%s iteration started",
            self.name,
            extra=fields(tol=self.config.tol, max_iter=self.config.max_iter, **params),
        )

    def step(
        self,
        previous: NDArray[np.float64],
        current: NDArray[np.float64],
        *,
        mask: NDArray[np.bool_] | None = None,
        upper: NDArray[np.float64] | None = None,
    ) -> StepStatus:
        """Record one step and return the verdict.

        Args:
            previous: The iterate the operator was applied to.
            current: The operator's output.
            mask: Nodes on which residuals and counters are measured.
            upper: Harmonic majorant at the nodes, for the slack diagnostic.
        """
        report = self.report
        diff = current - previous
        if mask is not None:
            diff = diff[mask]
        residual = float(np.max(np.abs(diff))) if diff.size else 0.0

        decreases = -diff if self.direction == "up" else diff
        violations = int(np.count_nonzero(decreases > MONOTONICITY_TOL))
        if violations and not report.monotonicity_violations:
            logger.warning(
                "%s iterates are not monotone",
                self.name,
                extra=fields(iteration=report.iterations + 1, nodes=violations),
            )
        report.monotonicity_violations += violations

        ratio = None
        if report.steps and report.steps[-1].residual > RATIO_FLOOR_FACTOR * self.config.tol:
            ratio = residual / report.steps[-1].residual
            bound = report.contraction_bound
            if bound is not None and ratio > bound + CONTRACTION_SLACK:
                report.contraction_violations += 1
                logger.warning(
                    "%s contraction ratio above bound",
                    self.name,
                    extra=fields(iteration=report.iterations + 1, ratio=ratio, bound=bound),
                )

        slack = None
        if upper is not None:
            gap = upper - current
            slack = float(np.min(gap[mask] if mask is not None else gap))

        report.steps.append(
            IterationStep(
                iteration=report.iterations + 1,
                residual=residual,
                ratio=ratio,
                monotonicity_violations=violations,
                min_slack_to_h=slack,
            )
        )
        if self.config.record_trace:
            logger.debug(
                "%s step",
                self.name,
                extra=fields(iteration=report.iterations, residual=residual, ratio=ratio),
            )

        if residual < self.config.tol:
            return self._finish(StepStatus.CONVERGED)
        if residual < self._best_residual:
            self._best_residual = residual
            self._best_step = report.iterations
        elif report.iterations - self._best_step >= self.config.stagnation_window:
            return self._finish(StepStatus.STAGNATED)
        if report.iterations >= self.config.max_iter:
            return self._finish(StepStatus.EXHAUSTED)
        return StepStatus.CONTINUE

    def _finish(self, status: StepStatus) -> StepStatus:
        self.report.converged = status is StepStatus.CONVERGED
        self.report.stop_reason = status.value
        level = logging.INFO if self.report.converged else logging.WARNING
        logger.log(
            level,
            "%s iteration %s", self.name, status.value, extra=fields(**self.report.summary())
        )
        return status


def is_sound_step(
    previous: NDArray[np.float64],
    current: NDArray[np.float64],
    payoff: NDArray[np.float64],
    tol: float = MONOTONICITY_TOL,
) -> bool:
    """Whether one step of a pricing map behaves like a sound algorithm.

    The output must dominate the payoff's positive part and must not fall
    below the input.
    """
    dominates = bool(np.all(np.maximum(current, 0.0) >= np.maximum(payoff, 0.0) - tol))
    increasing = bool(np.all(current >= previous - tol))
    return dominates and increasing
