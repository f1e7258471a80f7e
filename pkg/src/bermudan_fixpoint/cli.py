"""Command-line front end.

``bermudan-fixpoint run job.toml`` prices one job and writes a values CSV, a
per-iteration report CSV and a JSON summary. ``bermudan-fixpoint compare a.csv
b.csv`` matches two values files node by node and reports the price gaps.

Exit codes: 0 success, 1 an unexpected internal error, 2 the iteration did
not converge, 3 invalid configuration or input, 4 an invariant was violated
during the run.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import time
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray
from rich.console import Console
from rich.table import Table
from scipy.spatial import cKDTree

from . import __version__
from .bermudan_harmonic_pricer import (
    make_call_setup,
    make_put_setup,
    price_bermudan,
    price_perpetual,
)
from .config import JobConfig, load_config
from .cubature_pricer import (
    BasketPayoff,
    LatticeSpec,
    NormalizedRule,
    default_lattice_spec,
    degree3_rule,
    export_rows,
    gauss_hermite_rule,
    iterate_perpetual,
    normalize_rule,
    tensor_rule,
)
from .errors import (
    GridsIncomparable,
    InvariantViolation,
    LatticeTooSmall,
    NotConverged,
    PricingError,
)
from .harmonic_core import SupportGrid
from .iteration import IterationReport
from .logging import fields, get_logger, setup_logging
from .oracle import DenseGridResult, DenseGridSpec, OracleModel, OraclePayoff, dense_dp_bermudan

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NOT_CONVERGED = 2
EXIT_INVALID = 3
EXIT_INVARIANT = 4

EXERCISE_TOL = 1e-10
DEFAULT_FLOOR = 0.01

Row = tuple[float, ...]


@dataclass
class RunOutcome:
    """What a pricer run produced, ready to be written out."""

    dimension: int
    rows: list[Row]
    report: IterationReport | None = None
    details: dict[str, Any] = field(default_factory=dict)


def _format(value: float) -> str:
    # shortest repr that round-trips, so identical runs give identical files
    return repr(float(value))


def _node_rows(
    nodes: NDArray[np.float64], prices: NDArray[np.float64], payoffs: NDArray[np.float64]
) -> list[Row]:
    exercise = np.abs(prices - payoffs) <= EXERCISE_TOL
    return [
        (*(float(c) for c in coords), float(p), float(g), float(e))
        for coords, p, g, e in zip(nodes, prices, payoffs, exercise, strict=True)
    ]


def _run_harmonic(config: JobConfig) -> RunOutcome:
    assert config.grid is not None
    params = config.model.generator_params()
    grid = SupportGrid.uniform(config.grid.lower, config.grid.upper, config.grid.n_points)
    make_setup = make_put_setup if config.payoff.kind == "put" else make_call_setup
    setup = make_setup(config.payoff.strike, grid, params)
    iteration = config.iteration
    nodes = grid.abscissas
    payoffs = setup.payoff(nodes)
    if iteration.n_dates is not None:
        values, _ = price_bermudan(iteration.n_dates, setup, grid, params)
        return RunOutcome(1, _node_rows(nodes[:, None], values, payoffs),
                          details={"n_dates": iteration.n_dates})
    try:
        interpolant, report = price_perpetual(
            setup, grid, params, iteration.iteration_config(), start=iteration.start
        )
    except NotConverged as e:
        e.result = _node_rows(nodes[:, None], e.result(nodes), payoffs)
        raise
    values = interpolant(nodes)
    return RunOutcome(1, _node_rows(nodes[:, None], values, payoffs), report,
                      {"used_bisection": interpolant.used_bisection})


def _build_rule(config: JobConfig) -> tuple[NormalizedRule, float]:
    variance = config.model.sigma**2 * config.model.t
    d = config.dimension
    if config.rule.family == "degree3":
        rule = degree3_rule(d, variance)
    else:
        rule = gauss_hermite_rule(config.rule.order, variance)
        if d > 1:
            rule = tensor_rule(rule, d)
    return normalize_rule(rule), variance


def _run_cubature(config: JobConfig) -> RunOutcome:
    rule, variance = _build_rule(config)
    payoff = BasketPayoff(
        config.payoff.strike,
        np.asarray(config.payoff.betas),
        config.payoff.kind,
        config.model.discount,
    )
    iteration = config.iteration
    if config.lattice is not None:
        lower, upper, spacing = config.lattice.axis_values(config.dimension)
        lattice = LatticeSpec(
            lower, upper, spacing,
            interior_steps=config.lattice.interior_steps,
            grow_interior=config.lattice.grow_interior,
        )
    else:
        lattice = default_lattice_spec(
            config.payoff.strike, payoff.discount, variance, config.dimension, tol=iteration.tol
        )
    try:
        q, report = iterate_perpetual(
            payoff, rule, lattice, iteration.iteration_config(), start=iteration.start
        )
    except NotConverged as e:
        e.result = list(export_rows(e.result, payoff))
        raise
    details = {"rule_points": rule.size, "rule_shift": rule.shift.tolist(), "extents": q.extents}
    return RunOutcome(config.dimension, list(export_rows(q, payoff)), report, details)


def _run_oracle(config: JobConfig) -> RunOutcome:
    section, strike = config.oracle, config.payoff.strike
    centre = math.log(strike) if strike > 0.0 else 0.0
    lower = section.lower if section.lower is not None else centre - section.half_width
    upper = section.upper if section.upper is not None else centre + section.half_width
    spec = DenseGridSpec(
        lower, upper, section.n_points, section.sd_width,
        quad_points=section.quad_points, dimension=config.dimension,
    )
    payoff = OraclePayoff(config.payoff.kind, strike, tuple(config.payoff.betas))
    model = OracleModel(config.model.r, config.model.delta, config.model.sigma, config.model.t)
    try:
        result = dense_dp_bermudan(
            spec, payoff, model, config.iteration.n_dates,
            tol=config.iteration.tol, max_iter=config.iteration.max_iter,
        )
    except NotConverged as e:
        e.result = _grid_rows(e.result, payoff, config.dimension)
        raise
    rows = _grid_rows(result, payoff, config.dimension)
    return RunOutcome(config.dimension, rows, result.report, {"n_points": spec.n_points})


def _grid_rows(result: DenseGridResult, payoff: OraclePayoff, dimension: int) -> list[Row]:
    nodes = result.nodes().reshape(-1, dimension)
    payoffs = payoff(result.axes).reshape(-1)
    return _node_rows(nodes, result.values.reshape(-1), payoffs)


RUNNERS = {"harmonic": _run_harmonic, "cubature": _run_cubature, "oracle": _run_oracle}


def write_values(path: Path, dimension: int, rows: Iterable[Sequence[float]]) -> None:
    """Values CSV: ``x0..x{d-1}, price, payoff, exercise``."""
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([*(f"x{i}" for i in range(dimension)), "price", "payoff", "exercise"])
        for row in rows:
            *coords, price, payoff, exercise = row
            writer.writerow([*(_format(c) for c in coords), _format(price), _format(payoff),
                             int(exercise)])


def write_report(path: Path, report: IterationReport | None) -> None:
    """Report CSV: one row per iteration."""
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["iteration", "residual", "ratio", "monotonicity_violations", "min_slack_to_h"]
        )
        for step in report.steps if report is not None else []:
            writer.writerow([
                step.iteration,
                _format(step.residual),
                "" if step.ratio is None else _format(step.ratio),
                step.monotonicity_violations,
                "" if step.min_slack_to_h is None else _format(step.min_slack_to_h),
            ])


def run_job(config_path: str | Path, output_dir: str | Path | None = None) -> int:
    """Run one job file and write its artifacts.

    Args:
        config_path: TOML job file.
        output_dir: Overrides ``[output].directory``.

    Returns:
        Exit code (see module docstring).
    """
    started = time.perf_counter()
    summary: dict[str, Any] = {"config": str(config_path), "version": __version__}
    config: JobConfig | None = None
    outcome: RunOutcome | None = None
    report: IterationReport | None = None
    exit_code = EXIT_OK
    try:
        config = load_config(config_path)
        summary["name"] = config.job.name
        summary["method"] = config.job.method
        summary["parameters"] = config.model_dump(mode="json")
        outcome = RUNNERS[config.job.method](config)
        report = outcome.report
        if report is not None and report.violations:
            exit_code = EXIT_INVARIANT
            summary["error"] = {
                "type": "InvariantViolation",
                "message": f"{report.violations} invariant violations recorded during the run",
            }
    except NotConverged as e:
        exit_code, report = EXIT_NOT_CONVERGED, e.report
        summary["error"] = {"type": type(e).__name__, "message": str(e)}
        if config is not None and isinstance(e.result, list):
            outcome = RunOutcome(config.dimension, e.result, e.report)
    except InvariantViolation as e:
        exit_code = EXIT_INVARIANT
        summary["error"] = {"type": type(e).__name__, "message": str(e)}
    except LatticeTooSmall as e:
        exit_code = EXIT_INVALID
        summary["error"] = {"type": type(e).__name__, "message": str(e)}
    except PricingError as e:
        # input-validation errors are also ValueErrors
        exit_code = EXIT_INVALID if isinstance(e, ValueError) else EXIT_INVARIANT
        summary["error"] = {"type": type(e).__name__, "message": str(e)}
    except Exception as e:
        logger.exception("job failed with an unexpected error")
        exit_code = EXIT_FAILURE
        summary["error"] = {"type": type(e).__name__, "message": str(e)}

    if "error" in summary:
        logger.error(summary["error"]["message"], extra=fields(**summary["error"]))

    names = config.output if config is not None else None
    if output_dir is not None:
        directory = Path(output_dir)
    elif names is not None:
        directory = names.directory
    else:
        # no usable config: leave the summary beside the job file
        directory = Path(config_path).parent
    directory.mkdir(parents=True, exist_ok=True)
    if names is not None:
        summary_path = directory / names.summary
    elif output_dir is not None:
        summary_path = directory / "summary.json"
    else:
        summary_path = directory / f"{Path(config_path).stem}.summary.json"
    if outcome is not None and names is not None:
        write_values(directory / names.values, outcome.dimension, outcome.rows)
        summary["details"] = outcome.details
    if report is not None and names is not None:
        write_report(directory / names.report, report)
        summary.update(report.summary())
    summary.setdefault("converged", False if exit_code == EXIT_NOT_CONVERGED else None)
    summary["exit_code"] = exit_code
    summary["wall_time"] = time.perf_counter() - started
    summary_path.write_text(json.dumps(summary, indent=2, default=str) + "\n")

    _print_summary(summary)
    return exit_code


def _print_summary(summary: dict[str, Any]) -> None:
    table = Table(title=f"{summary.get('name', 'job')} ({summary.get('method', '?')})")
    table.add_column("field", style="cyan")
    table.add_column("value")
    for key in ("exit_code", "converged", "iterations", "final_residual",
                "max_contraction_ratio", "monotonicity_violations", "wall_time"):
        if summary.get(key) is not None:
            table.add_row(key, str(summary[key]))
    if "error" in summary:
        table.add_row("error", summary["error"]["message"], style="red")
    Console().print(table)


def _read_values(path: Path) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    try:
        with path.open(newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader if row]
    except (OSError, StopIteration, ValueError) as e:
        raise GridsIncomparable(f"cannot read values file {path}: {e}") from e
    coords = [i for i, name in enumerate(header) if name.startswith("x")]
    if "price" not in header or not coords or not rows:
        raise GridsIncomparable(f"{path} is not a values file")
    data = np.asarray(rows)
    return data[:, coords], data[:, header.index("price")]


def compare(
    path_a: str | Path, path_b: str | Path, floor: float = DEFAULT_FLOOR
) -> dict[str, Any]:
    """Match every node of ``a`` to its nearest node of ``b`` and measure price gaps.

    Only nodes of ``a`` inside the bounding box of ``b`` are matched; gaps are
    measured where the matched price of ``b`` exceeds ``floor``.

    Raises:
        GridsIncomparable: On different dimensions or disjoint grids.
    """
    coords_a, prices_a = _read_values(Path(path_a))
    coords_b, prices_b = _read_values(Path(path_b))
    if coords_a.shape[1] != coords_b.shape[1]:
        raise GridsIncomparable(
            f"cannot compare a {coords_a.shape[1]}-D grid with a {coords_b.shape[1]}-D grid"
        )
    low, high = coords_b.min(axis=0) - 1e-12, coords_b.max(axis=0) + 1e-12
    overlap = np.all((coords_a >= low) & (coords_a <= high), axis=1)
    if not np.any(overlap):
        raise GridsIncomparable("the two grids do not overlap")
    distance, index = cKDTree(coords_b).query(coords_a[overlap])
    a, b = prices_a[overlap], prices_b[index]
    keep = b > floor
    absolute = np.abs(a[keep] - b[keep])
    relative = absolute / np.abs(b[keep])
    return {
        "a": str(path_a),
        "b": str(path_b),
        "floor": floor,
        "matched_nodes": int(overlap.sum()),
        "compared_nodes": int(keep.sum()),
        "max_match_distance": float(distance.max()),
        "max_abs_gap": float(absolute.max()) if absolute.size else 0.0,
        "mean_abs_gap": float(absolute.mean()) if absolute.size else 0.0,
        "max_rel_gap": float(relative.max()) if relative.size else 0.0,
        "mean_rel_gap": float(relative.mean()) if relative.size else 0.0,
    }


def run_compare(
    path_a: str | Path, path_b: str | Path, floor: float, output: str | Path | None
) -> int:
    try:
        result = compare(path_a, path_b, floor)
    except GridsIncomparable as e:
        logger.error(str(e))
        return EXIT_INVALID
    if output is not None:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(json.dumps(result, indent=2) + "\n")
    table = Table(title="comparison")
    table.add_column("metric", style="cyan")
    table.add_column("value")
    for key, value in result.items():
        table.add_row(key, str(value))
    Console().print(table)
    return EXIT_OK


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="bermudan-fixpoint",
        description="Bermudan and perpetual Bermudan prices by monotone fixed-point iteration.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default=None,
        help="Console and file log level (default INFO, DEBUG when $DEBUG is set)",
    )
    parser.add_argument("--log-file", type=Path, default=None, help="Structured JSON log file")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Price one job file")
    run.add_argument("config", type=Path, help="TOML job file")
    run.add_argument("--output-dir", type=Path, default=None,
                     help="Directory for the artifacts (overrides [output].directory)")

    cmp = subparsers.add_parser("compare", help="Compare two values CSV files")
    cmp.add_argument("a", type=Path, help="Values CSV to check")
    cmp.add_argument("b", type=Path, help="Reference values CSV")
    cmp.add_argument("--floor", type=float, default=DEFAULT_FLOOR,
                     help="Ignore nodes whose reference price is at or below this value")
    cmp.add_argument("--output", type=Path, default=None, help="Write the comparison as JSON")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    """Main entry point for CLI usage."""
    args = parse_args(argv)
    setup_logging(level=args.log_level, log_file=args.log_file)
    if args.command == "run":
        return run_job(args.config, args.output_dir)
    return run_compare(args.a, args.b, args.floor, args.output)
