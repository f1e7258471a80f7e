"""Tests for the one-dimensional harmonic pricer."""

import math

import numpy as np
import pytest
from numpy.typing import NDArray

from bermudan_fixpoint.bermudan_harmonic_pricer import (
    PayoffSetup,
    check_admissible,
    continuation,
    make_call_setup,
    make_put_setup,
    operator_K,
    price_bermudan,
    price_perpetual,
    validate_setup,
)
from bermudan_fixpoint.errors import (
    GridBoundViolated,
    HarmonicityViolated,
    LengthMismatch,
    NotConverged,
    SetupInvalid,
)
from bermudan_fixpoint.harmonic_core import (
    GeneratorParams,
    HarmonicFunction,
    PiecewiseHarmonic,
    SupportGrid,
)
from bermudan_fixpoint.iteration import IterationConfig, is_sound_step
from bermudan_fixpoint.oracle import (
    DenseGridSpec,
    OracleModel,
    OraclePayoff,
    bs_european,
    dense_dp_bermudan,
    perpetual_american_put_bound,
)


@pytest.fixture
def fast_params() -> GeneratorParams:
    """Discount e^{-0.1} per period keeps perpetual runs to a few hundred steps."""
    return GeneratorParams.from_black_scholes(r=0.2, delta=0.2, sigma=1.0, t=0.5)


@pytest.fixture
def fast_grid() -> SupportGrid:
    """61 nodes on [ln 0.05, ln 1]."""
    return SupportGrid.uniform(math.log(0.05), 0.0, 61)


class TestSetups:
    """Tests for the built-in call and put setups."""

    def test_put_bounds(self) -> None:
        """The put setup has c = K - e^{a_m} and h = K."""
        grid = SupportGrid.uniform(-2.0, 0.0, 11)
        setup = make_put_setup(1.0, grid, GeneratorParams(-0.5))

        assert setup.kind == "put"
        assert setup.c.gamma0 == 0.0
        assert setup.c.is_constant
        assert setup.h(5.0) == 1.0
        np.testing.assert_allclose(setup.payoff(grid.abscissas), 1.0 - np.exp(grid.abscissas))
        validate_setup(setup, grid)

    def test_call_bounds(self) -> None:
        """The call setup has c = e^{a0} - K and h growing like e^x."""
        grid = SupportGrid.uniform(math.log(2.0), 1.5, 11)
        setup = make_call_setup(1.0, grid, GeneratorParams(-0.5))

        assert setup.c.gamma0 == pytest.approx(1.0)
        assert setup.h.gamma0 == pytest.approx(1.0)
        assert setup.h(0.0) == pytest.approx(2.0)
        validate_setup(setup, grid)

    def test_put_grid_above_strike(self) -> None:
        """A put grid reaching above ln K is rejected."""
        with pytest.raises(GridBoundViolated):
            make_put_setup(1.0, SupportGrid.uniform(-1.0, 0.1, 5), GeneratorParams(-0.5))

    def test_put_zero_strike(self) -> None:
        """A put needs a positive strike."""
        with pytest.raises(GridBoundViolated):
            make_put_setup(0.0, SupportGrid.uniform(-1.0, 0.0, 5), GeneratorParams(-0.5))

    def test_call_grid_below_strike(self) -> None:
        """A call grid starting below ln K is rejected."""
        with pytest.raises(GridBoundViolated):
            make_call_setup(1.0, SupportGrid.uniform(-0.1, 1.0, 5), GeneratorParams(-0.5))

    @pytest.mark.parametrize("make", [make_put_setup, make_call_setup])
    def test_rate_must_equal_dividend(self, make) -> None:
        """Built-in setups require r == delta."""
        params = GeneratorParams.from_black_scholes(0.05, 0.0, 1.0, 1.0)
        with pytest.raises(HarmonicityViolated):
            make(1.0, SupportGrid.uniform(0.0, 0.0 + 1e-3, 5), params)

    def test_harmonicity_error_is_a_setup_error(self) -> None:
        """HarmonicityViolated is a SetupInvalid and a ValueError."""
        assert issubclass(HarmonicityViolated, SetupInvalid)
        assert issubclass(SetupInvalid, ValueError)

    def test_lower_bound_above_payoff(self) -> None:
        """A lower bound above the payoff is rejected."""
        grid = SupportGrid.uniform(-2.0, 0.0, 11)
        setup = PayoffSetup(
            kind="custom",
            strike=1.0,
            g=HarmonicFunction(1.0, -1.0, -0.5),
            c=HarmonicFunction.constant(0.5, -0.5),
            h=HarmonicFunction.constant(1.0, -0.5),
        )
        with pytest.raises(SetupInvalid, match="lower bound c exceeds the payoff"):
            validate_setup(setup, grid)

    def test_payoff_above_majorant(self) -> None:
        """A payoff above the majorant is rejected."""
        grid = SupportGrid.uniform(-2.0, 0.0, 11)
        setup = PayoffSetup(
            kind="custom",
            strike=1.0,
            g=HarmonicFunction(1.0, -1.0, -0.5),
            c=HarmonicFunction.constant(0.0, -0.5),
            h=HarmonicFunction.constant(0.5, -0.5),
        )
        with pytest.raises(SetupInvalid, match="payoff g exceeds the majorant"):
            validate_setup(setup, grid)


class TestOneStep:
    """With one exercise date left the price is max(European, payoff)."""

    def test_put_matches_black_scholes(self) -> None:
        """One date on a put gives max(European put, payoff)."""
        params = GeneratorParams.from_black_scholes(0.05, 0.05, 1.0, 1.0)
        grid = SupportGrid.uniform(math.log(0.2), 0.0, 101)
        setup = make_put_setup(1.0, grid, params)

        values, interpolant = price_bermudan(1, setup, grid, params)

        spot = np.exp(grid.abscissas)
        european = bs_european(spot, 1.0, 0.05, 0.05, 1.0, 1.0, kind="put")
        np.testing.assert_allclose(values, np.maximum(european, 1.0 - spot), rtol=1e-9, atol=1e-12)
        assert isinstance(interpolant, PiecewiseHarmonic)

    def test_call_matches_black_scholes(self) -> None:
        """One date on a call gives max(European call, payoff)."""
        params = GeneratorParams.from_black_scholes(0.05, 0.05, 1.0, 1.0)
        grid = SupportGrid.uniform(0.0, math.log(5.0), 101)
        setup = make_call_setup(1.0, grid, params)

        values, _ = price_bermudan(1, setup, grid, params)

        spot = np.exp(grid.abscissas)
        european = bs_european(spot, 1.0, 0.05, 0.05, 1.0, 1.0, kind="call")
        np.testing.assert_allclose(values, np.maximum(european, spot - 1.0), rtol=1e-9, atol=1e-12)

    def test_continuation_is_discounted_expectation(self) -> None:
        """The continuation of g ∨ 0 is the European price."""
        params = GeneratorParams.from_black_scholes(0.05, 0.05, 1.0, 1.0)
        grid = SupportGrid.uniform(math.log(0.2), 0.0, 101)
        setup = make_put_setup(1.0, grid, params)

        held = continuation(setup.start_values(grid), setup, grid, params)

        european = bs_european(np.exp(grid.abscissas), 1.0, 0.05, 0.05, 1.0, 1.0, kind="put")
        np.testing.assert_allclose(held, european, rtol=1e-9, atol=1e-12)


def _hinge_pair(
    rng: np.random.Generator, grid: SupportGrid
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Node values of ``u <= v``, each a sum of put hinges in ``y = e^x`` with ``v(0) < 1``."""
    y = np.exp(grid.abscissas)
    n_hinges = int(rng.integers(1, 5))
    kinks = rng.uniform(y[1], y[-2], n_hinges)
    slopes = rng.uniform(0.1, 1.0, n_hinges)
    slopes *= rng.uniform(0.2, 0.95) / float(slopes @ kinks)
    hinges = np.maximum(kinks[:, None] - y[None, :], 0.0) * slopes[:, None]
    shares = rng.uniform(0.0, 1.0, n_hinges)
    return shares @ hinges, hinges.sum(axis=0)


class TestAdmissible:
    """Tests for check_admissible."""

    def test_payoff_and_majorant_are_admissible(
        self, bs_params: GeneratorParams, put_grid: SupportGrid
    ) -> None:
        """Both starting points of the iteration pass."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        for start in ("payoff", "upper"):
            interpolant = check_admissible(
                setup.start_values(put_grid, start), setup, put_grid, bs_params
            )
            assert isinstance(interpolant, PiecewiseHarmonic)

    def test_hinges_are_admissible(
        self, rng: np.random.Generator, bs_params: GeneratorParams, put_grid: SupportGrid
    ) -> None:
        """Convex put hinges below the strike pass."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        u, v = _hinge_pair(rng, put_grid)
        check_admissible(u, setup, put_grid, bs_params)
        check_admissible(v, setup, put_grid, bs_params)

    def test_random_values_rejected(
        self, rng: np.random.Generator, bs_params: GeneratorParams, put_grid: SupportGrid
    ) -> None:
        """Unstructured values in [0, h] are not subharmonic."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        with pytest.raises(SetupInvalid, match="not subharmonic"):
            check_admissible(rng.uniform(0.0, 1.0, len(put_grid)), setup, put_grid, bs_params)

    def test_below_lower_bound(self, bs_params: GeneratorParams) -> None:
        """Values below c on the hull are rejected."""
        grid = SupportGrid.uniform(-1.0, -0.5, 11)
        setup = make_put_setup(1.0, grid, bs_params)
        values = np.full(len(grid), setup.c.gamma0 - 0.1)
        with pytest.raises(SetupInvalid, match="below the lower bound"):
            check_admissible(values, setup, grid, bs_params)

    def test_above_majorant_at_nodes(
        self, bs_params: GeneratorParams, put_grid: SupportGrid
    ) -> None:
        """Values above h at a node are rejected."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        with pytest.raises(SetupInvalid, match="exceed the majorant"):
            check_admissible(np.full(len(put_grid), 1.5), setup, put_grid, bs_params)

    def test_left_half_line_above_majorant(
        self, bs_params: GeneratorParams, put_grid: SupportGrid
    ) -> None:
        """A steep left end whose continuation climbs above h at y = 0 is rejected."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        y = np.exp(put_grid.abscissas)
        values = np.maximum(0.8 - 3.0 * (y - y[0]), 0.0)
        with pytest.raises(SetupInvalid, match="left half-line"):
            check_admissible(values, setup, put_grid, bs_params)

    def test_right_half_line_above_majorant(self, bs_params: GeneratorParams) -> None:
        """A rising right end grows past h beyond the grid and is rejected."""
        grid = SupportGrid.uniform(-2.0, 0.0, 21)
        setup = make_put_setup(1.0, grid, bs_params)
        values = 0.1 + 0.5 * np.exp(grid.abscissas)
        with pytest.raises(SetupInvalid, match="right half-line"):
            check_admissible(values, setup, grid, bs_params)

    def test_call_payoff_admissible(self) -> None:
        """The call start passes, with its majorant growing like e^x on the right."""
        params = GeneratorParams.from_black_scholes(0.05, 0.05, 1.0, 1.0)
        grid = SupportGrid.uniform(0.0, math.log(5.0), 41)
        setup = make_call_setup(1.0, grid, params)
        check_admissible(setup.start_values(grid), setup, grid, params)


class TestOperatorK:
    def test_zero_dates_returns_positive_payoff(
        self, bs_params: GeneratorParams, put_grid: SupportGrid
    ) -> None:
        """Zero exercise dates return g ∨ 0 at the nodes."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        values, _ = price_bermudan(0, setup, put_grid, bs_params)
        np.testing.assert_array_equal(values, np.maximum(1.0 - np.exp(put_grid.abscissas), 0.0))

    def test_monotone_and_bounded_on_admissible_inputs(
        self, rng: np.random.Generator, bs_params: GeneratorParams, put_grid: SupportGrid
    ) -> None:
        """For admissible u <= v the map keeps the order and stays between c and h."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        for _ in range(50):
            u, v = _hinge_pair(rng, put_grid)
            ku = operator_K(u, setup, put_grid, bs_params)
            kv = operator_K(v, setup, put_grid, bs_params)

            assert np.all(ku <= kv + 1e-10)
            assert np.all(ku <= 1.0 + 1e-10)
            assert np.all(ku >= setup.c(put_grid.abscissas) - 1e-12)
            check_admissible(ku, setup, put_grid, bs_params)

    def test_rejects_inadmissible_values(
        self, rng: np.random.Generator, bs_params: GeneratorParams, put_grid: SupportGrid
    ) -> None:
        """Values whose interpolant leaves [c, h] are refused before pricing."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        with pytest.raises(SetupInvalid):
            operator_K(rng.uniform(0.0, 1.0, len(put_grid)), setup, put_grid, bs_params)

    def test_sound_on_random_setups(self, rng: np.random.Generator) -> None:
        """Three steps from g ∨ 0 are sound for random calls and puts."""
        for _ in range(200):
            r = rng.uniform(0.01, 0.3)
            params = GeneratorParams.from_black_scholes(
                r, r, rng.uniform(0.2, 1.5), rng.uniform(0.05, 1.0)
            )
            strike = rng.uniform(0.5, 2.0)
            n_points = int(rng.integers(21, 42))
            width = rng.uniform(1.0, 3.0)
            if rng.uniform() < 0.5:
                upper = math.log(strike) - rng.uniform(0.0, 0.5)
                grid = SupportGrid.uniform(upper - width, upper, n_points)
                setup = make_put_setup(strike, grid, params)
            else:
                lower = math.log(strike) + rng.uniform(0.0, 0.5)
                grid = SupportGrid.uniform(lower, lower + width, n_points)
                setup = make_call_setup(strike, grid, params)
            payoff = setup.payoff(grid.abscissas)
            values = setup.start_values(grid)
            for _ in range(3):
                step = operator_K(values, setup, grid, params)
                assert is_sound_step(values, step, payoff)
                values = step

    def test_sound_from_payoff(self, bs_params: GeneratorParams, put_grid: SupportGrid) -> None:
        """One step from g ∨ 0 neither decreases nor drops below the payoff."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        start = setup.start_values(put_grid)
        step = operator_K(start, setup, put_grid, bs_params)
        assert is_sound_step(start, step, setup.payoff(put_grid.abscissas))

    def test_length_mismatch(self, bs_params: GeneratorParams, put_grid: SupportGrid) -> None:
        """Values of the wrong length are rejected."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        with pytest.raises(LengthMismatch):
            operator_K(np.zeros(3), setup, put_grid, bs_params)

    def test_increasing_in_exercise_dates(
        self, bs_params: GeneratorParams, put_grid: SupportGrid
    ) -> None:
        """More exercise dates never lower the price."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        prices = [price_bermudan(n, setup, put_grid, bs_params)[0] for n in range(4)]
        for fewer, more in zip(prices, prices[1:], strict=False):
            assert np.all(more >= fewer - 1e-10)


class TestPerpetual:
    """Tests for price_perpetual."""

    def test_converges_from_payoff(
        self, fast_params: GeneratorParams, fast_grid: SupportGrid
    ) -> None:
        """The iteration from g ∨ 0 converges above the start."""
        setup = make_put_setup(1.0, fast_grid, fast_params)
        interpolant, report = price_perpetual(
            setup, fast_grid, fast_params, IterationConfig(tol=1e-9)
        )

        assert report.converged
        assert report.final_residual < 1e-9
        values = interpolant(fast_grid.abscissas)
        assert np.all(values >= setup.start_values(fast_grid) - 1e-12)

    def test_fixed_point(self, fast_params: GeneratorParams, fast_grid: SupportGrid) -> None:
        """One more application leaves the limit in place."""
        setup = make_put_setup(1.0, fast_grid, fast_params)
        interpolant, _ = price_perpetual(setup, fast_grid, fast_params, IterationConfig(tol=1e-11))
        values = interpolant(fast_grid.abscissas)
        again = operator_K(values, setup, fast_grid, fast_params)
        np.testing.assert_allclose(again, values, atol=1e-9)

    def test_monotone_iterates_below_majorant(
        self, fast_params: GeneratorParams, fast_grid: SupportGrid
    ) -> None:
        """Iterates increase and stay below h."""
        setup = make_put_setup(1.0, fast_grid, fast_params)
        interpolant, report = price_perpetual(
            setup, fast_grid, fast_params, IterationConfig(tol=1e-9)
        )

        assert report.monotonicity_violations == 0
        assert report.min_slack_to_h is not None
        assert report.min_slack_to_h >= -1e-10
        assert np.all(interpolant(fast_grid.abscissas) <= 1.0 + 1e-10)

    def test_least_fixed_point(self, fast_params: GeneratorParams, fast_grid: SupportGrid) -> None:
        """The limit from g ∨ 0 lies below the limit from h."""
        setup = make_put_setup(1.0, fast_grid, fast_params)
        config = IterationConfig(tol=1e-10)
        below, _ = price_perpetual(setup, fast_grid, fast_params, config)
        above, report = price_perpetual(setup, fast_grid, fast_params, config, start="upper")

        assert report.monotonicity_violations == 0
        nodes = fast_grid.abscissas
        assert np.all(below(nodes) <= above(nodes) + 1e-8)

    def test_limits_from_both_sides_agree(self, fast_grid: SupportGrid) -> None:
        """With a one-period discount of e^-1 both limits agree within 5·tol."""
        params = GeneratorParams.from_black_scholes(r=2.0, delta=2.0, sigma=1.0, t=0.5)
        setup = make_put_setup(1.0, fast_grid, params)
        tol = 1e-10
        below, _ = price_perpetual(setup, fast_grid, params, IterationConfig(tol=tol))
        above, _ = price_perpetual(
            setup, fast_grid, params, IterationConfig(tol=tol), start="upper"
        )

        nodes = fast_grid.abscissas
        np.testing.assert_allclose(below(nodes), above(nodes), rtol=0.0, atol=5 * tol)

    def test_explicit_start(self, fast_params: GeneratorParams, fast_grid: SupportGrid) -> None:
        """Explicit admissible start values are accepted."""
        setup = make_put_setup(1.0, fast_grid, fast_params)
        start = setup.start_values(fast_grid)
        interpolant, report = price_perpetual(
            setup, fast_grid, fast_params, IterationConfig(tol=1e-8), start=start
        )
        assert report.converged
        assert interpolant(fast_grid.lower) >= start[0] - 1e-12

    def test_explicit_start_must_be_admissible(
        self, rng: np.random.Generator, fast_params: GeneratorParams, fast_grid: SupportGrid
    ) -> None:
        """Explicit start values outside the admissible set are refused."""
        setup = make_put_setup(1.0, fast_grid, fast_params)
        start = rng.uniform(0.0, 1.0, len(fast_grid))
        with pytest.raises(SetupInvalid):
            price_perpetual(setup, fast_grid, fast_params, start=start)

    def test_explicit_start_length(
        self, fast_params: GeneratorParams, fast_grid: SupportGrid
    ) -> None:
        """Explicit start values of the wrong length are rejected."""
        setup = make_put_setup(1.0, fast_grid, fast_params)
        with pytest.raises(LengthMismatch):
            price_perpetual(setup, fast_grid, fast_params, start=np.zeros(4))

    def test_not_converged_carries_result(
        self, fast_params: GeneratorParams, fast_grid: SupportGrid
    ) -> None:
        """Hitting the iteration cap raises NotConverged with the last interpolant."""
        setup = make_put_setup(1.0, fast_grid, fast_params)
        with pytest.raises(NotConverged) as excinfo:
            price_perpetual(setup, fast_grid, fast_params, IterationConfig(max_iter=2))

        assert excinfo.value.report.iterations == 2
        assert excinfo.value.report.stop_reason == "exhausted"
        assert isinstance(excinfo.value.result, PiecewiseHarmonic)


@pytest.mark.slow
class TestPerpetualPutReference:
    """Perpetual put with K = 1, r = delta = 5%, unit volatility, quarterly exercise."""

    r, sigma, t = 0.05, 1.0, 0.25

    def test_below_american_put_and_strike(
        self, bs_params: GeneratorParams, put_grid: SupportGrid
    ) -> None:
        """The price stays below the perpetual American put and below K."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        interpolant, report = price_perpetual(
            setup, put_grid, bs_params, IterationConfig(tol=1e-8)
        )
        values = interpolant(put_grid.abscissas)
        bound = perpetual_american_put_bound(
            np.exp(put_grid.abscissas), 1.0, self.r, self.sigma, delta=self.r
        )

        assert report.converged
        assert np.all(values <= bound + 1e-8)
        assert np.all(values <= 1.0 + 1e-10)

    def test_truncation_at_strike_underprices(
        self, bs_params: GeneratorParams, put_grid: SupportGrid
    ) -> None:
        """A grid ending at ln K prices below the dense reference, most of all at the strike."""
        setup = make_put_setup(1.0, put_grid, bs_params)
        interpolant, _ = price_perpetual(setup, put_grid, bs_params, IterationConfig(tol=1e-8))
        oracle = dense_dp_bermudan(
            DenseGridSpec(-7.0, 7.0, 4001),
            OraclePayoff("put", 1.0),
            OracleModel(self.r, self.r, self.sigma, self.t),
            tol=1e-9,
        )
        nodes = put_grid.abscissas
        values = interpolant(nodes)
        reference = np.interp(nodes, oracle.axes[0], oracle.values)

        assert np.all(values <= reference + 1e-3)
        ratio = values[-1] / reference[-1]
        assert 0.6 < ratio < 0.85
