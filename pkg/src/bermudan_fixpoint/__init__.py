"""bermudan_fixpoint - Bermudan option prices by monotone fixed-point iteration."""

try:
    from ._version import __version__
except ImportError:  # pragma: no cover - source tree without a build
    __version__ = "0.0.0"

from .bermudan_harmonic_pricer import (
    PayoffSetup,
    check_admissible,
    make_call_setup,
    make_put_setup,
    operator_K,
    price_bermudan,
    price_perpetual,
)
from .cubature_pricer import (
    BasketPayoff,
    CubatureRule,
    LatticeFunction,
    LatticeSpec,
    NormalizedRule,
    apply_A,
    apply_D,
    check_basket_subharmonicity,
    degree3_rule,
    exercise_region,
    gauss_hermite_rule,
    iterate_perpetual,
    normalize_rule,
    tensor_rule,
)
from .errors import NotConverged, PricingError
from .gaussian_semigroup import SemigroupParams, apply_semigroup, gaussian_cdf
from .harmonic_core import (
    GeneratorParams,
    HarmonicFunction,
    PiecewiseHarmonic,
    SupportGrid,
    evaluate,
    interpolate,
    max_with_harmonic,
    solve_harmonic_through,
)
from .iteration import IterationConfig, IterationReport
from .logging import get_logger, setup_logging

__all__ = [
    "BasketPayoff",
    "CubatureRule",
    "GeneratorParams",
    "HarmonicFunction",
    "IterationConfig",
    "IterationReport",
    "LatticeFunction",
    "LatticeSpec",
    "NormalizedRule",
    "NotConverged",
    "PayoffSetup",
    "PiecewiseHarmonic",
    "PricingError",
    "SemigroupParams",
    "SupportGrid",
    "__version__",
    "apply_A",
    "apply_D",
    "apply_semigroup",
    "check_admissible",
    "check_basket_subharmonicity",
    "degree3_rule",
    "evaluate",
    "exercise_region",
    "gauss_hermite_rule",
    "gaussian_cdf",
    "get_logger",
    "interpolate",
    "iterate_perpetual",
    "make_call_setup",
    "make_put_setup",
    "max_with_harmonic",
    "normalize_rule",
    "operator_K",
    "price_bermudan",
    "price_perpetual",
    "setup_logging",
    "solve_harmonic_through",
    "tensor_rule",
]
