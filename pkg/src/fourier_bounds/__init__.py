"""Error-controlled Fourier pricing of European options under the Heston model.

The COS method needs a truncation half-width from the moment root mu_n
and a term count from the integral root I_s; Carr-Madan needs a damping
factor and grid size. These inputs are computed directly or predicted by
surrogate models (regression tree, random forest, feedforward network).
"""

from .bounds import BoundValues, direct_bounds, integral_root_i_s, moment_root_mu_n
from .carr_madan import (
    CarrMadanTuning,
    damping_admissible,
    optimal_tuning_search,
    price_call_cm,
)
from .cos import (
    CosTuning,
    num_terms,
    price_call_cos,
    price_cos,
    price_put_cos,
    truncation_range,
    tuning_from_bounds,
)
from .exceptions import (
    CharacteristicFunctionOverflow,
    FourierBoundsError,
    IntegralNonconvergent,
    ModelFormatError,
    MomentUnavailable,
    NoAdmissibleAlpha,
    PricingError,
    TrainingDivergence,
    UnstableDerivative,
)
from .heston import (
    FEATURE_NAMES,
    HestonParams,
    MarketContext,
    OptionSpec,
    cf_centered,
    cf_log_price,
    expected_log_price,
    feller_holds,
)

__version__ = "0.1.0"

__all__ = [
    "BoundValues",
    "CarrMadanTuning",
    "CharacteristicFunctionOverflow",
    "CosTuning",
    "FEATURE_NAMES",
    "FourierBoundsError",
    "HestonParams",
    "IntegralNonconvergent",
    "MarketContext",
    "ModelFormatError",
    "MomentUnavailable",
    "NoAdmissibleAlpha",
    "OptionSpec",
    "PricingError",
    "TrainingDivergence",
    "UnstableDerivative",
    "cf_centered",
    "cf_log_price",
    "damping_admissible",
    "direct_bounds",
    "expected_log_price",
    "feller_holds",
    "integral_root_i_s",
    "moment_root_mu_n",
    "num_terms",
    "optimal_tuning_search",
    "price_call_cm",
    "price_call_cos",
    "price_cos",
    "price_put_cos",
    "truncation_range",
    "tuning_from_bounds",
]
