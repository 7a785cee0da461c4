"""Exception hierarchy.

Numerical failures carry a short machine-readable ``code`` so batch
callers can record why a sample was dropped without parsing messages.
"""


class FourierBoundsError(Exception):
    code = "error"


class CharacteristicFunctionOverflow(FourierBoundsError, ArithmeticError):
    code = "cf-overflow"


class UnstableDerivative(FourierBoundsError, ArithmeticError):
    code = "unstable-derivative"


class MomentUnavailable(FourierBoundsError):
    code = "moment-unavailable"


class IntegralNonconvergent(FourierBoundsError, ArithmeticError):
    code = "integral-nonconvergent"


class NoAdmissibleAlpha(FourierBoundsError):
    code = "no-admissible-alpha"


class PricingError(FourierBoundsError, ArithmeticError):
    code = "pricing-error"


class ModelFormatError(FourierBoundsError, ValueError):
    """Malformed tree table or model file."""

    code = "model-format"


class TrainingDivergence(FourierBoundsError, ArithmeticError):
    code = "training-divergence"

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"loss became non-finite at epoch {epoch}")
