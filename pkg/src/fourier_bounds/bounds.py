"""Direct (slow) computation of the COS bound inputs.

``mu_n``: n-th root of the n-th moment of the centred log-return, from the
n-th derivative of its characteristic function at zero.
``I_s``: s-th root of ``(1/2pi) int |u|^(s+1) |phi_X(u)| du``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    CharacteristicFunctionOverflow,
    IntegralNonconvergent,
    MomentUnavailable,
    UnstableDerivative,
)
from .heston import (
    HestonParams,
    MarketContext,
    cf_centered,
    integrated_variance,
    log_cf_log_price,
)
from .numerics import adaptive_simpson, derivative_at_zero

__all__ = [
    "BoundValues",
    "derivative_at_zero",
    "moment_root_mu_n",
    "integral_root",
    "integral_root_i_s",
    "direct_bounds",
]


@dataclass(frozen=True)
class BoundValues:
    mu_n: float
    n: int
    i_s: float
    s: int

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError("n must be an even integer >= 2")
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if not (self.mu_n > 0 and math.isfinite(self.mu_n)):
            raise ValueError(f"mu_n must be finite and > 0, got {self.mu_n!r}")
        if not (self.i_s > 0 and math.isfinite(self.i_s)):
            raise ValueError(f"i_s must be finite and > 0, got {self.i_s!r}")


# Step multipliers tried in turn when the first difference step is unstable.
_STEP_FACTORS = (1.0, 0.5, 2.0, 0.25)


def moment_root_mu_n(n: int, t: float, params: HestonParams, mkt: MarketContext) -> float:
    """``E[X^n]^(1/n)`` for the centred log-return ``X``, n in {2, 4, 6, 8}.

    Raises MomentUnavailable when the differentiated moment is not a
    positive real number (non-positive real part, imaginary residual above
    1e-3 relative, or unstable differences at every step tried).
    """
    if n not in (2, 4, 6, 8):
        raise ValueError("n must be one of 2, 4, 6, 8")
    # phi_X varies on the scale of 1 / (return standard deviation)
    width = 1.0 / math.sqrt(max(integrated_variance(t, params), 1e-12))

    def phi(u):
        return cf_centered(u, t, params, mkt)

    reasons = []
    for factor in _STEP_FACTORS:
        try:
            deriv, _ = derivative_at_zero(n, phi, width=width * factor)
        except (UnstableDerivative, CharacteristicFunctionOverflow) as exc:
            reasons.append(str(exc))
            continue
        moment = deriv / (1j ** n)
        if moment.real <= 0:
            raise MomentUnavailable(f"order-{n} moment has non-positive real part {moment.real:.3g}")
        if abs(moment.imag) > 1e-3 * abs(moment.real):
            reasons.append(f"imaginary residual {moment.imag:.3g}")
            continue
        return moment.real ** (1.0 / n)
    raise MomentUnavailable(f"order-{n} moment unavailable: " + "; ".join(reasons))


def integral_root(s: int, log_abs_cf, rel_tol: float = 1e-6, *, u_cap: float = 1e7,
                  decay: float = 1e-14) -> float:
    """``((1/2pi) int_R |u|^(s+1) |phi(u)| du)^(1/s)`` for an even ``|phi|``.

    ``log_abs_cf`` maps a real ndarray to ``log|phi(u)|``; working with the
    logarithm keeps the integrand representable when ``I_s**s`` is huge.
    The range ``[0, U]`` grows by doubling until the integrand at ``U`` is
    below ``decay`` times the largest value seen.
    """
    if s < 1:
        raise ValueError("s must be >= 1")

    def log_g(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return (s + 1) * np.log(u) + log_abs_cf(u)

    log_decay = math.log(decay)
    upper = 1.0
    peak = -math.inf
    while True:
        lg = float(log_g(np.array([upper]))[0])
        peak = max(peak, lg)
        if lg < peak + log_decay:
            break
        upper *= 2.0
        if upper > u_cap:
            raise IntegralNonconvergent(f"integrand not decayed by u = {u_cap:g}")

    # rescale by the sampled maximum so the quadrature sees O(1) values
    probe = np.linspace(0.0, upper, 1025)[1:]
    scale = max(peak, float(np.max(log_g(probe))))

    def g(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(log_g(u[pos]) - scale)
        return out

    half, _ = adaptive_simpson(g, 0.0, upper, rel_tol)
    if not half > 0:
        raise IntegralNonconvergent("integral evaluated to zero")
    log_total = math.log(2.0 * half) + scale - math.log(2.0 * math.pi)
    return math.exp(log_total / s)


def integral_root_i_s(s: int, t: float, params: HestonParams, mkt: MarketContext,
                      rel_tol: float = 1e-6, u_cap: float = 1e7) -> float:
    """``I_s`` for the Heston centred log-return; ``|phi_X| = |phi_log S|`` on the real line."""

    def log_abs_cf(u):
        return log_cf_log_price(u, t, params, mkt).real

    return integral_root(s, log_abs_cf, rel_tol, u_cap=u_cap)


def direct_bounds(t, params, mkt, n=8, s=20, rel_tol=1e-6) -> BoundValues:
    """Both bound inputs by direct numerical analysis."""
    return BoundValues(
        mu_n=moment_root_mu_n(n, t, params, mkt),
        n=n,
        i_s=integral_root_i_s(s, t, params, mkt, rel_tol),
        s=s,
    )
