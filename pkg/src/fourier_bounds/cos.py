"""COS pricing of European options with error-controlled truncation range and term count."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import BoundValues
from .heston import HestonParams, MarketContext, OptionSpec, expected_log_price, log_cf_log_price

__all__ = [
    "CosTuning",
    "check_tolerance",
    "truncation_range",
    "num_terms",
    "tuning_from_bounds",
    "cosine_coeffs",
    "payoff_coeffs_put",
    "price_put_cos",
    "price_call_cos",
    "price_cos",
]

# Terms are summed in blocks of this size so huge N stays memory-bounded.
_CHUNK = 1 << 18


@dataclass(frozen=True)
class CosTuning:
    half_width: float
    num_terms: int

    def __post_init__(self):
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise ValueError(f"half_width must be finite and > 0, got {self.half_width!r}")
        if int(self.num_terms) != self.num_terms or self.num_terms < 1:
            raise ValueError(f"num_terms must be a positive integer, got {self.num_terms!r}")


def check_tolerance(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"error tolerance must lie in (0, 1], got {eps!r}")
    return eps


def truncation_range(eps, mu_n, n, strike, r, t) -> float:
    """Half-width ``L = mu_n (2 K e^{-rT} / eps)^(1/n)`` (Markov-inequality bound)."""
    eps = check_tolerance(eps)
    if n < 2 or n % 2:
        raise ValueError("n must be an even integer >= 2")
    if not mu_n > 0:
        raise ValueError("mu_n must be > 0")
    return mu_n * (2.0 * strike * math.exp(-r * t) / eps) ** (1.0 / n)


def num_terms(eps, i_s, s, half_width, strike, r, t, *, rounded=True):
    """Number of terms ``N(eps, I_s)`` for truncation half-width ``half_width``.

    Evaluated in log space: ``half_width**(s + 2)`` overflows for s = 20
    once the half-width exceeds a few hundred.
    """
    eps = check_tolerance(eps)
    if s < 1 or not i_s > 0 or not half_width > 0:
        raise ValueError("need s >= 1, i_s > 0 and half_width > 0")
    log_inner = (
        (s + 2.5) * math.log(2.0)
        + (s + 2) * math.log(half_width)
        - math.log(s)
        - (s + 1) * math.log(math.pi)
        + math.log(12.0 * strike) - r * t - math.log(eps)
    )
    value = math.exp(math.log(i_s) + log_inner / s)
    if not rounded:
        return value
    return max(1, math.ceil(value))


def tuning_from_bounds(eps, bounds: BoundValues, strike, r, t) -> CosTuning:
    half_width = truncation_range(eps, bounds.mu_n, bounds.n, strike, r, t)
    return CosTuning(half_width, num_terms(eps, bounds.i_s, bounds.s, half_width, strike, r, t))


def _cos_block(k, half_width, mu, t, params, mkt):
    freq = k * (math.pi / (2.0 * half_width))
    z = log_cf_log_price(freq, t, params, mkt) - 1j * freq * mu + 1j * k * (math.pi / 2.0)
    return np.exp(z).real / half_width


def cosine_coeffs(tuning: CosTuning, t, params: HestonParams, mkt: MarketContext) -> np.ndarray:
    """Density coefficients ``c_k = Re{phi_X(k pi / 2L) e^{i k pi / 2}} / L`` for k = 0..N."""
    mu = expected_log_price(t, params, mkt)
    k = np.arange(tuning.num_terms + 1, dtype=float)
    return _cos_block(k, tuning.half_width, mu, t, params, mkt)


def _payoff_block(k, strike, half_width, mu, r, t):
    L = half_width
    d = min(math.log(strike) - mu, L)
    if d <= -L:
        return np.zeros_like(k)
    freq = k * (math.pi / (2.0 * L))
    arg = freq * (d + L)
    sin_arg = np.sin(arg)
    psi0 = np.empty_like(k)
    nz = k != 0
    psi0[nz] = sin_arg[nz] / freq[nz]
    psi0[~nz] = d + L
    psi1 = (math.exp(d) * (freq * sin_arg + np.cos(arg)) - math.exp(-L)) / (1.0 + freq * freq)
    return math.exp(-r * t) * (strike * psi0 - math.exp(mu) * psi1)


def payoff_coeffs_put(strike, tuning: CosTuning, t, params: HestonParams, mkt: MarketContext) -> np.ndarray:
    """Put payoff coefficients ``v_0..v_N`` on ``[-L, L]``; all zero when ``log K - mu <= -L``."""
    mu = expected_log_price(t, params, mkt)
    k = np.arange(tuning.num_terms + 1, dtype=float)
    return _payoff_block(k, strike, tuning.half_width, mu, mkt.r, t)


def _put(strike, t, tuning, params, mkt):
    mu = expected_log_price(t, params, mkt)
    L, N = tuning.half_width, tuning.num_terms
    if math.log(strike) - mu <= -L:
        return 0.0
    total = 0.0
    for start in range(0, N + 1, _CHUNK):
        k = np.arange(start, min(N + 1, start + _CHUNK), dtype=float)
        terms = _cos_block(k, L, mu, t, params, mkt) * _payoff_block(k, strike, L, mu, mkt.r, t)
        if start == 0:
            terms[0] *= 0.5
        total += float(terms.sum())
    return total


def price_put_cos(spec: OptionSpec, tuning: CosTuning, params: HestonParams, mkt: MarketContext) -> float:
    """European put by the COS expansion ``c_0 v_0 / 2 + sum_k c_k v_k``."""
    if spec.kind != "put":
        raise ValueError("price_put_cos prices puts; use price_call_cos for calls")
    return _put(spec.strike, spec.maturity, tuning, params, mkt)


def price_call_cos(spec: OptionSpec, tuning: CosTuning, params: HestonParams, mkt: MarketContext) -> float:
    """European call via the COS put and put-call parity."""
    if spec.kind != "call":
        raise ValueError("price_call_cos prices calls; use price_put_cos for puts")
    put = _put(spec.strike, spec.maturity, tuning, params, mkt)
    return put + mkt.s0 - spec.strike * math.exp(-mkt.r * spec.maturity)


def price_cos(spec: OptionSpec, tuning: CosTuning, params: HestonParams, mkt: MarketContext) -> float:
    if spec.kind == "put":
        return price_put_cos(spec, tuning, params, mkt)
    return price_call_cos(spec, tuning, params, mkt)
