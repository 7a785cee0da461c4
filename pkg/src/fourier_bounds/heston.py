"""Heston model: parameter containers and the characteristic function of log prices."""

from __future__ import annotations

import cmath
import math
from dataclasses import astuple, dataclass
from functools import lru_cache

import numba
import numpy as np

from .exceptions import CharacteristicFunctionOverflow, MomentUnavailable, UnstableDerivative
from .numerics import derivative_at_zero

__all__ = [
    "HestonParams",
    "MarketContext",
    "OptionSpec",
    "FEATURE_NAMES",
    "feller_holds",
    "integrated_variance",
    "log_cf_log_price",
    "cf_log_price",
    "expected_log_price",
    "cf_centered",
    "clear_mu_cache",
]

FEATURE_NAMES = ("kappa", "theta", "xi", "rho", "v0", "T")


@dataclass(frozen=True)
class HestonParams:
    """Heston parameters: mean reversion ``kappa``, long-run variance ``theta``,
    vol of variance ``xi``, correlation ``rho`` and initial variance ``v0``."""

    kappa: float
    theta: float
    xi: float
    rho: float
    v0: float

    def __post_init__(self):
        for name in ("kappa", "theta", "xi", "v0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if not (math.isfinite(self.rho) and -1.0 <= self.rho <= 1.0):
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho!r}")

    def as_tuple(self):
        return astuple(self)


@dataclass(frozen=True)
class MarketContext:
    s0: float
    r: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.s0) and self.s0 > 0):
            raise ValueError(f"s0 must be finite and > 0, got {self.s0!r}")
        if not math.isfinite(self.r):
            raise ValueError("r must be finite")


@dataclass(frozen=True)
class OptionSpec:
    strike: float
    maturity: float
    kind: str = "call"

    def __post_init__(self):
        if not (math.isfinite(self.strike) and self.strike > 0):
            raise ValueError(f"strike must be finite and > 0, got {self.strike!r}")
        if not (math.isfinite(self.maturity) and self.maturity > 0):
            raise ValueError(f"maturity must be finite and > 0, got {self.maturity!r}")
        if self.kind not in ("put", "call"):
            raise ValueError(f"kind must be 'put' or 'call', got {self.kind!r}")


def feller_holds(params: HestonParams) -> bool:
    """True iff ``2 kappa theta >= xi**2``."""
    return 2.0 * params.kappa * params.theta >= params.xi ** 2


def integrated_variance(t: float, params: HestonParams) -> float:
    """Expected integrated variance ``E[int_0^t v_s ds]``."""
    k, th, v0 = params.kappa, params.theta, params.v0
    return th * t + (v0 - th) * (-math.expm1(-k * t)) / k


@numba.njit(cache=True, fastmath=False)
def _log1p(z):
    # log(1 + z) loses everything for tiny |z|
    if abs(z) < 1e-3:
        return z * (1.0 + z * (-1 / 2 + z * (1 / 3 + z * (-1 / 4 + z * (1 / 5 + z * (-1 / 6))))))
    return cmath.log(1.0 + z)


@numba.njit(cache=True)
def _log_cf_scalar(u, t, k, th, xi, rho, v0, drift):
    if u == 0:
        return 0j
    xi2 = xi * xi
    iu = 1j * u
    b = k - rho * xi * iu
    q = -iu - u * u
    d = cmath.sqrt(b * b - xi2 * q)
    bpd = b + d
    bmd = xi2 * q / bpd
    g = bmd / bpd
    e = cmath.exp(-d * t)
    log_ratio = _log1p(g * (1.0 - e) / (1.0 - g))
    theta_term = th * k * (bmd * t - 2.0 * log_ratio) / xi2
    v0_term = v0 * (q / bpd) * (1.0 - e) / (1.0 - g * e)
    return iu * drift + theta_term + v0_term


@numba.njit(cache=True)
def _log_cf_kernel(u, t, k, th, xi, rho, v0, drift):
    out = np.empty(u.shape[0], dtype=np.complex128)
    for j in range(u.shape[0]):
        out[j] = _log_cf_scalar(u[j], t, k, th, xi, rho, v0, drift)
    return out


def log_cf_log_price(u, t, params: HestonParams, mkt: MarketContext):
    """Exponent of the Heston characteristic function of ``log S_t``.

    Uses the principal square root for ``d`` and the ``g``-form with
    ``(1 - g e^{-dt}) / (1 - g)``. ``kappa - rho xi i u - d`` is evaluated
    as ``xi**2 (-iu - u**2) / (kappa - rho xi i u + d)``, the same quantity
    without the cancellation that destroys it as ``xi -> 0``. At ``u = 0``
    the exponent is exactly 0.
    """
    u = np.asarray(u, dtype=complex)
    drift = math.log(mkt.s0) + mkt.r * t
    flat = _log_cf_kernel(np.ascontiguousarray(u.ravel()), float(t), params.kappa, params.theta,
                          params.xi, params.rho, params.v0, drift)
    if not np.all(np.isfinite(flat)):
        raise CharacteristicFunctionOverflow("non-finite characteristic exponent")
    return flat.reshape(u.shape)


def cf_log_price(u, t, params: HestonParams, mkt: MarketContext):
    """Characteristic function ``E[exp(i u log S_t)]``; vectorized in ``u``.

    Raises CharacteristicFunctionOverflow if any value is non-finite.
    """
    z = log_cf_log_price(u, t, params, mkt)
    if np.any(z.real > 709.0):
        raise CharacteristicFunctionOverflow("characteristic function overflows")
    out = np.exp(z)
    return out[()] if out.ndim == 0 else out


@lru_cache(maxsize=8192)
def _expected_log_price(t, params, mkt):
    drift = math.log(mkt.s0) + mkt.r * t
    # The drift is removed analytically; the remainder varies on the scale
    # of the return standard deviation, which sets the difference step.
    width = 1.0 / math.sqrt(max(integrated_variance(t, params), 1e-12))

    def reduced(u):
        return np.exp(log_cf_log_price(u, t, params, mkt) - 1j * u * drift)

    last_error = None
    # a narrow analyticity strip (large xi) needs steps well below the width
    for factor in (1.0, 0.5, 0.25, 0.1, 0.04, 0.01, 0.004, 0.001):
        try:
            value, _ = derivative_at_zero(1, reduced, width=width * factor, rtol=1e-6, atol=1e-8)
        except (UnstableDerivative, CharacteristicFunctionOverflow) as exc:
            last_error = exc
            continue
        mean = -1j * value
        if abs(mean.imag) > 1e-8 * (1.0 + abs(drift + mean.real)):
            last_error = MomentUnavailable(f"imaginary residual {mean.imag:.3g} in E[log S_T]")
            continue
        return drift + mean.real
    raise MomentUnavailable(f"E[log S_T] unavailable: {last_error}")


def expected_log_price(t, params: HestonParams, mkt: MarketContext) -> float:
    """``E[log S_t]`` from the numerical first derivative of the characteristic function.

    Cached per ``(t, params, mkt)``; raises MomentUnavailable if the
    derivative is unstable.
    """
    return _expected_log_price(float(t), params, mkt)


def cf_centered(u, t, params: HestonParams, mkt: MarketContext):
    """Characteristic function of ``X = log S_t - E[log S_t]``."""
    mu = expected_log_price(t, params, mkt)
    u = np.asarray(u, dtype=complex)
    z = log_cf_log_price(u, t, params, mkt) - 1j * u * mu
    if np.any(z.real > 709.0):
        raise CharacteristicFunctionOverflow("characteristic function overflows")
    out = np.exp(z)
    return out[()] if out.ndim == 0 else out


def clear_mu_cache():
    """Drop cached ``E[log S_t]`` values (used by timing benchmarks)."""
    _expected_log_price.cache_clear()
