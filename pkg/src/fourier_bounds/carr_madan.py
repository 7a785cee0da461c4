"""Carr-Madan damped Fourier pricing of European calls with Simpson's rule."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numba
import numpy as np

from .exceptions import CharacteristicFunctionOverflow, NoAdmissibleAlpha, PricingError
from .heston import HestonParams, MarketContext, OptionSpec, _log_cf_scalar, log_cf_log_price

__all__ = [
    "CarrMadanTuning",
    "DEFAULT_ALPHA_GRID",
    "RULE_OF_THUMB",
    "REFERENCE_TUNING",
    "cm_integrand",
    "price_call_cm",
    "moment_explosion_time",
    "damping_admissible",
    "first_admissible_alpha",
    "optimal_tuning_search",
]

DEFAULT_ALPHA_GRID = tuple(np.geomspace(0.05, 20.0, 40))


@dataclass(frozen=True)
class CarrMadanTuning:
    alpha: float
    upper_limit: float = 1024.0
    grid_points: int = 4096

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be finite and > 0, got {self.alpha!r}")
        if not (math.isfinite(self.upper_limit) and self.upper_limit > 0):
            raise ValueError(f"upper_limit must be finite and > 0, got {self.upper_limit!r}")
        n = self.grid_points
        if int(n) != n or n < 2 or n % 2:
            raise ValueError(f"grid_points must be an even integer >= 2, got {n!r}")


RULE_OF_THUMB = CarrMadanTuning(alpha=1.95, upper_limit=1024.0, grid_points=2 ** 12)
REFERENCE_TUNING = dict(upper_limit=1024.0, grid_points=2 ** 20)


def _damped_integrand(v, alpha, strike, t, params, mkt):
    # e^{-alpha log K} folded into the exponent keeps large alpha representable
    log_k = math.log(strike)
    v = np.asarray(v, dtype=float)
    z = log_cf_log_price(v - 1j * (alpha + 1.0), t, params, mkt) - 1j * v * log_k - alpha * log_k
    if np.any(z.real > 709.0):
        raise CharacteristicFunctionOverflow("damped characteristic function overflows")
    denom = alpha * alpha + alpha - v * v + 1j * (2.0 * alpha + 1.0) * v
    return (np.exp(z) / denom).real


def cm_integrand(v, alpha, spec: OptionSpec, params: HestonParams, mkt: MarketContext):
    """``Re{e^{-iv log K} phi(v - i(alpha + 1)) / (alpha^2 + alpha - v^2 + i(2 alpha + 1) v)}``."""
    return _damped_integrand(v, alpha, spec.strike, spec.maturity, params, mkt) * spec.strike ** alpha


@numba.njit(cache=True)
def _simpson_damped(alpha, upper, n, log_k, t, k, th, xi, rho, v0, drift):
    # Simpson sum of the damped integrand without materializing the grid;
    # returns nan on overflow so the caller can raise.
    h = upper / n
    shift = -1j * (alpha + 1.0)
    total = 0.0
    for j in range(n + 1):
        v = j * h
        z = _log_cf_scalar(v + shift, t, k, th, xi, rho, v0, drift) - 1j * v * log_k - alpha * log_k
        if not (np.isfinite(z.real) and np.isfinite(z.imag)) or z.real > 709.0:
            return np.nan
        denom = alpha * alpha + alpha - v * v + 1j * (2.0 * alpha + 1.0) * v
        w = 1.0 if (j == 0 or j == n) else (4.0 if j % 2 else 2.0)
        total += w * (cmath.exp(z) / denom).real
    return total * h / 3.0


def price_call_cm(spec: OptionSpec, tuning: CarrMadanTuning, params: HestonParams,
                  mkt: MarketContext) -> float:
    """Call price from the damped Fourier integral truncated to ``[0, M]``, Simpson on N intervals."""
    if spec.kind != "call":
        raise ValueError("Carr-Madan pricing here is for calls only")
    t = spec.maturity
    integral = _simpson_damped(float(tuning.alpha), float(tuning.upper_limit), int(tuning.grid_points),
                               math.log(spec.strike), float(t), params.kappa, params.theta, params.xi,
                               params.rho, params.v0, math.log(mkt.s0) + mkt.r * t)
    if math.isnan(integral):
        raise CharacteristicFunctionOverflow("damped characteristic function overflows")
    price = math.exp(-mkt.r * spec.maturity) / math.pi * integral
    if not math.isfinite(price):
        raise PricingError("non-finite Carr-Madan price")
    return price


def moment_explosion_time(w, params: HestonParams) -> float:
    """Time at which ``E[S_t^w]`` becomes infinite, for ``w > 1``.

    The moment's exponent solves the Riccati equation
    ``A' = xi^2 A^2 / 2 + (rho xi w - kappa) A + w (w - 1) / 2`` from
    ``A(0) = 0``; its first pole is available in closed form.
    """
    if not w > 1:
        raise ValueError("w must be > 1")
    b = params.rho * params.xi * w - params.kappa
    disc = b * b - params.xi ** 2 * w * (w - 1.0)
    if disc >= 0.0:
        if b < 0.0:
            return math.inf
        root = math.sqrt(disc)
        if root == 0.0:
            return 2.0 / b
        return math.log((b + root) / (b - root)) / root
    root = math.sqrt(-disc)
    return 2.0 / root * (math.pi / 2.0 - math.atan(b / root))


def damping_admissible(alpha, t, params: HestonParams, mkt: MarketContext) -> bool:
    """True iff ``E[S_t^(1 + alpha)] < inf``.

    Past the explosion time the closed form at ``u = -i(1 + alpha)`` can
    come back finite and real on the far side of its pole, so a pointwise
    check is not enough; the pole is located analytically and the closed
    form must in addition be finite there.
    """
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if not t < moment_explosion_time(1.0 + alpha, params):
        return False
    try:
        z = complex(log_cf_log_price(-1j * (1.0 + alpha), t, params, mkt))
    except CharacteristicFunctionOverflow:
        return False
    return z.real <= 709.0 and abs(z.imag) <= 1e-8 * max(1.0, abs(z))


def first_admissible_alpha(t, params, mkt, alpha_grid=DEFAULT_ALPHA_GRID) -> float:
    for alpha in alpha_grid:
        if damping_admissible(alpha, t, params, mkt):
            return float(alpha)
    raise NoAdmissibleAlpha("no admissible damping factor on the grid")


def _search_one_alpha(error_at, target, n_start, n_cap, stop_above):
    """Minimal even N with ``error_at(N) <= target``: doubling, then bisection.

    Returns None when the target is not reached below ``n_cap``, when the
    error plateaus above the target, or when the result could not beat
    ``stop_above`` (a strictly better N from another alpha).
    """
    n, prev_err = n_start, None
    while True:
        lower = n // 2 if n > n_start else 0
        if stop_above is not None and lower >= stop_above:
            return None
        err = error_at(n)
        if err <= target:
            break
        # Simpson has converged to a value off the target: more points cannot help.
        if (prev_err is not None and n >= 4096 and math.isfinite(err)
                and abs(err - prev_err) < 0.1 * target):
            return None
        prev_err = err
        n *= 2
        if n > n_cap:
            return None
    lo, hi = (n // 2 if n > n_start else 0), n
    while hi - lo > 2:
        mid = (lo + hi) // 2
        mid -= mid % 2
        if mid <= lo:
            mid = lo + 2
        if error_at(mid) <= target:
            hi = mid
        else:
            lo = mid
            if stop_above is not None and lo >= stop_above:
                return None
    return max(hi, 2)


def optimal_tuning_search(spec: OptionSpec, params: HestonParams, mkt: MarketContext,
                          reference_price: float, target_eps: float = 1e-7, *,
                          upper_limit: float = 1200.0, alpha_grid=DEFAULT_ALPHA_GRID,
                          n_start: int = 64, n_cap: int = 2 ** 22, probe_points: int = 1024):
    """Damping factor and minimal grid size meeting ``target_eps`` against a reference.

    For every admissible alpha on the grid the minimal even N is found by
    doubling from ``n_start`` and bisecting. The pair with the smallest N
    wins, ties going to the smaller alpha. Alphas are visited in order of
    their error at ``probe_points`` so that good candidates prune the rest
    early. Pruning only discards alphas that provably cannot win, so the
    result does not depend on the visiting order.

    Returns ``(alpha, N)``; raises NoAdmissibleAlpha if no alpha succeeds.
    """
    t = spec.maturity
    candidates = [float(a) for a in alpha_grid if damping_admissible(a, t, params, mkt)]
    if not candidates:
        raise NoAdmissibleAlpha("every damping factor on the grid is inadmissible")

    def error_for(alpha):
        def error_at(n):
            tuning = CarrMadanTuning(alpha, upper_limit, n)
            try:
                return abs(price_call_cm(spec, tuning, params, mkt) - reference_price)
            except (CharacteristicFunctionOverflow, PricingError):
                return math.inf
        return error_at

    probes = [(error_for(a)(probe_points), a) for a in candidates]
    order = [a for _, a in sorted(probes, key=lambda pa: (pa[0] if math.isfinite(pa[0]) else math.inf, pa[1]))]

    best = None
    for alpha in order:
        n = _search_one_alpha(error_for(alpha), target_eps, n_start, n_cap,
                              None if best is None else best[1])
        if n is None:
            continue
        if best is None or (n, alpha) < (best[1], best[0]):
            best = (alpha, n)
    if best is None:
        raise NoAdmissibleAlpha(f"no damping factor reaches {target_eps:g} with N <= {n_cap}")
    return best
