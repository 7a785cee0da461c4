"""Numerical primitives: central differences with Richardson extrapolation,
Simpson quadrature (fixed grid and adaptive)."""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np

from .exceptions import UnstableDerivative

__all__ = [
    "central_stencil",
    "default_step",
    "derivative_at_zero",
    "simpson_weights",
    "simpson",
    "adaptive_simpson",
]


@lru_cache(maxsize=None)
def central_stencil(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Minimal-width central stencil for the ``order``-th derivative.

    Returns integer offsets and weights ``c`` such that
    ``sum(c * f(offsets * h)) / h**order`` approximates the derivative at 0
    with an error expansion in even powers of ``h`` (leading term ``h**2``).
    Weights are solved exactly in rationals, then rounded once.
    """
    if order < 1:
        raise ValueError("order must be a positive integer")
    half = (order + 1) // 2
    offsets = list(range(-half, half + 1))
    m = len(offsets)
    rows = [[Fraction(x) ** k for x in offsets] + [Fraction(factorial(order) if k == order else 0)]
            for k in range(m)]
    for col in range(m):
        pivot = next(r for r in range(col, m) if rows[r][col] != 0)
        rows[col], rows[pivot] = rows[pivot], rows[col]
        for r in range(m):
            if r != col and rows[r][col] != 0:
                factor = rows[r][col] / rows[col][col]
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[col])]
    weights = [rows[i][m] / rows[i][i] for i in range(m)]
    pts = np.array(offsets, dtype=float)
    pts.flags.writeable = False
    w = np.array([float(x) for x in weights])
    w.flags.writeable = False
    return pts, w


def default_step(order: int) -> float:
    """Base step (in units of the function's natural width) for ``order``.

    Higher orders divide by ``h**order``, so they need wider steps to keep
    round-off below the truncation error of the extrapolated estimate.
    """
    return 0.025 * max(order, 2)


def derivative_at_zero(order, f, h=None, *, width=1.0, levels=3, rtol=1e-3, atol=0.0):
    """``order``-th derivative of ``f`` at 0 by Richardson-extrapolated central differences.

    Parameters
    ----------
    order : int
        Derivative order, 1 to 8.
    f : callable
        Vectorized function of a real ndarray, returning real or complex values.
    h : float, optional
        Coarsest step. Defaults to ``default_step(order) * width``.
    width : float
        Length scale over which ``f`` varies; only used when ``h`` is None.
    levels : int
        Number of step halvings (``h, h/2, h/4`` for 3 levels).
    rtol, atol : float
        Stability test: the last two extrapolation levels must agree within
        ``rtol * |value| + atol``.

    Returns
    -------
    value : complex
        Extrapolated derivative.
    discrepancy : float
        Absolute difference between the last two extrapolation levels.

    Raises
    ------
    UnstableDerivative
        If the discrepancy test fails or a non-finite value appears.
    """
    order = int(order)
    if not 1 <= order <= 8:
        raise ValueError("order must be in 1..8")
    if levels < 2:
        raise ValueError("need at least two levels for extrapolation")
    if h is None:
        h = default_step(order) * width
    if not (np.isfinite(h) and h > 0):
        raise ValueError("step must be positive and finite")

    offsets, weights = central_stencil(order)
    steps = h / 2.0 ** np.arange(levels)
    grid = (offsets[None, :] * steps[:, None]).ravel()
    values = np.asarray(f(grid), dtype=complex).reshape(levels, -1)
    table = [(values[i] @ weights) / steps[i] ** order for i in range(levels)]

    # Neville tableau on h**2: column j removes the h**(2j) term.
    prev = table
    last_two = None
    for j in range(1, levels):
        factor = 4.0 ** j
        cur = [(factor * prev[i + 1] - prev[i]) / (factor - 1.0) for i in range(len(prev) - 1)]
        last_two = (prev[-1], cur[-1])
        prev = cur
    value = complex(prev[-1])
    discrepancy = float(abs(last_two[1] - last_two[0]))

    if not (np.isfinite(value.real) and np.isfinite(value.imag) and np.isfinite(discrepancy)):
        raise UnstableDerivative(f"non-finite derivative estimate of order {order}")
    if discrepancy > rtol * abs(value) + atol:
        raise UnstableDerivative(
            f"order-{order} derivative unstable: discrepancy {discrepancy:.3g} "
            f"vs value {abs(value):.3g} (h={h:.3g})"
        )
    return value, discrepancy


def simpson_weights(n: int) -> np.ndarray:
    """Composite Simpson weights (1, 4, 2, ..., 4, 1) / 3 for ``n`` even intervals."""
    if n < 2 or n % 2:
        raise ValueError("Simpson's rule needs an even number of intervals >= 2")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def simpson(y, h: float) -> float:
    """Composite Simpson sum for samples ``y`` on a uniform grid of spacing ``h``."""
    y = np.asarray(y)
    return h * float(simpson_weights(len(y) - 1) @ y)


def adaptive_simpson(f, a: float, b: float, rtol: float = 1e-6, *,
                     initial_panels: int = 64, max_rounds: int = 50):
    """Integrate a vectorized ``f`` over ``[a, b]`` with panel-wise adaptive Simpson.

    Each round evaluates every unresolved panel with one and two Simpson
    steps; a panel is accepted once its Richardson error estimate is within
    its share (by width) of ``rtol * |integral|``. Accepted panels contribute
    the Richardson-corrected value. Unresolved panels are bisected, so all
    panel endpoints stay dyadic refinements of the initial uniform grid.

    Returns ``(value, n_evaluations)``.
    """
    if not b > a:
        raise ValueError("need b > a")
    edges = np.linspace(a, b, initial_panels + 1)
    lo, hi = edges[:-1], edges[1:]
    total_width = b - a
    accepted = 0.0
    n_eval = 0

    for _ in range(max_rounds):
        mid = 0.5 * (lo + hi)
        x = np.concatenate([lo, 0.5 * (lo + mid), mid, 0.5 * (mid + hi), hi])
        y = np.asarray(f(x), dtype=float).reshape(5, -1)
        n_eval += x.size
        width = hi - lo
        coarse = width / 6.0 * (y[0] + 4.0 * y[2] + y[4])
        fine = width / 12.0 * (y[0] + 4.0 * y[1] + 2.0 * y[2] + 4.0 * y[3] + y[4])
        err = np.abs(fine - coarse) / 15.0
        estimate = accepted + fine.sum()
        ok = err <= rtol * abs(estimate) * width / total_width
        accepted += float(np.sum(fine[ok] + (fine[ok] - coarse[ok]) / 15.0))
        if ok.all():
            return accepted, n_eval
        lo, hi, mid = lo[~ok], hi[~ok], mid[~ok]
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
    raise ArithmeticError("adaptive Simpson did not converge")
