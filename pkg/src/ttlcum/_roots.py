"""Small root-finding helpers used across the package."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import NumericalFailure


def bisect_increasing(func: Callable[[np.ndarray], np.ndarray], lo, hi, iterations: int = 100):
    """Vectorized bisection for elementwise non-decreasing functions.

    Parameters
    ----------
    func : callable
        Maps an array of abscissae to an array of residuals. Each residual must be
        non-decreasing in its own abscissa.
    lo, hi : array_like
        Brackets with ``func(lo) <= 0 <= func(hi)`` elementwise.
    iterations : int
        Number of halvings.

    Returns
    -------
    ndarray
        Midpoints of the final brackets.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        below = func(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def expand_up(func: Callable[[float], float], start: float, factor: float = 2.0, limit: int = 2000) -> float:
    """Grow ``start`` geometrically until ``func`` becomes non-negative."""
    x = start
    for _ in range(limit):
        if func(x) >= 0:
            return x
        x *= factor
    raise NumericalFailure("bracket expansion did not reach a sign change")


def brent(func: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-300,
          rtol: float = 4 * np.finfo(float).eps, maxiter: int = 500) -> float:
    """Brent's method on a bracket, raising :class:`NumericalFailure` without a sign change."""
    flo, fhi = func(lo), func(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if math.copysign(1.0, flo) == math.copysign(1.0, fhi):
        raise NumericalFailure(f"no sign change on [{lo!r}, {hi!r}]: f={flo!r}, {fhi!r}")
    return optimize.brentq(func, lo, hi, xtol=xtol, rtol=rtol, maxiter=maxiter)
