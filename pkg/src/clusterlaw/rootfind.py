"""Bracketing root finder for scalar functions that are monotone on the real line."""

from __future__ import annotations

import math
from typing import Callable


class SolverError(RuntimeError):
    """Raised when a bracket cannot be found or the iteration does not converge."""


def expand_bracket(
    f: Callable[[float], float],
    x0: float,
    step: float,
    decreasing: bool = True,
    max_doublings: int = 200,
    lower_limit: float = -math.inf,
    upper_limit: float = math.inf,
) -> tuple[float, float]:
    """Return ``(lo, hi)`` with ``f(lo)`` and ``f(hi)`` of opposite sign.

    Starting from ``x0`` the search walks in the direction indicated by the
    sign of ``f(x0)`` and doubles the step each time.  ``decreasing`` tells
    the search which way the root lies.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    f0 = f(x0)
    if f0 == 0:
        return x0, x0
    # for a decreasing f the root lies to the right of x0 iff f(x0) > 0
    go_right = (f0 > 0) == decreasing
    a = x0
    for _ in range(max_doublings):
        b = a + step if go_right else a - step
        b = min(max(b, lower_limit), upper_limit)
        fb = f(b)
        if fb == 0 or (fb > 0) != (f0 > 0):
            return (a, b) if a < b else (b, a)
        if b in (lower_limit, upper_limit):
            break
        a, f0 = b, fb
        step *= 2.0
    raise SolverError(
        f"no sign change found from x0={x0!r} after {max_doublings} doublings "
        f"(last point {a!r}, f={f0!r})"
    )


def bisect(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float = 1e-12,
    max_iter: int = 400,
) -> float:
    """Plain bisection on a sign-changing bracket; stops at ``hi - lo <= xtol``."""
    flo = f(lo)
    fhi = f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise SolverError(f"[{lo!r}, {hi!r}] does not bracket a root (f={flo!r}, {fhi!r})")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= xtol or mid in (lo, hi):
            return mid
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
