"""Free-parameter (saddle point) equations and the tilted Poisson moments.

For a size window ``W`` and tilt ``sigma`` the independent variables
``X_j = j * Poisson(a_j e^{-sigma j})``, ``j in W``, have

    M(sigma)   = sum j   a_j e^{-sigma j}
    B2(sigma)  = sum j^2 a_j e^{-sigma j}
    rho(sigma) = sum j^3 a_j e^{-sigma j}

``M`` is strictly decreasing, so ``M(sigma) = n`` has exactly one root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coeff_engine import SizeWindow, log_coefficients
from .rootfind import SolverError, bisect, expand_bracket
from .sequences import ParameterFunction

__all__ = [
    "DivergenceError",
    "SaddlePoint",
    "log_moments",
    "moments",
    "solve_sigma",
    "log_S",
    "llt_product",
    "lyapunov_ratio",
    "saddle_row",
]

# tail beyond n_cap is below e^-40 relative once sigma * n_cap exceeds this
TAIL_CUTOFF = 40.0


class DivergenceError(ValueError):
    """The moment series does not converge (or the truncation is not negligible)."""


@dataclass(frozen=True)
class SaddlePoint:
    sigma: float
    M: float
    B2: float
    rho: float
    window: SizeWindow
    n: int

    @property
    def lyapunov(self) -> float:
        return lyapunov_ratio(self)


def _window_terms(pf: ParameterFunction, window: SizeWindow, n_cap: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = window.resolve(n_cap)
    if lo > hi:
        raise ValueError(f"window {window} is empty below {n_cap}")
    j = np.arange(lo, hi + 1, dtype=float)
    return j, pf.log_a(hi)[lo:hi + 1]


def _check_convergence(window: SizeWindow, sigma: float, n_cap: int) -> None:
    if window.hi is None:
        if sigma <= 0:
            raise DivergenceError("sigma <= 0 with an unbounded window: the series diverges")
        if sigma * n_cap < TAIL_CUTOFF:
            raise DivergenceError(
                f"truncating an unbounded window at {n_cap} is not negligible "
                f"(sigma * n_cap = {sigma * n_cap:.3g} < {TAIL_CUTOFF})")


def _lse(v: np.ndarray) -> float:
    mx = v.max()
    if mx == -np.inf:
        return -math.inf
    # numpy's pairwise summation keeps the relative error near log2(len) * eps
    return mx + math.log(np.exp(v - mx).sum())


def log_moments(pf: ParameterFunction, window: SizeWindow, sigma: float, n_cap: int,
                orders: tuple[int, ...] = (0, 1, 2, 3)) -> dict[int, float]:
    """``ln sum_{j in window, j <= n_cap} j**m a_j e^{-sigma j}`` for each order ``m``."""
    _check_convergence(window, sigma, n_cap)
    j, la = _window_terms(pf, window, n_cap)
    base = la - sigma * j
    lj = np.log(j)
    return {m: _lse(base + m * lj) for m in orders}


def moments(pf: ParameterFunction, window: SizeWindow, sigma: float, n_cap: int) -> tuple[float, float, float]:
    """``(M, B2, rho)`` at ``sigma`` over ``window`` cut at ``n_cap``."""
    lm = log_moments(pf, window, sigma, n_cap, (1, 2, 3))
    return math.exp(lm[1]), math.exp(lm[2]), math.exp(lm[3])


def log_S(pf: ParameterFunction, window: SizeWindow, sigma: float, n_cap: int) -> float:
    """``ln S_W(e^{-sigma}) = ln sum_{j in W} a_j e^{-sigma j}``."""
    return log_moments(pf, window, sigma, n_cap, (0,))[0]


def solve_sigma(pf: ParameterFunction, window: SizeWindow, n: int, rel_tol: float = 1e-10) -> SaddlePoint:
    """Unique ``sigma`` with ``M(sigma) = n`` over ``window`` intersected with ``[1, n]``.

    Works on ``ln M(sigma) - ln n``: exponential bracket expansion from
    ``n**(-1/(l+1))``, bisection to ``1e-12``, then Newton polish with
    ``d ln M / d sigma = -B2 / M``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = window.resolve(n)
    if lo > hi:
        raise ValueError(f"window {window} has no sizes <= {n}")
    fin = SizeWindow(lo, hi)
    j, la = _window_terms(pf, fin, n)
    lj = np.log(j)
    l1 = la + lj
    l2 = l1 + lj
    target = math.log(n)

    def f(s: float) -> float:
        return _lse(l1 - s * j) - target

    sigma0 = n ** (-1.0 / (pf.l + 1.0))
    try:
        a, b = expand_bracket(f, sigma0, sigma0, decreasing=True)
        s = bisect(f, a, b, xtol=1e-12)
    except SolverError as exc:
        raise SolverError(f"saddle equation for n={n}, window {window}: {exc}") from exc
    for _ in range(2):
        lm1 = _lse(l1 - s * j)
        lm2 = _lse(l2 - s * j)
        # Newton on ln M: step = (ln M - ln n) / (B2 / M)
        s += (lm1 - target) / math.exp(lm2 - lm1)
    lm = {m: _lse(base - s * j) for m, base in ((1, l1), (2, l2), (3, l2 + lj))}
    M = math.exp(lm[1])
    if abs(M - n) > rel_tol * n:
        raise SolverError(f"saddle residual |M - n|/n = {abs(M - n) / n:.3g} exceeds {rel_tol}")
    return SaddlePoint(sigma=s, M=M, B2=math.exp(lm[2]), rho=math.exp(lm[3]), window=window, n=n)


def lyapunov_ratio(sp: SaddlePoint) -> float:
    """``rho / B**3``; the local limit theorem needs this to vanish."""
    return sp.rho / sp.B2 ** 1.5


def llt_product(pf: ParameterFunction, n: int, window: SizeWindow = SizeWindow()) -> float:
    """``P(Y_n = n) * sqrt(2 pi B2)`` with ``P(Y_n = n) = c_n exp(-S(e^-sigma) - n sigma)``.

    Tends to 1 for every ``a`` in the regularly varying class.
    """
    sp = solve_sigma(pf, window, n)
    lo, hi = window.resolve(n)
    lS = log_S(pf, SizeWindow(lo, hi), sp.sigma, n)
    lc = log_coefficients(pf, window, n)[n]
    return math.exp(lc - math.exp(lS) - n * sp.sigma + 0.5 * math.log(2 * math.pi * sp.B2))


def saddle_row(sp: SaddlePoint, llt: float | None = None) -> dict:
    return {"n": sp.n, "window": str(sp.window), "sigma": sp.sigma, "M": sp.M, "B2": sp.B2,
            "rho": sp.rho, "lyapunov": sp.lyapunov, "llt_product": llt}
