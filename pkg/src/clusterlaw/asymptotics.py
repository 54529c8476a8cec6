"""Closed-form asymptotics: saddle-point scales, limit laws and the ANS coefficient formula.

Everything here is a pure function of the model descriptors.  Where a
limit only fixes an order of magnitude the result says so
(:attr:`AsymptoticPrediction.constants_known`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .coeff_engine import SizeWindow, d_ratios, log_coefficients
from .rootfind import bisect, expand_bracket
from .saddle import log_S, solve_sigma
from .sequences import ParameterFunction, SlowlyVarying, conjugate_sv, h_transform, multiset_to_a

__all__ = [
    "RegimeError",
    "Regime",
    "classify",
    "AsymptoticPrediction",
    "L1",
    "sigma_asymptotic",
    "solve_A",
    "solve_A_residual",
    "karamata_S",
    "predict",
    "c_log_asymptotic",
    "limit_d",
    "kp_limit",
    "knopfmacher_h1",
    "knopfmacher_c",
    "geometric_ans_log_offset",
    "geometric_ans",
    "ans_pipeline",
    "DensityReport",
    "density_ratio",
]

LOWER, UPPER = "lower", "upper"
SUPERCRITICAL, CRITICAL, SUBCRITICAL = "supercritical", "critical", "subcritical"
_CRIT_TOL = 1e-12


class RegimeError(ValueError):
    """The parameters do not single out one of the asymptotic regimes."""


@dataclass(frozen=True)
class Regime:
    beta: float
    l: float
    d: float | None
    side: str
    regime_class: str

    @property
    def critical_beta(self) -> float:
        return 1.0 / (self.l + 1.0)


def classify(l: float, d: float | None, beta: float, side: str) -> Regime:
    """Place ``r = n**beta`` relative to the threshold ``1/(l+1)``.

    The lower side (largest component ``<= r``) is supercritical above the
    threshold; the upper side (smallest component ``>= r``) below it.
    """
    if side not in (LOWER, UPPER):
        raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    crit = 1.0 / (l + 1.0)
    if abs(beta - crit) <= _CRIT_TOL:
        cls = CRITICAL
    elif (beta > crit) == (side == LOWER):
        cls = SUPERCRITICAL
    else:
        cls = SUBCRITICAL
    return Regime(beta=beta, l=l, d=d, side=side, regime_class=cls)


def _case(reg: Regime) -> str:
    """Which saddle formula applies: 'a' (power scale), 'b' (log correction) or 'c'."""
    if reg.regime_class == SUPERCRITICAL:
        return "a"
    if reg.regime_class == SUBCRITICAL:
        return "b"
    if reg.d is None:
        raise RegimeError("critical beta needs d = lim L(n)")
    if 0 < reg.d < math.inf:
        return "c"
    if reg.d == 0:
        return "b" if reg.side == LOWER else "a"
    return "a" if reg.side == LOWER else "b"


def L1(n: float, l: float, L: SlowlyVarying) -> float:
    """Slowly varying factor of the power-scale saddle point.

    ``1 / L1(n**(l+1))`` is the conjugate of ``L**(1/(l+1))`` at ``n``.
    """
    if L.kind == "constant":
        return L.h ** (1.0 / (l + 1.0))
    K = L.power(1.0 / (l + 1.0))
    return 1.0 / conjugate_sv(K, n ** (1.0 / (l + 1.0)))


def sigma_asymptotic(l: float, L: SlowlyVarying, beta: float, side: str, n: int) -> float:
    """Leading-order saddle point for the window set by ``r = floor(n**beta)``."""
    reg = classify(l, L.d, beta, side)
    case = _case(reg)
    scale = n ** (-1.0 / (l + 1.0))
    if case == "a":
        return gamma_fn(l + 1.0) ** (1.0 / (l + 1.0)) * scale * L1(n, l, L)
    if case == "c":
        return solve_A(l, reg.d, side) * scale * L1(n, l, L)
    r = max(1, math.floor(n ** beta))
    logn = math.log(n)
    lnL = float(L.log(r))
    if side == LOWER:
        g = 1.0 - (l + 1.0) * beta - lnL / logn
    else:
        g = (l + 1.0) * beta - 1.0 + lnL / logn
    if g <= 0:
        raise RegimeError(f"log-correction exponent {g:.4g} <= 0: regime misclassified")
    gl = g * logn
    delta = math.log(gl) / gl
    if side == LOWER:
        return -gl / n ** beta * (1.0 + delta)
    return gl / n ** beta * (1.0 - delta)


def _lower_integral(l: float, s: float) -> float:
    # int_0^1 x^l e^{-s x} dx; the algebraic weight handles x^l at 0
    val, _ = integrate.quad(lambda x: math.exp(-s * x), 0.0, 1.0, weight="alg", wvar=(l, 0.0),
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def _upper_integral(l: float, s: float) -> float:
    # int_1^inf x^l e^{-s x} dx = e^{-s} int_0^inf (1+y)^l e^{-s y} dy
    val, _ = integrate.quad(lambda y: (1.0 + y) ** l * math.exp(-s * y), 0.0, math.inf,
                            epsabs=0.0, epsrel=1e-13, limit=400)
    return math.exp(-s) * val


def solve_A(l: float, d: float, side: str) -> float:
    """Critical-window constant: ``sigma ~ A n^{-1/(l+1)} L1(n)`` at ``beta = 1/(l+1)``.

    With ``s = A d**(1/(l+1))`` the defining equations read
    ``d * int_0^1 x^l e^{-s x} dx = 1`` (lower) and
    ``d * int_1^inf x^l e^{-s x} dx = 1`` (upper).  The upper root is always
    positive.  The lower one is positive only for ``d > l + 1``; below that
    the saddle point is negative and the signed root is returned.
    """
    if not 0 < d < math.inf:
        raise RegimeError(f"critical constant needs 0 < d < inf, got d={d}")
    c = d ** (1.0 / (l + 1.0))
    if side == LOWER:
        def F(s: float) -> float:
            return d * _lower_integral(l, s) - 1.0
        lo, hi = expand_bracket(F, 0.0, 1.0, decreasing=True)
        s = bisect(F, lo, hi, xtol=1e-15)
    elif side == UPPER:
        def G(u: float) -> float:
            return d * _upper_integral(l, math.exp(u)) - 1.0
        lo, hi = expand_bracket(G, 0.0, 1.0, decreasing=True)
        s = math.exp(bisect(G, lo, hi, xtol=1e-15))
    else:
        raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")
    return s / c


def solve_A_residual(l: float, d: float, side: str, A: float) -> float:
    """``|A^{l+1} - int t^l e^{-t} dt|`` over ``[0, A c]`` (lower) or ``[A c, inf)`` (upper).

    For a negative lower root the equivalent form ``A^{l+1} (d int_0^1 x^l
    e^{-s x} dx - 1)`` is used, with ``A^{l+1}`` read as ``|A|^{l+1}``.
    """
    c = d ** (1.0 / (l + 1.0))
    s = A * c
    if side == LOWER:
        if s >= 0:
            rhs, _ = integrate.quad(lambda t: t ** l * math.exp(-t), 0.0, s, epsabs=1e-15, epsrel=1e-13)
            return abs(A ** (l + 1.0) - rhs)
        return abs(abs(A) ** (l + 1.0) * (d * _lower_integral(l, s) - 1.0))
    rhs, _ = integrate.quad(lambda t: t ** l * math.exp(-t), s, math.inf, epsabs=1e-15, epsrel=1e-13)
    return abs(A ** (l + 1.0) - rhs)


def karamata_S(l: float, L: SlowlyVarying, sigma: float) -> float:
    """``Gamma(l) sigma^{-l} L(1/sigma)``, the leading behaviour of ``S(e^{-sigma})``."""
    if not 0 < sigma < 0.5:
        raise ValueError("karamata_S needs 0 < sigma < 0.5")
    return gamma_fn(l) * sigma ** (-l) * float(L(1.0 / sigma))


@dataclass(frozen=True)
class AsymptoticPrediction:
    sigma_pred: float
    B2_pred: float
    rho_pred: float
    c_log_pred: float | None
    constants_known: bool
    regime: Regime


def predict(l: float, L: SlowlyVarying, beta: float, side: str, n: int) -> AsymptoticPrediction:
    """Leading-order ``sigma``, ``B2``, ``rho`` (and ``ln c`` when the constants are known).

    In the power-scale regime the integral test gives ``B2 ~ Gamma(l+2)
    sigma^{-(l+2)} L(1/sigma)`` and ``rho ~ Gamma(l+3) sigma^{-(l+3)}
    L(1/sigma)``.  Elsewhere only the order (``n/|sigma|`` or ``n r`` for
    ``B2``, ``B2**2/n`` for ``rho``) is returned.
    """
    reg = classify(l, L.d, beta, side)
    case = _case(reg)
    sigma = sigma_asymptotic(l, L, beta, side, n)
    if case == "a":
        Ls = float(L(1.0 / sigma))
        B2 = gamma_fn(l + 2.0) * sigma ** (-(l + 2.0)) * Ls
        rho = gamma_fn(l + 3.0) * sigma ** (-(l + 3.0)) * Ls
        S = gamma_fn(l) * sigma ** (-l) * Ls
        c_log = -0.5 * math.log(2 * math.pi * B2) + S + n * sigma
        return AsymptoticPrediction(sigma, B2, rho, c_log, True, reg)
    r = max(1, math.floor(n ** beta))
    # the log-corrected saddle goes with variance of order n r, the critical one with n / sigma
    B2 = n * r if case == "b" else n / abs(sigma)
    return AsymptoticPrediction(sigma, B2, B2 * B2 / n, None, False, reg)


def c_log_asymptotic(pf: ParameterFunction, window: SizeWindow, n: int) -> float:
    """``-1/2 ln(2 pi B2) + S(e^{-sigma}) + n sigma`` at the exact finite-n saddle point."""
    sp = solve_sigma(pf, window, n)
    lo, hi = window.resolve(n)
    S = math.exp(log_S(pf, SizeWindow(lo, hi), sp.sigma, n))
    return -0.5 * math.log(2 * math.pi * sp.B2) + S + n * sp.sigma


def limit_d(l: float, d: float | None, beta: float | None, side: str,
            r_fixed: int | None = None, pf: ParameterFunction | None = None) -> float:
    """Limit of ``c_n^{(r)} / c_n`` as ``n -> inf``.

    Lower side (largest component ``<= n**beta``): 0 below the threshold, 1
    above it, and at the threshold 1 only when ``d`` is infinite.  Upper
    side (smallest component ``>= r``): 0 for ``r = n**beta``, ``beta > 0``;
    ``exp(-(a_1 + ... + a_{r-1}))`` for a fixed ``r``.
    """
    if side == LOWER:
        if beta is None:
            raise RegimeError("lower side needs beta")
        reg = classify(l, d, beta, side)
        if reg.regime_class == CRITICAL:
            if d is None:
                raise RegimeError("critical beta needs d = lim L(n)")
            return 1.0 if d == math.inf else 0.0
        return 1.0 if reg.regime_class == SUPERCRITICAL else 0.0
    if side != UPPER:
        raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")
    if r_fixed is not None:
        if r_fixed <= 1:
            return 1.0
        if pf is None:
            raise ValueError("fixed r needs the parameter function")
        la = pf.log_a(r_fixed - 1)
        return math.exp(-float(np.exp(la[1:]).sum()))
    if beta is None:
        raise RegimeError("r growing slower than every power of n is not covered")
    return 1.0 if beta == 0 else 0.0


def kp_limit(l: float, d: float | None, pf: ParameterFunction | None, p: int | None, k: int,
             growing: bool = False) -> float:
    """Limit of ``P(K_p = k)``.

    Fixed ``p``: the Poisson(``a_p``) mass at ``k``.  ``p`` growing between
    ``n**eps`` and ``n**beta`` with ``beta < 1/(l+1)``: only ``k = 0`` is
    covered, with limit 1, ``e^{-d}`` or 0 for ``l <``, ``=``, ``> 1``.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if growing:
        if k != 0:
            raise RegimeError("growing p is only covered for k = 0")
        if l < 1:
            return 1.0
        if l > 1:
            return 0.0
        if d is None:
            raise RegimeError("l = 1 needs d = lim L(n)")
        return math.exp(-d)
    if pf is None or p is None:
        raise ValueError("fixed p needs the parameter function and p")
    ap = math.exp(pf.log_a(p)[p])
    return math.exp(k * math.log(ap) - ap - math.lgamma(k + 1)) if ap > 0 else float(k == 0)


def knopfmacher_h1(h: float) -> float:
    """``h^{1/4} e^{-h/2} / (2 sqrt(pi))``."""
    return h ** 0.25 * math.exp(-h / 2.0) / (2.0 * math.sqrt(math.pi))


def knopfmacher_c(h: float, q: float, n: int) -> float:
    """Predicted ``ln c_n = ln h1 + n ln q + 2 sqrt(h n) - (3/4) ln n`` for ``p_n ~ h q^n``."""
    if q <= 1:
        raise ValueError("q must exceed 1")
    if h <= 0:
        raise ValueError("h must be positive")
    return math.log(knopfmacher_h1(h)) + n * math.log(q) + 2.0 * math.sqrt(h * n) - 0.75 * math.log(n)


def geometric_ans_log_offset(h: float, q: float, tol: float = 1e-17) -> float:
    """``sum_{m>=2} P(q^{-m}) / m`` for generators ``p_j = h q^j``.

    After rescaling by ``q^{-n}`` these terms add a constant to ``S(1)``
    that the leading-order constant ``h1`` leaves out, so the true
    coefficient ratio to :func:`knopfmacher_c` tends to ``exp`` of this.
    """
    total = 0.0
    m = 2
    while True:
        x = q ** (1 - m)
        term = h * x / (1.0 - x) / m
        total += term
        if term < tol * total or m > 10_000:
            return total
        m += 1


def geometric_ans(h: float, q: float, n_max: int) -> ParameterFunction:
    """``a_n = sum_{jm=n} p_j / m`` for ``p_j = h q^j``, rescaled by ``q^{-n}``."""
    lh, lq = math.log(h), math.log(q)
    pf = multiset_to_a(lambda j: lh + j * lq, n_max, log_m=True, l=1.0,
                       L=SlowlyVarying.constant(h), label=f"ANS p_j={h}*{q}^j")
    return h_transform(pf, 1.0 / q)


def ans_pipeline(h: float, q: float, ns: Sequence[int]) -> list[dict]:
    """Exact ``ln c_n`` for ``p_j = h q^j`` against the closed form, one row per ``n``.

    ``ratio`` compares with :func:`knopfmacher_c`; ``ratio_offset`` divides
    out ``exp(geometric_ans_log_offset(h, q))``.
    """
    n_max = max(ns)
    pf = geometric_ans(h, q, n_max)
    lc = log_coefficients(pf, SizeWindow(), n_max)
    off = geometric_ans_log_offset(h, q)
    rows = []
    for n in ns:
        exact = float(lc[n]) + n * math.log(q)
        pred = knopfmacher_c(h, q, n)
        rows.append({"n": n, "log_c": exact, "log_c_pred": pred, "ratio": math.exp(exact - pred),
                     "ratio_offset": math.exp(exact - pred - off)})
    return rows


@dataclass(frozen=True)
class DensityReport:
    n: int
    side: str
    r: int
    finite: float
    limit: float


def density_ratio(pf: ParameterFunction, n: int, side: str, *, beta: float | None = None,
                  r_fixed: int | None = None) -> DensityReport:
    """Density of the subset whose components all lie in the lower/upper window.

    Returns the finite-``n`` ratio from the coefficient tables together with
    the limit from :func:`limit_d`.
    """
    if (beta is None) == (r_fixed is None):
        raise ValueError("give exactly one of beta and r_fixed")
    r = r_fixed if r_fixed is not None else max(1, math.floor(n ** beta))
    r = min(r, n)
    low, up = d_ratios(pf, n, r)
    finite = low if side == LOWER else up
    if r_fixed is not None and side == LOWER:
        limit = 0.0 if r < n else 1.0
    else:
        limit = limit_d(pf.l, pf.L.d, beta, side, r_fixed=r_fixed, pf=pf)
    return DensityReport(n=n, side=side, r=r, finite=finite, limit=limit)
