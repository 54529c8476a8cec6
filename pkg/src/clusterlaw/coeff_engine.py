"""Coefficients ``c_n`` of ``exp(S(z))`` and the finite-n cluster statistics built from them.

``c_n`` is computed from ``n c_n = sum_k k a_k c_{n-k}`` (differentiate
``g = exp(S)``) entirely in log space.  Restricting ``k`` to a size window
gives the coefficients of ``exp`` of a truncated series; forcing some
``a_p`` to zero gives the tables needed for the counts ``K_p``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import mpmath
import numpy as np

from .sequences import ParameterFunction

__all__ = [
    "SizeWindow",
    "CoefficientTable",
    "compute_table",
    "log_coefficients",
    "partitions",
    "brute_force_c",
    "BRUTE_FORCE_MAX_N",
    "EXACT_TABLE_MAX_N",
    "d_ratios",
    "largest_cluster_cdf",
    "smallest_cluster_tail",
    "kp_marginal",
    "kp_joint",
    "kp_mean",
    "kp_covariance",
    "table_rows",
]

log = logging.getLogger(__name__)

BRUTE_FORCE_MAX_N = 25
EXACT_TABLE_MAX_N = 400


@dataclass(frozen=True)
class SizeWindow:
    """Allowed component sizes ``lo..hi``; ``hi=None`` means no upper limit."""

    lo: int = 1
    hi: int | None = None

    def __post_init__(self) -> None:
        if self.lo < 1:
            raise ValueError("window lower end must be >= 1")
        if self.hi is not None and self.hi < self.lo:
            raise ValueError(f"empty window [{self.lo}, {self.hi}]")

    @classmethod
    def lower(cls, r: int) -> "SizeWindow":
        """Components of size at most ``r``."""
        return cls(1, int(r))

    @classmethod
    def upper(cls, r: int) -> "SizeWindow":
        """Components of size at least ``r``."""
        return cls(int(r), None)

    def resolve(self, n: int) -> tuple[int, int]:
        """Concrete ``(lo, hi)`` clipped to ``[1, n]``; may be empty (``lo > hi``)."""
        hi = n if self.hi is None else min(self.hi, n)
        return self.lo, hi

    def contains(self, j: int) -> bool:
        return j >= self.lo and (self.hi is None or j <= self.hi)

    def __str__(self) -> str:
        return f"[{self.lo},{'n' if self.hi is None else self.hi}]"


@dataclass(frozen=True)
class CoefficientTable:
    n_max: int
    window: SizeWindow
    log_c: np.ndarray
    exact_c: tuple[Fraction, ...] | None = None
    excluded: frozenset[int] = frozenset()

    def c(self, n: int) -> float:
        return math.exp(self.log_c[n])


def _recurrence(lka: np.ndarray, n_max: int) -> np.ndarray:
    """Log-space ``m c_m = sum_k exp(lka[k]) c_{m-k}`` for ``m = 1..n_max``."""
    lc = np.full(n_max + 1, -np.inf)
    lc[0] = 0.0
    active = np.flatnonzero(np.isfinite(lka))
    if active.size == 0:
        return lc
    k_lo = int(active[0])
    logm = np.log(np.arange(1, n_max + 1, dtype=float))
    for m in range(k_lo, n_max + 1):
        # terms k = k_lo..m pair lka[k] with lc[m-k]
        v = lka[k_lo:m + 1] + lc[m - k_lo::-1]
        mx = v.max()
        if mx == -np.inf:
            continue
        lc[m] = mx + math.log(np.exp(v - mx).sum()) - logm[m - 1]
    return lc


@lru_cache(maxsize=128)
def _cached_log_table(pf: ParameterFunction, lo: int, hi: int | None, n_max: int,
                      excluded: frozenset[int]) -> np.ndarray:
    la = pf.log_a(n_max)
    lka = la.copy()
    lka[1:] += np.log(np.arange(1, n_max + 1, dtype=float))
    lka[:lo] = -np.inf
    if hi is not None:
        lka[hi + 1:] = -np.inf
    for p in excluded:
        if 1 <= p <= n_max:
            lka[p] = -np.inf
    out = _recurrence(lka, n_max)
    out.flags.writeable = False
    return out


def log_coefficients(pf: ParameterFunction, window: SizeWindow, n_max: int,
                     excluded: Sequence[int] = ()) -> np.ndarray:
    """``ln c_m`` for ``m = 0..n_max`` (read-only, cached per ``pf`` identity)."""
    return _cached_log_table(pf, window.lo, window.hi, int(n_max), frozenset(excluded))


def _exact_table(pf: ParameterFunction, window: SizeWindow, n_max: int,
                 excluded: frozenset[int]) -> tuple[Fraction, ...] | None:
    lo, hi = window.resolve(n_max)
    ka: dict[int, Fraction] = {}
    for k in range(lo, hi + 1):
        if k in excluded:
            continue
        a = pf.exact_a(k)
        if a is None:
            return None
        ka[k] = k * a
    c = [Fraction(1)] + [Fraction(0)] * n_max
    for m in range(1, n_max + 1):
        s = sum((v * c[m - k] for k, v in ka.items() if k <= m), Fraction(0))
        c[m] = s / m
    return tuple(c)


def compute_table(pf: ParameterFunction, window: SizeWindow = SizeWindow(), n_max: int = 0,
                  *, exact: bool = False, excluded: Sequence[int] = ()) -> CoefficientTable:
    """Coefficient table of ``exp(sum_{j in window} a_j z^j)`` up to ``z**n_max``.

    ``exact=True`` additionally runs the recurrence in rational arithmetic
    when every ``a_j`` is rational (``n_max <= EXACT_TABLE_MAX_N``).
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    lo, hi = window.resolve(n_max)
    if lo > hi and n_max > 0:
        log.warning("window %s does not meet [1, %d]; table is 1, 0, 0, ...", window, n_max)
    excl = frozenset(int(p) for p in excluded)
    lc = log_coefficients(pf, window, n_max, excl)
    exact_c = None
    if exact:
        if n_max > EXACT_TABLE_MAX_N:
            raise ValueError(f"exact mode is limited to n_max <= {EXACT_TABLE_MAX_N}")
        exact_c = _exact_table(pf, window, n_max, excl)
    return CoefficientTable(n_max=n_max, window=window, log_c=lc, exact_c=exact_c, excluded=excl)


def partitions(n: int, lo: int = 1, hi: int | None = None) -> Iterator[dict[int, int]]:
    """All partitions of ``n`` with parts in ``[lo, hi]`` as ``{size: count}`` maps."""
    hi = n if hi is None else min(hi, n)

    def rec(rest: int, largest: int) -> Iterator[list[int]]:
        if rest == 0:
            yield []
            return
        for part in range(min(rest, largest), lo - 1, -1):
            for tail in rec(rest - part, part):
                yield [part] + tail

    for parts in rec(n, hi):
        occ: dict[int, int] = {}
        for p in parts:
            occ[p] = occ.get(p, 0) + 1
        yield occ


def brute_force_c(pf: ParameterFunction, window: SizeWindow, n: int):
    """Sum of ``prod a_i**k_i / k_i!`` over partitions of ``n`` with parts in the window.

    Returns a :class:`~fractions.Fraction` when every needed ``a_j`` is rational,
    otherwise an ``mpmath.mpf`` computed at 50 significant digits.
    """
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force oracle refuses n > {BRUTE_FORCE_MAX_N}")
    lo, hi = window.resolve(n)
    sizes = range(lo, hi + 1)
    exact = {j: pf.exact_a(j) for j in sizes}
    if all(v is not None for v in exact.values()):
        total = Fraction(0)
        for occ in partitions(n, lo, hi):
            term = Fraction(1)
            for i, k in occ.items():
                term *= exact[i] ** k / math.factorial(k)
            total += term
        return total
    with mpmath.workdps(50):
        la = pf.log_a(max(n, 1))
        a = {j: mpmath.exp(mpmath.mpf(float(la[j]))) for j in sizes}
        total = mpmath.mpf(0)
        for occ in partitions(n, lo, hi):
            term = mpmath.mpf(1)
            for i, k in occ.items():
                term *= a[i] ** k / mpmath.factorial(k)
            total += term
        return +total


def _ratio(log_num: float, log_den: float) -> float:
    if log_den == -np.inf:
        raise ZeroDivisionError("denominator coefficient is zero")
    return math.exp(log_num - log_den)


def d_ratios(pf: ParameterFunction, n: int, r: int) -> tuple[float, float]:
    """``(c_n^{[1,r]} / c_n, c_n^{[r,n]} / c_n)``; part size ``r`` is allowed in both."""
    if not 1 <= r <= n:
        raise ValueError("need 1 <= r <= n")
    full = log_coefficients(pf, SizeWindow(), n)[n]
    low = log_coefficients(pf, SizeWindow.lower(r), n)[n]
    up = log_coefficients(pf, SizeWindow.upper(r), n)[n]
    return _ratio(low, full), _ratio(up, full)


def largest_cluster_cdf(pf: ParameterFunction, n: int, r: int) -> float:
    """``P(largest component <= r)`` under the measure on partitions of ``n``."""
    if r >= n:
        return 1.0
    full = log_coefficients(pf, SizeWindow(), n)[n]
    return _ratio(log_coefficients(pf, SizeWindow.lower(r), n)[n], full)


def smallest_cluster_tail(pf: ParameterFunction, n: int, r: int) -> float:
    """``P(smallest component >= r)``."""
    if r < 1:
        raise ValueError("r must be >= 1")
    if r == 1:
        return 1.0
    if r > n:
        return 0.0
    full = log_coefficients(pf, SizeWindow(), n)[n]
    return _ratio(log_coefficients(pf, SizeWindow.upper(r), n)[n], full)


def kp_joint(pf: ParameterFunction, n: int, ps: Sequence[int], ks: Sequence[int]) -> float:
    """``P(K_{p_1} = k_1, ..., K_{p_s} = k_s)`` exactly.

    Uses ``prod_j a_{p_j}**k_j / k_j! * c'_{n - sum p_j k_j} / c_n`` where
    ``c'`` has every size ``p_j`` forbidden.
    """
    ps = [int(p) for p in ps]
    ks = [int(k) for k in ks]
    if len(ps) != len(ks):
        raise ValueError("p-tuple and k-tuple differ in length")
    if len(set(ps)) != len(ps):
        raise ValueError("sizes p_j must be distinct")
    if any(p < 1 for p in ps) or any(k < 0 for k in ks):
        raise ValueError("need p_j >= 1 and k_j >= 0")
    rest = n - sum(p * k for p, k in zip(ps, ks))
    if rest < 0:
        return 0.0
    la = pf.log_a(n) if n >= max(ps) else pf.log_a(max(ps))
    lw = sum(k * la[p] - math.lgamma(k + 1) for p, k in zip(ps, ks) if k)
    lexcl = log_coefficients(pf, SizeWindow(), n, frozenset(p for p in ps if p <= n))[rest]
    return _ratio(lw + lexcl, log_coefficients(pf, SizeWindow(), n)[n])


def kp_marginal(pf: ParameterFunction, n: int, p: int, k: int) -> float:
    """``P(K_p = k)``: probability of exactly ``k`` components of size ``p``."""
    return kp_joint(pf, n, [p], [k])


def kp_mean(pf: ParameterFunction, n: int, p: int) -> float:
    """``E K_p = a_p c_{n-p} / c_n``."""
    if p > n:
        return 0.0
    lc = log_coefficients(pf, SizeWindow(), n)
    return _ratio(pf.log_a(n)[p] + lc[n - p], lc[n])


def kp_covariance(pf: ParameterFunction, n: int, p: int, q: int) -> float:
    """``cov(K_p, K_q)`` for ``p != q`` from ``E K_p K_q = a_p a_q c_{n-p-q} / c_n``."""
    if p == q:
        raise ValueError("use distinct sizes")
    lc = log_coefficients(pf, SizeWindow(), n)
    la = pf.log_a(n)
    joint = 0.0 if p + q > n else _ratio(la[p] + la[q] + lc[n - p - q], lc[n])
    return joint - kp_mean(pf, n, p) * kp_mean(pf, n, q)


def table_rows(table: CoefficientTable) -> list[dict]:
    """Rows for CSV/JSON emission: ``n, log_c, c`` (when representable), window bounds."""
    rows = []
    for n, lc in enumerate(table.log_c):
        c = math.exp(lc) if lc < 709 else None
        row = {"n": n, "log_c": float(lc), "c": c, "window_lo": table.window.lo,
               "window_hi": "n" if table.window.hi is None else table.window.hi}
        if table.exact_c is not None:
            row["numerator"] = str(table.exact_c[n].numerator)
            row["denominator"] = str(table.exact_c[n].denominator)
        rows.append(row)
    return rows
