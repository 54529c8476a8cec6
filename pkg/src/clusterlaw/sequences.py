"""Parameter functions ``a_j ~ j^(l-1) L(j)`` and the slowly varying factors behind them.

A :class:`ParameterFunction` is the single input of every model in this
package.  Internally everything is evaluated through :meth:`ParameterFunction.log_a`
so that exponentially growing sequences (multisets, additive number systems)
never overflow.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .rootfind import bisect, expand_bracket

__all__ = [
    "InvalidParameterFunction",
    "SlowlyVarying",
    "ParameterFunction",
    "eval_a",
    "h_transform",
    "conjugate_sv",
    "divisor_sums",
    "multiset_to_a",
    "dominant_term_ratios",
    "slow_variation_ratios",
    "parameter_function_from_config",
    "CONJUGATE_X_MIN",
]

# below this the defining relation of the conjugate is not informative
CONJUGATE_X_MIN = 10.0


class InvalidParameterFunction(ValueError):
    """A parameter function produced a non-positive (or non-finite) value."""


@dataclass(frozen=True, eq=False)
class SlowlyVarying:
    """A slowly varying function ``L`` together with ``d = lim L(x)``.

    Built-in kinds are ``constant`` (``L = h``) and ``log-power``
    (``L(x) = h * ln(e + x)**p``).  ``custom`` wraps any positive vectorised
    callable; it has no automatic conjugate.  ``d`` may be ``None`` for a
    custom function whose limit is unknown.
    """

    kind: str
    h: float = 1.0
    p: float = 0.0
    func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    d: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "log-power", "custom"):
            raise ValueError(f"unknown slowly varying kind {self.kind!r}")
        if self.kind == "custom":
            if self.func is None:
                raise ValueError("custom slowly varying function needs func")
        elif not self.h > 0:
            raise ValueError("h must be positive")
        if self.d is None and self.kind != "custom":
            object.__setattr__(self, "d", self._limit())

    @classmethod
    def constant(cls, h: float = 1.0) -> "SlowlyVarying":
        return cls("constant", h=float(h))

    @classmethod
    def log_power(cls, h: float = 1.0, p: float = 1.0) -> "SlowlyVarying":
        if p == 0:
            return cls.constant(h)
        return cls("log-power", h=float(h), p=float(p))

    @classmethod
    def custom(
        cls, func: Callable[[np.ndarray], np.ndarray], d: float | None = None
    ) -> "SlowlyVarying":
        return cls("custom", func=func, d=d)

    def _limit(self) -> float:
        if self.kind == "constant" or self.p == 0:
            return self.h
        return math.inf if self.p > 0 else 0.0

    def __call__(self, x):
        return np.exp(self.log(x))

    def log(self, x):
        """Vectorised ``ln L(x)``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, math.log(self.h))
        if self.kind == "log-power":
            return math.log(self.h) + self.p * np.log(np.log(math.e + x))
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.func(x), dtype=float))

    def power(self, e: float) -> "SlowlyVarying":
        """``L**e``, again slowly varying."""
        if self.kind == "constant":
            return SlowlyVarying.constant(self.h**e)
        if self.kind == "log-power":
            return SlowlyVarying.log_power(self.h**e, self.p * e)
        f = self.func
        d = None if self.d is None else self.d**e
        return SlowlyVarying.custom(lambda x: np.asarray(f(x), dtype=float) ** e, d)


@dataclass(frozen=True, eq=False)
class ParameterFunction:
    """The positive sequence ``a_1, a_2, ...`` with its regular-variation descriptor.

    Exactly one of three sources supplies the values: the default
    ``j**(l-1) * L(j)``, a vectorised ``a_eval`` callable, or a tabulated
    ``log_table`` (``log_table[j] = ln a_j``, index 0 unused).  ``h_scale``
    applies the transform ``a_j -> h_scale**j * a_j`` on top of any source.
    Instances hash by identity so they can key coefficient caches.
    """

    l: float
    L: SlowlyVarying = field(default_factory=SlowlyVarying.constant)
    a_eval: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    log_table: np.ndarray | None = field(default=None, repr=False)
    h_scale: float = 1.0
    exact_table: tuple[Fraction, ...] | None = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self) -> None:
        if not self.l > 0:
            raise ValueError("regular-variation exponent l must be positive")
        if not self.h_scale > 0:
            raise ValueError("h_scale must be positive")
        if self.a_eval is not None and self.log_table is not None:
            raise ValueError("give a_eval or log_table, not both")

    @property
    def max_n(self) -> float:
        """Largest index for which values are available."""
        if self.log_table is not None:
            return len(self.log_table) - 1
        return math.inf

    def _base_log(self, j: np.ndarray) -> np.ndarray:
        if self.log_table is not None:
            return self.log_table[j]
        jf = j.astype(float)
        if self.a_eval is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.log(np.asarray(self.a_eval(jf), dtype=float))
        return (self.l - 1.0) * np.log(jf) + self.L.log(jf)

    def log_a(self, n_max: int) -> np.ndarray:
        """Array ``out[j] = ln(h_scale**j * a_j)`` for ``j = 0..n_max``; ``out[0] = -inf``."""
        n_max = int(n_max)
        if n_max > self.max_n:
            raise ValueError(f"parameter function tabulated only up to {self.max_n}, need {n_max}")
        out = np.full(n_max + 1, -np.inf)
        if n_max == 0:
            return out
        j = np.arange(1, n_max + 1)
        vals = self._base_log(j)
        if self.h_scale != 1.0:
            vals = vals + j * math.log(self.h_scale)
        bad = ~np.isfinite(vals) & ~(vals == np.inf)
        if bad.any():
            first = int(j[np.argmax(bad)])
            raise InvalidParameterFunction(f"a_{first} is not positive")
        out[1:] = vals
        return out

    def exact_a(self, j: int) -> Fraction | None:
        """Exact rational ``a_j`` (``h_scale`` included) when one exists, else ``None``."""
        if self.exact_table is not None:
            if j < len(self.exact_table):
                base = self.exact_table[j]
            else:
                return None
        elif self.a_eval is None and self.log_table is None and self.L.kind == "constant":
            e = self.l - 1.0
            if e != int(e):
                return None
            base = Fraction(j) ** int(e) * Fraction(self.L.h)
        else:
            return None
        return base * Fraction(self.h_scale) ** j

    def describe(self) -> dict[str, Any]:
        out: dict[str, Any] = {"l": self.l, "L": {"kind": self.L.kind, "h": self.L.h, "p": self.L.p},
                               "h_scale": self.h_scale}
        if self.label:
            out["label"] = self.label
        return out


def eval_a(pf: ParameterFunction, j: int) -> float:
    """``h_scale**j * a_j`` as a float (may be ``inf`` for huge tabulated values)."""
    if j < 1:
        raise ValueError("index must be >= 1")
    val = float(np.exp(pf.log_a(j)[j]))
    if not val > 0:
        raise InvalidParameterFunction(f"a_{j} = {val} is not positive")
    return val


def h_transform(pf: ParameterFunction, h: float) -> ParameterFunction:
    """Return the sequence ``j -> h**j * a_j``; the input is left untouched."""
    if not h > 0:
        raise ValueError("h must be positive")
    return dataclasses.replace(pf, h_scale=pf.h_scale * h)


def conjugate_sv(L: SlowlyVarying, x: float) -> float:
    """De Bruijn conjugate ``L*(x)``, solving ``v * L(x v) = 1`` for ``v``.

    Constant ``h`` gives ``1/h`` exactly.  For log-powers the relation is
    solved in ``u = ln v``, where ``u + ln L(x e^u)`` is increasing.
    """
    if x < CONJUGATE_X_MIN:
        raise ValueError(f"conjugate needs x >= {CONJUGATE_X_MIN}, got {x}")
    if L.kind == "constant":
        return 1.0 / L.h
    if L.kind != "log-power":
        raise NotImplementedError("no automatic conjugate for a custom slowly varying function")

    def g(u: float) -> float:
        return u + float(L.log(x * math.exp(u)))

    u0 = -float(L.log(x))
    lo, hi = expand_bracket(g, u0, 0.5, decreasing=False)
    return math.exp(bisect(g, lo, hi, xtol=1e-14))


def slow_variation_ratios(
    L: SlowlyVarying, lambdas: Sequence[float] = (2.0, 10.0),
    xs: Sequence[float] = (1e3, 1e4, 1e5, 1e6),
) -> dict[float, list[float]]:
    """``L(lam x)/L(x)`` on a grid of ``x`` for each ``lam``."""
    return {lam: [float(L(lam * x) / L(x)) for x in xs] for lam in lambdas}


def _as_callable(m) -> Callable[[int], Any]:
    if callable(m):
        return m
    seq = list(m)
    return lambda j: seq[j - 1] if j <= len(seq) else 0


def divisor_sums(m, n_max: int) -> list:
    """``a_n = sum over j*k = n of m_j / k`` for ``n = 1..n_max`` (``out[0]`` unused).

    Works for any number type supporting ``+`` and ``/ int`` (ints and
    Fractions give exact results).  ``m`` is a callable ``j -> m_j`` or a
    sequence starting at ``m_1``.
    """
    get = _as_callable(m)
    mv = [None] + [get(j) for j in range(1, n_max + 1)]
    out: list = [0] * (n_max + 1)
    for j in range(1, n_max + 1):
        mj = mv[j]
        if not mj:
            continue
        for k in range(1, n_max // j + 1):
            term = Fraction(mj, k) if isinstance(mj, Rational) else mj / k
            out[j * k] += term
    return out


def _log_divisor_sums(log_m: np.ndarray, n_max: int) -> np.ndarray:
    la = np.full(n_max + 1, -np.inf)
    for k in range(1, n_max + 1):
        top = n_max // k
        idx = np.arange(1, top + 1) * k
        la[idx] = np.logaddexp(la[idx], log_m[1:top + 1] - math.log(k))
    return la


def multiset_to_a(
    m,
    n_max: int,
    *,
    log_m: bool = False,
    l: float = 1.0,
    L: SlowlyVarying | None = None,
    label: str = "",
) -> ParameterFunction:
    """Tabulate ``a_n = sum_{jk=n} m_j / k`` for a multiset (or additive number system).

    With ``log_m=True`` the supplied values are ``ln m_j`` and the sieve runs
    in log space, so ``m_j = q**j`` is fine for any ``n_max``.  ``l`` and ``L``
    only describe the expected regular variation of the result.  Integer or
    Fraction inputs also produce an exact rational table.
    """
    get = _as_callable(m)
    raw = [get(j) for j in range(1, n_max + 1)]
    if log_m:
        lm = np.array([-np.inf] + [float(v) for v in raw])
    else:
        vals = np.array([0.0] + [float(v) for v in raw])
        if (vals < 0).any():
            raise ValueError("multiset counts must be nonnegative")
        with np.errstate(divide="ignore"):
            lm = np.log(vals)
    if not np.isfinite(lm[1:]).any():
        raise InvalidParameterFunction("all m_j are zero")
    la = _log_divisor_sums(lm, n_max)
    if n_max and not np.isfinite(la[1:]).all():
        first = int(np.argmin(np.isfinite(la[1:]))) + 1
        raise InvalidParameterFunction(f"a_{first} = 0; the saddle machinery needs a_n > 0")
    exact = None
    if not log_m and n_max <= 2000 and all(isinstance(v, Rational) for v in raw):
        exact = tuple([Fraction(0)] + [Fraction(v) for v in divisor_sums(raw, n_max)[1:]])
    return ParameterFunction(l=l, L=L or SlowlyVarying.constant(), log_table=la,
                             exact_table=exact, label=label or "multiset")


def dominant_term_ratios(m, n_max: int, *, log_m: bool = False) -> np.ndarray:
    """Ratios ``a_j / m_j`` for ``j = 1..n_max`` (returned array is indexed from 0 = j=1)."""
    pf = multiset_to_a(m, n_max, log_m=log_m)
    get = _as_callable(m)
    lm = np.array([float(get(j)) for j in range(1, n_max + 1)])
    if not log_m:
        lm = np.log(lm)
    return np.exp(pf.log_a(n_max)[1:] - lm)


def _read_csv_column(path: str | Path, column: str | int) -> list[float]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    if isinstance(column, int):
        idx = column
    else:
        try:
            idx = header.index(column)
        except ValueError:
            raise ValueError(f"{path}: no column {column!r} in header {header}") from None
    out = []
    for lineno, row in enumerate(body, start=2):
        try:
            out.append(float(row[idx]))
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad m_j value ({exc})") from None
    return out


def parameter_function_from_config(cfg: Mapping[str, Any], n_max: int | None = None) -> ParameterFunction:
    """Build a parameter function from a plain mapping.

    Recognised keys: ``l``, ``L`` (``{"kind", "h", "p"}``), ``h_scale``, and
    for tabulated multisets ``m_csv`` (``{"path", "column", "log"}``) or
    ``m_geometric`` (``{"q", "h"}``: ``m_j = h q**j``), both of which need
    ``n_max``.
    """
    l = float(cfg.get("l", 1.0))
    lcfg = cfg.get("L", {}) or {}
    kind = lcfg.get("kind", "constant")
    h = float(lcfg.get("h", 1.0))
    if kind == "constant":
        L = SlowlyVarying.constant(h)
    elif kind == "log-power":
        L = SlowlyVarying.log_power(h, float(lcfg.get("p", 1.0)))
    else:
        raise ValueError(f"L.kind must be 'constant' or 'log-power', got {kind!r}")
    h_scale = float(cfg.get("h_scale", 1.0))
    if "m_csv" in cfg or "m_geometric" in cfg:
        if n_max is None:
            raise ValueError("a tabulated parameter function needs n_max")
        if "m_csv" in cfg:
            src = cfg["m_csv"]
            vals = _read_csv_column(src["path"], src.get("column", 0))
            pf = multiset_to_a(vals, n_max, log_m=bool(src.get("log", False)), l=l, L=L,
                               label=f"csv:{src['path']}")
        else:
            q = float(cfg["m_geometric"]["q"])
            hh = float(cfg["m_geometric"].get("h", 1.0))
            pf = multiset_to_a(lambda j: math.log(hh) + j * math.log(q), n_max, log_m=True,
                               l=l, L=L, label=f"geometric q={q} h={hh}")
        return h_transform(pf, h_scale) if h_scale != 1.0 else pf
    return ParameterFunction(l=l, L=L, h_scale=h_scale)
