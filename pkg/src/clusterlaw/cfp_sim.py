"""Reversible coagulation-fragmentation on partitions of ``n``.

States are partitions ``eta = (k_1, ..., k_n)`` with ``sum i k_i = n``.  With
mass-action totals

    merge i != j : psi(i, j) k_i k_j
    merge i == i : psi(i, i) k_i (k_i - 1)
    split i + j  : phi(i, j) k_{i+j}

and ``psi/phi = a_{i+j} / (a_i a_j)`` the chain is reversible with invariant
measure proportional to ``prod a_i^{k_i} / k_i!``.  The default intensities are
``psi(i, j) = a_{i+j}`` and ``phi(i, j) = a_i a_j``.
"""

from __future__ import annotations

import bisect as _bisect
import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .coeff_engine import partitions
from .sequences import ParameterFunction

__all__ = [
    "PartitionState",
    "Transition",
    "CfpModel",
    "ExactMeasure",
    "ENUMERATE_MAX_N",
    "enumerate_states",
    "exact_measure",
    "total_rates",
    "Trace",
    "simulate",
    "detailed_balance_residual",
    "TraceStatistics",
    "trace_statistics",
    "tv_distance",
    "write_trace_csv",
]

ENUMERATE_MAX_N = 60


@dataclass(frozen=True, order=True)
class PartitionState:
    """Occupancy of a partition as sorted ``(size, count)`` pairs with ``count > 0``."""

    occupancy: tuple[tuple[int, int], ...]

    @classmethod
    def from_counts(cls, counts: dict[int, int]) -> "PartitionState":
        return cls(tuple(sorted((i, k) for i, k in counts.items() if k > 0)))

    @classmethod
    def singletons(cls, n: int) -> "PartitionState":
        return cls(((1, n),))

    @property
    def n(self) -> int:
        return sum(i * k for i, k in self.occupancy)

    def k(self, i: int) -> int:
        for size, count in self.occupancy:
            if size == i:
                return count
        return 0

    def counts(self) -> dict[int, int]:
        return dict(self.occupancy)

    @property
    def largest(self) -> int:
        return self.occupancy[-1][0]

    @property
    def smallest(self) -> int:
        return self.occupancy[0][0]

    def moved(self, remove: Iterable[int], add: Iterable[int]) -> "PartitionState":
        c = self.counts()
        for i in remove:
            c[i] = c.get(i, 0) - 1
            if c[i] < 0:
                raise ValueError(f"no component of size {i} to remove")
        for i in add:
            c[i] = c.get(i, 0) + 1
        return PartitionState.from_counts(c)

    def __str__(self) -> str:
        return "{" + ",".join(f"{i}^{k}" if k > 1 else str(i) for i, k in reversed(self.occupancy)) + "}"


@dataclass(frozen=True)
class Transition:
    kind: str  # "merge" or "split"
    i: int
    j: int
    rate: float
    target: PartitionState


@dataclass(frozen=True, eq=False)
class CfpModel:
    """Intensities of a coagulation-fragmentation process for total mass ``n``."""

    pf: ParameterFunction
    n: int
    psi: Callable[[int, int], float] | None = None
    phi: Callable[[int, int], float] | None = None
    gamma: float = 1.0
    _a: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.gamma != 1.0:
            raise ValueError("only mass-action kinetics (gamma = 1) is supported")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        object.__setattr__(self, "_a", np.exp(self.pf.log_a(self.n)))

    def a(self, i: int) -> float:
        return float(self._a[i])

    def merge_rate(self, i: int, j: int) -> float:
        return self.psi(i, j) if self.psi is not None else self.a(i + j)

    def split_rate(self, i: int, j: int) -> float:
        return self.phi(i, j) if self.phi is not None else self.a(i) * self.a(j)

    def reversibility_residual(self) -> float:
        """Max relative deviation of ``psi/phi`` from ``a_{i+j} / (a_i a_j)``."""
        worst = 0.0
        for s in range(2, self.n + 1):
            for i in range(1, s // 2 + 1):
                j = s - i
                want = self.a(s) / (self.a(i) * self.a(j))
                got = self.merge_rate(i, j) / self.split_rate(i, j)
                worst = max(worst, abs(got / want - 1.0))
        return worst


def enumerate_states(n: int) -> list[PartitionState]:
    """Every partition of ``n`` (count equals the partition number ``p(n)``)."""
    if n > ENUMERATE_MAX_N:
        raise ValueError(f"state enumeration refuses n > {ENUMERATE_MAX_N}")
    if n < 1:
        raise ValueError("n must be >= 1")
    return [PartitionState.from_counts(occ) for occ in partitions(n)]


@dataclass(frozen=True)
class ExactMeasure:
    states: list[PartitionState]
    probs: np.ndarray
    log_normalizer: float  # ln c_n

    def as_dict(self) -> dict[PartitionState, float]:
        return dict(zip(self.states, self.probs.tolist()))


def _log_weight(la: np.ndarray, state: PartitionState) -> float:
    return sum(k * la[i] - math.lgamma(k + 1) for i, k in state.occupancy)


def exact_measure(pf: ParameterFunction, n: int) -> ExactMeasure:
    """Invariant measure ``mu_n(eta) = prod a_i^{k_i}/k_i! / c_n`` over all partitions."""
    states = enumerate_states(n)
    la = pf.log_a(n)
    lw = np.array([_log_weight(la, s) for s in states])
    mx = lw.max()
    log_norm = mx + math.log(np.exp(lw - mx).sum())
    return ExactMeasure(states=states, probs=np.exp(lw - log_norm), log_normalizer=log_norm)


def total_rates(model: CfpModel, state: PartitionState) -> list[Transition]:
    """All transitions out of ``state`` with their mass-action total intensities."""
    out: list[Transition] = []
    occ = state.occupancy
    for a_idx, (i, ki) in enumerate(occ):
        for j, kj in occ[a_idx:]:
            if i == j:
                if ki < 2:
                    continue
                mult = ki * (ki - 1)
            else:
                mult = ki * kj
            rate = model.merge_rate(i, j) * mult
            out.append(Transition("merge", i, j, rate, state.moved((i, j), (i + j,))))
    for s, ks in occ:
        for i in range(1, s // 2 + 1):
            j = s - i
            rate = model.split_rate(i, j) * ks
            out.append(Transition("split", i, j, rate, state.moved((s,), (i, j))))
    return out


@dataclass
class Trace:
    """Jump chain of a simulation: ``states[e]`` is held for ``holding[e]`` time units.

    ``events[e]`` is the ``(kind, i, j)`` transition that produced ``states[e]``
    (``("init", 0, 0)`` for the initial state).
    """

    times: np.ndarray
    holding: np.ndarray
    states: list[PartitionState]
    events: list[tuple[str, int, int]]
    seed: int | None
    model_info: dict

    def __len__(self) -> int:
        return len(self.states)


class _TransitionCache:
    def __init__(self, model: CfpModel):
        self.model = model
        self._cache: dict[PartitionState, tuple[list[Transition], list[float], float]] = {}

    def get(self, state: PartitionState):
        hit = self._cache.get(state)
        if hit is None:
            trs = [t for t in total_rates(self.model, state) if t.rate > 0]
            cum = list(np.cumsum([t.rate for t in trs]))
            hit = (trs, cum, cum[-1] if cum else 0.0)
            self._cache[state] = hit
        return hit


def simulate(model: CfpModel, initial: PartitionState | None = None, *, steps: int | None = None,
             t_end: float | None = None, seed: int | None = 0) -> Trace:
    """Gillespie trajectory: exponential holding times with the total rate, then a
    transition chosen proportionally to its rate.  Deterministic given ``seed``.
    """
    if (steps is None) == (t_end is None):
        raise ValueError("give exactly one of steps and t_end")
    state = initial or PartitionState.singletons(model.n)
    if state.n != model.n:
        raise ValueError(f"initial state has mass {state.n}, model has n={model.n}")
    rng = np.random.default_rng(seed)
    cache = _TransitionCache(model)
    states = [state]
    events: list[tuple[str, int, int]] = [("init", 0, 0)]
    holding: list[float] = []
    t = 0.0
    times = [0.0]
    block = 65536
    exps = rng.standard_exponential(block)
    unif = rng.random(block)
    pos = 0
    e = 0
    while True:
        trs, cum, total = cache.get(state)
        if total <= 0:
            if model.n == 1:
                raise ValueError("n = 1 has no transitions")
            raise ValueError(f"total rate is zero in state {state}")
        if pos == block:
            exps = rng.standard_exponential(block)
            unif = rng.random(block)
            pos = 0
        dt = exps[pos] / total
        if t_end is not None and t + dt >= t_end:
            holding.append(t_end - t)
            break
        holding.append(dt)
        t += dt
        idx = _bisect.bisect_right(cum, unif[pos] * total)
        pos += 1
        tr = trs[min(idx, len(trs) - 1)]
        state = tr.target
        if sum(i * k for i, k in state.occupancy) != model.n:
            raise AssertionError(f"mass not conserved by {tr}")
        states.append(state)
        events.append((tr.kind, tr.i, tr.j))
        times.append(t)
        e += 1
        if steps is not None and e >= steps:
            # the last state's holding time is drawn so time averages stay unbiased
            if pos == block:
                exps = rng.standard_exponential(block)
                pos = 0
            holding.append(exps[pos] / cache.get(state)[2])
            break
    info = {"n": model.n, "pf": model.pf.describe(), "gamma": model.gamma,
            "intensities": "custom" if model.psi or model.phi else "psi=a_{i+j}, phi=a_i a_j"}
    return Trace(times=np.array(times), holding=np.array(holding), states=states, events=events,
                 seed=seed, model_info=info)


def detailed_balance_residual(model: CfpModel, measure: ExactMeasure | None = None) -> float:
    """``max |mu(eta) Psi - mu(eta') Phi| / (mu(eta) Psi)`` over every merge ``eta -> eta'``."""
    if model.n > 20:
        raise ValueError("detailed balance check is limited to n <= 20")
    measure = measure or exact_measure(model.pf, model.n)
    mu = measure.as_dict()
    worst = 0.0
    for state in measure.states:
        for tr in total_rates(model, state):
            if tr.kind != "merge":
                continue
            back = [b for b in total_rates(model, tr.target)
                    if b.kind == "split" and {b.i, b.j} == {tr.i, tr.j} and b.target == state]
            if len(back) != 1:
                raise AssertionError(f"no unique reverse split for {tr}")
            fwd = mu[state] * tr.rate
            rev = mu[tr.target] * back[0].rate
            worst = max(worst, abs(fwd - rev) / fwd)
    return worst


@dataclass(frozen=True)
class TraceStatistics:
    state_dist: dict[PartitionState, float]
    largest_hist: dict[int, float]
    kp_mean: dict[int, float]
    kp_dist: dict[int, dict[int, float]]
    kp_cov: dict[tuple[int, int], float]
    total_time: float


def trace_statistics(trace: Trace, burn_in: float = 0.1, sizes: Iterable[int] = (1, 2)) -> TraceStatistics:
    """Time-weighted occupancy statistics after discarding the first ``burn_in`` of the time."""
    if not 0 <= burn_in < 1:
        raise ValueError("burn_in must be in [0, 1)")
    if len(trace) == 0:
        raise ValueError("empty trace")
    start = trace.times
    end = start + trace.holding
    t0 = burn_in * end[-1]
    w = np.clip(end - np.maximum(start, t0), 0.0, None)
    total = w.sum()
    sizes = list(sizes)
    dist: dict[PartitionState, float] = {}
    largest: dict[int, float] = {}
    K = np.zeros((len(trace), len(sizes)))
    for e, (s, we) in enumerate(zip(trace.states, w)):
        if we == 0:
            continue
        dist[s] = dist.get(s, 0.0) + we / total
        largest[s.largest] = largest.get(s.largest, 0.0) + we / total
        K[e] = [s.k(p) for p in sizes]
    wn = w / total
    means = wn @ K
    kp_dist: dict[int, dict[int, float]] = {}
    for c, p in enumerate(sizes):
        d: dict[int, float] = {}
        for val, we in zip(K[:, c], wn):
            if we:
                d[int(val)] = d.get(int(val), 0.0) + we
        kp_dist[p] = dict(sorted(d.items()))
    cov = {}
    for a in range(len(sizes)):
        for b in range(a + 1, len(sizes)):
            cov[(sizes[a], sizes[b])] = float(wn @ (K[:, a] * K[:, b]) - means[a] * means[b])
    return TraceStatistics(state_dist=dist, largest_hist=dict(sorted(largest.items())),
                           kp_mean={p: float(m) for p, m in zip(sizes, means)},
                           kp_dist=kp_dist, kp_cov=cov, total_time=float(total))


def tv_distance(empirical: dict[PartitionState, float], exact: ExactMeasure) -> float:
    """Total variation distance between an empirical state distribution and ``mu_n``."""
    ex = exact.as_dict()
    keys = set(ex) | set(empirical)
    return 0.5 * sum(abs(empirical.get(s, 0.0) - ex.get(s, 0.0)) for s in keys)


def write_trace_csv(trace: Trace, fh: io.TextIOBase, snapshot_every: int | None = None) -> None:
    """CSV of ``event_index, time, kind, i, j, largest_cluster`` after a ``# {json}`` header line.

    ``snapshot_every=m`` adds the full occupancy every ``m`` events.
    """
    header = {"seed": trace.seed, "model": trace.model_info, "events": len(trace) - 1}
    fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
    cols = ["event_index", "time", "kind", "i", "j", "largest_cluster"]
    if snapshot_every:
        cols.append("occupancy")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for e, (t, s, (kind, i, j)) in enumerate(zip(trace.times, trace.states, trace.events)):
        row = [e, repr(float(t)), kind, i, j, s.largest]
        if snapshot_every:
            row.append(str(s) if e % snapshot_every == 0 else "")
        w.writerow(row)

