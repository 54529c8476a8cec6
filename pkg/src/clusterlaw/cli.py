"""Batch front end: ``clusterlaw <command> [options]``.

Every run writes a table (CSV or JSON) whose header echoes the fully resolved
configuration, the package version and a description of each column.  With
``--assert`` any tolerance breach gives exit status 1.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Sequence

from . import __version__
from .asymptotics import LOWER, UPPER, RegimeError, ans_pipeline, kp_limit, limit_d, predict
from .cfp_sim import (CfpModel, detailed_balance_residual, exact_measure, simulate,
                      trace_statistics, tv_distance, write_trace_csv)
from .coeff_engine import (BRUTE_FORCE_MAX_N, SizeWindow, brute_force_c, compute_table,
                           kp_covariance, kp_marginal, largest_cluster_cdf, log_coefficients,
                           smallest_cluster_tail, table_rows)
from .rootfind import SolverError
from .saddle import DivergenceError, llt_product, solve_sigma
from .sequences import InvalidParameterFunction, ParameterFunction, parameter_function_from_config

COMMANDS = ("coeffs", "saddle", "compare", "cluster-law", "kp", "simulate", "ans-verify", "oracle-check")

# default tolerances used by --assert when --tol is not given
DEFAULT_TOL = {
    "saddle": 1e-10, "compare": 0.05, "cluster-law": 0.05, "kp": 0.01, "simulate": 0.05,
    "ans-verify": 0.1, "oracle-check": 1e-10,
}

# exact log c_n is O(n^2); beyond this the compare table leaves it blank
COMPARE_TABLE_MAX_N = 20_000


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run; round-trips through JSON."""

    command: str
    pf: dict = field(default_factory=lambda: {"l": 1.0, "L": {"kind": "constant", "h": 1.0, "p": 0.0},
                                              "h_scale": 1.0})
    n: list[int] = field(default_factory=list)
    beta: list[float] = field(default_factory=list)
    window: list[int | None] | None = None
    side: str = LOWER
    tol: float | None = None
    seed: int = 0
    steps: int = 1_000_000
    replicas: int = 1
    p: list[int] = field(default_factory=lambda: [1, 2])
    kmax: int = 5
    h: float = 1.0
    q: float = 2.0
    llt: bool = False
    exact: bool = False
    out: str | None = None
    format: str = "csv"
    assert_mode: bool = False
    workers: int = 1

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "command" not in d:
            raise ConfigError("config needs a 'command'")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config line 1: top level must be an object")
        return cls.from_dict(d)

    @property
    def resolved_tol(self) -> float:
        return self.tol if self.tol is not None else DEFAULT_TOL.get(self.command, 0.0)

    @property
    def size_window(self) -> SizeWindow:
        if self.window is None:
            return SizeWindow()
        lo, hi = self.window
        return SizeWindow(int(lo), None if hi is None else int(hi))


@dataclass
class Report:
    rows: list[dict]
    columns: dict[str, str]
    breaches: list[str] = field(default_factory=list)


# -- parameter function per process -----------------------------------------------------

@lru_cache(maxsize=16)
def _pf_from_json(pf_json: str, n_max: int | None) -> ParameterFunction:
    return parameter_function_from_config(json.loads(pf_json), n_max)


def build_pf(cfg: ExperimentConfig, n_max: int | None = None) -> ParameterFunction:
    tabulated = "m_csv" in cfg.pf or "m_geometric" in cfg.pf
    return _pf_from_json(json.dumps(cfg.pf, sort_keys=True), n_max if tabulated else None)


def _grid_map(cfg: ExperimentConfig, fn: Callable, points: Sequence) -> list:
    """Map ``fn(cfg_json, point)`` over the grid, results in grid order."""
    payload = [(cfg.to_json(), pt) for pt in points]
    if cfg.workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            return list(ex.map(_call, [fn] * len(payload), payload))
    return [fn(*a) for a in payload]


def _call(fn, args):
    return fn(*args)


def _load(cfg_json: str) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(cfg_json))


def _r_of(n: int, beta: float) -> int:
    return min(n, max(1, math.floor(n ** beta)))


# -- commands ----------------------------------------------------------------------------

def cmd_coeffs(cfg: ExperimentConfig) -> Report:
    if len(cfg.n) != 1:
        raise ConfigError("coeffs takes a single --n (the table size)")
    n = cfg.n[0]
    table = compute_table(build_pf(cfg, n), cfg.size_window, n, exact=cfg.exact)
    cols = {"n": "index", "log_c": "natural log of the coefficient c_n", "c": "c_n (blank on overflow)",
            "window_lo": "smallest allowed component size", "window_hi": "largest allowed component size"}
    if cfg.exact:
        cols.update(numerator="exact c_n numerator", denominator="exact c_n denominator")
    return Report(table_rows(table), cols)


def _saddle_point(cfg_json: str, n: int) -> dict:
    cfg = _load(cfg_json)
    pf = build_pf(cfg, n)
    sp = solve_sigma(pf, cfg.size_window, n)
    row = {"n": n, "window": str(cfg.size_window), "sigma": sp.sigma, "M": sp.M, "B2": sp.B2,
           "rho": sp.rho, "lyapunov": sp.lyapunov, "residual": abs(sp.M - n) / n}
    if cfg.llt:
        row["llt_product"] = llt_product(pf, n, cfg.size_window)
    return row


def cmd_saddle(cfg: ExperimentConfig) -> Report:
    rows = _grid_map(cfg, _saddle_point, cfg.n)
    cols = {"n": "total size", "window": "allowed component sizes", "sigma": "root of M(sigma) = n",
            "M": "first tilted moment at sigma", "B2": "second tilted moment", "rho": "third tilted moment",
            "lyapunov": "rho / B2^1.5", "residual": "|M - n| / n"}
    if cfg.llt:
        cols["llt_product"] = "c_n exp(-S - n sigma) sqrt(2 pi B2), tends to 1"
    tol = cfg.resolved_tol
    breaches = [f"n={r['n']}: residual {r['residual']:.3g} > {tol}" for r in rows if r["residual"] > tol]
    return Report(rows, cols, breaches)


def _compare_point(cfg_json: str, pt: tuple[int, float | None]) -> dict:
    cfg = _load(cfg_json)
    n, beta = pt
    pf = build_pf(cfg, n)
    side = cfg.side
    if beta is None:
        window, pred_beta, pred_side = SizeWindow(), 1.0, LOWER
    else:
        r = _r_of(n, beta)
        window = SizeWindow.lower(r) if side == LOWER else SizeWindow.upper(r)
        pred_beta, pred_side = beta, side
    sp = solve_sigma(pf, window, n)
    pred = predict(pf.l, pf.L, pred_beta, pred_side, n)
    lc = float(log_coefficients(pf, window, n)[n]) if n <= COMPARE_TABLE_MAX_N else None
    rel = sp.sigma / pred.sigma_pred - 1.0
    return {"n": n, "beta": beta, "side": pred_side, "window": str(window),
            "regime": pred.regime.regime_class, "sigma": sp.sigma, "sigma_pred": pred.sigma_pred,
            "sigma_rel_err": rel, "B2": sp.B2, "B2_pred": pred.B2_pred,
            "constants_known": pred.constants_known, "log_c": lc, "log_c_pred": pred.c_log_pred}


def cmd_compare(cfg: ExperimentConfig) -> Report:
    betas = cfg.beta or [None]
    points = [(n, b) for b in betas for n in cfg.n]
    rows = _grid_map(cfg, _compare_point, points)
    cols = {"n": "total size", "beta": "window cut r = floor(n^beta) (blank: full window)",
            "side": "lower: sizes <= r, upper: sizes >= r", "window": "allowed component sizes",
            "regime": "position of beta against 1/(l+1)", "sigma": "exact saddle point",
            "sigma_pred": "leading-order saddle point", "sigma_rel_err": "sigma / sigma_pred - 1",
            "B2": "exact second moment", "B2_pred": "leading-order second moment (order only if constants unknown)",
            "constants_known": "whether the prediction fixes constants",
            "log_c": "exact ln c_n", "log_c_pred": "saddle-point ln c_n (power regime only)"}
    tol = cfg.resolved_tol
    breaches = [f"n={r['n']}, beta={r['beta']}: sigma rel err {r['sigma_rel_err']:.3g} > {tol}"
                for r in rows if r["constants_known"] and abs(r["sigma_rel_err"]) > tol]
    return Report(rows, cols, breaches)


def _cluster_point(cfg_json: str, pt: tuple[int, float]) -> dict:
    cfg = _load(cfg_json)
    n, beta = pt
    pf = build_pf(cfg, n)
    r = _r_of(n, beta)
    if cfg.side == LOWER:
        finite = largest_cluster_cdf(pf, n, r)
    else:
        finite = smallest_cluster_tail(pf, n, r)
    try:
        lim = limit_d(pf.l, pf.L.d, beta, cfg.side, pf=pf)
    except RegimeError:
        lim = None
    return {"n": n, "beta": beta, "r": r, "side": cfg.side, "probability": finite, "limit": lim}


def cmd_cluster_law(cfg: ExperimentConfig) -> Report:
    if not cfg.beta:
        raise ConfigError("cluster-law needs --beta")
    points = [(n, b) for n in cfg.n for b in cfg.beta]
    rows = _grid_map(cfg, _cluster_point, points)
    cols = {"n": "total size", "beta": "threshold exponent", "r": "floor(n^beta)",
            "side": "lower: P(largest <= r), upper: P(smallest >= r)",
            "probability": "exact finite-n probability", "limit": "n -> infinity limit (blank at an undetermined threshold)"}
    tol = cfg.resolved_tol
    breaches = [f"n={r['n']}, beta={r['beta']}: |{r['probability']:.4g} - {r['limit']}| > {tol}"
                for r in rows if r["limit"] is not None and abs(r["probability"] - r["limit"]) > tol]
    return Report(rows, cols, breaches)


def _kp_point(cfg_json: str, n: int) -> list[dict]:
    cfg = _load(cfg_json)
    pf = build_pf(cfg, n)
    rows = []
    for p in cfg.p:
        for k in range(cfg.kmax + 1):
            rows.append({"n": n, "p": p, "k": k, "probability": kp_marginal(pf, n, p, k),
                         "limit": kp_limit(pf.l, pf.L.d, pf, p, k), "cov_first_pair": None})
    if len(cfg.p) >= 2:
        cov = kp_covariance(pf, n, cfg.p[0], cfg.p[1])
        for row in rows:
            row["cov_first_pair"] = cov
    return rows


def cmd_kp(cfg: ExperimentConfig) -> Report:
    rows = [row for block in _grid_map(cfg, _kp_point, cfg.n) for row in block]
    cols = {"n": "total size", "p": "component size", "k": "count",
            "probability": "exact P(K_p = k)", "limit": "Poisson(a_p) mass at k",
            "cov_first_pair": "exact cov(K_p, K_q) for the first two --p values"}
    tol = cfg.resolved_tol
    breaches = [f"n={r['n']}, p={r['p']}, k={r['k']}: |{r['probability']:.4g} - {r['limit']:.4g}| > {tol}"
                for r in rows if abs(r["probability"] - r["limit"]) > tol]
    return Report(rows, cols, breaches)


def _simulate_replica(cfg_json: str, pt: tuple[int, int]) -> dict:
    cfg = _load(cfg_json)
    n, seed = pt
    pf = build_pf(cfg, n)
    model = CfpModel(pf, n)
    trace = simulate(model, steps=cfg.steps, seed=seed)
    stats = trace_statistics(trace, sizes=cfg.p)
    row = {"n": n, "seed": seed, "steps": cfg.steps, "tv_distance": None, "balance_residual": None,
           "mean_largest": sum(k * w for k, w in stats.largest_hist.items())}
    for p in cfg.p:
        row[f"mean_K{p}"] = stats.kp_mean[p]
    if n <= 60:
        row["tv_distance"] = tv_distance(stats.state_dist, exact_measure(pf, n))
    if n <= 20:
        row["balance_residual"] = detailed_balance_residual(model)
    if cfg.out and cfg.replicas == 1 and len(cfg.n) == 1:
        with open(cfg.out + ".trace.csv", "w", newline="") as fh:
            write_trace_csv(trace, fh, snapshot_every=1000)
    return row


def cmd_simulate(cfg: ExperimentConfig) -> Report:
    points = [(n, cfg.seed + i) for n in cfg.n for i in range(cfg.replicas)]
    rows = _grid_map(cfg, _simulate_replica, points)
    cols = {"n": "total mass", "seed": "generator seed", "steps": "jumps simulated",
            "tv_distance": "time-weighted total variation distance to the exact invariant measure (n <= 60)",
            "balance_residual": "max relative detailed-balance defect (n <= 20)",
            "mean_largest": "time-averaged largest component"}
    for p in cfg.p:
        cols[f"mean_K{p}"] = f"time-averaged number of components of size {p}"
    tol = cfg.resolved_tol
    breaches = [f"n={r['n']}, seed={r['seed']}: TV {r['tv_distance']:.4g} >= {tol}"
                for r in rows if r["tv_distance"] is not None and r["tv_distance"] >= tol]
    breaches += [f"n={r['n']}: balance residual {r['balance_residual']:.3g} > 1e-10"
                 for r in rows if r["balance_residual"] is not None and r["balance_residual"] > 1e-10]
    return Report(rows, cols, breaches)


def cmd_ans_verify(cfg: ExperimentConfig) -> Report:
    rows = ans_pipeline(cfg.h, cfg.q, sorted(cfg.n))
    cols = {"n": "total size", "log_c": "exact ln c_n from the generator counts h q^j",
            "log_c_pred": "closed-form ln c_n with constant h1", "ratio": "exp(log_c - log_c_pred)",
            "ratio_offset": "ratio divided by the exp(sum_{m>=2} P(q^-m)/m) constant"}
    tol = cfg.resolved_tol
    last = rows[-1]
    breaches = []
    if abs(last["ratio"] - 1.0) > tol:
        breaches.append(f"n={last['n']}: ratio {last['ratio']:.4f} outside [{1 - tol}, {1 + tol}]")
    return Report(rows, cols, breaches)


def _windows_for_oracle(cfg: ExperimentConfig) -> list[SizeWindow]:
    if cfg.window is not None:
        return [cfg.size_window]
    return [SizeWindow(), SizeWindow(1, 2), SizeWindow(2), SizeWindow(3)]


def cmd_oracle_check(cfg: ExperimentConfig) -> Report:
    n_max = max(cfg.n) if cfg.n else 20
    if n_max > BRUTE_FORCE_MAX_N:
        raise ConfigError(f"oracle-check is limited to n <= {BRUTE_FORCE_MAX_N}")
    pf = build_pf(cfg, n_max)
    tol = cfg.resolved_tol
    rows, breaches = [], []
    for w in _windows_for_oracle(cfg):
        rational = all(pf.exact_a(j) is not None for j in range(1, n_max + 1))
        table = compute_table(pf, w, n_max, exact=rational)
        for n in range(n_max + 1):
            bf = brute_force_c(pf, w, n)
            if isinstance(bf, Fraction) and table.exact_c is not None:
                ok = bf == table.exact_c[n]
                err = 0.0 if ok else float(abs(bf - table.exact_c[n]) / max(abs(bf), Fraction(1, 10**300)))
                mode = "exact"
            else:
                got = table.c(n)
                err = 0.0 if bf == 0 and got == 0 else abs(got / float(bf) - 1.0)
                ok = err <= tol
                mode = "float"
            rows.append({"window": str(w), "n": n, "mode": mode, "brute_force": str(bf),
                         "rel_err": err, "status": "PASS" if ok else "FAIL"})
            if not ok:
                breaches.append(f"window {w}, n={n}: recurrence disagrees with enumeration ({err:.3g})")
    cols = {"window": "allowed component sizes", "n": "total size",
            "mode": "exact: rational equality, float: relative error",
            "brute_force": "coefficient by enumerating partitions", "rel_err": "relative difference",
            "status": "PASS or FAIL"}
    return Report(rows, cols, breaches)


HANDLERS: dict[str, Callable[[ExperimentConfig], Report]] = {
    "coeffs": cmd_coeffs, "saddle": cmd_saddle, "compare": cmd_compare, "cluster-law": cmd_cluster_law,
    "kp": cmd_kp, "simulate": cmd_simulate, "ans-verify": cmd_ans_verify, "oracle-check": cmd_oracle_check,
}


# -- output ------------------------------------------------------------------------------

def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def render(cfg: ExperimentConfig, report: Report) -> str:
    header = {"clusterlaw_version": __version__, "config": asdict(cfg), "columns": report.columns}
    if cfg.format == "json":
        return json.dumps({"header": header, "rows": report.rows}, sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    names = list(report.columns)
    for row in report.rows:
        for key in row:
            if key not in names:
                names.append(key)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in report.rows:
        w.writerow([_cell(row.get(k)) for k in names])
    return buf.getvalue()


def execute(cfg: ExperimentConfig) -> tuple[Report, str]:
    if cfg.command not in HANDLERS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    if cfg.format not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    if cfg.side not in (LOWER, UPPER):
        raise ConfigError("side must be lower or upper")
    report = HANDLERS[cfg.command](cfg)
    return report, render(cfg, report)


def run(cfg: ExperimentConfig) -> tuple[int, str]:
    """Execute one configuration; returns ``(exit status, rendered output)``."""
    report, text = execute(cfg)
    return (1 if cfg.assert_mode and report.breaches else 0), text


# -- argument parsing --------------------------------------------------------------------

def _int_list(s: str) -> list[int]:
    out = []
    for tok in s.split(","):
        v = float(tok)
        if v != int(v):
            raise argparse.ArgumentTypeError(f"{tok!r} is not an integer")
        out.append(int(v))
    return out


def _count(s: str) -> int:
    (v,) = _int_list(s)
    return v


def _float_list(s: str) -> list[float]:
    return [float(tok) for tok in s.split(",")]


def _window(s: str) -> list[int | None]:
    parts = s.strip("[]").split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("window is 'lo,hi' with hi an integer or 'n'")
    lo = int(parts[0])
    hi = None if parts[1].strip() in ("n", "") else int(parts[1])
    return [lo, hi]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clusterlaw", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"clusterlaw {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    g.add_argument("--l", type=float, help="regular-variation exponent l > 0")
    g.add_argument("--L-kind", choices=("constant", "log-power"))
    g.add_argument("--L-h", type=float, help="constant factor of L")
    g.add_argument("--L-p", type=float, help="log exponent of L")
    g.add_argument("--h-scale", type=float, help="apply a_j -> h^j a_j")
    r = common.add_argument_group("run")
    r.add_argument("--n", type=_int_list, help="comma-separated sizes, e.g. 1e3,1e4")
    r.add_argument("--beta", type=_float_list, help="comma-separated window exponents")
    r.add_argument("--side", choices=(LOWER, UPPER))
    r.add_argument("--window", type=_window, help="'lo,hi' or 'lo,n'")
    r.add_argument("--seed", type=int)
    r.add_argument("--steps", type=_count, help="jump budget, e.g. 1e6")
    r.add_argument("--replicas", type=int)
    r.add_argument("--p", type=_int_list, help="component sizes for kp / simulate")
    r.add_argument("--kmax", type=int)
    r.add_argument("--h", type=float, help="ans-verify: generator constant")
    r.add_argument("--q", type=float, help="ans-verify: generator growth")
    r.add_argument("--llt", action="store_true", default=None, help="saddle: add the local limit product")
    r.add_argument("--exact", action="store_true", default=None, help="coeffs: rational arithmetic")
    r.add_argument("--tol", type=float)
    r.add_argument("--assert", dest="assert_mode", action="store_true", default=None,
                   help="exit 1 on any tolerance breach")
    r.add_argument("--out", help="output file (default stdout)")
    r.add_argument("--format", choices=("csv", "json"))
    r.add_argument("--workers", type=int, help="process pool size for grid points")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    if ns.config:
        with open(ns.config) as fh:
            cfg = ExperimentConfig.from_json(fh.read())
        cfg.command = ns.command
    else:
        cfg = ExperimentConfig(command=ns.command)
    pf = dict(cfg.pf)
    L = dict(pf.get("L", {}))
    if ns.l is not None:
        pf["l"] = ns.l
    if ns.L_kind is not None:
        L["kind"] = ns.L_kind
    if ns.L_h is not None:
        L["h"] = ns.L_h
    if ns.L_p is not None:
        L["p"] = ns.L_p
    if ns.h_scale is not None:
        pf["h_scale"] = ns.h_scale
    pf["L"] = L
    cfg.pf = pf
    for name in ("n", "beta", "window", "side", "seed", "steps", "replicas", "p", "kmax", "h", "q",
                 "llt", "exact", "tol", "assert_mode", "out", "format", "workers"):
        v = getattr(ns, name)
        if v is not None:
            setattr(cfg, name, v)
    if not cfg.n:
        cfg.n = {"coeffs": [20], "oracle-check": [20], "simulate": [10]}.get(cfg.command, [1000])
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        report, text = execute(cfg)
    except (ConfigError, RegimeError, DivergenceError, SolverError, InvalidParameterFunction,
            ValueError, OSError) as exc:
        print(f"clusterlaw: error: {exc}", file=sys.stderr)
        return 2
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for b in report.breaches:
        print(f"clusterlaw: tolerance breach: {b}", file=sys.stderr)
    return 1 if cfg.assert_mode and report.breaches else 0


if __name__ == "__main__":
    sys.exit(main())
