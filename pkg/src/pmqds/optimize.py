"""Minimum pulse budget and signature rate versus distance.

The objective is the analytic count model only.  For a parameter point the
per-pulse counts are computed once and scaled with ``N``; every security
bound tightens with more data, so feasibility is monotone in ``N`` and the
minimum is found by bracketing and bisection.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize

from .channel import expected_pair_counts, expected_pair_observation, transmittance
from .domain import (
    ChannelModel,
    DecoyCounts,
    ProtocolParams,
    SecurityReport,
    SecurityTargets,
    Tally,
)
from .forger import ForgerStrategy
from .security import VacuousEstimate, evaluate_security, honest_error_rate

N_START = 10**4
N_CEILING = 10**15
INFEASIBLE = None

# search box for (mu, nu/mu, p_mu, p_nu/(1-p_mu), t, delta_a, delta_v - delta_a)
BOX_LOW = np.array([0.02, 0.01, 0.01, 0.01, 0.005, 1e-5, 1e-5])
BOX_HIGH = np.array([1.0, 0.99, 0.99, 0.99, 0.5, 0.1, 0.2])
# sub-box for random starting points; thresholds start close to the honest error rate
START_LOW = np.array([0.1, 0.05, 0.2, 0.2, 0.05, 1e-4, 1e-3])
START_HIGH = np.array([0.8, 0.6, 0.9, 0.9, 0.5, 0.01, 0.05])


@dataclass(frozen=True)
class SearchConfig:
    starts: int = 16
    warm_starts: int = 2
    seed: int = 0
    maxfev: int = 700
    restarts: int = 2
    log_tol: float = 1e-5
    jobs: int = 1


@dataclass(frozen=True)
class Candidate:
    """Free parameters of one search point with thresholds expressed as offsets."""

    mu: float
    nu: float
    p_mu: float
    p_nu: float
    t: float
    delta_a: float
    delta_v: float

    @classmethod
    def from_vector(cls, x) -> "Candidate":
        mu, r, p_mu, q, t, da, gap = (float(v) for v in np.clip(x, BOX_LOW, BOX_HIGH))
        return cls(mu, mu * r, p_mu, q * (1 - p_mu), t, da, da + gap)

    def to_vector(self) -> np.ndarray:
        return np.array([self.mu, self.nu / self.mu, self.p_mu, self.p_nu / (1 - self.p_mu),
                         self.t, self.delta_a, self.delta_v - self.delta_a])


@dataclass(frozen=True)
class OptimizationResult:
    best_params: ProtocolParams | None
    N_min: int | None
    R: float
    report: SecurityReport | None
    evaluations: int
    converged: bool
    candidate: Candidate | None = None

    @property
    def feasible(self) -> bool:
        return self.N_min is not None


class CountModel:
    """Analytic counts for fixed parameters, linear in ``N``."""

    def __init__(self, params: ProtocolParams, ch: ChannelModel, coincidence: bool = False):
        self.params = params.with_N(1)
        self.unit = expected_pair_counts(self.params, ch, coincidence)

    def at(self, N: float) -> DecoyCounts:
        def scale(side):
            return {k: Tally(v.sent * N, v.n * N, v.n_c * N, v.m_c * N) for k, v in side.items()}

        return DecoyCounts(scale(self.unit.bob), scale(self.unit.charlie))


def select_thresholds(counts: DecoyCounts, delta_a: float, delta_v: float) -> tuple[float, float]:
    """Thresholds as offsets above the honest conclusive error rate."""
    e = float(honest_error_rate(counts))
    return e + float(delta_a), e + float(delta_v)


def candidate_params(c: Candidate, ch: ChannelModel, coincidence: bool = False) -> tuple[ProtocolParams, CountModel] | None:
    """Concrete parameters for a candidate, or None if it leaves the admissible region."""
    if not (0 < c.nu <= 0.5 and c.nu < c.mu <= 1.0 and c.p_mu + c.p_nu < 1 and 0 < c.t <= 0.5):
        return None
    probe = ProtocolParams(c.mu, c.nu, c.p_mu, c.p_nu, c.t, N=1, T_a=0.1, T_v=0.2)
    model = CountModel(probe, ch, coincidence)
    T_a, T_v = select_thresholds(model.unit, c.delta_a, c.delta_v)
    if not 0 < T_a < T_v < 0.5:
        return None
    params = replace(probe, T_a=T_a, T_v=T_v)
    model.params = params
    return params, model


def security_at(model: CountModel, N: float, targets: SecurityTargets,
                forger: ForgerStrategy | None = None) -> SecurityReport:
    counts = model.at(N)
    params = model.params
    return evaluate_security(counts, params, expected_pair_observation(counts, params.t), targets, forger)


def security_margin(model: CountModel, N: float, targets: SecurityTargets,
                    forger: ForgerStrategy | None = None) -> float:
    """Largest log-domain excess over the targets; <= 0 means every target is met."""
    try:
        r = security_at(model, N, targets, forger)
    except VacuousEstimate:
        return 1e3
    excess = [
        r.log_eps_for - math.log(targets.eps_for),
        r.log_eps_rob - math.log(targets.eps_rob),
        r.log_eps_rep - math.log(targets.eps_rep),
        math.log(r.eps_tot / targets.eps_tot) if r.eps_tot > 0 else -math.inf,
    ]
    return min(max(excess), 1e3)


def _feasible(model, N, targets, forger) -> bool:
    return security_margin(model, N, targets, forger) <= 0


def min_N_for(model: CountModel, targets: SecurityTargets, forger: ForgerStrategy | None = None) -> int | None:
    """Smallest integer N meeting every target: doubling bracket, then integer bisection."""
    hi = N_START
    while not _feasible(model, hi, targets, forger):
        if hi >= N_CEILING:
            return INFEASIBLE
        hi = min(hi * 2, N_CEILING)
    lo = hi // 2 if hi > N_START else 0
    if lo and _feasible(model, lo, targets, forger):
        lo = 0
    # invariant: lo infeasible (or 0), hi feasible
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _feasible(model, mid, targets, forger):
            hi = mid
        else:
            lo = mid
    return hi


def log10_min_N(model: CountModel, targets: SecurityTargets, forger: ForgerStrategy | None = None,
                tol: float = 1e-5) -> float:
    """Continuous relaxation of ``min_N_for`` used as the search objective.

    Infeasible points return a value above ``log10(N_CEILING)`` that grows
    with the remaining excess, so the simplex can walk back.
    """
    top = math.log10(N_CEILING)
    g_top = security_margin(model, N_CEILING, targets, forger)
    if g_top > 0:
        return top + 1 + g_top / 1e3
    lo = math.log10(N_START) - 2
    if security_margin(model, 10**lo, targets, forger) <= 0:
        return lo
    f = lambda lg: security_margin(model, 10**lg, targets, forger)
    return brentq(f, lo, top, xtol=tol)


def evaluate_min_N(params: ProtocolParams, dist_km: float, ch: ChannelModel,
                   targets: SecurityTargets = SecurityTargets(), coincidence: bool = False,
                   forger: ForgerStrategy | None = None) -> int | None:
    """Minimum N for fixed parameters at ``dist_km`` (``params.N`` is ignored)."""
    ch = ch.at_distance(dist_km)
    if transmittance(dist_km, ch) <= 0:
        return INFEASIBLE
    return min_N_for(CountModel(params, ch, coincidence), targets, forger)


class _Objective:
    def __init__(self, ch, targets, coincidence, forger, tol):
        self.ch, self.targets, self.coincidence, self.forger, self.tol = ch, targets, coincidence, forger, tol
        self.evaluations = 0

    def __call__(self, x) -> float:
        self.evaluations += 1
        got = candidate_params(Candidate.from_vector(x), self.ch, self.coincidence)
        if got is None:
            return 20.0
        return log10_min_N(got[1], self.targets, self.forger, self.tol)


def _local_search(args):
    x0, ch, targets, coincidence, forger, cfg = args
    obj = _Objective(ch, targets, coincidence, forger, cfg.log_tol)
    x, fx = np.asarray(x0, dtype=float), obj(x0)
    bounds = list(zip(BOX_LOW, BOX_HIGH))
    for _ in range(cfg.restarts):
        res = minimize(obj, x, method="Nelder-Mead", bounds=bounds,
                       options=dict(maxfev=cfg.maxfev, xatol=1e-6, fatol=cfg.log_tol, adaptive=True))
        if res.fun < fx - cfg.log_tol:
            x, fx = res.x, float(res.fun)
        else:
            if res.fun < fx:
                x, fx = res.x, float(res.fun)
            break
    return x, fx, obj.evaluations


def _starts(cfg: SearchConfig, warm: list | None) -> list[np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    n_random = cfg.starts if not warm else max(cfg.warm_starts - len(warm), 0)
    pts = [np.asarray(w, dtype=float) for w in (warm or [])]
    pts += [rng.uniform(START_LOW, START_HIGH) for _ in range(n_random)]
    return pts


def optimize(dist_km: float, ch: ChannelModel, targets: SecurityTargets = SecurityTargets(),
             search_config: SearchConfig = SearchConfig(), coincidence: bool = False,
             forger: ForgerStrategy | None = None, warm: list | None = None) -> OptimizationResult:
    """Multi-start simplex search for the smallest pulse budget at one distance.

    Deterministic for a given ``search_config.seed``: start points come from
    that seed and the best start is chosen by value, ties broken by index.
    """
    ch = ch.at_distance(dist_km)
    starts = _starts(search_config, warm)
    jobs = [(x0, ch, targets, coincidence, forger, search_config) for x0 in starts]
    if search_config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=search_config.jobs) as ex:
            results = list(ex.map(_local_search, jobs))
    else:
        results = [_local_search(j) for j in jobs]
    evaluations = sum(r[2] for r in results)
    best = min(range(len(results)), key=lambda i: (results[i][1], i))
    x, fx, _ = results[best]
    cand = Candidate.from_vector(x)
    got = candidate_params(cand, ch, coincidence) if fx <= math.log10(N_CEILING) else None
    if got is None:
        return OptimizationResult(None, INFEASIBLE, 0.0, None, evaluations, False, cand)
    params, model = got
    N = min_N_for(model, targets, forger)
    if N is INFEASIBLE:
        return OptimizationResult(None, INFEASIBLE, 0.0, None, evaluations, False, cand)
    report = security_at(model, N, targets, forger)
    return OptimizationResult(params.with_N(N), N, 1.0 / (2 * N), report, evaluations, True, cand)


def baseline_original_min_N(dist_km: float, ch: ChannelModel, targets: SecurityTargets = SecurityTargets(),
                            search_config: SearchConfig = SearchConfig(), forger: ForgerStrategy | None = None,
                            warm: list | None = None) -> OptimizationResult:
    """Same search with coincidence detection in place of post-matching."""
    return optimize(dist_km, ch, targets, search_config, coincidence=True, forger=forger, warm=warm)


@dataclass
class SweepRow:
    dist_km: float
    this: OptimizationResult
    baseline: OptimizationResult

    @property
    def advantage(self) -> float:
        if self.this.N_min is None or self.baseline.N_min is None:
            return math.nan
        return self.baseline.N_min / self.this.N_min


SWEEP_COLUMNS = ["dist_km", "N_min", "R", "N_baseline", "R_baseline", "mu", "nu", "p_mu", "p_nu",
                 "t", "T_a", "T_v", "eps_tot"]


def sweep(dist_grid, ch: ChannelModel, targets: SecurityTargets = SecurityTargets(),
          search_config: SearchConfig = SearchConfig(), forger: ForgerStrategy | None = None,
          progress=None) -> list[SweepRow]:
    """Optimise both protocols along ``dist_grid``, warm-starting each distance from the last."""
    grid = list(dist_grid)
    if not grid:
        raise ValueError("empty distance grid")
    rows = []
    warm_this = warm_base = None
    for d in grid:
        this = optimize(d, ch, targets, search_config, forger=forger, warm=warm_this)
        base = baseline_original_min_N(d, ch, targets, search_config, forger=forger, warm=warm_base)
        if this.candidate is not None and this.feasible:
            warm_this = [this.candidate.to_vector()]
        if base.candidate is not None and base.feasible:
            warm_base = [base.candidate.to_vector()]
        rows.append(SweepRow(float(d), this, base))
        if progress:
            progress(rows[-1])
    return rows


def _cell(v) -> str:
    if v is None:
        return "INFEASIBLE"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        p, b = row.this.best_params, row.baseline
        w.writerow([
            _cell(row.dist_km),
            _cell(row.this.N_min),
            _cell(row.this.R) if row.this.feasible else "INFEASIBLE",
            _cell(b.N_min),
            _cell(b.R) if b.feasible else "INFEASIBLE",
            *(_cell(getattr(p, f)) if p else "INFEASIBLE" for f in ("mu", "nu", "p_mu", "p_nu", "t", "T_a", "T_v")),
            _cell(row.this.report.eps_tot) if row.this.report else "INFEASIBLE",
        ])
    return buf.getvalue()
