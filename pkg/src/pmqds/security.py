"""Decoy-state single-photon-pair estimation and the security failure probabilities.

Every probability is carried in natural-log form alongside its value, since
the interesting forging and repudiation tails underflow doubles long before
they stop mattering.
"""

from __future__ import annotations

import math

from .bounds import ChernoffCounter, SamplingBound, rswr_upper_bound
from .domain import (
    DecoyCounts,
    DecoyEstimates,
    Label,
    PairObservation,
    ProtocolParams,
    SecurityReport,
    SecurityTargets,
)
from .forger import ForgerStrategy, forger_min_error

CHERNOFF_BUDGET = 11


class DegenerateDecoy(ValueError):
    """Signal and decoy intensities do not allow the decoy-state inversion."""


class VacuousEstimate(Exception):
    """No single-photon-pair conclusive events can be certified."""

    def __init__(self, estimates: DecoyEstimates):
        super().__init__("single-photon-pair lower bound is zero")
        self.estimates = estimates


def _exp(log_p: float) -> float:
    return math.exp(log_p) if log_p > -745.0 else 0.0


def estimate_single_photon_pair_counts(counts: DecoyCounts, params: ProtocolParams,
                                       eps_1: float) -> DecoyEstimates:
    """Bounds on the single-photon and single-photon-pair quantities of the signal strings.

    Each observed count enters through exactly one Chernoff conversion; there
    are eleven in total.  Intensity weights come from each receiver's
    ``sent`` tallies, so thinned records (post-matching residue, coincidence
    filtering) are handled without touching the formulas.
    """
    mu, nu = params.mu, params.nu
    if not (mu > nu > 0):
        raise DegenerateDecoy(f"need mu > nu > 0, got {mu}, {nu}")
    B, C = counts.bob, counts.charlie
    ck = ChernoffCounter(eps_1, limit=CHERNOFF_BUDGET)
    S_B = {lab: B[lab].sent for lab in Label}
    S_C = {lab: C[lab].sent for lab in Label}
    if min(list(S_B.values()) + list(S_C.values())) <= 0:
        raise VacuousEstimate(DecoyEstimates(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0))

    pref = math.exp(-mu) / (nu * (mu - nu))

    nC_nu = ck.lower(C[Label.NU].n_c)
    nC_mu = ck.upper(C[Label.MU].n_c)
    nC_0 = ck.upper(C[Label.VAC].n_c)
    s_C1 = S_C[Label.MU] * pref * (mu * mu * math.exp(nu) * nC_nu / S_C[Label.NU]
                                   - nu * nu * math.exp(mu) * nC_mu / S_C[Label.MU]
                                   + (nu * nu - mu * mu) * nC_0 / S_C[Label.VAC])
    s_C1 = max(0.0, s_C1)

    nB_nu = ck.lower(B[Label.NU].n)
    nB_mu_up = ck.upper(B[Label.MU].n)
    nB_0 = ck.upper(B[Label.VAC].n)
    s_B1_lo = S_B[Label.MU] * pref * (mu * mu * math.exp(nu) * nB_nu / S_B[Label.NU]
                                      - nu * nu * math.exp(mu) * nB_mu_up / S_B[Label.MU]
                                      + (nu * nu - mu * mu) * nB_0 / S_B[Label.VAC])
    s_B1_lo = max(0.0, s_B1_lo)
    s_C11 = s_C1 * s_B1_lo / nB_mu_up if nB_mu_up > 0 else 0.0

    pref_up = mu * math.exp(-mu) / nu
    mC_nu = ck.upper(C[Label.NU].m_c)
    nC_0_lo = ck.lower(C[Label.VAC].n_c)
    t_C1 = S_C[Label.MU] * pref_up * (math.exp(nu) * mC_nu / S_C[Label.NU]
                                      - nC_0_lo / (2 * S_C[Label.VAC]))
    t_C1 = min(max(0.0, t_C1), nC_mu)

    nB_nu_up = ck.upper(B[Label.NU].n)
    nB_0_lo = ck.lower(B[Label.VAC].n)
    s_B1_up = S_B[Label.MU] * pref_up * (math.exp(nu) * nB_nu_up / S_B[Label.NU]
                                         - nB_0_lo / S_B[Label.VAC])
    s_B1_up = min(max(0.0, s_B1_up), nB_mu_up)

    nB_mu_lo = ck.lower(B[Label.MU].n)
    t_C11 = t_C1 * s_B1_up / nB_mu_lo if nB_mu_lo > 0 else nC_mu

    est = DecoyEstimates(
        s_C1_c_mu_lower=s_C1,
        s_B1_mu_lower=s_B1_lo,
        s_C11_c_mu_lower=s_C11,
        t_C1_c_mu_upper=t_C1,
        s_B1_mu_upper=s_B1_up,
        t_C11_c_mu_upper=t_C11,
        chernoff_applications=ck.used,
    )
    if s_C11 <= 0:
        raise VacuousEstimate(est)
    return est


def log_forging_probability(E_BF11: float, T_v11: float, n_cu_11: float) -> float:
    """ln of the forging tail; 0 when the threshold is not below the forger's error."""
    if n_cu_11 <= 0 or E_BF11 <= T_v11:
        return 0.0
    return -((E_BF11 - T_v11) ** 2) / (2 * E_BF11) * n_cu_11


def forging_probability(estimates: DecoyEstimates, params: ProtocolParams, n_mu_c: float,
                        strategy: ForgerStrategy | None = None, log: bool = False) -> float:
    n_cu = (1 - params.t) * n_mu_c
    n_cu_11 = (1 - params.t) * estimates.s_C11_c_mu_lower
    if n_cu_11 <= 0:
        return 0.0 if log else 1.0
    E = forger_min_error(estimates.e11_upper, strategy)
    T_v11 = params.T_v * n_cu / n_cu_11
    lp = log_forging_probability(E, T_v11, n_cu_11)
    return lp if log else _exp(lp)


def _repudiation_sides(A: float, P_B: float, P_C: float, T_a: float, T_v: float, d: float):
    x = d + A / P_B
    lhs = (P_C * T_v - P_C * x) ** 2 / (3 * P_C * x)
    rhs = (A - P_B * T_a) ** 2 / (2 * A)
    return lhs, rhs


def repudiation_residual(A: float, P_B_c: float, P_C_c: float, T_a: float, T_v: float, delta_rel: float) -> float:
    lhs, rhs = _repudiation_sides(A, P_B_c, P_C_c, T_a, T_v, delta_rel)
    return lhs - rhs


def solve_repudiation_threshold(P_B_c: float, P_C_c: float, T_a: float, T_v: float, delta_rel: float,
               tol: float = 1e-15) -> tuple[float | None, str]:
    """Root ``A`` of the repudiation balance equation inside its admissible interval.

    Returns ``(None, "empty")`` when the interval is empty.  The left side of
    the balance decreases and the right side increases across the interval,
    so a sign change is guaranteed; ``"endpoint"`` marks the numerical corner
    case where it is not observed.
    """
    lo = P_B_c * T_a
    hi = P_B_c * (T_v - delta_rel)
    if not (P_B_c > 0 and P_C_c > 0) or hi <= lo:
        return None, "empty"
    f_lo = repudiation_residual(lo, P_B_c, P_C_c, T_a, T_v, delta_rel) if lo > 0 else math.inf
    f_hi = repudiation_residual(hi, P_B_c, P_C_c, T_a, T_v, delta_rel)
    if not (f_lo > 0 > f_hi):
        # endpoint minimising the repudiation tail: the one farthest from lo
        return hi, "endpoint"
    a, b = lo, hi
    while b - a > tol * max(1.0, b):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        if repudiation_residual(m, P_B_c, P_C_c, T_a, T_v, delta_rel) > 0:
            a = m
        else:
            b = m
    ra = abs(repudiation_residual(a, P_B_c, P_C_c, T_a, T_v, delta_rel))
    rb = abs(repudiation_residual(b, P_B_c, P_C_c, T_a, T_v, delta_rel))
    return (a if ra <= rb else b), "root"


def repudiation_probability(P_B_c: float, P_C_c: float, T_a: float, T_v: float, n_u: float,
                            n_cu: float, delta_bar_bc_cu: float, log: bool = False,
                            details: dict | None = None) -> float:
    """Repudiation tail at the balance point ``A``; 1 when no admissible ``A`` exists."""
    delta_rel = delta_bar_bc_cu / n_cu if n_cu > 0 else math.inf
    A, flag = solve_repudiation_threshold(P_B_c, P_C_c, T_a, T_v, delta_rel)
    if details is not None:
        details.update(A=A if A is not None else math.nan, flag=flag, delta_rel=delta_rel)
    if A is None or n_u <= 0:
        return 0.0 if log else 1.0
    lp = -((A - P_B_c * T_a) ** 2) / (2 * A) * n_u
    return lp if log else _exp(lp)


def _kl(a: float, p: float) -> float:
    out = a * math.log(a / p) if a > 0 else 0.0
    if a < 1:
        out += (1 - a) * math.log((1 - a) / (1 - p))
    return out


def robustness_probability(expected_error_rate: float, T_a: float, n_u: float, P_B_c: float,
                           log: bool = False) -> float:
    """Chernoff-Hoeffding tail for an honest untest conclusive error rate reaching ``T_a``."""
    e = expected_error_rate
    n = P_B_c * n_u
    if T_a <= e or n <= 0:
        lp = 0.0
    elif e <= 0:
        lp = -math.inf
    else:
        lp = -n * _kl(T_a, e)
    return lp if log else _exp(lp)


def total_secrecy(eps_1: float, eps_2: float, eps_for: float, eps_rob: float, eps_rep: float) -> float:
    return 11 * eps_1 + eps_2 + eps_for + eps_rob + eps_rep


def honest_error_rate(counts: DecoyCounts) -> float:
    """Larger of the two receivers' conclusive signal error rates."""
    rates = []
    for t in (counts.bob[Label.MU], counts.charlie[Label.MU]):
        rates.append(t.m_c / t.n_c if t.n_c > 0 else 0.0)
    return max(rates)


def evaluate_security(counts: DecoyCounts, params: ProtocolParams, pair: PairObservation,
                      targets: SecurityTargets = SecurityTargets(),
                      forger: ForgerStrategy | None = None,
                      sampling: SamplingBound | None = None) -> SecurityReport:
    """Full security evaluation of one signing round from its counts.

    Raises ``VacuousEstimate`` when no single-photon pairs can be certified.
    """
    eps_1, eps_2 = targets.eps_1, targets.eps_2
    est = estimate_single_photon_pair_counts(counts, params, eps_1)
    b, c = counts.bob[Label.MU], counts.charlie[Label.MU]
    t = params.t

    n_cu = (1 - t) * c.n_c
    n_cu_11 = (1 - t) * est.s_C11_c_mu_lower
    e11 = est.e11_upper
    E_BF = forger_min_error(e11, forger)
    T_v11 = params.T_v * n_cu / n_cu_11
    log_for = log_forging_probability(E_BF, T_v11, n_cu_11)

    n_u = (1 - t) * min(b.n, c.n)
    P_B = b.n_c / b.n if b.n > 0 else 0.0
    P_C = c.n_c / c.n if c.n > 0 else 0.0
    delta = rswr_upper_bound(pair.mismatches, pair.sample, pair.sample + pair.population, eps_2, sampling)
    rep = {}
    log_rep = repudiation_probability(P_B, P_C, params.T_a, params.T_v, n_u, n_cu, delta, log=True, details=rep)

    E_B = b.m_c / b.n_c if b.n_c > 0 else 0.0
    log_rob = robustness_probability(E_B, params.T_a, n_u, P_B, log=True)

    eps_for, eps_rob, eps_rep = _exp(log_for), _exp(log_rob), _exp(log_rep)
    return SecurityReport(
        eps_1=eps_1,
        eps_2=eps_2,
        eps_for=eps_for,
        eps_rob=eps_rob,
        eps_rep=eps_rep,
        eps_tot=total_secrecy(eps_1, eps_2, eps_for, eps_rob, eps_rep),
        log_eps_for=log_for,
        log_eps_rob=log_rob,
        log_eps_rep=log_rep,
        estimates=est,
        e11=e11,
        E_BF11_star=E_BF,
        T_a=params.T_a,
        T_v=params.T_v,
        T_v11=T_v11,
        n_cu=n_cu,
        n_cu_11=n_cu_11,
        n_u=n_u,
        P_B_c=P_B,
        P_C_c=P_C,
        E_B=E_B,
        Delta_BC_cu_bar=delta,
        A=rep["A"],
        A_flag=rep["flag"],
    )
