"""Monte Carlo run of the three-stage signing protocol with post-matching.

Pulse records are numpy arrays: ``state`` (QState codes), ``label`` (0 signal,
1 decoy, 2 vacuum), ``photons`` (emitted photon number, kept as a tag for
oracle checks only) and ``outcome`` (measured QState code or ``NO_CLICK``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channel import recipient_eta
from .domain import (
    ALICE_BIT,
    BOT,
    CONCLUSIVE,
    LABELS,
    NO_CLICK,
    VALID_SETS,
    ChannelModel,
    DecoyCounts,
    Label,
    PairObservation,
    ProtocolParams,
    Tally,
)

RECEIVERS = ("B", "C")


class AbortReason(str, Enum):
    TOO_NOISY = "TOO_NOISY"
    CONCLUSIVE_DEVIATION = "CONCLUSIVE_DEVIATION"
    EMPTY_SAMPLE = "EMPTY_SAMPLE"
    EMPTY_CONCLUSIVE = "EMPTY_CONCLUSIVE"


class ProtocolAbort(Exception):
    def __init__(self, reason: AbortReason, detail: str = ""):
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)
        self.reason = reason


@dataclass
class PulseRecord:
    """Clicked pulses of one sequence, in emission order."""

    position: np.ndarray
    state: np.ndarray
    label: np.ndarray
    photons: np.ndarray
    outcome: np.ndarray

    def __len__(self):
        return len(self.position)

    def take(self, idx) -> "PulseRecord":
        return PulseRecord(self.position[idx], self.state[idx], self.label[idx],
                           self.photons[idx], self.outcome[idx])


@dataclass
class KeyGeneration:
    """Sifted records per message bit and receiver, plus emitted pulse counts per intensity."""

    records: dict[tuple[int, str], PulseRecord]
    sent: dict[tuple[int, str], np.ndarray]


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def sample_pulses(state: np.ndarray, mean: np.ndarray, eta: float, ch: ChannelModel,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Emitted photon numbers and measured outcomes for a batch of pulses."""
    n = len(state)
    photons = rng.poisson(mean)
    arrived = rng.binomial(photons, eta)
    basis = rng.integers(0, 2, n)
    same = basis == state // 2
    frac_d0 = np.where(same, np.where(state == 2 * basis, 1.0 - ch.e_mis, ch.e_mis), 0.5)
    on_d0 = rng.binomial(arrived, frac_d0)
    on_d1 = arrived - on_d0
    click0 = (on_d0 > 0) | (rng.random(n) < ch.p_dark)
    click1 = (on_d1 > 0) | (rng.random(n) < ch.p_dark)
    coin = rng.integers(0, 2, n)
    det = np.where(click0 & click1, coin, np.where(click1, 1, 0))
    outcome = np.where(click0 | click1, 2 * basis + det, NO_CLICK).astype(np.int8)
    return photons, outcome


def run_key_generation(params: ProtocolParams, ch: ChannelModel, rng_seed: int) -> KeyGeneration:
    """Emit, measure and sift both sequences for both message values."""
    N = int(params.N)
    probs = np.array([params.p_mu, params.p_nu, max(params.p_0, 0.0)])
    probs = probs / probs.sum()
    values = np.array([params.mu, params.nu, 0.0])
    records, sent = {}, {}
    rngs = iter(_streams(rng_seed, 4))
    for m in (0, 1):
        for who in RECEIVERS:
            rng = next(rngs)
            state = rng.integers(0, 4, N).astype(np.int8)
            label = rng.choice(3, size=N, p=probs).astype(np.int8)
            photons, outcome = sample_pulses(state, values[label], recipient_eta(ch, who), ch, rng)
            keep = np.flatnonzero(outcome != NO_CLICK)
            records[m, who] = PulseRecord(keep, state[keep], label[keep],
                                          photons[keep].astype(np.int32), outcome[keep])
            sent[m, who] = np.bincount(label, minlength=3)
    return KeyGeneration(records, sent)


@dataclass(frozen=True)
class MatchPlan:
    kept_indices_ab: np.ndarray
    permuted_indices_ac: np.ndarray

    def __len__(self):
        return len(self.kept_indices_ab)


def post_match(s_ab, s_ac) -> MatchPlan:
    """Pair each Bob-side position with a distinct Charlie-side position holding the same state.

    Within a state value, the r-th occurrence on one side pairs with the r-th
    on the other; occurrences beyond the shorter side's count are dropped.
    Indices are 0-based and the plan follows Bob-side order.
    """
    ab = np.asarray(s_ab, dtype=np.int64)
    ac = np.asarray(s_ac, dtype=np.int64)
    kept, perm = [], []
    ac_slots = {q: np.flatnonzero(ac == q) for q in range(4)}
    rank_ab = np.zeros(len(ab), dtype=np.int64)
    for q in range(4):
        idx = np.flatnonzero(ab == q)
        rank_ab[idx] = np.arange(len(idx))
    ok = np.zeros(len(ab), dtype=bool)
    partner = np.full(len(ab), -1, dtype=np.int64)
    for q in range(4):
        idx = np.flatnonzero(ab == q)
        slots = ac_slots[q]
        r = rank_ab[idx]
        hit = r < len(slots)
        ok[idx[hit]] = True
        partner[idx[hit]] = slots[r[hit]]
    kept = np.flatnonzero(ok)
    perm = partner[kept]
    return MatchPlan(kept, perm)


def apply_match(plan: MatchPlan, charlie_outcomes) -> np.ndarray:
    """Reorder Charlie-side data so entry i aligns with Bob-side entry ``kept_indices_ab[i]``."""
    arr = np.asarray(charlie_outcomes)
    if len(plan) and (plan.permuted_indices_ac.max() >= len(arr) or plan.permuted_indices_ac.min() < 0):
        raise IndexError("match plan refers past the end of Charlie's record")
    return arr[plan.permuted_indices_ac]


@dataclass
class RawKeys:
    sets: np.ndarray
    K_A: np.ndarray
    K_B: np.ndarray
    K_C: np.ndarray


def translate_keys(sent_state: np.ndarray, bob_outcome: np.ndarray, charlie_outcome: np.ndarray,
                   rng: np.random.Generator) -> RawKeys:
    """Alice draws a valid set per position; everyone maps their data to {0, 1, BOT}."""
    sent_state = np.asarray(sent_state, dtype=np.int64)
    n = len(sent_state)
    if not (len(bob_outcome) == len(charlie_outcome) == n):
        raise ValueError("aligned strings must have equal length")
    choice = rng.integers(0, 2, n)
    sets = VALID_SETS[sent_state, choice].astype(np.int64) if n else np.zeros(0, dtype=np.int64)
    K_A = ALICE_BIT[sets, sent_state] if n else np.zeros(0, dtype=np.int8)
    K_B = CONCLUSIVE[sets, np.asarray(bob_outcome, dtype=np.int64)] if n else np.zeros(0, dtype=np.int8)
    K_C = CONCLUSIVE[sets, np.asarray(charlie_outcome, dtype=np.int64)] if n else np.zeros(0, dtype=np.int8)
    return RawKeys(sets, K_A.astype(np.int8), K_B.astype(np.int8), K_C.astype(np.int8))


def mismatch_rate(K_A: np.ndarray, K_X: np.ndarray) -> tuple[float, int]:
    """Fraction of conclusive positions of ``K_X`` that disagree with ``K_A``, and their count."""
    concl = K_X != BOT
    k = int(concl.sum())
    if k == 0:
        return math.nan, 0
    return float(np.count_nonzero(K_X[concl] != K_A[concl])) / k, k


@dataclass
class Estimation:
    E_B_ct: float
    E_C_ct: float
    P_B_c: float
    P_C_c: float
    test_mask: np.ndarray
    pair: PairObservation


def run_estimation(keys: RawKeys, params: ProtocolParams, rng: np.random.Generator,
                   error_ceiling: float = 0.25, conclusive_window: float = 0.05) -> Estimation:
    """Test-bit sampling on the signal string; raises ``ProtocolAbort`` on failed checks."""
    n = len(keys.K_A)
    n_test = int(round(params.t * n))
    test = np.zeros(n, dtype=bool)
    test[rng.choice(n, size=n_test, replace=False)] = True
    E_B, kb = mismatch_rate(keys.K_A[test], keys.K_B[test])
    E_C, kc = mismatch_rate(keys.K_A[test], keys.K_C[test])
    if kb == 0 or kc == 0:
        raise ProtocolAbort(AbortReason.EMPTY_SAMPLE, "no conclusive test bits")
    P_B = float(np.count_nonzero(keys.K_B != BOT)) / n
    P_C = float(np.count_nonzero(keys.K_C != BOT)) / n
    if E_B > error_ceiling or E_C > error_ceiling:
        raise ProtocolAbort(AbortReason.TOO_NOISY, f"E_B^ct={E_B:.4g}, E_C^ct={E_C:.4g}")
    if abs(P_B - 0.25) > conclusive_window or abs(P_C - 0.25) > conclusive_window:
        raise ProtocolAbort(AbortReason.CONCLUSIVE_DEVIATION, f"P_B^c={P_B:.4g}, P_C^c={P_C:.4g}")
    joint = test & (keys.K_B != BOT) & (keys.K_C != BOT)
    sample = int(joint.sum())
    mism = int(np.count_nonzero(keys.K_B[joint] != keys.K_C[joint]))
    population = float(round((n - n_test) * P_B * P_C))
    pair = PairObservation(float(sample), float(mism), population)
    return Estimation(E_B, E_C, P_B, P_C, test, pair)


@dataclass(frozen=True)
class Verdict:
    E_B_cu: float
    E_C_cu: float
    bob_accepts: bool
    charlie_accepts: bool

    @property
    def signed(self) -> bool:
        return self.bob_accepts and self.charlie_accepts


def run_messaging(m: int, K_A_u: np.ndarray, K_B_u: np.ndarray, K_C_u: np.ndarray,
                  T_a: float, T_v: float) -> Verdict:
    """Authenticator checks against ``T_a``; on acceptance the verifier checks against ``T_v``."""
    if m not in (0, 1):
        raise ValueError("one-bit message expected")
    if not (len(K_A_u) == len(K_B_u) == len(K_C_u)):
        raise ValueError("untest strings must have equal length")
    E_B, kb = mismatch_rate(K_A_u, K_B_u)
    if kb == 0:
        raise ProtocolAbort(AbortReason.EMPTY_CONCLUSIVE, "authenticator has no conclusive bits")
    bob = E_B < T_a
    if not bob:
        return Verdict(E_B, math.nan, False, False)
    E_C, kc = mismatch_rate(K_A_u, K_C_u)
    if kc == 0:
        raise ProtocolAbort(AbortReason.EMPTY_CONCLUSIVE, "verifier has no conclusive bits")
    return Verdict(E_B, E_C, True, E_C < T_v)


@dataclass
class TaggedTruth:
    """True single-photon quantities of the matched signal strings (simulation-only)."""

    s_B1_mu: int
    s_C1_c_mu: int
    t_C1_c_mu: int
    s_C11_c_mu: int
    t_C11_c_mu: int


@dataclass
class MessageTranscript:
    m: int
    counts: DecoyCounts
    matched: dict[Label, int]
    estimation: Estimation | None = None
    verdict: Verdict | None = None
    aborted: bool = False
    abort_reason: str = ""
    truth: TaggedTruth | None = None

    @property
    def signed(self) -> bool:
        return not self.aborted and self.verdict is not None and self.verdict.signed


@dataclass
class Transcript:
    params: ProtocolParams
    seed: int
    authenticator: str
    messages: list[MessageTranscript] = field(default_factory=list)

    @property
    def signed(self) -> bool:
        return all(msg.signed for msg in self.messages)


def _tally(sent: float, sifted: int, keys: RawKeys, which: str) -> Tally:
    K = keys.K_B if which == "B" else keys.K_C
    n = len(K)
    concl = K != BOT
    n_c = int(concl.sum())
    m_c = int(np.count_nonzero(K[concl] != keys.K_A[concl]))
    # residue discarded by matching thins the label's sent pulses by the same factor;
    # an empty matched string keeps the full tally so its zero count stays informative
    eff_sent = sent * n / sifted if n else sent
    return Tally(sent=float(eff_sent), n=float(n), n_c=float(n_c), m_c=float(m_c))


def run_protocol(params: ProtocolParams, ch: ChannelModel, rng_seed: int,
                 authenticator: str = "B", error_ceiling: float = 0.25,
                 conclusive_window: float = 0.05) -> Transcript:
    """End-to-end run for both message values; aborts are recorded, not raised."""
    kg = run_key_generation(params, ch, rng_seed)
    rngs = _streams(rng_seed + 0x9E3779B9, 4)
    tr = Transcript(params, rng_seed, authenticator)
    for m in (0, 1):
        rb, rc = kg.records[m, "B"], kg.records[m, "C"]
        tallies_b, tallies_c, matched = {}, {}, {}
        mu_keys = mu_b = mu_c = None
        rng_sets = rngs[2 * m]
        for li, lab in enumerate(LABELS):
            ib = np.flatnonzero(rb.label == li)
            ic = np.flatnonzero(rc.label == li)
            sb, sc = rb.take(ib), rc.take(ic)
            plan = post_match(sb.state, sc.state)
            ab = sb.take(plan.kept_indices_ab)
            ac = sc.take(plan.permuted_indices_ac)
            assert np.array_equal(ab.state, ac.state), "post-matching broke state alignment"
            keys = translate_keys(ab.state, ab.outcome, apply_match(plan, sc.outcome), rng_sets)
            tallies_b[lab] = _tally(kg.sent[m, "B"][li], len(sb), keys, "B")
            tallies_c[lab] = _tally(kg.sent[m, "C"][li], len(sc), keys, "C")
            matched[lab] = len(plan)
            if lab is Label.MU:
                mu_keys, mu_b, mu_c = keys, ab, ac
        counts = DecoyCounts(tallies_b, tallies_c)
        truth = _truth(mu_keys, mu_b, mu_c)
        if authenticator == "C":
            counts = DecoyCounts(tallies_c, tallies_b)
            mu_keys = RawKeys(mu_keys.sets, mu_keys.K_A, mu_keys.K_C, mu_keys.K_B)
        msg = MessageTranscript(m, counts, matched, truth=truth)
        try:
            if len(mu_keys.K_A) == 0:
                raise ProtocolAbort(AbortReason.EMPTY_SAMPLE, "empty signal string")
            est = run_estimation(mu_keys, params, rngs[2 * m + 1], error_ceiling, conclusive_window)
            msg.estimation = est
            u = ~est.test_mask
            msg.verdict = run_messaging(m, mu_keys.K_A[u], mu_keys.K_B[u], mu_keys.K_C[u],
                                        params.T_a, params.T_v)
        except ProtocolAbort as exc:
            msg.aborted = True
            msg.abort_reason = exc.reason.value
        tr.messages.append(msg)
    return tr


def _truth(keys: RawKeys, ab: PulseRecord, ac: PulseRecord) -> TaggedTruth:
    single_b = ab.photons == 1
    single_c = ac.photons == 1
    concl_c = keys.K_C != BOT
    err_c = concl_c & (keys.K_C != keys.K_A)
    return TaggedTruth(
        s_B1_mu=int(single_b.sum()),
        s_C1_c_mu=int((single_c & concl_c).sum()),
        t_C1_c_mu=int((single_c & err_c).sum()),
        s_C11_c_mu=int((single_b & single_c & concl_c).sum()),
        t_C11_c_mu=int((single_b & single_c & err_c).sum()),
    )
