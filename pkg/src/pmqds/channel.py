"""Physical model: fiber transmittance, per-pulse outcome law and analytic expected counts.

Detection model: a polarizing splitter followed by two threshold detectors
with dark-count probability ``p_dark`` each.  Arriving photons land on the
correct detector of the matching basis except for a per-photon misalignment
flip with probability ``e_mis``; in the other basis each photon picks a
detector uniformly.  A double click is resolved to a uniformly random
outcome of the measured basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    ALICE_BIT,
    CONCLUSIVE,
    LABELS,
    VALID_SETS,
    BOT,
    ChannelModel,
    DecoyCounts,
    Label,
    PairObservation,
    ProtocolParams,
    QState,
    SetAssignment,
    Tally,
)


@dataclass(frozen=True)
class OutcomeDistribution:
    no_click: float
    correct: float
    error: float
    inconclusive: float

    def __post_init__(self):
        total = self.no_click + self.correct + self.error + self.inconclusive
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"outcome probabilities sum to {total!r}")

    @property
    def click(self) -> float:
        return self.correct + self.error + self.inconclusive

    @property
    def conclusive(self) -> float:
        return self.correct + self.error

    def as_array(self) -> np.ndarray:
        return np.array([self.no_click, self.correct, self.error, self.inconclusive])


def transmittance(dist_km: float, ch: ChannelModel) -> float:
    """Per-photon detection probability over ``dist_km`` of fiber."""
    if dist_km < 0:
        raise ValueError("distance must be non-negative")
    loss_db = ch.alpha_db_per_km * dist_km + ch.insert_loss_db
    return ch.eta_det * 10.0 ** (-loss_db / 10.0)


def recipient_eta(ch: ChannelModel, recipient: str) -> float:
    dist = {"B": ch.dist_ab_km, "C": ch.dist_ac_km}[recipient]
    return transmittance(dist, ch)


def click_pattern(z_none: float, z_d0: float, z_d1: float, p_dark: float) -> tuple[float, float, float, float]:
    """Probabilities of (no click, only d0, only d1, both) from photon-emptiness probabilities.

    ``z_none`` is the chance no photon reaches either detector, ``z_d0``
    (``z_d1``) that none reaches detector 0 (1).
    """
    q = 1.0 - p_dark
    none = q * q * z_none
    d0_silent = q * z_d0
    d1_silent = q * z_d1
    only0 = d1_silent - none
    only1 = d0_silent - none
    both = 1.0 - d0_silent - d1_silent + none
    return none, max(only0, 0.0), max(only1, 0.0), max(both, 0.0)


def _emptiness(mean_photons: float, frac_d0: float, photons: int | None, eta: float):
    # photons=None: Poissonian pulse with mean_photons arriving on average
    if photons is None:
        x = mean_photons
        return math.exp(-x), math.exp(-x * frac_d0), math.exp(-x * (1.0 - frac_d0))
    return ((1.0 - eta) ** photons,
            (1.0 - eta * frac_d0) ** photons,
            (1.0 - eta * (1.0 - frac_d0)) ** photons)


def measured_state_distribution(sent: QState, intensity: float, eta: float, ch: ChannelModel,
                                photons: int | None = None) -> np.ndarray:
    """Length-5 vector: P(measured = H, V, +, -) and P(no click) last.

    With ``photons`` set, the pulse is a Fock state with that photon number
    instead of a Poissonian pulse of mean ``intensity``.
    """
    sent = QState(sent)
    out = np.zeros(5)
    for basis in (0, 1):
        d0, d1 = QState(2 * basis), QState(2 * basis + 1)
        if sent.basis == basis:
            frac_d0 = 1.0 - ch.e_mis if sent == d0 else ch.e_mis
        else:
            frac_d0 = 0.5
        z = _emptiness(eta * intensity, frac_d0, photons, eta)
        none, only0, only1, both = click_pattern(*z, ch.p_dark)
        out[d0] += 0.5 * (only0 + 0.5 * both)
        out[d1] += 0.5 * (only1 + 0.5 * both)
        out[4] += 0.5 * none
    return out


def pulse_outcome_distribution(sent: QState, set_: SetAssignment, intensity: float, eta: float,
                               ch: ChannelModel, photons: int | None = None) -> OutcomeDistribution:
    """Exact per-pulse outcome law for one prepared state under one set assignment."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta={eta} outside [0, 1]")
    probs = measured_state_distribution(sent, getattr(intensity, "value", intensity), eta, ch, photons)
    bit = ALICE_BIT[int(set_), int(sent)]
    correct = error = incon = 0.0
    for k in range(4):
        c = CONCLUSIVE[int(set_), k]
        if c == BOT:
            incon += probs[k]
        elif c == bit:
            correct += probs[k]
        else:
            error += probs[k]
    # renormalise away float drift so the 1e-12 invariant holds
    no_click = 1.0 - correct - error - incon
    return OutcomeDistribution(no_click, correct, error, incon)


def _class_weights() -> np.ndarray:
    # W[q, k, c]: weight of measured state k in class c (correct, error, inconclusive)
    # for sent state q, averaged over the two valid sets of q
    W = np.zeros((4, 4, 3))
    for q in range(4):
        for s in VALID_SETS[q]:
            bit = ALICE_BIT[s, q]
            for k in range(4):
                c = CONCLUSIVE[s, k]
                W[q, k, 2 if c == BOT else (0 if c == bit else 1)] += 0.5
    return W


_CLASS_WEIGHTS = _class_weights()


def average_outcome(intensity: float, eta: float, ch: ChannelModel, photons: int | None = None) -> OutcomeDistribution:
    """Outcome law averaged over uniform sent states and the two valid sets for each."""
    acc = np.zeros(3)
    for q in QState:
        probs = measured_state_distribution(q, intensity, eta, ch, photons)
        acc += probs[:4] @ _CLASS_WEIGHTS[q]
    acc /= 4.0
    return OutcomeDistribution(1.0 - acc.sum(), acc[0], acc[1], acc[2])


def expected_counts(params: ProtocolParams, ch: ChannelModel, recipient: str) -> dict[Label, Tally]:
    """Mean counts for one receiver over ``params.N`` pulses per message (real-valued)."""
    eta = recipient_eta(ch, recipient)
    out = {}
    for lab in LABELS:
        sent = params.N * params.probability(lab)
        d = average_outcome(params.intensity(lab), eta, ch)
        out[lab] = Tally(sent=sent, n=sent * d.click, n_c=sent * d.conclusive, m_c=sent * d.error)
    return out


def _thin(t: Tally, keep: float, sent_keep: float) -> Tally:
    return Tally(sent=t.sent * sent_keep, n=t.n * keep, n_c=t.n_c * keep, m_c=t.m_c * keep)


def expected_pair_counts(params: ProtocolParams, ch: ChannelModel, coincidence: bool = False) -> DecoyCounts:
    """Counts both receivers hold after post-matching, or after coincidence filtering.

    Post-matching keeps ``min(n_B, n_C)`` positions per intensity.  The
    coincidence model keeps a position only if the other receiver also
    clicked on the same pulse, which thins each receiver's record by the
    other's click probability.
    """
    bob = expected_counts(params, ch, "B")
    charlie = expected_counts(params, ch, "C")
    B, C = {}, {}
    for lab in LABELS:
        b, c = bob[lab], charlie[lab]
        if coincidence:
            qb = b.n / b.sent if b.sent else 0.0
            qc = c.n / c.sent if c.sent else 0.0
            B[lab] = _thin(b, qc, qc)
            C[lab] = _thin(c, qb, qb)
        else:
            m = min(b.n, c.n)
            # nothing to discard from an empty string, so its sent tally stays whole
            kb = m / b.n if b.n else 1.0
            kc = m / c.n if c.n else 1.0
            B[lab] = _thin(b, kb, kb)
            C[lab] = _thin(c, kc, kc)
    return DecoyCounts(B, C)


def expected_pair_observation(counts: DecoyCounts, t: float) -> PairObservation:
    """Mean receiver-vs-receiver disagreement data on the signal string.

    Conclusiveness and errors of the two receivers are independent given
    Alice's state, so joint rates factorise.
    """
    b, c = counts.bob[Label.MU], counts.charlie[Label.MU]
    n = min(b.n, c.n)
    if n <= 0:
        return PairObservation(0.0, 0.0, 0.0)
    pb, pc = b.n_c / b.n, c.n_c / c.n
    eb = b.m_c / b.n_c if b.n_c else 0.0
    ec = c.m_c / c.n_c if c.n_c else 0.0
    joint = pb * pc
    disagree = eb * (1 - ec) + ec * (1 - eb)
    sample = t * n * joint
    return PairObservation(sample=sample, mismatches=sample * disagree, population=(1 - t) * n * joint)
