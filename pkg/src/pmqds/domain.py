"""Value types shared across the engine: states, sets, intensities, parameters and counts.

Quantum states and outcomes are stored as small integers so that long pulse
records live in numpy arrays.  ``BOT`` marks an inconclusive key symbol and
``NO_CLICK`` a pulse without detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Mapping

import numpy as np

BOT = -1
NO_CLICK = -1


class QState(IntEnum):
    H = 0
    V = 1
    PLUS = 2
    MINUS = 3

    @property
    def basis(self) -> int:
        """0 for the Z basis, 1 for the X basis."""
        return int(self) // 2

    @property
    def orthogonal(self) -> "QState":
        return QState(int(self) ^ 1)


class SetAssignment(IntEnum):
    """The four ordered state pairs; first member encodes 0, second encodes 1."""

    H_PLUS = 0
    PLUS_V = 1
    V_MINUS = 2
    MINUS_H = 3

    @property
    def members(self) -> tuple[QState, QState]:
        return SET_MEMBERS[self]

    def contains(self, state: QState) -> bool:
        return state in SET_MEMBERS[self]


SET_MEMBERS: dict[SetAssignment, tuple[QState, QState]] = {
    SetAssignment.H_PLUS: (QState.H, QState.PLUS),
    SetAssignment.PLUS_V: (QState.PLUS, QState.V),
    SetAssignment.V_MINUS: (QState.V, QState.MINUS),
    SetAssignment.MINUS_H: (QState.MINUS, QState.H),
}


def conclusive_outcome(sent: QState, set_: SetAssignment, measured: QState) -> int:
    """Bit a receiver infers from ``measured`` under ``set_``, or ``BOT``.

    ``sent`` is accepted for signature symmetry only; the rule depends on the
    announced set and the measurement result, so a forger holding an invalid
    set still gets a well-defined answer.
    """
    bit0, bit1 = SET_MEMBERS[SetAssignment(set_)]
    measured = QState(measured)
    if measured == bit1.orthogonal:
        return 0
    if measured == bit0.orthogonal:
        return 1
    return BOT


def _tables() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # CONCLUSIVE[set, measured] -> 0/1/BOT
    concl = np.full((4, 4), BOT, dtype=np.int8)
    for s in SetAssignment:
        for k in QState:
            concl[s, k] = conclusive_outcome(s.members[0], s, k)
    # VALID_SETS[state] -> the two sets containing it, ordered by set index
    valid = np.zeros((4, 2), dtype=np.int8)
    # ALICE_BIT[set, state] -> bit encoded by state within set (BOT if absent)
    bit = np.full((4, 4), BOT, dtype=np.int8)
    for q in QState:
        valid[q] = [s for s in SetAssignment if s.contains(q)]
    for s in SetAssignment:
        for b, q in enumerate(s.members):
            bit[s, q] = b
    return concl, valid, bit


CONCLUSIVE, VALID_SETS, ALICE_BIT = _tables()


class Label(str, Enum):
    """Intensity labels, ordered signal, decoy, vacuum."""

    MU = "mu"
    NU = "nu"
    VAC = "vac"


LABELS = (Label.MU, Label.NU, Label.VAC)


@dataclass(frozen=True)
class Intensity:
    label: Label
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError(f"negative mean photon number {self.value}")


@dataclass(frozen=True)
class ProtocolParams:
    mu: float
    nu: float
    p_mu: float
    p_nu: float
    t: float
    N: int = 0
    T_a: float = 0.01
    T_v: float = 0.03

    def __post_init__(self):
        if not (self.mu > self.nu > 0):
            raise ValueError(f"need mu > nu > 0, got mu={self.mu}, nu={self.nu}")
        if self.p_mu < 0 or self.p_nu < 0 or self.p_0 < -1e-12:
            raise ValueError("intensity probabilities must lie on the simplex")
        if not 0 < self.t < 1:
            raise ValueError(f"test fraction t={self.t} outside (0, 1)")
        if self.N < 0:
            raise ValueError("N must be non-negative")
        if not 0 < self.T_a < self.T_v < 0.5:
            raise ValueError(f"need 0 < T_a < T_v < 1/2, got {self.T_a}, {self.T_v}")

    @property
    def p_0(self) -> float:
        return 1.0 - self.p_mu - self.p_nu

    def probability(self, label: Label) -> float:
        return {Label.MU: self.p_mu, Label.NU: self.p_nu, Label.VAC: self.p_0}[Label(label)]

    def intensity(self, label: Label) -> float:
        return {Label.MU: self.mu, Label.NU: self.nu, Label.VAC: 0.0}[Label(label)]

    def with_N(self, N: int) -> "ProtocolParams":
        return replace(self, N=int(N))


@dataclass(frozen=True)
class ChannelModel:
    """Fiber link plus a pair of threshold detectors; defaults are the simulated system."""

    eta_det: float = 0.52
    p_dark: float = 1.3e-7
    e_mis: float = 0.0015
    insert_loss_db: float = 1.2
    alpha_db_per_km: float = 0.194
    dist_ab_km: float = 0.0
    dist_ac_km: float = 0.0

    def __post_init__(self):
        for name in ("eta_det", "p_dark", "e_mis"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        for name in ("insert_loss_db", "alpha_db_per_km", "dist_ab_km", "dist_ac_km"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def at_distance(self, dist_km: float) -> "ChannelModel":
        """Symmetric placement of both receivers at ``dist_km``."""
        return replace(self, dist_ab_km=float(dist_km), dist_ac_km=float(dist_km))


@dataclass(frozen=True)
class Tally:
    """Counts for one receiver and one intensity.

    ``sent`` is the number of pulses the counts were drawn from.  After
    post-matching or coincidence filtering it is the effective number, i.e.
    the emitted count thinned by the same photon-number-independent factor
    as the detections.
    """

    sent: float
    n: float
    n_c: float
    m_c: float

    def __post_init__(self):
        if not (0 <= self.m_c <= self.n_c * (1 + 1e-12) + 1e-9
                and self.n_c <= self.n * (1 + 1e-12) + 1e-9
                and self.n <= self.sent * (1 + 1e-12) + 1e-9):
            raise ValueError(f"inconsistent tally {self}")


@dataclass(frozen=True)
class DecoyCounts:
    bob: Mapping[Label, Tally]
    charlie: Mapping[Label, Tally]

    def of(self, who: str) -> Mapping[Label, Tally]:
        return {"B": self.bob, "C": self.charlie}[who]

    @classmethod
    def zeros(cls) -> "DecoyCounts":
        z = {lab: Tally(0.0, 0.0, 0.0, 0.0) for lab in LABELS}
        return cls(dict(z), dict(z))


@dataclass(frozen=True)
class PairObservation:
    """Receiver-vs-receiver comparison on jointly conclusive signal positions.

    ``sample`` test positions where both receivers are conclusive, of which
    ``mismatches`` disagree; ``population`` is the number of jointly
    conclusive untest positions whose disagreements must be bounded.
    """

    sample: float
    mismatches: float
    population: float


@dataclass(frozen=True)
class SecurityTargets:
    eps_for: float = 1e-10
    eps_rob: float = 1e-10
    eps_rep: float = 1e-10
    eps_1: float = (1e-9 - 3e-10) / 12
    eps_2: float = (1e-9 - 3e-10) / 12
    eps_tot: float = 1e-9

    def __post_init__(self):
        for name in ("eps_for", "eps_rob", "eps_rep", "eps_1", "eps_2", "eps_tot"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name}={v} outside (0, 1)")


@dataclass(frozen=True)
class DecoyEstimates:
    s_C1_c_mu_lower: float
    s_B1_mu_lower: float
    s_C11_c_mu_lower: float
    t_C1_c_mu_upper: float
    s_B1_mu_upper: float
    t_C11_c_mu_upper: float
    chernoff_applications: int = 0

    @property
    def e11_upper(self) -> float:
        if self.s_C11_c_mu_lower <= 0:
            return 0.5
        return min(0.5, self.t_C11_c_mu_upper / self.s_C11_c_mu_lower)


@dataclass(frozen=True)
class SecurityReport:
    eps_1: float
    eps_2: float
    eps_for: float
    eps_rob: float
    eps_rep: float
    eps_tot: float
    log_eps_for: float
    log_eps_rob: float
    log_eps_rep: float
    estimates: DecoyEstimates
    e11: float
    E_BF11_star: float
    T_a: float
    T_v: float
    T_v11: float
    n_cu: float
    n_cu_11: float
    n_u: float
    P_B_c: float
    P_C_c: float
    E_B: float
    Delta_BC_cu_bar: float
    A: float
    A_flag: str = "root"
    extras: dict = field(default_factory=dict)

    def meets(self, targets: SecurityTargets) -> bool:
        """Log-domain comparison against every target."""
        return (
            self.log_eps_for <= math.log(targets.eps_for)
            and self.log_eps_rob <= math.log(targets.eps_rob)
            and self.log_eps_rep <= math.log(targets.eps_rep)
            and self.eps_tot <= targets.eps_tot
        )
