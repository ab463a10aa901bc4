"""Post-matching quantum digital signatures with SARG04 encoding and decoy states."""

from .domain import (
    BOT,
    ChannelModel,
    DecoyCounts,
    Label,
    PairObservation,
    ProtocolParams,
    QState,
    SecurityReport,
    SecurityTargets,
    SetAssignment,
    Tally,
)

__version__ = "0.1.0"

__all__ = [
    "BOT",
    "ChannelModel",
    "DecoyCounts",
    "Label",
    "PairObservation",
    "ProtocolParams",
    "QState",
    "SecurityReport",
    "SecurityTargets",
    "SetAssignment",
    "Tally",
]
