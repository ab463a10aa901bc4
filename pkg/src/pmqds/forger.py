"""Minimum mismatch a forging receiver can reach on single-photon-pair positions.

A dishonest authenticator holds his own copy of every single-photon pair
and controls the verifier's channel.  Before the sets are assigned he
applies a set-independent operation to the verifier's photon (which may
block it, so he controls which positions end up conclusive); once the set
is known he measures his memory to guess Alice's bit.

``solve_forger_sdp`` computes the exact optimum of that game for a given
verifier error rate ``e11``: the guess error on the verifier's conclusive
positions, minimised subject to the verifier's conclusive error rate being
at most ``e11``.  The non-signalling constraint (channel output independent
of the later set) is imposed on the Choi matrices of the set-dependent
instruments, and the ratio objective is linearised by fixing the conclusive
probability to one.  The verifier is a BB84 measurement with random basis
choice, which squashes to a qubit under the double-click rule used here.

The optimum is non-increasing in ``e11``, so a precomputed table evaluated
one grid cell to the right never exceeds the true curve.
"""

from __future__ import annotations

import argparse
import csv
import math
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Protocol

import numpy as np

from .domain import BOT, CONCLUSIVE, SET_MEMBERS, QState, SetAssignment

TABLE_NAME = "forger_table.csv"
# subtracted from every tabulated optimum to absorb solver tolerance
SOLVER_MARGIN = 1e-6

_S = math.sqrt(0.5)
_VECTORS = {
    QState.H: np.array([1.0, 0.0]),
    QState.V: np.array([0.0, 1.0]),
    QState.PLUS: np.array([_S, _S]),
    QState.MINUS: np.array([_S, -_S]),
}


class ForgerStrategy(Protocol):
    def __call__(self, e11: float) -> float: ...


def _check_domain(e11: float):
    if not 0.0 <= e11 <= 0.5:
        raise ValueError(f"e11={e11} outside [0, 1/2]")


def solve_forger_sdp(e11: float, solver: str = "CLARABEL") -> float:
    """Optimal forger guess error at verifier error ``e11`` (one SDP solve)."""
    import cvxpy as cp

    _check_domain(e11)
    sets = list(SetAssignment)
    J = {(s, g): cp.Variable((8, 8), symmetric=True) for s in sets for g in (0, 1)}
    J_channel = cp.Variable((8, 8), symmetric=True)
    cons = [J[k] >> 0 for k in J]
    cons += [J[s, 0] + J[s, 1] == J_channel for s in sets]
    conclusive = err = guess_err = 0
    for s in sets:
        for b, q in enumerate(SET_MEMBERS[s]):
            psi = np.kron(_VECTORS[q], _VECTORS[q])
            rho = np.outer(psi, psi)
            for k in QState:
                c = CONCLUSIVE[s, k]
                if c == BOT:
                    continue
                # verifier: random basis, projector onto k
                W = np.kron(rho.T, 0.5 * np.outer(_VECTORS[k], _VECTORS[k])) / 8.0
                for g in (0, 1):
                    p = cp.trace(W @ J[s, g])
                    conclusive += p
                    if c != b:
                        err += p
                    if g != b:
                        guess_err += p
    cons += [conclusive == 1, err <= e11]
    prob = cp.Problem(cp.Minimize(guess_err), cons)
    prob.solve(solver=solver)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"forger SDP at e11={e11} ended with status {prob.status}")
    return float(prob.value)


def default_grid() -> np.ndarray:
    fine = np.linspace(0.0, 0.05, 101)
    coarse = np.linspace(0.05, 0.5, 181)[1:]
    return np.concatenate([fine, coarse])


def write_table(path: Path, grid: np.ndarray | None = None) -> None:
    grid = default_grid() if grid is None else grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["e11", "E_BF11"])
        for e in grid:
            w.writerow([repr(float(e)), repr(solve_forger_sdp(float(e)))])


@lru_cache(maxsize=None)
def _load_table() -> tuple[np.ndarray, np.ndarray]:
    text = resources.files(__package__).joinpath(TABLE_NAME).read_text()
    rows = list(csv.reader(text.splitlines()))[1:]
    arr = np.array([[float(a), float(b)] for a, b in rows])
    return arr[:, 0], arr[:, 1]


class TabulatedSDPForger:
    """Default strategy: the SDP optimum, read from the shipped table conservatively.

    For ``e11`` in cell ``[g_i, g_i+1]`` the chord over the next cell
    ``[g_i+1, g_i+2]`` is used.  Its values lie between the optimum at
    ``g_i+1`` and ``g_i+2``, both at most the optimum anywhere on the
    original cell because the curve is non-increasing.
    """

    name = "sdp-table"

    def __init__(self):
        grid, values = _load_table()
        self.grid = grid
        self.values = np.maximum(values - SOLVER_MARGIN, 0.0)
        self._idx = np.arange(len(grid), dtype=float)

    def __call__(self, e11: float) -> float:
        _check_domain(e11)
        pos = float(np.interp(e11, self.grid, self._idx)) + 1.0
        return float(np.interp(pos, self._idx, self.values))


class ConstantFloorForger:
    """Conservative fallback: a fixed floor minus a linear penalty, clipped at a tiny positive value."""

    name = "constant-floor"

    def __init__(self, floor: float = 0.05, slope: float = 1.0):
        self.floor = floor
        self.slope = slope

    def __call__(self, e11: float) -> float:
        _check_domain(e11)
        return max(self.floor - self.slope * e11, 1e-6)


_DEFAULT: ForgerStrategy | None = None


def default_strategy() -> ForgerStrategy:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = TabulatedSDPForger()
    return _DEFAULT


def forger_min_error(e11: float, strategy: ForgerStrategy | None = None) -> float:
    return (strategy or default_strategy())(e11)


def main(argv=None):
    ap = argparse.ArgumentParser(description="Regenerate the tabulated forger bound.")
    ap.add_argument("--out", type=Path, default=Path(__file__).with_name(TABLE_NAME))
    args = ap.parse_args(argv)
    write_table(args.out)


if __name__ == "__main__":
    main()
