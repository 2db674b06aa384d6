"""Runtime monitors for energy, dissipation and comparison along discrete flows.

Every check returns a :class:`Report` with a margin (positive when the
inequality holds with room to spare); pass/fail thresholds are arguments, so
callers and tests decide how strict to be.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import MismatchedGrids
from .flow import Trajectory
from .geometry import Contour, SetMask, area, perimeter, signed_distance


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    perimeter: float
    area: float
    energy: float
    dissipation_l2: float
    mm_dissipation: float


@dataclass
class Report:
    check: str
    passed: bool
    margin: float
    worst_step: int | None = None
    details: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"check": self.check, "pass": bool(self.passed), "margin": _num(self.margin),
                "worst_step": self.worst_step, "details": self.details,
                "summary": {k: _num(v) for k, v in self.summary.items()}}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _num(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def energy(E: SetMask, c0: float) -> float:
    """``P(E) - c0 |E|`` with the polyline perimeter and the cell-count area."""
    if E.is_empty:
        return 0.0
    return perimeter(E) - c0 * area(E)


def mm_dissipation(E_k: SetMask, E_k1: SetMask, h: float, d: np.ndarray | None = None) -> float:
    """``(1/h) int_{E_{k+1} delta E_k} |dbar_{E_k}|`` as a cell sum.

    Evaluated as ``(1/h) sum (phi_{k+1} - phi_k) d`` with sub-cell volume
    fractions ``phi``.  Gained cells lie where ``d > 0`` and lost cells where
    ``d < 0``, so for pure masks this is exactly the sum of ``|d|`` over
    flipped cells; with level fields, fraction changes in cells whose side
    of the interface does not change cancel instead of accumulating.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if E_k.grid != E_k1.grid:
        raise MismatchedGrids("sets live on different grids")
    diff = E_k1.volume_fraction() - E_k.volume_fraction()
    if not diff.any():
        return 0.0
    if d is None:
        d = signed_distance(E_k).values
    return float(E_k.grid.cell ** 2 * np.sum(diff * d) / h)


def boundary_dissipation(contours: Sequence[Contour], fbar: float) -> float:
    """``sum over contours of  int (k - fbar)^2 ds`` (trapezoid rule on arclength)."""
    total = 0.0
    for c in contours:
        if c.curvature is None:
            raise ValueError("contour carries no curvature")
        e = c.edge_lengths
        q = (c.curvature - fbar) ** 2
        total += float(np.sum(0.5 * (q + np.roll(q, -1)) * e))
    return total


def energy_series(traj: Trajectory, c0: float) -> list[EnergyRecord]:
    """Energy record after every step (and at ``t = 0`` from the stored initial set)."""
    E0 = traj.initial
    P0 = perimeter(E0)
    out = [EnergyRecord(0.0, P0, area(E0), P0 - c0 * area(E0), np.nan, 0.0)]
    for r in traj.records:
        out.append(EnergyRecord(r.t, r.perimeter, r.area, r.perimeter - c0 * r.area, r.boundary_dissipation,
                                r.mm_dissipation))
    return out


def check_energy_quasimonotone(traj: Trajectory, c0: float, burn_in: int = 10, solver_tol: float | None = None,
                               rel_tol: float = 0.02, C: float = 1.0) -> Report:
    """Per-step energy-dissipation inequality and the largest upward energy jump.

    For each step ``k >= burn_in`` the violation is

        mm_k / 2 + E(E_{k+1}) - E(E_k) - C |fbar_k - c0|^2 h P(E_k),

    allowed up to ``3 solver_tol + rel_tol * P(E_k)``.  Also reported: the
    constant ``C_P`` for which ``mm_k / 2 + P(E_{k+1}) <= (1 + C_P h) P(E_k)``
    holds at every step, and the largest rise ``E(t) - min_{s <= t} E(s)``.
    """
    recs = traj.records
    if solver_tol is None:
        solver_tol = 1e-7 * traj.grid.area
    es = energy_series(traj, c0)
    h = traj.h
    worst, worst_k, details = -np.inf, None, []
    cp = -np.inf
    for k, r in enumerate(recs):
        if r.vanished:
            break
        Pk, Ek = es[k].perimeter, es[k].energy
        lhs = 0.5 * r.mm_dissipation + es[k + 1].energy
        slack = C * (r.fbar - c0) ** 2 * h * Pk
        if Pk > 0:
            cp = max(cp, ((0.5 * r.mm_dissipation + r.perimeter) / Pk - 1.0) / h)
        if k < burn_in:
            continue
        allowed = 3 * solver_tol + rel_tol * Pk
        viol = lhs - Ek - slack
        excess = viol - allowed
        if excess > worst:
            worst, worst_k = excess, k
        if excess > 0:
            details.append({"step": k, "violation": viol, "allowed": allowed})
    energies = np.array([e.energy for e in es[min(burn_in, len(es) - 1):]])
    jump = float(np.max(energies - np.minimum.accumulate(energies))) if len(energies) else 0.0
    margin = -worst if np.isfinite(worst) else np.inf
    return Report("energy_quasimonotone", margin >= 0, margin, worst_k, details,
                  {"C_perimeter": cp, "max_energy_rise": jump, "burn_in": burn_in})


def check_step_minimality(traj: Trajectory, solver_tol: float | None = None, rel_tol: float = 1e-3) -> Report:
    """Minimality of each step: ``objective_drop >= 0`` and the rearranged form

        mm_k <= P(E_k) - P(E_{k+1}) + fbar_k (|E_{k+1}| - |E_k|),

    both up to ``3 solver_tol + rel_tol * P(E_k)`` (perimeter-estimator mismatch).
    Areas are sub-cell volumes, matching the step objective.
    """
    if solver_tol is None:
        solver_tol = 1e-7 * traj.grid.area
    P_prev = perimeter(traj.initial)
    A_prev = float(np.sum(traj.initial.volume_fraction())) * traj.grid.cell ** 2
    worst, worst_k, details = -np.inf, None, []
    for k, r in enumerate(traj.records):
        allowed = 3 * solver_tol + rel_tol * P_prev
        v1 = -r.objective_drop
        v2 = r.mm_dissipation - (P_prev - r.perimeter) - r.fbar * (r.volume - A_prev)
        v = max(v1, v2) - allowed
        if v > worst:
            worst, worst_k = v, k
        if v > 0:
            details.append({"step": k, "objective_drop": r.objective_drop, "mm_excess": v2, "allowed": allowed})
        P_prev, A_prev = r.perimeter, r.volume
    margin = -worst if np.isfinite(worst) else np.inf
    return Report("step_minimality", margin >= 0, margin, worst_k, details)


def _mask_or_empty(traj: Trajectory, k: int) -> SetMask | None:
    if k in traj.snapshots:
        return traj.snapshots[k]
    if traj.vanished and k > max(traj.snapshots):
        return SetMask.empty(traj.grid)
    return None


def _paired_masks(trajA: Trajectory, trajB: Trajectory):
    """Steps where both trajectories have a stored set (the empty set persists after extinction)."""
    if trajA.grid != trajB.grid:
        raise MismatchedGrids("trajectories live on different grids")
    if trajA.h != trajB.h:
        raise ValueError("trajectories use different time steps")
    n = max(max(trajA.snapshots), max(trajB.snapshots))
    for k in range(n + 1):
        A, B = _mask_or_empty(trajA, k), _mask_or_empty(trajB, k)
        if A is not None and B is not None:
            yield k, A, B


def _outside_depth(A: SetMask, cells: np.ndarray, band: float) -> float:
    """Largest distance (length units) from ``cells`` to ``A`` for cells outside ``A``."""
    if not cells.any():
        return 0.0
    if A.is_empty:
        return np.inf
    d = signed_distance(A, band=band).values
    return float(np.max(d[cells]))


def penetration_depth(A: SetMask, B: SetMask, band_cells: float = 4.0) -> float:
    """Depth (in cells) of ``B`` outside ``A``: the largest ``dbar_A`` over cells of ``B \\ A``.

    Values beyond ``band_cells`` are lower bounds.
    """
    c = A.grid.cell
    return _outside_depth(A, B.inside & ~A.inside, band_cells * c) / c


def overlap_depth(A: SetMask, B: SetMask, band_cells: float = 4.0) -> float:
    """Depth (in cells) of ``A ∩ B``: the largest ``min(-dbar_A, -dbar_B)`` over shared cells."""
    both = A.inside & B.inside
    if not both.any():
        return 0.0
    c = A.grid.cell
    dA = signed_distance(A, band=band_cells * c).values
    dB = signed_distance(B, band=band_cells * c).values
    return float(np.max(np.minimum(-dA[both], -dB[both]))) / c


def check_comparison(trajA: Trajectory, trajB: Trajectory, tol_cells: float = 1.0) -> Report:
    """Containment ``B_t ⊂ A_t`` at every stored step, up to ``tol_cells``.

    Both trajectories must share grid and step and should store every step.
    """
    worst, worst_k, details = 0.0, None, []
    for k, A, B in _paired_masks(trajA, trajB):
        depth = penetration_depth(A, B)
        details.append({"step": k, "penetration_cells": depth})
        if worst_k is None or depth > worst:
            worst, worst_k = depth, k
    margin = tol_cells - worst
    return Report("comparison_containment", margin >= 0, margin, worst_k, details,
                  {"max_penetration_cells": worst, "steps_checked": len(details)})


def check_disjoint(trajA: Trajectory, trajB: Trajectory, tol_cells: float = 1.0) -> Report:
    """Disjointness ``A_t ∩ B_t = ∅`` at every stored step, up to ``tol_cells`` of overlap depth."""
    worst, worst_k, details = 0.0, None, []
    for k, A, B in _paired_masks(trajA, trajB):
        depth = overlap_depth(A, B)
        details.append({"step": k, "overlap_cells": depth})
        if worst_k is None or depth > worst:
            worst, worst_k = depth, k
    margin = tol_cells - worst
    return Report("comparison_disjoint", margin >= 0, margin, worst_k, details,
                  {"max_overlap_cells": worst, "steps_checked": len(details)})


def displacement_fit(h_values: Sequence[float], sups: Sequence[float]) -> dict:
    """Ratios ``sup / sqrt(h)`` with their spread, and the log-log slope of ``sup`` against ``h``."""
    h = np.asarray(h_values, float)
    s = np.asarray(sups, float)
    ratio = s / np.sqrt(h)
    slope = float(np.polyfit(np.log(h), np.log(s), 1)[0]) if np.all(s > 0) and len(h) > 1 else np.nan
    return {"ratios": ratio.tolist(), "C1": float(ratio.max()), "spread": float(ratio.max() / ratio.min()),
            "loglog_slope": slope}
