"""Minimizing-movements steps and discrete flat-flow trajectories.

One step replaces ``E_k`` by a minimizer of

    F_k(E) = P(E) + (1/h) int_E dbar_{E_k} - fbar_k |E|,

where ``dbar`` is the signed distance and ``fbar_k`` the mean forcing over
``[kh, (k+1)h]``.  The default solver uses the total-variation (ROF) form:
if ``v`` minimises ``TV(v) + (1/2h) ||v - dbar||^2`` then every sublevel set
``{v < s}`` minimises ``P(E) + (1/h) int_E (dbar - s)``, so ``{v < h fbar}``
is the step.  The level field ``v - h fbar`` is kept on the new set, which
places its boundary to sub-cell accuracy.  ``method="indicator"`` instead
solves the convex relaxation over ``[0, 1]``-valued functions directly and
thresholds at 1/2.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DomainContact, EmptySet
from .geometry import (Contour, ScalarField, SetMask, extract_contours, perimeter, signed_distance)
from .solvers import SolverTolerances, solve_indicator, solve_rof


@dataclass(frozen=True)
class ForcingSpec:
    """Time-dependent forcing ``f(t)``.

    ``constant``: ``c0``; ``exp_relax``: ``c0 + A exp(-rate t)``;
    ``integrable_perturbation``: ``c0 + A / (1 + t)**p`` with ``p > 1/2``.
    """

    kind: str = "constant"
    c0: float = 1.0
    amplitude: float = 0.0
    rate: float = 1.0
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "exp_relax", "integrable_perturbation"):
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        if self.kind == "exp_relax" and not self.rate > 0:
            raise ValueError("exp_relax needs a positive rate")
        if self.kind == "integrable_perturbation" and not self.p > 0.5:
            raise ValueError("integrable_perturbation needs p > 1/2 for square integrability")

    @classmethod
    def constant(cls, c0: float) -> "ForcingSpec":
        return cls("constant", c0)

    def __call__(self, t):
        t = np.asarray(t, float)
        if self.kind == "constant":
            return self.c0 + 0.0 * t
        if self.kind == "exp_relax":
            return self.c0 + self.amplitude * np.exp(-self.rate * t)
        return self.c0 + self.amplitude / (1.0 + t) ** self.p

    def integral(self, a: float, b: float) -> float:
        """Exact ``int_a^b f``."""
        base = self.c0 * (b - a)
        if self.kind == "constant" or self.amplitude == 0.0:
            return base
        A = self.amplitude
        if self.kind == "exp_relax":
            lam = self.rate
            return base + A * (math.exp(-lam * a) - math.exp(-lam * b)) / lam
        if self.p == 1.0:
            return base + A * (math.log1p(b) - math.log1p(a))
        q = 1.0 - self.p
        return base + A * ((1.0 + b) ** q - (1.0 + a) ** q) / q

    def sup_abs(self) -> float:
        return abs(self.c0) + abs(self.amplitude)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c0": self.c0, "amplitude": self.amplitude, "rate": self.rate, "p": self.p}

    @classmethod
    def from_dict(cls, d: dict) -> "ForcingSpec":
        return cls(**{k: d[k] for k in ("kind", "c0", "amplitude", "rate", "p") if k in d})


def fbar(forcing: ForcingSpec, k: int, h: float) -> float:
    """Average of the forcing over ``[kh, (k+1)h]``."""
    if h <= 0 or k < 0:
        raise ValueError("need h > 0 and k >= 0")
    return forcing.integral(k * h, (k + 1) * h) / h


@dataclass(frozen=True)
class StepRecord:
    """Scalar outcome of one step; masks are attached only at kept steps.

    ``objective_*`` are ``F_k`` evaluated with the polyline perimeter and the
    sub-cell volume fraction of each set.  ``area`` is the cell-count area and
    ``volume`` the sub-cell one.  ``el_residual`` is the largest
    ``|dbar_{E_k}/h + k - fbar|`` over the new boundary, ``displacement`` the
    largest ``|dbar_{E_k}|`` over the new boundary and the flipped cells.
    """

    k: int
    h: float
    t: float
    fbar: float
    objective_before: float
    objective_after: float
    el_residual: float
    displacement: float
    area: float
    perimeter: float
    mm_dissipation: float
    boundary_dissipation: float
    symm_diff: float
    gap: float
    iterations: int
    n_components: int
    n_holes: int
    vanished: bool = False
    volume: float = 0.0
    mask_before: SetMask | None = field(default=None, repr=False, compare=False)
    mask_after: SetMask | None = field(default=None, repr=False, compare=False)

    @property
    def objective_drop(self) -> float:
        return self.objective_before - self.objective_after


@dataclass
class Trajectory:
    """Discrete flow ``E_t^h = E_k`` on ``[kh, (k+1)h)``.

    ``records[k]`` describes the step from ``E_k`` to ``E_{k+1}``.  Full masks
    are stored in ``snapshots`` at step indices ``0, keep_every, ...`` and at
    the final step; ``records[k].mask_after is records[k+1].mask_before``
    whenever both are stored.
    """

    grid: object
    h: float
    forcing: ForcingSpec
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    vanished: bool = False
    vanish_time: float | None = None

    @property
    def initial(self) -> SetMask:
        return self.snapshots[0]

    @property
    def final(self) -> SetMask:
        return self.snapshots[max(self.snapshots)]

    @property
    def n_steps(self) -> int:
        return len(self.records)

    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def mask_at(self, k: int) -> SetMask:
        """Stored mask ``E_k``; raises ``KeyError`` if step ``k`` was not kept."""
        return self.snapshots[k]

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


@dataclass
class StepState:
    """Solver warm start carried from one step to the next."""

    p: tuple | None = None


def clamp_width(h: float, cell: float, fbar_val: float, tol: SolverTolerances) -> float:
    return max(3.0 * tol.clamp_c1 * math.sqrt(h), 6.0 * cell, 2.0 * h * abs(fbar_val) + 4.0 * cell)


def coverage(E: SetMask) -> np.ndarray:
    """Volume fraction of each cell inside ``E`` (see :meth:`SetMask.volume_fraction`)."""
    return E.volume_fraction()


def step_objective(E: SetMask, d: np.ndarray, h: float, fbar_val: float, P: float | None = None) -> float:
    """``P(E) + (1/h) int_E d - fbar |E|`` with sub-cell volume fractions."""
    phi = coverage(E)
    c2 = E.grid.cell ** 2
    if P is None:
        P = perimeter(E)
    return float(P + c2 * np.sum(phi * (d / h - fbar_val)))


def _contour_stats(contours: Sequence[Contour], d_field: ScalarField | None, h: float, fbar_val: float):
    el = 0.0
    disp = 0.0
    diss = 0.0
    for c in contours:
        if d_field is not None:
            dv = d_field.sample(c.vertices)
            disp = max(disp, float(np.max(np.abs(dv))))
        if c.curvature is None:
            continue
        e = c.edge_lengths
        ds = 0.5 * (e + np.roll(e, 1))
        diss += float(np.sum((c.curvature - fbar_val) ** 2 * ds))
        if d_field is not None:
            el = max(el, float(np.max(np.abs(dv / h + c.curvature - fbar_val))))
    return el, disp, diss


def mm_step(E: SetMask, h: float, fbar_val: float, tol: SolverTolerances = SolverTolerances(),
            k: int = 0, t: float = 0.0, state: StepState | None = None, margin: int = 2,
            keep_masks: bool = True) -> tuple[SetMask, StepRecord]:
    """One minimizing-movements step from ``E``.

    Returns the new set and its record.  An empty minimiser is not an error:
    the record has ``vanished=True`` and the returned set is empty.

    Raises
    ------
    EmptySet
        if ``E`` is empty.
    DomainContact
        if ``E`` or the new set comes within ``margin`` cells of the grid edge.
    SolverDiverged
        if the duality gap does not reach ``tol.tol_gap * domain area``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if E.is_empty:
        raise EmptySet("cannot step from the empty set")
    grid = E.grid
    cell = grid.cell
    if E.touches_margin(margin):
        raise DomainContact("set touches the domain margin; enlarge the domain")
    B = clamp_width(h, cell, fbar_val, tol)
    sd = signed_distance(E, band=B + 2 * cell)
    d = sd.values
    g = np.clip(d, -B, B)
    active = np.abs(d) < B
    gap_tol = tol.tol_gap * grid.area / cell
    p0 = state.p if state is not None else None
    if tol.method == "rof":
        res = solve_rof(g, cell / h, active, tol=gap_tol, max_iter=tol.max_iter, check_every=tol.check_every,
                        p0=p0, raise_on_stall=tol.raise_on_stall)
        level = res.x - h * fbar_val
    else:
        w = cell * (g / h - fbar_val)
        res = solve_indicator(w, (d < 0).astype(float), active, tol=gap_tol, max_iter=tol.max_iter,
                              check_every=tol.check_every, p0=p0, raise_on_stall=tol.raise_on_stall)
        level = (0.5 - res.x) * cell
        level = np.where(level == 0.0, -1e-300, level)
    if state is not None:
        state.p = (res.px, res.py)

    inside = level < 0
    vanished = not inside.any()
    if vanished:
        new = SetMask.empty(grid)
        contours_new: list = []
        P_new = 0.0
    else:
        new = SetMask(grid, inside, level)
        if new.touches_margin(margin):
            raise DomainContact("new set touches the domain margin; enlarge the domain")
        contours_new = extract_contours(new, with_curvature=True)
        P_new = perimeter(new, contours_new)

    P_old = perimeter(E)
    obj_before = step_objective(E, d, h, fbar_val, P_old)
    obj_after = step_objective(new, d, h, fbar_val, P_new) if not vanished else 0.0

    el, disp_b, diss_b = _contour_stats(contours_new, sd, h, fbar_val)
    flipped = E.inside != new.inside
    disp_c = float(np.max(np.abs(d[flipped]))) if flipped.any() else 0.0
    phi_old, phi_new = coverage(E), coverage(new)
    c2 = cell * cell
    # signed form: equals the flipped-cell sum for pure masks, and sub-cell jitter cancels
    mm_diss = float(c2 * np.sum((phi_new - phi_old) * d) / h)
    symm = float(c2 * np.sum(np.abs(phi_new - phi_old)))
    n_out = sum(1 for c in contours_new if c.orientation > 0)
    rec = StepRecord(
        k=k, h=h, t=t, fbar=fbar_val,
        objective_before=obj_before, objective_after=obj_after,
        el_residual=el, displacement=max(disp_b, disp_c),
        area=float(new.count * c2), perimeter=P_new,
        mm_dissipation=mm_diss, boundary_dissipation=diss_b, symm_diff=symm,
        gap=res.gap * cell, iterations=res.iterations,
        n_components=n_out, n_holes=len(contours_new) - n_out, vanished=vanished,
        volume=float(c2 * np.sum(phi_new)),
        mask_before=E if keep_masks else None, mask_after=new if keep_masks else None,
    )
    return new, rec


CSV_COLUMNS = ("k", "t", "fbar", "area", "perimeter", "energy", "dissipation", "el_residual", "displacement_sup",
               "objective_drop")


def csv_row(rec: StepRecord, c0: float) -> list:
    energy = rec.perimeter - c0 * rec.area
    vals = (rec.k, rec.t, rec.fbar, rec.area, rec.perimeter, energy, rec.mm_dissipation, rec.el_residual,
            rec.displacement, rec.objective_drop)
    return [str(vals[0])] + [f"{v:.12g}" for v in vals[1:]]


Monitor = Callable[[StepRecord, SetMask, SetMask], None]


def run_flow(E0: SetMask, h: float, forcing: ForcingSpec, T: float, tol: SolverTolerances = SolverTolerances(),
             keep_every: int | None = 1, monitors: Sequence[Monitor] = (), csv_path=None,
             snapshot_every: int | None = None, snapshot_dir=None, margin: int = 2) -> Trajectory:
    """Chain ``ceil(T/h)`` steps from ``E0``.

    ``keep_every`` controls which sets are stored in the trajectory (``None``
    keeps only the first and last).  ``monitors`` are called after each step
    with ``(record, E_k, E_{k+1})`` and see every set regardless.  Extinction
    stops the run early and is flagged on the trajectory.
    """
    if T < h:
        raise ValueError("need T >= h")
    n = int(math.ceil(T / h - 1e-9))
    traj = Trajectory(E0.grid, h, forcing)
    traj.snapshots[0] = E0
    state = StepState()
    writer = fh = None
    if csv_path is not None:
        fh = open(csv_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
    if snapshot_every and snapshot_dir is not None:
        from .io import write_mask

        Path(snapshot_dir).mkdir(parents=True, exist_ok=True)
        write_mask(E0, Path(snapshot_dir) / "mask_00000")
    E = E0
    try:
        for k in range(n):
            fb = fbar(forcing, k, h)
            new, rec = mm_step(E, h, fb, tol, k=k, t=(k + 1) * h, state=state, margin=margin, keep_masks=False)
            keep = rec.vanished or k == n - 1 or (keep_every is not None and (k + 1) % keep_every == 0)
            if keep:
                traj.snapshots[k + 1] = new
            rec = replace(rec, mask_before=traj.snapshots.get(k), mask_after=traj.snapshots.get(k + 1))
            traj.records.append(rec)
            for m in monitors:
                m(rec, E, new)
            if writer is not None:
                writer.writerow(csv_row(rec, forcing.c0))
            if snapshot_every and snapshot_dir is not None and ((k + 1) % snapshot_every == 0 or rec.vanished):
                if not rec.vanished:
                    write_mask(new, Path(snapshot_dir) / f"mask_{k + 1:05d}")
            E = new
            if rec.vanished:
                traj.vanished = True
                traj.vanish_time = rec.t
                break
    finally:
        if fh is not None:
            fh.close()
    return traj
