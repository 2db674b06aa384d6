"""Batch scenarios: configuration, per-scenario checks and JSON verdicts."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import shapes
from .alexandrov import fit_disk_union
from .diagnostics import check_energy_quasimonotone, check_step_minimality, energy
from .errors import FlatFlowError
from .flow import ForcingSpec, Trajectory, run_flow
from .geometry import GridSpec, SetMask, _boundary_field, distance_to_polylines, extract_contours, hausdorff_excess
from .io import read_mask, write_mask
from .solvers import SolverTolerances
from .tracker import theorem3_run, write_curves_csv

SCENARIOS = ("stationary_disks", "tangent_disks_neck", "long_time_forcing", "ellipse_pair", "custom")

_DEFAULTS = {
    "stationary_disks": dict(half_width=3.0, n=512, h=1e-3, T=1.0, forcing=ForcingSpec.constant(1.0),
                             params={"n_disks": 3, "distance": 2.5, "radius": 1.0, "tol_cells": 2.0}),
    "tangent_disks_neck": dict(half_width=641 / 256, n=641, h=1e-3, T=0.3, forcing=ForcingSpec.constant(1.0),
                               params={"radius": 1.0, "sqrt_h_factor": 3.0, "exponent_window": [2.0, 4.0]}),
    "long_time_forcing": dict(half_width=5.0, n=512, h=1e-3, T=2.0,
                              forcing=ForcingSpec("integrable_perturbation", c0=1.0, amplitude=0.5, p=1.0),
                              params={"centers": [[-2.5, 0.0], [2.5, 0.0]], "blob_area": math.pi,
                                      "roughness": 0.2, "samples": 5}),
    "ellipse_pair": dict(half_width=2.5, n=512, h=1e-3, T=20.0, forcing=ForcingSpec.constant(1.0),
                         params={"a": 1.2, "n_vertices": 128, "dt": None, "dt_refine": True}),
    "custom": dict(half_width=2.0, n=256, h=1e-3, T=0.1, forcing=ForcingSpec.constant(1.0),
                   params={"shape": "disk", "shape_args": {"r": 1.0}}),
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a scenario needs; the grid is the square ``[-half_width, half_width]^2`` with ``n`` cells a side."""

    scenario: str
    half_width: float = 2.0
    n: int = 512
    h: float = 1e-3
    T: float = 1.0
    forcing: ForcingSpec = field(default_factory=lambda: ForcingSpec.constant(1.0))
    tol_gap: float = 1e-7
    max_iter: int = 20000
    snapshot_every: int | None = None
    out_dir: str | None = None
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        for name in ("half_width", "h", "T", "tol_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n < 8 or self.max_iter < 1:
            raise ValueError("n must be at least 8 and max_iter positive")
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ValueError("snapshot_every must be positive")
        if self.scenario == "custom" and "shape" not in self.params and "mask" not in self.params:
            raise ValueError("custom scenario needs params.shape or params.mask")

    @classmethod
    def default(cls, scenario: str, **overrides) -> "RunConfig":
        if scenario not in _DEFAULTS:
            raise ValueError(f"unknown scenario {scenario!r}")
        base = dict(_DEFAULTS[scenario])
        params = dict(base.pop("params"))
        params.update(overrides.pop("params", {}) or {})
        base.update(overrides)
        return cls(scenario=scenario, params=params, **base)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        scenario = d.pop("scenario")
        if "forcing" in d and isinstance(d["forcing"], dict):
            d["forcing"] = ForcingSpec.from_dict(d["forcing"])
        return cls.default(scenario, **d)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["forcing"] = self.forcing.to_dict()
        return d

    @property
    def grid(self) -> GridSpec:
        return GridSpec.square(self.half_width, self.n)

    @property
    def tolerances(self) -> SolverTolerances:
        return SolverTolerances(tol_gap=self.tol_gap, max_iter=self.max_iter)


def _check(name: str, margin: float, passed: bool | None = None, **info) -> dict:
    margin = float(margin)
    ok = bool(margin >= 0) if passed is None else bool(passed)
    out = {"name": name, "margin": margin if np.isfinite(margin) else str(margin), "pass": ok}
    out.update({k: _plain(v) for k, v in info.items()})
    return out


def _plain(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def verdict(scenario: str, checks: Sequence[dict], **extra) -> dict:
    out = {"scenario": scenario, "pass": bool(checks) and all(c["pass"] for c in checks), "checks": list(checks)}
    out.update({k: _plain(v) for k, v in extra.items()})
    return out


# ---------------------------------------------------------------- initial data

def stationary_centers(n_disks: int, distance: float) -> np.ndarray:
    """Vertices of a regular polygon with side ``distance`` (a pair for ``n_disks = 2``)."""
    if n_disks == 1:
        return np.zeros((1, 2))
    R = distance / (2 * math.sin(math.pi / n_disks))
    ang = math.pi / 2 + 2 * math.pi * np.arange(n_disks) / n_disks
    return np.column_stack([R * np.cos(ang), R * np.sin(ang)])


def initial_set(cfg: RunConfig) -> SetMask:
    g, p = cfg.grid, cfg.params
    if cfg.scenario == "stationary_disks":
        return shapes.disk_union(g, stationary_centers(p["n_disks"], p["distance"]), p["radius"])
    if cfg.scenario == "tangent_disks_neck":
        r = p["radius"]
        return shapes.disk_union(g, [(-r, 0.0), (r, 0.0)], r)
    if cfg.scenario == "long_time_forcing":
        rng = np.random.default_rng(cfg.seed)
        r = math.sqrt(p["blob_area"] / math.pi)
        sets = [shapes.random_blob(g, rng, center=c, r=r, roughness=p["roughness"]) for c in p["centers"]]
        sets = [_rescale_area(g, S, p["blob_area"]) for S in sets]
        level = np.minimum.reduce([S.level for S in sets])
        return SetMask.from_level(g, level)
    if cfg.scenario == "custom":
        if "mask" in p:
            return read_mask(p["mask"])
        return getattr(shapes, p["shape"])(g, **p.get("shape_args", {}))
    raise ValueError(f"scenario {cfg.scenario!r} has no grid initial set")


def _rescale_area(grid: GridSpec, S: SetMask, target: float) -> SetMask:
    """Shift a blob's level by a constant so its sub-cell area matches ``target`` (bisection on the offset)."""
    lo, hi = -0.5, 0.5
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        A = SetMask.from_level(grid, S.level + mid).volume_fraction().sum() * grid.cell ** 2
        lo, hi = (mid, hi) if A > target else (lo, mid)
    return SetMask.from_level(grid, S.level + 0.5 * (lo + hi))


# ---------------------------------------------------------------- neck metrics

@dataclass(frozen=True)
class NeckMetrics:
    t: float
    grown_area: float
    inscribed_radius_at_origin: float
    component_count: int
    simply_connected: bool


def neck_metric(E: SetMask, E0: SetMask, t: float) -> NeckMetrics:
    """Metrics of one set against the tangent-disk datum ``E0``."""
    cell = E.grid.cell
    grown = float(np.clip(E.volume_fraction() - E0.volume_fraction(), 0.0, None).sum()) * cell ** 2
    if E.is_empty:
        return NeckMetrics(t, grown, 0.0, 0, True)
    origin = np.zeros((1, 2))
    field0 = _boundary_field(E)
    coords = E.grid.index_coords(origin).reshape(2, -1)
    inside = ndimage.map_coordinates(field0, coords, order=1)[0] < 0
    r_in = float(distance_to_polylines(E.boundary_polylines(), origin)[0]) if inside else 0.0
    contours = extract_contours(E, with_curvature=False)
    outer = sum(1 for c in contours if c.orientation > 0)
    holes = len(contours) - outer
    return NeckMetrics(t, grown, r_in, outer, holes == 0)


def neck_metrics(traj: Trajectory, E0: SetMask | None = None) -> list[NeckMetrics]:
    """Metrics at every stored snapshot of a tangent-disk run."""
    E0 = traj.initial if E0 is None else E0
    return [neck_metric(traj.snapshots[k], E0, k * traj.h) for k in sorted(traj.snapshots)]


def growth_exponent(t: np.ndarray, area: np.ndarray, t_min: float) -> float:
    """Least-squares slope of ``log area`` against ``log t`` over ``t >= t_min`` where ``area > 0``."""
    t, area = np.asarray(t), np.asarray(area)
    sel = (t >= t_min) & (area > 0)
    if sel.sum() < 3:
        return float("nan")
    return float(np.polyfit(np.log(t[sel]), np.log(area[sel]), 1)[0])


def neck_checks(rows: Sequence[NeckMetrics], cell: float, h: float, t_max: float, sqrt_h_factor: float = 3.0,
                exponent_window=(2.0, 4.0)) -> tuple[list[dict], float]:
    t = np.array([m.t for m in rows])
    grown = np.array([m.grown_area for m in rows])
    resolved = t >= 10 * cell
    later = t > 0
    checks = [_check("grown_area_positive", grown[later].min() / cell ** 2 if later.any() else -1.0,
                     bool(later.any()) and bool(np.all(grown[later] > 0)), units="cells")]
    comp = np.array([m.component_count for m in rows])[resolved]
    simple = np.array([m.simply_connected for m in rows])[resolved]
    checks.append(_check("single_component", float(-np.max(np.abs(comp - 1))) if len(comp) else -1.0,
                         bool(len(comp)) and bool(np.all(comp == 1))))
    checks.append(_check("simply_connected", float(np.sum(simple) - len(simple)) if len(simple) else -1.0,
                         bool(len(simple)) and bool(np.all(simple))))
    win = resolved & (t <= t_max + 1e-12)
    r_in = np.array([m.inscribed_radius_at_origin for m in rows])
    need = t - 2 * cell - sqrt_h_factor * math.sqrt(h)
    margin = float(np.min(r_in[win] - need[win])) if win.any() else -1.0
    checks.append(_check("inscribed_radius", margin, units="length"))
    p = growth_exponent(t, grown, 10 * cell)
    lo, hi = exponent_window
    checks.append(_check("growth_exponent", min(p - lo, hi - p) if np.isfinite(p) else -np.inf, exponent=p,
                         window=[lo, hi]))
    return checks, p


# ---------------------------------------------------------------- long-time report

def long_time_report(traj: Trajectory, c0: float, samples: int = 5, tail_fraction: float = 0.25,
                     energy_tol: float = 0.02) -> dict:
    """Disk-union fits over the last ``tail_fraction`` of the run.

    Checks: ``N`` constant over the tail, fitted radius (mean ``L_i / 2 pi``)
    within 3% of ``1/c0`` at the end, ``sup_excess`` non-increasing over the
    tail (least-squares slope), pairwise centre distance at least
    ``2/c0 - 2 cells``, and energy within ``energy_tol`` of ``pi N / c0``.
    """
    cell = traj.grid.cell
    keys = sorted(traj.snapshots)
    t_end = keys[-1] * traj.h
    tail = [k for k in keys if k * traj.h >= (1 - tail_fraction) * t_end and not traj.snapshots[k].is_empty]
    if len(tail) > samples:
        tail = [tail[i] for i in np.linspace(0, len(tail) - 1, samples).round().astype(int)]
    fits = []
    for k in tail:
        rep = fit_disk_union(traj.snapshots[k], c0, radius_mode="length")
        fits.append((k * traj.h, rep))
    if not fits:
        return verdict("long_time_forcing", [_check("nonempty_tail", -1.0)], extinct=traj.vanished)
    Ns = [r.N for _, r in fits]
    final = fits[-1][1]
    radius = final.disks.radius
    checks = [_check("component_count_stable", -float(max(Ns) - min(Ns)), N=final.N, N_series=Ns)]
    checks.append(_check("radius", 0.03 - abs(radius * c0 - 1.0), radius=radius, target=1.0 / c0))
    ts = np.array([t for t, _ in fits])
    ex = np.array([r.sup_excess / c0 for _, r in fits])
    slope = float(np.polyfit(ts, ex, 1)[0]) if len(ts) > 1 else 0.0
    checks.append(_check("sup_excess_decreasing", -slope * (ts[-1] - ts[0]) / cell, excess_cells=ex / cell))
    dmin = final.disks.min_center_distance() if final.N > 1 else np.inf
    checks.append(_check("center_separation", (dmin - (2.0 / c0 - 2 * cell)) / cell, min_distance=dmin))
    E_final = traj.snapshots[keys[-1]]
    en = energy(E_final, c0) if not E_final.is_empty else 0.0
    target = math.pi * final.N / c0
    checks.append(_check("energy_near_pi_N", energy_tol - abs(en - target) / target, energy=en, target=target))
    return verdict("long_time_forcing", checks, extinct=traj.vanished, vanish_time=traj.vanish_time,
                   fits=[{"t": t, **{k: _plain(v) for k, v in r.to_dict().items()}} for t, r in fits])


# ---------------------------------------------------------------- scenarios

def _flow(cfg: RunConfig, E0: SetMask, monitors=(), keep_every=None, out: Path | None = None) -> Trajectory:
    snap_dir = out / "snapshots" if (out is not None and cfg.snapshot_every) else None
    return run_flow(E0, cfg.h, cfg.forcing, cfg.T, cfg.tolerances, keep_every=keep_every, monitors=monitors,
                    csv_path=(out / "series.csv") if out is not None else None,
                    snapshot_every=cfg.snapshot_every, snapshot_dir=snap_dir)


def _energy_checks(traj: Trajectory, c0: float) -> list[dict]:
    rep = check_energy_quasimonotone(traj, c0)
    mini = check_step_minimality(traj)
    return [_check("energy_quasimonotone", rep.margin, rep.passed, worst_step=rep.worst_step,
                   violations=len(rep.details)),
            _check("step_minimality", mini.margin, mini.passed, worst_step=mini.worst_step,
                   violations=len(mini.details))]


def _run_stationary(cfg: RunConfig, out: Path | None) -> dict:
    E0 = initial_set(cfg)
    cell = cfg.grid.cell
    excess = []

    def monitor(rec, E, new):
        excess.append(0.0 if new.is_empty else hausdorff_excess(new, E0) / cell)

    traj = _flow(cfg, E0, [monitor], keep_every=None, out=out)
    worst = max(excess) if excess else 0.0
    tol = cfg.params.get("tol_cells", 2.0)
    checks = [_check("max_hausdorff_excess", tol - worst, max_excess_cells=worst, tol_cells=tol)]
    checks += _energy_checks(traj, cfg.forcing.c0)
    if out is not None:
        np.savetxt(out / "excess.csv", np.column_stack([traj.times(), excess]), delimiter=",",
                   header="t,hausdorff_excess_cells", comments="")
    return verdict(cfg.scenario, checks, steps=traj.n_steps, vanished=traj.vanished)


def _run_neck(cfg: RunConfig, out: Path | None) -> dict:
    E0 = initial_set(cfg)
    rows = [neck_metric(E0, E0, 0.0)]

    def monitor(rec, E, new):
        rows.append(neck_metric(new, E0, rec.t))

    traj = _flow(cfg, E0, [monitor], keep_every=None, out=out)
    p = cfg.params
    checks, expo = neck_checks(rows, cfg.grid.cell, cfg.h, cfg.T, p.get("sqrt_h_factor", 3.0),
                               tuple(p.get("exponent_window", (2.0, 4.0))))
    if out is not None:
        with open(out / "neck.csv", "w") as fh:
            fh.write("t,grown_area,inscribed_radius_at_origin,component_count,simply_connected\n")
            for m in rows:
                fh.write(f"{m.t:.10g},{m.grown_area:.10g},{m.inscribed_radius_at_origin:.10g},"
                         f"{m.component_count},{int(m.simply_connected)}\n")
    return verdict(cfg.scenario, checks, growth_exponent=expo, steps=traj.n_steps,
                   note="the t^3 lower bound has an unknown constant; the check is a fitted exponent window")


def _run_long_time(cfg: RunConfig, out: Path | None) -> dict:
    E0 = initial_set(cfg)
    n_steps = int(math.ceil(cfg.T / cfg.h - 1e-9))
    keep = max(n_steps // 40, 1)
    traj = _flow(cfg, E0, keep_every=keep, out=out)
    rep = long_time_report(traj, cfg.forcing.c0, cfg.params.get("samples", 5))
    rep["checks"] += _energy_checks(traj, cfg.forcing.c0)
    rep["pass"] = all(c["pass"] for c in rep["checks"])
    rep["steps"] = traj.n_steps
    return rep


def _run_ellipse_pair(cfg: RunConfig, out: Path | None) -> dict:
    p = cfg.params
    res = theorem3_run(p["a"], cfg.T, dt=p.get("dt"), n=p.get("n_vertices", 128))
    checks = tracker_checks(res)
    extra = {"dt": res.dt, "final_distance": res.final_distance, "min_gap": res.min_gap,
             "area_drift": res.area_drift}
    if p.get("dt_refine", True):
        fine = theorem3_run(p["a"], cfg.T, dt=res.dt / 2, n=p.get("n_vertices", 128))
        checks += [dict(c, name=c["name"] + "_dt_half") for c in tracker_checks(fine)]
        extra["final_distance_dt_half"] = fine.final_distance
        if out is not None:
            fine.write_metrics_csv(out / "metrics_dt_half.csv")
    if out is not None:
        res.write_metrics_csv(out / "metrics.csv")
        write_curves_csv(res.final, out / "curves.csv")
    return verdict(cfg.scenario, checks, **extra)


def tracker_checks(res) -> list[dict]:
    """Pass/fail lines for an ellipse-pair tracker run."""
    checks = [_check("no_intersection", 0.0 if not res.intersected else -1.0, message=res.message),
              _check("never_crosses_axis", res.min_gap / res.rho, min_gap=res.min_gap),
              _check("final_distance", 1e-2 - res.final_distance / res.rho, distance=res.final_distance),
              _check("area_drift", 5e-3 - res.area_drift, drift=res.area_drift)]
    tail = res.tail
    if tail is None:
        checks.append(_check("log_distance_affine", -1.0))
    else:
        checks.append(_check("log_distance_affine", min(tail.r2 - 0.95, -tail.slope), slope=tail.slope,
                             r2=tail.r2, window=[tail.t_start, tail.t_end]))
    return checks


def _run_custom(cfg: RunConfig, out: Path | None) -> dict:
    E0 = initial_set(cfg)
    traj = _flow(cfg, E0, keep_every=None, out=out)
    return verdict(cfg.scenario, _energy_checks(traj, cfg.forcing.c0), steps=traj.n_steps, vanished=traj.vanished,
                   vanish_time=traj.vanish_time)


_RUNNERS = {
    "stationary_disks": _run_stationary,
    "tangent_disks_neck": _run_neck,
    "long_time_forcing": _run_long_time,
    "ellipse_pair": _run_ellipse_pair,
    "custom": _run_custom,
}


def run_scenario(cfg: RunConfig, out_dir=None) -> dict:
    """Run one scenario, write its artifacts and ``verdict.json``, and return the verdict.

    Engine errors are caught and reported as a failed ``completed`` check.
    """
    out = out_dir if out_dir is not None else cfg.out_dir
    out = Path(out) if out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
        if cfg.scenario != "ellipse_pair":
            write_mask(initial_set(cfg), out / "initial")
    t0 = time.perf_counter()
    try:
        v = _RUNNERS[cfg.scenario](cfg, out)
    except FlatFlowError as exc:
        v = verdict(cfg.scenario, [_check("completed", -1.0, error=f"{type(exc).__name__}: {exc}")])
    v["runtime_s"] = time.perf_counter() - t0
    if out is not None:
        (out / "verdict.json").write_text(json.dumps(v, indent=2))
    return v
