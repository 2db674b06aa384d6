"""Command-line entry point: ``flatflow {simulate,analyze,symmetrize,oracle,track}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path


from .alexandrov import alexandrov_margins, fit_disk_union, write_profile_csv
from .errors import FlatFlowError
from .experiments import SCENARIOS, RunConfig, _check, run_scenario, tracker_checks, verdict
from .flow import ForcingSpec
from .geometry import extract_contours, hausdorff_excess, perimeter
from .io import read_mask, write_mask
from .oracles import disk_trajectory, extinction_time
from .symmetrization import bonnesen_symmetrize, polar_profile
from .tracker import theorem3_run, write_curves_csv


def _load_config(args) -> dict:
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    if getattr(args, "scenario", None):
        d["scenario"] = args.scenario
    if args.snapshots is not None:
        d["snapshot_every"] = args.snapshots
    return d


def _finish(v: dict, out: Path | None) -> int:
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "verdict.json").write_text(json.dumps(v, indent=2))
    print(json.dumps({"scenario": v["scenario"], "pass": v["pass"],
                      "checks": [{k: c[k] for k in ("name", "margin", "pass")} for c in v["checks"]]}, indent=2))
    return 0 if v["pass"] else 1


def cmd_simulate(args) -> int:
    d = _load_config(args)
    if "scenario" not in d:
        raise SystemExit("simulate needs --scenario or a config with a scenario field")
    cfg = RunConfig.from_dict(d)
    out = Path(args.out) if args.out else (Path(cfg.out_dir) if cfg.out_dir else None)
    v = run_scenario(cfg, out)
    return _finish(v, None)


def cmd_analyze(args) -> int:
    """Disk-union fit of a stored mask against target curvature ``c0``."""
    E = read_mask(args.mask)
    rep = fit_disk_union(E, args.c0, radius_mode=args.radius_mode)
    m = alexandrov_margins(rep)
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        rep.to_json(out / "alexandrov.json")
        write_profile_csv(extract_contours(E), out / "profile.csv")
    if m.below_floor:
        checks = [_check("below_estimator_floor", 0.0, l1_dev=rep.l1_dev)]
    else:
        checks = [_check("alexandrov_sup", args.C - m.ratio_excess, ratio=m.ratio_excess),
                  _check("alexandrov_perimeter", args.C - m.ratio_perimeter, ratio=m.ratio_perimeter)]
    return _finish(verdict("analyze", checks, N=rep.N, l1_dev=rep.l1_dev, sup_excess=rep.sup_excess,
                           perimeter_gap=rep.perimeter_gap, disks=rep.disks.to_dict()), out)


def cmd_symmetrize(args) -> int:
    """Bonnesen symmetral of a stored mask about the vertical axis through the origin."""
    E = read_mask(args.mask)
    prof = polar_profile(E, args.nr, args.ntheta)
    Es = bonnesen_symmetrize(E, args.nr, args.ntheta)
    Ess = bonnesen_symmetrize(Es, args.nr, args.ntheta)
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_mask(Es, out / "symmetral")
        prof.to_csv(out / "polar_profile.csv")
    cell = E.grid.cell
    A0, A1 = prof.area, polar_profile(Es, args.nr, args.ntheta).area
    idem = max(hausdorff_excess(Ess, Es), hausdorff_excess(Es, Ess)) / cell
    checks = [_check("area_preserved", 0.02 - abs(A1 - A0) / A0, area_before=A0, area_after=A1),
              _check("idempotent", 1.0 - idem, hausdorff_cells=idem)]
    return _finish(verdict("symmetrize", checks, perimeter_before=perimeter(E), perimeter_after=perimeter(Es)), out)


def cmd_oracle(args) -> int:
    """Print the exact disk trajectory as CSV ``t,r``."""
    forcing = ForcingSpec.from_dict(json.loads(args.forcing)) if args.forcing else ForcingSpec.constant(args.f)
    states = disk_trajectory(args.r0, args.h, forcing, args.T, rule=args.rule)
    w = csv.writer(sys.stdout)
    w.writerow(["t", "r"])
    for k, s in enumerate(states):
        w.writerow([f"{k * args.h:.10g}", f"{s.r:.12g}"])
    te = extinction_time(states, args.h)
    if te is not None:
        print(f"# extinct at t={te:.10g}", file=sys.stderr)
    return 0


def cmd_track(args) -> int:
    """Front-tracker run of the ellipse pair."""
    d = _load_config(args)
    p = d.get("params", {})
    a = float(args.a if args.a is not None else p.get("a", 1.2))
    T = float(args.T if args.T is not None else d.get("T", 20.0))
    n = int(p.get("n_vertices", 128))
    res = theorem3_run(a, T, dt=args.dt if args.dt is not None else p.get("dt"), n=n)
    checks = tracker_checks(res)
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        res.write_metrics_csv(out / "metrics.csv")
        write_curves_csv(res.final, out / "curves.csv")
    return _finish(verdict("ellipse_pair", checks, a=a, rho=res.rho, dt=res.dt, final_distance=res.final_distance,
                           area_drift=res.area_drift), out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flatflow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--snapshots", type=int, default=None, metavar="M", help="write a mask every M steps")

    s = sub.add_parser("simulate", help="run a scenario and write its verdict")
    common(s)
    s.add_argument("--scenario", choices=SCENARIOS)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", help="disk-union fit of a stored mask")
    common(s)
    s.add_argument("mask", help="mask stem (PGM + JSON sidecar)")
    s.add_argument("--c0", type=float, default=1.0)
    s.add_argument("--radius-mode", choices=("fixed", "length"), default="fixed")
    s.add_argument("--C", type=float, default=10.0, help="bound on both Alexandrov ratios")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("symmetrize", help="Bonnesen symmetral of a stored mask")
    common(s)
    s.add_argument("mask", help="mask stem (PGM + JSON sidecar)")
    s.add_argument("--nr", type=int, default=None)
    s.add_argument("--ntheta", type=int, default=None)
    s.set_defaults(func=cmd_symmetrize)

    s = sub.add_parser("oracle", help="exact disk radii as CSV t,r")
    s.add_argument("--r0", type=float, default=1.0)
    s.add_argument("--h", type=float, default=1e-3)
    s.add_argument("--f", type=float, default=0.0, help="constant forcing")
    s.add_argument("--forcing", help="ForcingSpec as JSON (overrides --f)")
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--rule", choices=("discriminant", "global"), default="discriminant")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("track", help="front-tracker run of the ellipse pair")
    common(s)
    s.add_argument("--a", type=float, default=None)
    s.add_argument("--T", type=float, default=None)
    s.add_argument("--dt", type=float, default=None)
    s.set_defaults(func=cmd_track)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FlatFlowError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
