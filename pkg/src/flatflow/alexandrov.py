"""Curvature profiles, turning angles and disk-union fits of planar sets.

A set whose boundary curvature is close to a constant ``c0`` in L1 is close
to a union of disks of radius ``1/c0``.  This module measures both sides of
that statement on grid sets: the curvature deviation norms of the extracted
contours and the distance of the set to the fitted disk union.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from shapely.geometry import Point, Polygon

from .errors import DegenerateContour, EmptySet, OpenContour
from .geometry import (Contour, SetMask, extract_contours, hausdorff_excess, perimeter)
from .shapes import disk_union

#: Estimator floors below which deviations are indistinguishable from
#: discretisation noise (dimensionless, after rescaling to unit radius).
L1_FLOOR = 0.05
EXCESS_FLOOR_CELLS = 2.0


def _circle_curvature(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    ab, bc, ca = b - a, c - b, a - c
    cross = ab[:, 0] * bc[:, 1] - ab[:, 1] * bc[:, 0]
    den = np.hypot(*ab.T) * np.hypot(*bc.T) * np.hypot(*ca.T)
    return 2.0 * cross / den


def curvature_profile(contour: Contour, window: float | None = None) -> Contour:
    """Per-vertex curvature from the circle through ``gamma(s - w)``, ``gamma(s)``, ``gamma(s + w)``.

    The window defaults to ``max(3 cell, L / 64)`` and is capped at a quarter
    of the curve length.  Curvature is positive where the enclosed set is
    locally convex (left turns of a counterclockwise curve).
    """
    n = len(contour)
    if n < 8:
        raise DegenerateContour(f"curvature needs at least 8 vertices, got {n}")
    L = contour.length
    s = contour.arclength
    cell = contour.cell if contour.cell is not None else L / n
    w = window if window is not None else max(3.0 * cell, L / 64.0)
    w = min(w, L / 4.0)
    v = contour.vertices
    s_ext = np.concatenate([s - L, s, s + L])
    x_ext = np.tile(v[:, 0], 3)
    y_ext = np.tile(v[:, 1], 3)

    def at(q):
        return np.column_stack([np.interp(q, s_ext, x_ext), np.interp(q, s_ext, y_ext)])

    a, c = at(s - w), at(s + w)
    if np.any(np.hypot(*(c - a).T) < 1e-12 * max(L, 1.0)):
        raise DegenerateContour("collinear or collapsed curvature window")
    return contour.with_curvature(_circle_curvature(a, v, c))


def turning_angle(contour: Contour) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative turning ``theta(s) = int_0^s k`` by the trapezoid rule.

    Returns arrays of length ``n + 1``: the vertex arclengths followed by the
    closing point ``s = L``, so ``theta[-1]`` is the total turning.
    """
    if contour.curvature is None:
        raise ValueError("contour carries no curvature; run curvature_profile first")
    if len(contour) < 3:
        raise OpenContour("a closed contour needs at least three vertices")
    k = contour.curvature
    e = contour.edge_lengths
    k_next = np.roll(k, -1)
    theta = np.concatenate([[0.0], np.cumsum(0.5 * (k + k_next) * e)])
    s = np.concatenate([contour.arclength, [contour.length]])
    return s, theta


def curvature_deviation(contours, c0: float, exclude: list[np.ndarray] | None = None) -> tuple[float, float]:
    """L1 and L2 norms of ``k - c0`` after rescaling lengths by ``c0``.

    With ``s' = c0 s`` and ``k' = k / c0`` the norms become
    ``int |k - c0| ds`` and ``(int (k - c0)^2 ds / c0)^(1/2)``.  ``exclude``
    holds optional per-contour boolean masks of vertices to skip.
    """
    l1 = l2 = 0.0
    for i, c in enumerate(contours):
        if c.curvature is None:
            continue
        e = c.edge_lengths
        ds = 0.5 * (e + np.roll(e, 1))
        dev = c.curvature - c0
        keep = np.ones(len(c), bool) if exclude is None else ~exclude[i]
        l1 += float(np.sum(np.abs(dev[keep]) * ds[keep]))
        l2 += float(np.sum(dev[keep] ** 2 * ds[keep]))
    return l1, float(np.sqrt(l2 / c0))


@dataclass(frozen=True)
class DiskUnion:
    """Centers ``x_i`` and a common radius; overlap beyond ``tol`` is reported by :meth:`overlaps`."""

    centers: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.array(self.centers, float).reshape(-1, 2)
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def N(self) -> int:
        return len(self.centers)

    def pair_distances(self) -> np.ndarray:
        c = self.centers
        i, j = np.triu_indices(len(c), 1)
        return np.hypot(*(c[i] - c[j]).T)

    def min_center_distance(self) -> float:
        d = self.pair_distances()
        return float(d.min()) if d.size else np.inf

    def overlaps(self, tol: float) -> bool:
        """True when some pair is closer than ``2 r - tol``."""
        return self.min_center_distance() < 2 * self.radius - tol

    def contacts(self, tol: float) -> list[tuple[int, int]]:
        """Pairs whose disks are within ``tol`` of touching."""
        c = self.centers
        out = []
        for i in range(len(c)):
            for j in range(i + 1, len(c)):
                if np.hypot(*(c[i] - c[j])) < 2 * self.radius + tol:
                    out.append((i, j))
        return out

    def mask(self, grid) -> SetMask:
        return disk_union(grid, [tuple(x) for x in self.centers], self.radius)

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "radius": self.radius}


@dataclass(frozen=True)
class AlexandrovReport:
    """Both sides of the quantitative Alexandrov inequalities for one set.

    Deviations use lengths rescaled by ``c0`` (target radius one);
    ``sup_excess`` and ``perimeter_gap`` are rescaled the same way.
    """

    N: int
    disks: DiskUnion
    c0: float
    l1_dev: float
    l2_dev: float
    sup_excess: float
    perimeter_gap: float
    perimeter_gap_signed: float
    cell: float
    l1_dev_away: float = 0.0
    holes: int = 0
    contacts: tuple = ()
    pinches: int = 0
    flags: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("N", "c0", "l1_dev", "l2_dev", "sup_excess", "perimeter_gap",
                                             "perimeter_gap_signed", "cell", "l1_dev_away", "holes", "pinches")}
        d["disks"] = self.disks.to_dict()
        d["contacts"] = [list(p) for p in self.contacts]
        d["flags"] = list(self.flags)
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _split_pinches(c: Contour, tol: float, min_sep: float) -> tuple[list[Contour], list[np.ndarray]]:
    """Split a contour where it nearly touches itself.

    Two vertices closer than ``tol`` whose arclength separation (both ways
    round) exceeds ``min_sep`` mark a pinch; the contour is cut along the
    closest such pair and both halves are processed recursively.  Returns
    the pieces and the pinch points found.
    """
    v = c.vertices
    if len(v) < 16:
        return [c], []
    s = c.arclength
    L = c.length
    pairs = cKDTree(v).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return [c], []
    gap = np.abs(s[pairs[:, 0]] - s[pairs[:, 1]])
    gap = np.minimum(gap, L - gap)
    pairs = pairs[gap > min_sep]
    if len(pairs) == 0:
        return [c], []
    d = np.hypot(*(v[pairs[:, 0]] - v[pairs[:, 1]]).T)
    i, j = sorted(pairs[np.argmin(d)])
    pinch = 0.5 * (v[i] + v[j])
    parts = [v[i:j + 1], np.concatenate([v[j:], v[:i + 1]])]
    pieces, points = [], [pinch]
    for p in parts:
        if len(p) < 8:
            continue
        sub, pts = _split_pinches(Contour(p, cell=c.cell), tol, min_sep)
        pieces += sub
        points += pts
    return pieces, points


def fit_disk_union(E: SetMask, c0: float, radius_mode: str = "fixed", split_pinches: bool = True,
                   pinch_factor: float = 3.0) -> AlexandrovReport:
    """Fit one disk per outer boundary component of ``E``.

    Centers are the arclength centroids of the outer contours.  The radius is
    ``1/c0`` (``radius_mode="fixed"``) or the mean ``L_i / 2 pi``
    (``radius_mode="length"``).  Outer contours that pinch are split there,
    so touching disks count separately and the pinch is reported.  Two disks
    of radius ``r`` whose gap is below one cell merge on the grid through a
    neck of height about ``2 sqrt(cell r)``, so a pinch is a pair of boundary
    points closer than ``pinch_factor * sqrt(cell / c0)`` that lie far apart
    along the curve.
    """
    if E.is_empty:
        raise EmptySet("cannot fit disks to an empty set")
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    cell = E.grid.cell
    contours = extract_contours(E, with_curvature=True)
    outer = [c for c in contours if c.orientation > 0]
    holes = [c for c in contours if c.orientation < 0]
    flags = []

    pieces, pinch_pts = [], []
    for c in outer:
        if split_pinches:
            sub, pts = _split_pinches(c, pinch_factor * np.sqrt(cell / c0),
                                     min_sep=1.0 / c0 + 10 * cell)
        else:
            sub, pts = [c], []
        pieces += sub
        pinch_pts += pts
    if not pieces:
        raise EmptySet("no outer boundary component")

    centers = np.array([p.centroid for p in pieces])
    if radius_mode == "fixed":
        r = 1.0 / c0
    elif radius_mode == "length":
        r = float(np.mean([p.length for p in pieces])) / (2 * np.pi)
    else:
        raise ValueError(f"unknown radius_mode {radius_mode!r}")
    disks = DiskUnion(centers, r)

    n_holes = 0
    if holes:
        polys = [Polygon(c.vertices) for c in outer]
        for h in holes:
            p = Point(h.vertices[0])
            if any(poly.contains(p) for poly in polys):
                n_holes += 1
        if n_holes:
            flags.append("holes")

    l1, l2 = curvature_deviation(contours, c0)
    l1_away = l1
    if pinch_pts:
        flags.append("pinched")
        pts = np.array(pinch_pts)
        radius = 6 * cell + 2 * max(3 * cell, max(c.length for c in contours) / 64)
        excl = [np.min(np.hypot(*(c.vertices[:, None, :] - pts[None]).transpose(2, 0, 1)), axis=1) < radius
                for c in contours]
        l1_away, _ = curvature_deviation(contours, c0, excl)

    contact_tol = 2 * cell
    contacts = tuple(disks.contacts(contact_tol))
    if contacts:
        flags.append("contact")
    if disks.overlaps(contact_tol):
        flags.append("overlap")

    F = disks.mask(E.grid)
    excess = hausdorff_excess(E, F) if not F.is_full else np.inf
    # pinched pieces are closed by a chord across the neck, so each counts as one disk boundary
    P = perimeter(E, contours) + sum(p.length for p in pieces) - sum(c.length for c in outer)
    gap_signed = P - 2 * np.pi * len(pieces) / c0
    return AlexandrovReport(
        N=len(pieces), disks=disks, c0=c0,
        l1_dev=l1, l2_dev=l2,
        sup_excess=float(excess) * c0,
        perimeter_gap=abs(gap_signed) * c0,
        perimeter_gap_signed=gap_signed * c0,
        cell=cell, l1_dev_away=l1_away, holes=n_holes, contacts=contacts,
        pinches=len(pinch_pts), flags=tuple(flags),
    )


@dataclass(frozen=True)
class AlexandrovMargins:
    ratio_excess: float
    ratio_perimeter: float
    below_floor: bool


def alexandrov_margins(report: AlexandrovReport, l1_floor: float = L1_FLOOR) -> AlexandrovMargins:
    """Empirical constants ``sup_excess / l1_dev`` and ``perimeter_gap / l1_dev``.

    When ``l1_dev`` is below the estimator floor the ratios are meaningless;
    both are returned as infinity with ``below_floor`` set.
    """
    if report.l1_dev <= l1_floor * max(report.N, 1):
        return AlexandrovMargins(np.inf, np.inf, True)
    return AlexandrovMargins(report.sup_excess / report.l1_dev, report.perimeter_gap / report.l1_dev, False)


def write_profile_csv(contours, path) -> None:
    """Dump ``(component, s, k, theta)`` rows for every contour carrying curvature."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "s", "k", "theta"])
        for i, c in enumerate(contours):
            if c.curvature is None:
                continue
            s, th = turning_angle(c)
            for sj, kj, tj in zip(s[:-1], c.curvature, th[:-1]):
                w.writerow([i, f"{sj:.10g}", f"{kj:.10g}", f"{tj:.10g}"])
