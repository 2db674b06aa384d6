"""Bonnesen circular symmetrization about the vertical axis.

On every circle ``|x| = r`` the set's angular measure ``alpha(r)`` is
redistributed into two arcs of length ``r alpha / 2`` centred on the
directions ``+-pi/2``.  The symmetrization centre is always the origin;
callers translate their sets first.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import DomainContact, NotCentered, NotInvariant
from .geometry import (SetMask, _boundary_field, _mask_signed_distance, distance_to_polylines, hausdorff_excess,
                       perimeter, signed_distance)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class PolarLayerMap:
    """Angular measure ``alpha_j`` of the set on circles of radius ``r_j`` (bin centres)."""

    radii: np.ndarray
    angular_measure: np.ndarray
    dr: float

    def __post_init__(self):
        if len(self.radii) != len(self.angular_measure):
            raise ValueError("radii and angular_measure differ in length")
        if np.any(np.diff(self.radii) <= 0):
            raise ValueError("radii must be increasing")

    @property
    def area(self) -> float:
        """``sum alpha_j r_j dr``."""
        return float(np.sum(self.angular_measure * self.radii) * self.dr)

    def alpha_at(self, r) -> np.ndarray:
        """Piecewise-linear ``alpha(r)``; constant below the first bin, zero past the last."""
        return np.interp(r, self.radii, self.angular_measure, right=0.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "alpha"])
            for r, a in zip(self.radii, self.angular_measure):
                w.writerow([f"{r:.10g}", f"{a:.10g}"])


def default_resolution(E: SetMask) -> tuple[int, int]:
    n = max(E.grid.nx, E.grid.ny)
    return 2 * n, 4 * n


def _polar_extent(E: SetMask) -> float:
    """Outer lattice radius: the farthest inside cell plus two cells, checked against the grid."""
    g = E.grid
    if E.touches_margin():
        raise DomainContact("set touches the grid margin")
    X, Y = g.centers()
    r_set = float(np.hypot(X[E.inside], Y[E.inside]).max()) + 2 * g.cell
    x0, y0 = g.origin
    room = min(-x0, x0 + g.width, -y0, y0 + g.height)
    if r_set > room:
        raise NotCentered(
            f"circles about the origin up to r={r_set:.4g} leave the grid (room {room:.4g}); translate the set")
    return r_set


def polar_profile(E: SetMask, nr: int | None = None, ntheta: int | None = None) -> PolarLayerMap:
    """Angular measure of ``E`` on ``nr`` circles about the origin, each sampled at ``ntheta`` angles.

    The boundary field (the level, or the signed distance for a pure mask)
    is sampled bilinearly on the polar lattice; each angular interval counts
    the part where the linear interpolant between its two samples is
    negative, so ``alpha_j`` is the inside count refined by the sub-sample
    zero crossings.
    """
    if E.is_empty:
        raise NotCentered("empty set has no polar profile")
    d_nr, d_nt = default_resolution(E)
    nr = nr or d_nr
    ntheta = ntheta or d_nt
    r_max = _polar_extent(E)
    dr = r_max / nr
    r = (np.arange(nr) + 0.5) * dr
    th = (np.arange(ntheta) + 0.5) * (TWO_PI / ntheta)
    R, T = np.meshgrid(r, th, indexing="ij")
    pts = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1)
    coords = E.grid.index_coords(pts).reshape(2, -1)
    field = _boundary_field(E)
    vals = ndimage.map_coordinates(field, coords, order=1, mode="constant", cval=E.grid.cell).reshape(nr, ntheta)
    a, b = vals, np.roll(vals, -1, axis=1)
    frac = np.where(a < 0, 1.0, 0.0)
    cross = (a < 0) != (b < 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(cross, a / (a - b), 0.0)
    # portion of [theta_i, theta_i+1] on the negative side of the crossing
    frac = np.where(cross, np.where(a < 0, t, 1.0 - t), frac)
    alpha = frac.sum(axis=1) * (TWO_PI / ntheta)
    return PolarLayerMap(r, np.clip(alpha, 0.0, TWO_PI), dr)


def _quadrant_boundary(profile: PolarLayerMap, step: float) -> list[np.ndarray]:
    """Pieces of the curve ``phi = alpha(r) / 4`` in the first quadrant (``phi`` measured from the x2-axis).

    Stretches lying on an axis (``alpha`` equal to 0 or ``2 pi`` at both
    ends) separate cells of the same state and are dropped.
    """
    r = np.concatenate([[0.0], profile.radii, [profile.radii[-1] + profile.dr]])
    phi = np.concatenate([[profile.angular_measure[0]], profile.angular_measure, [0.0]]) / 4
    # subdivide so that each piece is shorter than ``step`` along the curve
    span = np.maximum(np.diff(r), r[1:] * np.abs(np.diff(phi)))
    n_sub = np.maximum(np.ceil(span / step).astype(int), 1)
    idx = np.repeat(np.arange(len(span)), n_sub)
    frac = np.arange(n_sub.sum()) - np.repeat(np.cumsum(n_sub) - n_sub, n_sub)
    frac = frac / np.repeat(n_sub, n_sub)
    rr = np.append(r[idx] + frac * np.diff(r)[idx], r[-1])
    pp = np.append(phi[idx] + frac * np.diff(phi)[idx], phi[-1])
    pts = np.column_stack([rr * np.sin(pp), rr * np.cos(pp)])
    eps = 1e-9
    on_axis = (pp <= eps) | (pp >= 0.5 * np.pi - eps)
    keep = ~(on_axis[:-1] & on_axis[1:])
    pieces, start = [], None
    for i, k in enumerate(keep):
        if k and start is None:
            start = i
        if not k and start is not None:
            pieces.append(pts[start:i + 1])
            start = None
    if start is not None:
        pieces.append(pts[start:])
    return pieces


def symmetrize_profile(profile: PolarLayerMap, grid) -> SetMask:
    """Rasterize ``{|theta -+ pi/2| < alpha(r) / 4}`` by a cell-centre test.

    Near the boundary the level field is the signed distance to the
    analytic arc curve (reflected into all four quadrants), so the sub-cell
    boundary and perimeter follow the arcs rather than the cell staircase.
    """
    X, Y = grid.centers()
    r = np.hypot(X, Y)
    phi = np.abs(np.abs(np.arctan2(Y, X)) - 0.5 * np.pi)
    alpha = profile.alpha_at(r)
    inside = (phi < alpha / 4) | ((alpha >= TWO_PI * (1 - 1e-12)) & (r > 0))
    inside |= (r == 0) & (alpha > 0)
    level = _mask_signed_distance(inside, grid.cell)
    pieces = _quadrant_boundary(profile, 0.25 * grid.cell)
    near = np.abs(level) <= 2.5 * grid.cell
    if pieces and near.any() and inside.any() and not inside.all():
        curves = []
        for p in pieces:
            for sx, sy in ((1, 1), (-1, 1), (1, -1), (-1, -1)):
                q = p * (sx, sy)
                # an open path closed by retracing itself has the same distance field
                curves.append(np.concatenate([q, q[-2:0:-1]]) if len(q) > 2 else q)
        rows, cols = np.nonzero(near)
        dist = distance_to_polylines(curves, np.column_stack([grid.xs[cols], grid.ys[rows]]))
        dist = np.maximum(dist, 1e-12 * grid.cell)
        level[rows, cols] = np.where(inside[rows, cols], -dist, dist)
    return SetMask.from_level(grid, level)


def bonnesen_symmetrize(E: SetMask, nr: int | None = None, ntheta: int | None = None) -> SetMask:
    """The Bonnesen symmetral ``E*`` of ``E`` about the vertical axis through the origin."""
    return symmetrize_profile(polar_profile(E, nr, ntheta), E.grid)


def is_invariant(G: SetMask, tol_cells: float = 2.0, nr: int | None = None, ntheta: int | None = None) -> bool:
    Gs = bonnesen_symmetrize(G, nr, ntheta)
    return max(hausdorff_excess(Gs, G), hausdorff_excess(G, Gs)) <= tol_cells * G.grid.cell


def _bulk(E: SetMask, d: np.ndarray) -> float:
    return float(np.sum(E.volume_fraction() * d)) * E.grid.cell ** 2


def raster_tolerance(E: SetMask, d: np.ndarray, rel: float = 0.01) -> float:
    """Slack for ``int_E d``: ``rel`` of each partially covered cell's ``|d| cell^2``."""
    phi = E.volume_fraction()
    partial = (phi > 0) & (phi < 1)
    return rel * float(np.sum(np.abs(d[partial]))) * E.grid.cell ** 2


class DissipationCheck(NamedTuple):
    before: float
    after: float
    tol: float

    @property
    def holds(self) -> bool:
        return self.after <= self.before + self.tol


def check_dissipation_decrease(E: SetMask, G: SetMask, nr: int | None = None, ntheta: int | None = None,
                               tol_cells: float = 2.0, d_G: np.ndarray | None = None) -> DissipationCheck:
    """``int_E dbar_G`` and ``int_{E*} dbar_G``; for invariant ``G`` the second should not exceed the first.

    ``tol`` is the combined raster tolerance of both integrals.  Raises
    :class:`NotInvariant` unless ``G*`` lies within ``tol_cells`` of ``G``.
    """
    if E.grid != G.grid:
        raise ValueError("E and G live on different grids")
    if not is_invariant(G, tol_cells, nr, ntheta):
        raise NotInvariant("base set is not invariant under the symmetrization")
    if d_G is None:
        d_G = signed_distance(G).values
    Es = bonnesen_symmetrize(E, nr, ntheta)
    return DissipationCheck(_bulk(E, d_G), _bulk(Es, d_G), raster_tolerance(E, d_G) + raster_tolerance(Es, d_G))


def check_perimeter_decrease(E: SetMask, nr: int | None = None, ntheta: int | None = None) -> tuple[float, float]:
    """``(P(E), P(E*))``; non-increasing for convex sets symmetric in both axes."""
    return perimeter(E), perimeter(bonnesen_symmetrize(E, nr, ntheta))
