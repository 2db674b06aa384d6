"""Planar sets on a pixel grid.

A set is stored as a boolean membership array on cell centres.  It may also
carry a *level* array, a real field that is negative exactly on the inside
cells and whose zero level (bilinearly interpolated) places the boundary
between cell centres.  Sets produced by the flow always carry one; masks read
from images do not, and then the boundary is the 0.5-level between inside and
outside cell centres.

Arrays are indexed ``[j, i]`` with ``j`` along y and ``i`` along x, and cell
``(j, i)`` has centre ``(x0 + (i + 0.5) * cell, y0 + (j + 0.5) * cell)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import DegenerateSet, EmptySet, FullSet, MismatchedGrids


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid of ``nx * ny`` square cells of side ``cell``."""

    origin: tuple[float, float]
    cell: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.cell > 0 and np.isfinite(self.cell)):
            raise ValueError(f"cell must be positive, got {self.cell}")
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise ValueError("grid needs at least one cell")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "cell", float(self.cell))
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))

    @classmethod
    def square(cls, half_width: float, n: int) -> "GridSpec":
        """``n x n`` grid covering ``[-half_width, half_width]^2``."""
        return cls((-half_width, -half_width), 2.0 * half_width / n, n, n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def width(self) -> float:
        return self.nx * self.cell

    @property
    def height(self) -> float:
        return self.ny * self.cell

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def xs(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.cell

    @property
    def ys(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.cell

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as two ``(ny, nx)`` arrays."""
        return np.meshgrid(self.xs, self.ys)

    def index_coords(self, points: np.ndarray) -> np.ndarray:
        """Fractional ``(row, col)`` indices of points, for interpolation."""
        points = np.asarray(points, dtype=float)
        col = (points[..., 0] - self.origin[0]) / self.cell - 0.5
        row = (points[..., 1] - self.origin[1]) / self.cell - 0.5
        return np.stack([row, col])

    def to_dict(self) -> dict:
        return {"origin_x": self.origin[0], "origin_y": self.origin[1],
                "cell": self.cell, "nx": self.nx, "ny": self.ny}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls((d["origin_x"], d["origin_y"]), d["cell"], d["nx"], d["ny"])


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values on the cell centres of ``grid``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", values)

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Bilinear interpolation at arbitrary points (edge values held outside)."""
        coords = self.grid.index_coords(points).reshape(2, -1)
        out = ndimage.map_coordinates(self.values, coords, order=1, mode="nearest")
        return out.reshape(np.asarray(points).shape[:-1])


@dataclass(frozen=True, eq=False)
class SetMask:
    """A bounded planar set as cell-centre membership on ``grid``.

    ``level``, when given, must be negative exactly where ``inside`` is true;
    its zero level is then used as the sub-cell boundary.
    """

    grid: GridSpec
    inside: np.ndarray
    level: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        inside = _frozen(self.inside, bool)
        if inside.shape != self.grid.shape:
            raise ValueError(f"mask shape {inside.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "inside", inside)
        if self.level is not None:
            level = _frozen(self.level, float)
            if level.shape != self.grid.shape:
                raise ValueError("level shape does not match the grid")
            if not np.array_equal(level < 0, inside):
                raise ValueError("level must be negative exactly on inside cells")
            object.__setattr__(self, "level", level)

    @classmethod
    def from_level(cls, grid: GridSpec, level: np.ndarray) -> "SetMask":
        level = np.asarray(level, dtype=float)
        return cls(grid, level < 0, level)

    @classmethod
    def empty(cls, grid: GridSpec) -> "SetMask":
        return cls(grid, np.zeros(grid.shape, dtype=bool))

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.inside))

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    @property
    def is_full(self) -> bool:
        return self.count == self.inside.size

    def complement(self) -> "SetMask":
        if self.level is None:
            return SetMask(self.grid, ~self.inside)
        flipped = -self.level
        # cells sitting exactly on the zero level are outside; keep them inside the complement
        flipped[flipped == 0.0] = -np.finfo(float).tiny
        return SetMask(self.grid, ~self.inside, flipped)

    def without_level(self) -> "SetMask":
        return SetMask(self.grid, self.inside)

    def same_cells(self, other: "SetMask") -> bool:
        return self.grid == other.grid and np.array_equal(self.inside, other.inside)

    def boundary_polylines(self) -> list[np.ndarray]:
        """Marching-squares boundary polylines (computed once per set)."""
        if "curves" not in self._cache:
            self._cache["curves"] = marching_squares(_boundary_field(self), self.grid)
        return self._cache["curves"]

    def volume_fraction(self) -> np.ndarray:
        """Fraction of each cell inside the set.

        For a pure mask this is the indicator.  With a level field it is
        ``clip(1/2 - dist / cell, 0, 1)`` with ``dist = level / |grad level|``,
        exact for an interface parallel to a cell side.
        """
        if "phi" not in self._cache:
            if self.level is None:
                phi = self.inside.astype(float)
            else:
                gy, gx = np.gradient(self.level, self.grid.cell)
                norm = np.hypot(gx, gy)
                dist = self.level / np.where(norm > 1e-12, norm, 1.0)
                phi = np.clip(0.5 - dist / self.grid.cell, 0.0, 1.0)
            phi.setflags(write=False)
            self._cache["phi"] = phi
        return self._cache["phi"]

    def touches_margin(self, width: int = 2) -> bool:
        """True if an inside cell lies within ``width`` cells of the grid edge."""
        w = max(int(width), 1)
        m = self.inside
        return bool(m[:w].any() or m[-w:].any() or m[:, :w].any() or m[:, -w:].any())


def _check_same_grid(*sets: SetMask) -> None:
    g = sets[0].grid
    for s in sets[1:]:
        if s.grid != g:
            raise MismatchedGrids("sets live on different grids")


# ---------------------------------------------------------------------------
# contours


@dataclass(frozen=True, eq=False)
class Contour:
    """Closed polyline; the closing edge from the last vertex back to the first is implicit.

    Outer boundaries run counterclockwise and holes clockwise, so the set is
    always on the left.  ``curvature`` is positive where the set is locally
    convex.  ``cell`` records the resolution the curve was extracted at.
    """

    vertices: np.ndarray
    curvature: np.ndarray | None = None
    cell: float | None = None

    def __post_init__(self):
        v = _frozen(self.vertices, float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array")
        if len(v) > 1 and np.allclose(v[0], v[-1]):
            v = _frozen(v[:-1], float)
        object.__setattr__(self, "vertices", v)
        if self.curvature is not None:
            k = _frozen(self.curvature, float)
            if k.shape != (len(v),):
                raise ValueError("one curvature value per vertex is required")
            object.__setattr__(self, "curvature", k)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def edge_lengths(self) -> np.ndarray:
        """Length of edge ``i -> i+1`` (the last one closes the curve)."""
        v = self.vertices
        return np.hypot(*(np.roll(v, -1, axis=0) - v).T)

    @property
    def arclength(self) -> np.ndarray:
        """Cumulative arclength at each vertex, starting at 0."""
        e = self.edge_lengths
        return np.concatenate([[0.0], np.cumsum(e[:-1])])

    @property
    def length(self) -> float:
        return float(self.edge_lengths.sum())

    @property
    def signed_area(self) -> float:
        x, y = self.vertices.T
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @property
    def orientation(self) -> int:
        """+1 for counterclockwise (outer boundary), -1 for clockwise (hole)."""
        return 1 if self.signed_area > 0 else -1

    @property
    def centroid(self) -> np.ndarray:
        """Arclength centroid of the curve (not of the enclosed region)."""
        v = self.vertices
        e = self.edge_lengths
        mids = 0.5 * (v + np.roll(v, -1, axis=0))
        return (mids * e[:, None]).sum(axis=0) / e.sum()

    def with_curvature(self, k: np.ndarray) -> "Contour":
        return Contour(self.vertices, k, self.cell)

    def translated(self, shift) -> "Contour":
        return Contour(self.vertices + np.asarray(shift, float), self.curvature, self.cell)


def _segment_table() -> list[list[list[tuple[int, int]]]]:
    # edges of a square run counterclockwise: k joins corner k to corner k+1
    table = []
    for code in range(16):
        ins = [bool(code >> k & 1) for k in range(4)]
        starts = [k for k in range(4) if ins[k] and not ins[(k + 1) % 4]]
        ends = [k for k in range(4) if not ins[k] and ins[(k + 1) % 4]]
        if len(starts) == 1:
            pairs = [(starts[0], ends[0])]
            table.append([pairs, pairs])
        elif len(starts) == 2:
            table.append([[(s, (s + 3) % 4) for s in starts],   # centre outside
                          [(s, (s + 1) % 4) for s in starts]])  # centre inside
        else:
            table.append([[], []])
    return table


_SEGMENTS = _segment_table()


def marching_squares(field: np.ndarray, grid: GridSpec) -> list[np.ndarray]:
    """Zero-level polylines of a cell-centred field, negative side on the left.

    The field is padded with a positive border so every curve closes.  Saddle
    squares are split according to the sign of the mean of their four corners.
    """
    field = np.asarray(field, dtype=float)
    neg = field < 0
    rows = np.flatnonzero(neg.any(axis=1))
    if not len(rows):
        return []
    cols = np.flatnonzero(neg.any(axis=0))
    # only the bounding box of the negative cells (plus one ring) can hold crossings
    r0, r1 = max(rows[0] - 1, 0), min(rows[-1] + 2, field.shape[0])
    q0, q1 = max(cols[0] - 1, 0), min(cols[-1] + 2, field.shape[1])
    sub = field[r0:r1, q0:q1]
    pad = float(np.max(np.abs(sub))) + grid.cell
    F = np.pad(sub, 1, constant_values=pad)
    NY, NX = F.shape
    inside = F < 0
    n_h = NY * (NX - 1)

    # crossing points on horizontal edges (j,i)-(j,i+1) and vertical edges (j,i)-(j+1,i)
    x0 = grid.origin[0] + (np.arange(NX) + q0 - 0.5) * grid.cell
    y0 = grid.origin[1] + (np.arange(NY) + r0 - 0.5) * grid.cell
    pts = np.full((n_h + (NY - 1) * NX, 2), np.nan)
    a, b = F[:, :-1], F[:, 1:]
    jj, ii = np.nonzero((a < 0) != (b < 0))
    t = a[jj, ii] / (a[jj, ii] - b[jj, ii])
    gid = jj * (NX - 1) + ii
    pts[gid, 0] = x0[ii] + t * grid.cell
    pts[gid, 1] = y0[jj]
    a, b = F[:-1, :], F[1:, :]
    jj, ii = np.nonzero((a < 0) != (b < 0))
    t = a[jj, ii] / (a[jj, ii] - b[jj, ii])
    gid = n_h + jj * NX + ii
    pts[gid, 0] = x0[ii]
    pts[gid, 1] = y0[jj] + t * grid.cell

    c0, c1 = inside[:-1, :-1], inside[:-1, 1:]
    c2, c3 = inside[1:, 1:], inside[1:, :-1]
    code = c0.astype(np.int8) | (c1.astype(np.int8) << 1) | (c2.astype(np.int8) << 2) | (c3.astype(np.int8) << 3)
    centre_in = (F[:-1, :-1] + F[:-1, 1:] + F[1:, 1:] + F[1:, :-1]) < 0

    nxt = np.full(len(pts), -1, dtype=np.int64)
    sj, si = np.nonzero((code > 0) & (code < 15))
    scode = code[sj, si]
    scin = centre_in[sj, si]
    for c in range(1, 15):
        for cin in (0, 1):
            pairs = _SEGMENTS[c][cin]
            if not pairs:
                continue
            sel = scode == c
            if c in (5, 10):
                sel &= scin if cin else ~scin
            elif cin:
                continue
            jj, ii = sj[sel], si[sel]
            if not len(jj):
                continue
            edge_ids = (
                jj * (NX - 1) + ii,
                n_h + jj * NX + ii + 1,
                (jj + 1) * (NX - 1) + ii,
                n_h + jj * NX + ii,
            )
            for s, e in pairs:
                nxt[edge_ids[s]] = edge_ids[e]

    curves = []
    nxt_list = nxt.tolist()
    visited = np.zeros(len(nxt), dtype=bool)
    for start in np.flatnonzero(nxt >= 0).tolist():
        if visited[start]:
            continue
        chain = []
        e = start
        while not visited[e]:
            visited[e] = True
            chain.append(e)
            e = nxt_list[e]
        v = pts[chain]
        keep = np.ones(len(v), dtype=bool)
        keep[1:] = np.any(np.abs(np.diff(v, axis=0)) > 1e-12 * grid.cell, axis=1)
        v = v[keep]
        if len(v) > 1 and np.all(np.abs(v[0] - v[-1]) <= 1e-12 * grid.cell):
            v = v[:-1]
        if len(v) >= 3:
            curves.append(v)
    return curves


def _boundary_field(E: SetMask) -> np.ndarray:
    if E.level is not None:
        return E.level
    return _mask_signed_distance(E.inside, E.grid.cell)


def extract_contours(E: SetMask, with_curvature: bool = True) -> list[Contour]:
    """Boundary components of ``E`` as closed contours.

    Uses the zero level of ``E.level`` when present and of the signed
    distance otherwise.  Curvature is filled in by
    :func:`flatflow.alexandrov.curvature_profile` unless disabled.
    """
    if E.is_empty:
        raise EmptySet("cannot extract contours of an empty set")
    curves = [Contour(v, cell=E.grid.cell) for v in E.boundary_polylines()]
    if with_curvature:
        from .alexandrov import curvature_profile

        curves = [curvature_profile(c) if len(c) >= 8 else c for c in curves]
    return curves


def perimeter(E: SetMask, contours: Sequence[Contour] | None = None) -> float:
    """Total polyline length of the boundary; 0 for the empty set."""
    if E.is_empty or E.is_full:
        return 0.0
    if contours is None:
        contours = extract_contours(E, with_curvature=False)
    return float(sum(c.length for c in contours))


def area(E: SetMask) -> float:
    """Lebesgue measure as (inside count) * cell^2."""
    return E.count * E.grid.cell ** 2


def enclosed_area(contours: Sequence[Contour]) -> float:
    """Area bounded by oriented contours (holes subtract)."""
    return float(sum(c.signed_area for c in contours))


# ---------------------------------------------------------------------------
# distances


def _mask_signed_distance(inside: np.ndarray, cell: float) -> np.ndarray:
    d_in = ndimage.distance_transform_edt(inside, sampling=cell)
    d_out = ndimage.distance_transform_edt(~inside, sampling=cell)
    return np.where(inside, -(d_in - 0.5 * cell), d_out - 0.5 * cell)


def _segments(curves: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    a = np.concatenate(curves)
    b = np.concatenate([np.roll(c, -1, axis=0) for c in curves])
    return a, b


def _point_segment_distance(q, a, b):
    ab = b - a
    aq = q - a
    denom = np.einsum("...i,...i->...", ab, ab)
    t = np.einsum("...i,...i->...", aq, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    diff = aq - t[..., None] * ab
    return np.sqrt(np.einsum("...i,...i->...", diff, diff))


def distance_to_polylines(curves: Sequence[np.ndarray], queries: np.ndarray, samples_per_segment: int = 2) -> np.ndarray:
    """Euclidean distance from each query point to a union of closed polylines.

    Each segment is sampled a few times; the nearest sample is refined
    exactly against its own segment and two neighbours on either side.  The
    result never underestimates and is exact unless the nearest segment lies
    on a different stretch of curve than the nearest sample, which can only
    happen near the medial axis, where the error is second order.
    """
    queries = np.asarray(queries, dtype=float).reshape(-1, 2)
    if not len(queries):
        return np.zeros(0)
    a, b = _segments(curves)
    n = max(int(samples_per_segment), 1)
    frac = (np.arange(n) + 0.5) / n
    samples = (a[:, None, :] + frac[None, :, None] * (b - a)[:, None, :]).reshape(-1, 2)
    ds, j = cKDTree(samples).query(queries, k=1)
    m = j // n
    # neighbouring segment indices, wrapped within each curve
    sizes = np.array([len(c) for c in curves])
    start = np.repeat(np.concatenate([[0], np.cumsum(sizes)[:-1]]), sizes)
    size = np.repeat(sizes, sizes)
    off = m - start[m]
    cand = start[m][:, None] + (off[:, None] + np.arange(-2, 3)[None, :]) % size[m][:, None]
    d = _point_segment_distance(queries[:, None, :], a[cand], b[cand]).min(axis=1)
    return np.minimum(d, ds)


def signed_distance(E: SetMask, band: float | None = None) -> ScalarField:
    """Signed distance to the boundary of ``E``: negative inside, positive outside.

    Without a level field the boundary is the 0.5-level between inside and
    outside cell centres and the result is exact (two-pass squared Euclidean
    transform minus half a cell).  With a level field the distance is measured
    to the sub-cell polyline.

    If ``band`` is given, only values with ``|d| <= band`` are guaranteed:
    those are exact, every other inside value is a cell-level estimate, and
    outside cells beyond the band may hold any value ``>= band``.
    """
    if E.is_empty:
        raise EmptySet("signed distance of the empty set is undefined")
    if E.is_full:
        raise FullSet("signed distance of the full grid is undefined")
    cell = E.grid.cell
    if band is None:
        d = _mask_signed_distance(E.inside, cell)
    else:
        pad = int(np.ceil(band / cell)) + 3
        rows = np.flatnonzero(E.inside.any(axis=1))
        cols = np.flatnonzero(E.inside.any(axis=0))
        r0, r1 = max(rows[0] - pad, 0), min(rows[-1] + pad + 1, E.grid.ny)
        q0, q1 = max(cols[0] - pad, 0), min(cols[-1] + pad + 1, E.grid.nx)
        # far fill strictly beyond the refinement band below
        d = np.full(E.grid.shape, (pad + 2) * cell)
        d[r0:r1, q0:q1] = _mask_signed_distance(E.inside[r0:r1, q0:q1], cell)
        if E.inside[r0:r1, q0:q1].all():
            d = _mask_signed_distance(E.inside, cell)
    if E.level is None:
        return ScalarField(E.grid, d)
    curves = E.boundary_polylines()
    if band is None:
        rows, cols = np.indices(E.grid.shape).reshape(2, -1)
    else:
        rows, cols = np.nonzero(np.abs(d) <= band + 2.0 * cell)
    pts = np.column_stack([E.grid.xs[cols], E.grid.ys[rows]])
    dist = distance_to_polylines(curves, pts)
    d[rows, cols] = np.where(E.inside[rows, cols], -dist, dist)
    return ScalarField(E.grid, d)


def boundary_distance_at(F: SetMask, cells: np.ndarray) -> np.ndarray:
    """Distance to the boundary of ``F`` at the centres of the selected cells."""
    rows, cols = np.nonzero(cells)
    if not len(rows):
        return np.zeros(0)
    if F.level is None:
        return np.abs(_mask_signed_distance(F.inside, F.grid.cell)[rows, cols])
    pts = np.column_stack([F.grid.xs[cols], F.grid.ys[rows]])
    return distance_to_polylines(F.boundary_polylines(), pts)


def hausdorff_excess(E: SetMask, F: SetMask) -> float:
    """Largest distance to the boundary of ``F`` over cells of ``E`` xor ``F``."""
    _check_same_grid(E, F)
    if F.is_empty or F.is_full:
        raise DegenerateSet("reference set must be neither empty nor full")
    diff = E.inside ^ F.inside
    if not diff.any():
        return 0.0
    return float(boundary_distance_at(F, diff).max())


def symm_diff_area(E: SetMask, F: SetMask) -> float:
    _check_same_grid(E, F)
    return float(np.count_nonzero(E.inside ^ F.inside)) * E.grid.cell ** 2


def union(*sets: SetMask) -> SetMask:
    """Union of masks; level fields combine by pointwise minimum."""
    _check_same_grid(*sets)
    inside = np.logical_or.reduce([s.inside for s in sets])
    if all(s.level is not None for s in sets):
        return SetMask(sets[0].grid, inside, np.minimum.reduce([s.level for s in sets]))
    return SetMask(sets[0].grid, inside)
