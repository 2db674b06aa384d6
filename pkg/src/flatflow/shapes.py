"""Constructors for the sets used in experiments and tests.

Every constructor returns a :class:`SetMask` with a level field whose zero
level is the exact analytic boundary, unless ``subpixel=False`` is passed.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import ndimage

from .geometry import GridSpec, SetMask


def _mask(grid: GridSpec, level: np.ndarray, subpixel: bool) -> SetMask:
    return SetMask.from_level(grid, level) if subpixel else SetMask(grid, level < 0)


def disk_level(grid: GridSpec, center, r: float) -> np.ndarray:
    X, Y = grid.centers()
    return np.hypot(X - center[0], Y - center[1]) - r


def disk(grid: GridSpec, center=(0.0, 0.0), r: float = 1.0, subpixel: bool = True) -> SetMask:
    return _mask(grid, disk_level(grid, center, r), subpixel)


def disk_union(grid: GridSpec, centers: Sequence, r: float = 1.0, subpixel: bool = True) -> SetMask:
    level = np.minimum.reduce([disk_level(grid, c, r) for c in centers])
    return _mask(grid, level, subpixel)


def annulus(grid: GridSpec, center=(0.0, 0.0), r_in: float = 0.5, r_out: float = 1.0,
            subpixel: bool = True) -> SetMask:
    X, Y = grid.centers()
    rho = np.hypot(X - center[0], Y - center[1])
    return _mask(grid, np.maximum(rho - r_out, r_in - rho), subpixel)


def ellipse(grid: GridSpec, center=(0.0, 0.0), semi_x: float = 1.0, semi_y: float = 1.0,
            subpixel: bool = True) -> SetMask:
    """Axis-aligned ellipse; the level is the radial coordinate scaled to unit gradient on the minor axis."""
    X, Y = grid.centers()
    q = np.hypot((X - center[0]) / semi_x, (Y - center[1]) / semi_y)
    return _mask(grid, (q - 1.0) * min(semi_x, semi_y), subpixel)


def perturbed_disk(grid: GridSpec, eps: float, mode: int = 3, center=(0.0, 0.0), r: float = 1.0,
                   subpixel: bool = True) -> SetMask:
    """Star-shaped set ``rho < r (1 + eps cos(mode * phi))``."""
    X, Y = grid.centers()
    dx, dy = X - center[0], Y - center[1]
    rho = np.hypot(dx, dy)
    phi = np.arctan2(dy, dx)
    return _mask(grid, rho - r * (1.0 + eps * np.cos(mode * phi)), subpixel)


def rectangle(grid: GridSpec, center=(0.0, 0.0), half_x: float = 1.0, half_y: float = 1.0,
              subpixel: bool = True) -> SetMask:
    X, Y = grid.centers()
    level = np.maximum(np.abs(X - center[0]) - half_x, np.abs(Y - center[1]) - half_y)
    return _mask(grid, level, subpixel)


def square(grid: GridSpec, center=(0.0, 0.0), side: float = 2.0, subpixel: bool = True) -> SetMask:
    return rectangle(grid, center, side / 2, side / 2, subpixel)


def stadium(grid: GridSpec, half_length: float = 0.5, r: float = 0.5, center=(0.0, 0.0),
            vertical: bool = False, subpixel: bool = True) -> SetMask:
    """Rectangle with semicircular caps; the exact signed distance is its level."""
    X, Y = grid.centers()
    u, v = X - center[0], Y - center[1]
    if vertical:
        u, v = v, u
    along = np.clip(u, -half_length, half_length)
    return _mask(grid, np.hypot(u - along, v) - r, subpixel)


def lens(grid: GridSpec, offset: float, r: float = 1.0, subpixel: bool = True) -> SetMask:
    """Intersection of the disks of radius ``r`` centred at ``(+-offset, 0)``."""
    a = disk_level(grid, (offset, 0.0), r)
    b = disk_level(grid, (-offset, 0.0), r)
    return _mask(grid, np.maximum(a, b), subpixel)


def random_blob(grid: GridSpec, rng: np.random.Generator, center=(0.0, 0.0), r: float = 1.0,
                roughness: float = 0.25, modes: int = 6, subpixel: bool = True) -> SetMask:
    """Star-shaped blob with a random low-order Fourier radius ``r (1 + sum a_m cos(m phi + b_m))``."""
    X, Y = grid.centers()
    dx, dy = X - center[0], Y - center[1]
    rho = np.hypot(dx, dy)
    phi = np.arctan2(dy, dx)
    amp = rng.uniform(-1.0, 1.0, modes) * roughness / np.arange(1, modes + 1)
    phase = rng.uniform(0.0, 2 * np.pi, modes)
    radius = np.ones_like(phi)
    for m in range(modes):
        radius += amp[m] * np.cos((m + 1) * phi + phase[m])
    radius = r * np.maximum(radius, 0.2)
    return _mask(grid, rho - radius, subpixel)


def random_mask(grid: GridSpec, rng: np.random.Generator, fill: float = 0.5, smooth: float = 0.0) -> SetMask:
    """Pure cell mask from thresholded (optionally smoothed) white noise."""
    noise = rng.standard_normal(grid.shape)
    if smooth > 0:
        noise = ndimage.gaussian_filter(noise, smooth, mode="wrap")
    thr = np.quantile(noise, 1.0 - fill)
    return SetMask(grid, noise > thr)


def translate(E: SetMask, shift_cells: tuple[int, int]) -> SetMask:
    """Shift a set by whole cells ``(di, dj)``; the set must stay clear of the grid edge."""
    di, dj = shift_cells
    inside = np.roll(E.inside, (dj, di), axis=(0, 1))
    if E.level is None:
        return SetMask(E.grid, inside)
    level = np.roll(E.level, (dj, di), axis=(0, 1))
    return SetMask(E.grid, inside, level)
