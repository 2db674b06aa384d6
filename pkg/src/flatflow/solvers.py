"""First-order primal-dual solvers for the relaxed minimizing-movements step.

Both problems live on the cell grid in grid units (cell side 1) with
forward-difference gradient ``D`` and Neumann edges, so ``||D||^2 <= 8``.
Only cells in an *active band* are optimised; the rest are held at their
Dirichlet value.  The band problem is solved exactly and its duality gap is
certified, so the reported gap bounds the suboptimality of the band
problem itself.

``rof``
    ``min_v  sum |Dv| + (lam / 2) ||v - g||^2`` (accelerated, strongly convex).
``indicator``
    ``min_{0 <= u <= 1}  sum |Du| + <u, w>`` (plain primal-dual).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import SolverDiverged

_L2 = 8.0


@dataclass(frozen=True)
class SolverTolerances:
    """Stopping and conditioning parameters of the inner solve.

    ``tol_gap`` is relative to the domain area: the physical duality gap must
    fall below ``tol_gap * area``.  ``clamp_c1`` sets the signed-distance clamp
    ``max(3 c1 sqrt(h), 6 cell)``.
    """

    tol_gap: float = 1e-7
    max_iter: int = 20000
    check_every: int = 10
    clamp_c1: float = 1.0
    method: str = "rof"
    raise_on_stall: bool = True

    def __post_init__(self):
        if self.tol_gap <= 0 or self.max_iter < 1 or self.check_every < 1 or self.clamp_c1 <= 0:
            raise ValueError("solver tolerances must be positive")
        if self.method not in ("rof", "indicator"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class SolveResult:
    x: np.ndarray
    px: np.ndarray
    py: np.ndarray
    gap: float
    iterations: int
    converged: bool


@njit(cache=True, fastmath=True)
def _divergence(px, py, i, j):
    ny, nx = px.shape
    d = 0.0
    if j < nx - 1:
        d += px[i, j]
    if j > 0:
        d -= px[i, j - 1]
    if i < ny - 1:
        d += py[i, j]
    if i > 0:
        d -= py[i - 1, j]
    return d


@njit(cache=True, fastmath=True)
def _div_row(px, py, i, j0, j1, out):
    """Divergence at cells ``(i, j0:j1)`` into ``out[0:j1-j0]``."""
    ny, nx = px.shape
    if i > 0 and i < ny - 1 and j0 > 0 and j1 < nx:
        for j in range(j0, j1):
            out[j - j0] = px[i, j] - px[i, j - 1] + py[i, j] - py[i - 1, j]
    else:
        for j in range(j0, j1):
            out[j - j0] = _divergence(px, py, i, j)


@njit(cache=True, fastmath=True)
def _dual_step(xbar, px, py, pr, sigma):
    ny, nx = xbar.shape
    for r in range(pr.shape[0]):
        i = pr[r, 0]
        jend = min(pr[r, 2], nx - 1)
        if i < ny - 1:
            for j in range(pr[r, 1], jend):
                qx = px[i, j] + sigma * (xbar[i, j + 1] - xbar[i, j])
                qy = py[i, j] + sigma * (xbar[i + 1, j] - xbar[i, j])
                n2 = qx * qx + qy * qy
                s = 1.0 / np.sqrt(max(n2, 1.0))
                px[i, j] = qx * s
                py[i, j] = qy * s
        else:
            for j in range(pr[r, 1], jend):
                qx = px[i, j] + sigma * (xbar[i, j + 1] - xbar[i, j])
                qy = py[i, j]
                s = 1.0 / np.sqrt(max(qx * qx + qy * qy, 1.0))
                px[i, j] = qx * s
                py[i, j] = qy * s
        if pr[r, 2] == nx:
            j = nx - 1
            gy = xbar[i + 1, j] - xbar[i, j] if i < ny - 1 else 0.0
            qx = px[i, j]
            qy = py[i, j] + sigma * gy
            s = 1.0 / np.sqrt(max(qx * qx + qy * qy, 1.0))
            px[i, j] = qx * s
            py[i, j] = qy * s


@njit(cache=True, fastmath=True)
def _tv(x, pr):
    ny, nx = x.shape
    tv = 0.0
    for r in range(pr.shape[0]):
        i, j0, j1 = pr[r, 0], pr[r, 1], pr[r, 2]
        if i < ny - 1 and j1 < nx:
            for j in range(j0, j1):
                gx = x[i, j + 1] - x[i, j]
                gy = x[i + 1, j] - x[i, j]
                tv += np.sqrt(gx * gx + gy * gy)
        else:
            for j in range(j0, j1):
                gx = x[i, j + 1] - x[i, j] if j < nx - 1 else 0.0
                gy = x[i + 1, j] - x[i, j] if i < ny - 1 else 0.0
                tv += np.sqrt(gx * gx + gy * gy)
    return tv


@njit(cache=True)
def _rof_gap(g, lam, v, px, py, pr, ar, dr):
    primal = _tv(v, pr)
    dual = 0.0
    buf = np.empty(g.shape[1])
    for r in range(ar.shape[0]):
        i, j0, j1 = ar[r, 0], ar[r, 1], ar[r, 2]
        _div_row(px, py, i, j0, j1, buf)
        for j in range(j0, j1):
            res = v[i, j] - g[i, j]
            primal += 0.5 * lam * res * res
            dual -= buf[j - j0] * buf[j - j0] / (2.0 * lam)
    for r in range(dr.shape[0]):
        i, j0, j1 = dr[r, 0], dr[r, 1], dr[r, 2]
        _div_row(px, py, i, j0, j1, buf)
        for j in range(j0, j1):
            dual -= g[i, j] * buf[j - j0]
    return primal - dual


@njit(cache=True, fastmath=True)
def _rof_run(g, lam, v, vbar, px, py, pr, ar, dr, tau, sigma, max_iter, check_every, tol):
    gap = np.inf
    it = 0
    buf = np.empty(g.shape[1])
    while it < max_iter:
        _dual_step(vbar, px, py, pr, sigma)
        theta = 1.0 / np.sqrt(1.0 + 2.0 * lam * tau)
        a = 1.0 / (1.0 + tau * lam)
        for r in range(ar.shape[0]):
            i, j0, j1 = ar[r, 0], ar[r, 1], ar[r, 2]
            _div_row(px, py, i, j0, j1, buf)
            for j in range(j0, j1):
                old = v[i, j]
                new = (old + tau * buf[j - j0] + tau * lam * g[i, j]) * a
                v[i, j] = new
                vbar[i, j] = new + theta * (new - old)
        tau *= theta
        sigma /= theta
        it += 1
        if it % check_every == 0:
            gap = _rof_gap(g, lam, v, px, py, pr, ar, dr)
            if gap <= tol:
                break
    return it, gap


@njit(cache=True)
def _ind_gap(w, u, px, py, pr, ar, dr, fixed):
    primal = _tv(u, pr)
    dual = 0.0
    buf = np.empty(w.shape[1])
    for r in range(ar.shape[0]):
        i, j0, j1 = ar[r, 0], ar[r, 1], ar[r, 2]
        _div_row(px, py, i, j0, j1, buf)
        for j in range(j0, j1):
            primal += u[i, j] * w[i, j]
            dual += min(0.0, w[i, j] - buf[j - j0])
    for r in range(dr.shape[0]):
        i, j0, j1 = dr[r, 0], dr[r, 1], dr[r, 2]
        _div_row(px, py, i, j0, j1, buf)
        for j in range(j0, j1):
            if fixed[i, j]:
                dual -= u[i, j] * buf[j - j0]
    return primal - dual


@njit(cache=True, fastmath=True)
def _ind_run(w, u, ubar, px, py, pr, ar, dr, fixed, tau, sigma, max_iter, check_every, tol):
    gap = np.inf
    it = 0
    buf = np.empty(w.shape[1])
    while it < max_iter:
        _dual_step(ubar, px, py, pr, sigma)
        for r in range(ar.shape[0]):
            i, j0, j1 = ar[r, 0], ar[r, 1], ar[r, 2]
            _div_row(px, py, i, j0, j1, buf)
            for j in range(j0, j1):
                old = u[i, j]
                new = old + tau * (buf[j - j0] - w[i, j])
                new = min(1.0, max(0.0, new))
                u[i, j] = new
                ubar[i, j] = 2.0 * new - old
        it += 1
        if it % check_every == 0:
            gap = _ind_gap(w, u, px, py, pr, ar, dr, fixed)
            if gap <= tol:
                break
    return it, gap


def row_runs(mask: np.ndarray) -> np.ndarray:
    """Maximal horizontal runs of a boolean array as rows ``(i, j_start, j_stop)``."""
    m = np.pad(mask.astype(np.int8), ((0, 0), (1, 1)))
    dm = np.diff(m, axis=1)
    si, sj = np.nonzero(dm == 1)
    ei, ej = np.nonzero(dm == -1)
    return np.ascontiguousarray(np.column_stack([si, sj, ej]).astype(np.int64).reshape(-1, 3))


def _band_lists(active: np.ndarray):
    """Runs of the active cells, of the dual edges touching them, and of the cells whose divergence can be nonzero."""
    pmask = active.copy()
    pmask[:, :-1] |= active[:, 1:]
    pmask[:-1, :] |= active[1:, :]
    dmask = pmask.copy()
    dmask[:, 1:] |= pmask[:, :-1]
    dmask[1:, :] |= pmask[:-1, :]
    return (row_runs(pmask), row_runs(active), row_runs(dmask)), pmask


def _warm_dual(shape, pmask, p0):
    if p0 is None:
        return np.zeros(shape), np.zeros(shape)
    px = np.where(pmask, p0[0], 0.0)
    py = np.where(pmask, p0[1], 0.0)
    return np.ascontiguousarray(px), np.ascontiguousarray(py)


def solve_rof(g: np.ndarray, lam: float, active: np.ndarray | None = None, tol: float = 1e-6,
              max_iter: int = 20000, check_every: int = 10, p0=None, raise_on_stall: bool = True) -> SolveResult:
    """Band-restricted ROF problem, accelerated primal-dual, grid units.

    Parameters
    ----------
    g : data, held fixed outside ``active``.
    lam : fidelity weight.
    tol : absolute stopping gap (grid units).
    p0 : optional ``(px, py)`` warm start for the dual field.
    """
    g = np.ascontiguousarray(g, dtype=float)
    if active is None:
        active = np.ones(g.shape, bool)
    lists, pmask = _band_lists(active)
    px, py = _warm_dual(g.shape, pmask, p0)
    v = g.copy()
    # dual-consistent primal start
    div = np.zeros_like(g)
    div[:, :-1] += px[:, :-1]
    div[:, 1:] -= px[:, :-1]
    div[:-1, :] += py[:-1, :]
    div[1:, :] -= py[:-1, :]
    v[active] = g[active] + div[active] / lam
    vbar = v.copy()
    step = 1.0 / np.sqrt(_L2)
    it, gap = _rof_run(g, float(lam), v, vbar, px, py, *lists, step, step, int(max_iter), int(check_every),
                       float(tol))
    converged = gap <= tol
    if not converged and raise_on_stall:
        raise SolverDiverged(f"ROF gap {gap:.3e} above {tol:.3e} after {it} iterations", gap=gap, iterations=it)
    return SolveResult(v, px, py, float(gap), int(it), bool(converged))


def solve_indicator(w: np.ndarray, u_fixed: np.ndarray, active: np.ndarray, tol: float = 1e-6,
                    max_iter: int = 50000, check_every: int = 10, p0=None, u0=None,
                    raise_on_stall: bool = True) -> SolveResult:
    """Band-restricted relaxed indicator problem ``min sum|Du| + <u, w>`` over ``0 <= u <= 1``.

    ``u_fixed`` gives the values (0 or 1) held outside ``active``.
    """
    w = np.ascontiguousarray(w, dtype=float)
    lists, pmask = _band_lists(active)
    px, py = _warm_dual(w.shape, pmask, p0)
    u = np.ascontiguousarray(u_fixed, dtype=float).copy()
    if u0 is not None:
        u[active] = np.clip(u0[active], 0.0, 1.0)
    else:
        u[active] = (w[active] < 0).astype(float)
    ubar = u.copy()
    fixed = np.ascontiguousarray(~active & (u > 0.5))
    step = 0.99 / np.sqrt(_L2)
    it, gap = _ind_run(w, u, ubar, px, py, *lists, fixed, step, step, int(max_iter), int(check_every), float(tol))
    converged = gap <= tol
    if not converged and raise_on_stall:
        raise SolverDiverged(f"relaxation gap {gap:.3e} above {tol:.3e} after {it} iterations", gap=gap,
                             iterations=it)
    return SolveResult(u, px, py, float(gap), int(it), bool(converged))
