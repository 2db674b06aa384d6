"""Exact radial reductions: a disk stays a concentric disk under the step.

For a disk of radius ``r_k`` the minimizing-movements step with forcing
``f`` returns a concentric disk whose radius satisfies the implicit update

    (r_{k+1} - r_k) / h = -1 / r_{k+1} + f,

i.e. ``r^2 - (r_k + h f) r + h = 0``, or the empty set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow import ForcingSpec, fbar

#: ``R = r + h f`` below ``EXTINCTION_GLOBAL * sqrt(h)`` makes the empty set beat the disk.
EXTINCTION_GLOBAL = 4.0 / math.sqrt(3.0)


@dataclass(frozen=True)
class DiskState:
    r: float
    extinct: bool = False

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("radius must be nonnegative")
        if self.extinct and self.r != 0:
            raise ValueError("an extinct state has radius 0")


EXTINCT = DiskState(0.0, True)


def radial_energy(rho: float, r_k: float, h: float, f: float) -> float:
    """Step functional of the concentric disk ``D_rho`` (the empty set scores 0)."""
    return 2 * math.pi * rho + (2 * math.pi / h) * (rho ** 3 / 3 - r_k * rho ** 2 / 2) - f * math.pi * rho ** 2


def disk_step(r_k: float, h: float, f: float, rule: str = "discriminant") -> DiskState:
    """One step from the disk of radius ``r_k``.

    The new radius is the larger root ``((R + sqrt(R^2 - 4h)) / 2`` with
    ``R = r_k + h f``.  With ``rule="discriminant"`` the disk dies only when
    the root does not exist.  With ``rule="global"`` it also dies when the
    empty set has lower step energy than that root, which happens for
    ``R <= (4 / sqrt 3) sqrt(h)``; ties go to extinction.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if r_k <= 0:
        return EXTINCT
    R = r_k + h * f
    disc = R * R - 4 * h
    if R <= 0 or disc < 0:
        return EXTINCT
    if rule == "global":
        if R <= EXTINCTION_GLOBAL * math.sqrt(h):
            return EXTINCT
    elif rule != "discriminant":
        raise ValueError(f"unknown rule {rule!r}")
    # larger root, written to avoid cancellation
    return DiskState(0.5 * (R + math.sqrt(disc)))


def disk_trajectory(r0: float, h: float, forcing: ForcingSpec | float, T: float,
                    rule: str = "discriminant") -> list[DiskState]:
    """States ``r_0, r_1, ..., r_n`` with ``n = ceil(T / h)`` (extinct states repeat)."""
    if isinstance(forcing, (int, float)):
        forcing = ForcingSpec.constant(float(forcing))
    n = int(math.ceil(T / h - 1e-9))
    out = [DiskState(float(r0))]
    for k in range(n):
        prev = out[-1]
        out.append(EXTINCT if prev.extinct else disk_step(prev.r, h, fbar(forcing, k, h), rule))
    return out


def radii(states: list[DiskState]) -> np.ndarray:
    return np.array([s.r for s in states])


def extinction_time(states: list[DiskState], h: float) -> float | None:
    """Time ``k h`` of the first extinct state, or ``None``."""
    for k, s in enumerate(states):
        if s.extinct:
            return k * h
    return None


@dataclass(frozen=True)
class CompaBounds:
    """Barrier radii from the inner-disk and probe-disk iterations.

    ``inner_radius`` is the smallest radius reached by the disk of radius
    ``1 - delta^(1/4)`` under forcing ``-Lambda`` within ``K = ceil(2 sqrt(delta)/h)``
    steps; ``inner_target = 1 - 2 delta^(1/4)`` is what it must stay above.
    ``probe_radius`` is the same for the disk of radius ``4 delta^(1/4)``,
    with target ``delta^(1/4)``.  ``envelope = 5 delta^(1/4)``.
    """

    delta: float
    Lambda: float
    h: float
    steps: int
    inner_radius: float
    inner_lemma_bound: float
    inner_target: float
    probe_radius: float
    probe_target: float
    envelope: float
    flagged: bool

    @property
    def inner_drift(self) -> float:
        return (1.0 - self.delta ** 0.25) - self.inner_radius

    @property
    def holds(self) -> bool:
        return self.inner_radius >= self.inner_target and self.probe_radius >= self.probe_target


def compa_bounds(delta: float, Lambda: float, h: float | None = None) -> CompaBounds:
    """Run both barrier iterations for closeness ``delta`` and forcing bound ``Lambda``.

    ``h`` defaults to ``sqrt(delta) / 200``.  ``delta > 0.1`` is outside the
    small-delta regime and is flagged.
    """
    if delta < 0 or Lambda < 0:
        raise ValueError("delta and Lambda must be nonnegative")
    q = delta ** 0.25
    flagged = delta > 0.1
    if delta == 0:
        return CompaBounds(0.0, Lambda, 0.0, 0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, flagged)
    if h is None:
        h = math.sqrt(delta) / 200
    K = int(math.ceil(2 * math.sqrt(delta) / h))
    force = ForcingSpec.constant(-Lambda)
    inner = radii(disk_trajectory(1 - q, h, force, K * h))
    probe = radii(disk_trajectory(4 * q, h, force, K * h))
    return CompaBounds(
        delta=delta, Lambda=Lambda, h=h, steps=K,
        inner_radius=float(inner.min()),
        inner_lemma_bound=(1 - q) - 2 * math.sqrt(delta) * (Lambda + 2),
        inner_target=1 - 2 * q,
        probe_radius=float(probe.min()),
        probe_target=q,
        envelope=5 * q,
        flagged=flagged,
    )
