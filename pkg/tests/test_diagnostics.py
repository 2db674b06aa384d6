import json
import math

import numpy as np
import pytest

from flatflow import shapes
from flatflow.diagnostics import (boundary_dissipation, check_comparison, check_disjoint,
                                  check_energy_quasimonotone, check_step_minimality, displacement_fit, energy,
                                  mm_dissipation, overlap_depth, penetration_depth)
from flatflow.flow import ForcingSpec, run_flow
from flatflow.geometry import Contour, GridSpec


@pytest.fixture(scope="module")
def grid():
    return GridSpec.square(2.0, 128)


def test_energy_of_unit_disk(grid):
    assert energy(shapes.disk(grid, r=1.0), 1.0) == pytest.approx(math.pi, rel=1e-2)


def test_mm_dissipation_zero_for_same_set(grid):
    E = shapes.disk(grid)
    assert mm_dissipation(E, E, 1e-2) == 0.0
    with pytest.raises(ValueError):
        mm_dissipation(E, E, 0.0)


def test_boundary_dissipation_of_exact_circle():
    th = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    c = Contour(np.column_stack([np.cos(th), np.sin(th)]), curvature=np.ones(400))
    assert boundary_dissipation([c], 1.0) == 0.0
    assert boundary_dissipation([c], 0.0) == pytest.approx(2 * np.pi, rel=1e-3)


def test_displacement_fit_for_exact_sqrt_law():
    h = np.array([1e-2, 4e-3, 1e-3])
    fit = displacement_fit(h, 0.7 * np.sqrt(h))
    assert fit["spread"] == pytest.approx(1.0)
    assert fit["loglog_slope"] == pytest.approx(0.5)
    assert fit["C1"] == pytest.approx(0.7)


def test_penetration_and_overlap(grid):
    A = shapes.disk(grid, r=1.0)
    B = shapes.disk(grid, r=0.8)
    assert penetration_depth(A, B) == 0.0
    assert penetration_depth(B, A) > 0
    C = shapes.disk(grid, center=(1.5, 0.0), r=0.3)
    assert overlap_depth(B, C) == 0.0


def test_energy_and_minimality_checks_on_short_run(grid):
    traj = run_flow(shapes.ellipse(grid, semi_x=1.2, semi_y=0.8), 1e-2, ForcingSpec.constant(1.0), 0.2)
    rep = check_energy_quasimonotone(traj, 1.0, burn_in=2)
    assert rep.passed, rep.details
    mini = check_step_minimality(traj)
    assert mini.passed, mini.details
    json.dumps(rep.to_dict())


def test_comparison_checks_on_nested_and_disjoint_pairs(grid):
    h, T = 1e-2, 0.1
    big = run_flow(shapes.disk(grid, r=1.0), h, ForcingSpec.constant(0.5), T)
    small = run_flow(shapes.ellipse(grid, semi_x=0.8, semi_y=0.5), h, ForcingSpec.constant(0.0), T)
    rep = check_comparison(big, small)
    assert rep.passed and rep.summary["steps_checked"] == 11
    left = run_flow(shapes.disk(grid, center=(-0.9, 0.0), r=0.7), h, ForcingSpec.constant(0.5), T)
    right = run_flow(shapes.disk(grid, center=(0.9, 0.0), r=0.7), h, ForcingSpec.constant(-1.0), T)
    assert check_disjoint(left, right).passed
