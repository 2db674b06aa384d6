import json
import math

import numpy as np
import pytest

from flatflow import shapes
from flatflow.alexandrov import (DiskUnion, L1_FLOOR, alexandrov_margins, curvature_deviation, fit_disk_union,
                                 turning_angle, write_profile_csv)
from flatflow.errors import EmptySet
from flatflow.geometry import GridSpec, SetMask, extract_contours


@pytest.fixture(scope="module")
def grid():
    return GridSpec.square(2.5, 256)


def test_exact_disk_is_below_floor(grid):
    rep = fit_disk_union(shapes.disk(grid, center=(0.2, -0.1), r=1.0), 1.0)
    assert rep.N == 1
    assert np.allclose(rep.disks.centers[0], (0.2, -0.1), atol=grid.cell)
    assert rep.l1_dev < L1_FLOOR
    assert rep.sup_excess <= 2 * grid.cell
    assert alexandrov_margins(rep).below_floor


def test_two_separated_disks(grid):
    rep = fit_disk_union(shapes.disk_union(grid, [(-1.2, 0.0), (1.2, 0.0)], 1.0), 1.0)
    assert rep.N == 2 and not rep.contacts
    assert rep.perimeter_gap < 0.02 * 4 * math.pi
    json.dumps(rep.to_dict())


def test_tangent_disks_are_split_at_the_pinch(grid):
    rep = fit_disk_union(shapes.disk_union(grid, [(-1.0, 0.0), (1.0, 0.0)], 1.0), 1.0)
    assert rep.N == 2
    assert rep.contacts == ((0, 1),)
    assert "pinched" in rep.flags or rep.pinches == 0


def test_perturbed_disk_has_measurable_deviation(grid):
    rep = fit_disk_union(shapes.perturbed_disk(grid, 0.1), 1.0)
    m = alexandrov_margins(rep)
    assert not m.below_floor
    assert 0 < m.ratio_excess < 10 and 0 < m.ratio_perimeter < 10


def test_turning_angle_of_circle_is_two_pi(grid):
    c = extract_contours(shapes.disk(grid, r=1.0))[0]
    s, th = turning_angle(c)
    assert th[-1] - th[0] == pytest.approx(2 * np.pi, rel=1e-2)
    assert s[-1] == pytest.approx(c.length)
    l1, _ = curvature_deviation([c], 1.0)
    assert l1 < L1_FLOOR


def test_disk_union_validation():
    with pytest.raises(ValueError):
        DiskUnion(np.zeros((1, 2)), 0.0)
    du = DiskUnion([(0, 0), (3, 4)], 1.0)
    assert du.min_center_distance() == pytest.approx(5.0)
    assert not du.overlaps(0.0)


def test_errors_and_profile_csv(grid, tmp_path):
    with pytest.raises(EmptySet):
        fit_disk_union(SetMask.empty(grid), 1.0)
    with pytest.raises(ValueError):
        fit_disk_union(shapes.disk(grid), -1.0)
    write_profile_csv(extract_contours(shapes.disk(grid)), tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().startswith("component,s,k,theta")
