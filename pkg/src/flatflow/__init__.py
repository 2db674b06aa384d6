"""Minimizing-movements flat flow for forced planar curvature motion, with diagnostics."""

from .flow import ForcingSpec, SolverTolerances, StepRecord, Trajectory, mm_step, run_flow
from .geometry import (Contour, GridSpec, ScalarField, SetMask, area, extract_contours,
                       hausdorff_excess, perimeter, signed_distance, symm_diff_area)
from .oracles import DiskState, disk_step, disk_trajectory

__version__ = "0.1.0"

__all__ = [
    "Contour", "DiskState", "ForcingSpec", "GridSpec", "ScalarField", "SetMask", "SolverTolerances",
    "StepRecord", "Trajectory", "area", "disk_step", "disk_trajectory", "extract_contours",
    "hausdorff_excess", "mm_step", "perimeter", "run_flow", "signed_distance", "symm_diff_area",
]
