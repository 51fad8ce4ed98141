"""Downward-facing sensor simulation with altitude-dependent footprint.

The sensor observes the square patch of ground below the pose (side
proportional to altitude, clipped to the map extent) and reports one
averaged value per overlapped map cell.  Measurement noise has two parts:
an altitude term alpha * h, and a coverage term beta * (1 - covered
fraction) that discounts cells only partially inside the footprint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Rect
from .ndtree import NdTree
from .world import GroundTruthField


@dataclass(frozen=True)
class SensorConfig:
    alpha: float = 0.004        # altitude noise, field units^2 per meter
    beta: float = 0.1           # partial-coverage noise weight, field units^2
    footprint_coeff: float = 2.0  # footprint side = coeff * altitude
    sample_noise: bool = True   # draw z from N(avg, noise_var) vs return the exact average

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("noise coefficients must be non-negative")
        if self.footprint_coeff <= 0:
            raise ValueError("footprint_coeff must be positive")


@dataclass(frozen=True)
class Measurement:
    """One averaged cell observation: value, total noise variance, covered fraction."""

    cell_id: int
    z: float
    noise_var: float
    coverage: float


def footprint(pose, cfg: SensorConfig, extent: Rect) -> Rect:
    """Ground patch observed from ``pose`` = (x, y, altitude), clipped to the extent."""
    x, y, h = (float(v) for v in pose)
    if h <= 0:
        raise ValueError("altitude must be positive")
    half = 0.5 * cfg.footprint_coeff * h
    raw = Rect(x - half, x + half, y - half, y + half)
    clipped = raw.intersect(extent)
    if clipped is None:
        raise ValueError(f"footprint at {pose} lies entirely outside the map extent")
    return clipped


def plan_observation(tree: NdTree, pose, cfg: SensorConfig):
    """Cells an observation from ``pose`` would touch, with noise and coverage.

    Returns (cell_ids, noise_vars, coverages) in leaf order, from footprint
    geometry alone; used by the planner to simulate updates without ground
    truth.  noise_var = alpha * h + beta * (1 - covered_area / cell_area).
    """
    h = float(pose[2])
    fov = footprint(pose, cfg, tree.config.extent)
    ids = tree.query_overlapping(fov)
    noise_vars = []
    coverages = []
    for nid in ids:
        cell = tree.rect(nid)
        part = cell.intersect(fov)
        coverage = part.area / cell.area
        noise_vars.append(cfg.alpha * h + cfg.beta * (1.0 - coverage))
        coverages.append(coverage)
    return ids, np.array(noise_vars), np.array(coverages)


def observe(field: GroundTruthField, tree: NdTree, pose, cfg: SensorConfig,
            rng: np.random.Generator) -> list[Measurement]:
    """Simulated measurements for every map cell overlapping the footprint.

    z is the mean of the fine-grid truth inside (cell intersect footprint),
    optionally corrupted with one N(0, noise_var) draw.  Slivers covering no
    fine-grid center are skipped.  Deterministic given (field, tree, pose,
    rng state); with sample_noise off the rng is never consulted.
    """
    fov = footprint(pose, cfg, tree.config.extent)
    ids, noise_vars, coverages = plan_observation(tree, pose, cfg)
    out = []
    for nid, noise_var, coverage in zip(ids, noise_vars, coverages):
        part = tree.rect(nid).intersect(fov)
        ys, xs = field.index_range(part)
        block = field.values[ys, xs]
        if block.size == 0:
            continue
        z = float(block.mean())
        if cfg.sample_noise:
            z += rng.normal(0.0, np.sqrt(noise_var))
        out.append(Measurement(cell_id=nid, z=z, noise_var=float(noise_var),
                               coverage=float(coverage)))
    return out
