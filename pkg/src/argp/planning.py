"""Measurement-site planning: lawnmower coverage and greedy next-best-site.

The greedy planner evaluates, for every site of a two-altitude lattice, the
predicted reduction of hotspot-cell variance per second of flight, flies to
the best site, fuses the real observation and (for the adaptive map) merges.
The mission stops before any action whose completion would exceed the time
budget; mapping and planning times enter the budget as measured wall time
unless fixed synthetic values are configured.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .fileio import atomic_write_lines
from .geometry import Rect
from .mapping import Classification, MapBelief, MergeConfig
from .sensor import SensorConfig, observe, plan_observation

HOVER_TIME_S = 1.0  # flight-cost floor when re-measuring the current site


@dataclass(frozen=True)
class PlannerConfig:
    budget_s: float = 100.0
    speed_mps: float = 2.0
    altitudes: tuple[float, ...] = (2.0, 8.0)
    start: tuple[float, float, float] = (0.0, 20.0, 8.0)


@dataclass(frozen=True)
class SyntheticTimes:
    """Fixed stand-ins for measured wall times, for reproducible runs."""

    planning_s: float = 0.05
    mapping_s: float = 0.05


@dataclass
class MissionStep:
    step: int
    x: float
    y: float
    z: float
    t_flight: float
    t_planning: float
    t_mapping: float
    hs_trace: float
    leaf_count: int
    hs_trace_before: float = float("nan")  # same hotspot set, pre-fusion


@dataclass
class MissionLog:
    steps: list[MissionStep] = field(default_factory=list)
    method: str = ""
    seed: int | None = None

    CSV_HEADER = "step,x,y,z,t_flight,t_planning,t_mapping,hs_trace,leaf_count"

    def elapsed(self) -> float:
        return sum(s.t_flight + s.t_planning + s.t_mapping for s in self.steps)

    def csv_rows(self) -> list[str]:
        rows = [self.CSV_HEADER]
        for s in self.steps:
            rows.append(
                f"{s.step},{s.x!r},{s.y!r},{s.z!r},{s.t_flight!r},"
                f"{s.t_planning!r},{s.t_mapping!r},{s.hs_trace!r},{s.leaf_count}"
            )
        return rows

    def to_csv(self, path) -> None:
        atomic_write_lines(path, self.csv_rows())


def _axis_centers(lo: float, hi: float, side: float) -> np.ndarray:
    """Footprint centers covering [lo, hi]: exact tiling when side divides the
    span, otherwise the minimal count of evenly spaced, overlapping footprints."""
    span = hi - lo
    count = max(1, math.ceil(round(span / side, 9)))
    if count * side <= span + 1e-9 and not math.isclose(count * side, span, rel_tol=1e-9):
        count += 1
    if count == 1 or math.isclose(count * side, span, rel_tol=1e-9):
        if side >= span:
            return np.array([lo + span / 2.0])
        return lo + side / 2.0 + side * np.arange(count)
    return np.linspace(lo + side / 2.0, hi - side / 2.0, count)


def lawnmower_plan(extent: Rect, altitude: float = 2.5,
                   footprint_coeff: float = 2.0) -> np.ndarray:
    """Boustrophedon sweep of non-overlapping footprints covering the extent.

    Requires the footprint side (coeff * altitude) to divide both extent
    sides exactly; rows alternate direction starting at the low corner.
    Returns an ordered (k, 3) array of poses.
    """
    side = footprint_coeff * altitude
    for span, name in ((extent.width, "width"), (extent.height, "height")):
        ratio = span / side
        if not math.isclose(ratio, round(ratio), rel_tol=1e-9):
            raise ValueError(
                f"footprint side {side} m does not divide the extent {name} "
                f"{span} m; adjust the altitude so the sweep tiles exactly"
            )
    xs = extent.x_min + side / 2.0 + side * np.arange(round(extent.width / side))
    ys = extent.y_min + side / 2.0 + side * np.arange(round(extent.height / side))
    poses = []
    for row, y in enumerate(ys):
        row_xs = xs if row % 2 == 0 else xs[::-1]
        poses.extend((x, y, altitude) for x in row_xs)
    return np.array(poses)


def build_lattice(extent: Rect, altitudes=(2.0, 8.0),
                  footprint_coeff: float = 2.0) -> np.ndarray:
    """Discrete action space: per altitude, footprint centers whose union
    covers the extent (exact tiling when possible, evenly spaced overlapping
    sites otherwise).  Ordered by (altitude, y, x); returns (k, 3) poses."""
    sites = []
    for h in sorted(altitudes):
        side = footprint_coeff * h
        xs = _axis_centers(extent.x_min, extent.x_max, side)
        ys = _axis_centers(extent.y_min, extent.y_max, side)
        sites.extend((x, y, h) for y in ys for x in xs)
    return np.array(sites)


def _flight_time(a, b, speed: float) -> float:
    dist = float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    if dist == 0.0:
        return HOVER_TIME_S
    return dist / speed


def reward(belief: MapBelief, cls: Classification, candidate, current_pose,
           speed: float, sensor_cfg: SensorConfig) -> float:
    """Predicted hotspot-variance reduction per second of flight (>= 0).

    Simulates fusing the expected observation at ``candidate``: the
    covariance update does not depend on the measured values, so the
    hotspot-restricted trace reduction equals the hotspot diagonal of
    gain H K, computed here without forming the full posterior:

        sum over hotspot cells i of  K[i, obs] S^-1 K[obs, i]

    divided by the flight time from the current pose (hover-floored when
    the candidate is the current site).
    """
    hs = np.flatnonzero(cls.hs_mask)
    t_fly = _flight_time(current_pose, candidate, speed)
    if hs.size == 0:
        return 0.0
    ids, noise_vars, _ = plan_observation(belief.tree, candidate, sensor_cfg)
    if not ids:
        return 0.0
    idx = np.array([belief.tree.leaf_position(nid) for nid in ids])
    innov = belief.cov[np.ix_(idx, idx)] + np.diag(noise_vars)
    factor = scipy.linalg.cho_factor(innov)
    cross = belief.cov[np.ix_(hs, idx)]                   # |hs| x m
    reduction = float(np.einsum("ij,ji->", cross, scipy.linalg.cho_solve(factor, cross.T)))
    return reduction / t_fly


def hotspot_trace(belief: MapBelief, hs_ids) -> float:
    """Covariance trace restricted to the given hotspot node ids."""
    if not hs_ids:
        return 0.0
    idx = [belief.tree.leaf_position(nid) for nid in hs_ids]
    return float(np.sum(np.diag(belief.cov)[idx]))


def greedy_mission(field, belief: MapBelief, lattice: np.ndarray,
                   cfg: PlannerConfig, sensor_cfg: SensorConfig,
                   classifier: MergeConfig, rng: np.random.Generator,
                   merge: bool = True,
                   synthetic: SyntheticTimes | None = None) -> MissionLog:
    """Greedy budgeted mission; returns the per-step log.

    Loop: classify, score every lattice site, fly to the argmax (ties break
    to the lowest site index), observe, fuse, merge when enabled.  An action
    is only taken if the elapsed time plus its flight time fits the budget,
    so the budget is never exceeded mid-flight; the final mapping update may
    run past it.  With no budget left for any action the log is empty.
    """
    pose = np.asarray(cfg.start, dtype=float)
    elapsed = 0.0
    log = MissionLog()
    step = 0
    while elapsed < cfg.budget_s:
        t0 = time.perf_counter()
        cls = belief.classify_with(classifier)
        scores = [reward(belief, cls, site, pose, cfg.speed_mps, sensor_cfg)
                  for site in lattice]
        best = int(np.argmax(scores))
        t_plan = synthetic.planning_s if synthetic else time.perf_counter() - t0
        elapsed += t_plan

        site = lattice[best]
        t_fly = _flight_time(pose, site, cfg.speed_mps)
        if elapsed + t_fly > cfg.budget_s:
            break
        elapsed += t_fly
        pose = site.copy()

        hs_ids = [nid for nid, keep in zip(belief.tree.leaf_ids(), cls.hs_mask) if keep]
        trace_before = hotspot_trace(belief, hs_ids)
        measurements = observe(field, belief.tree, pose, sensor_cfg, rng)
        t0 = time.perf_counter()
        belief.fuse(measurements)
        t_map = time.perf_counter() - t0
        # trace over the same pre-fusion hotspot set, after fusing but before
        # merging (a merged-away cell no longer has a slot of its own)
        trace_after = hotspot_trace(belief, hs_ids)
        if merge:
            t0 = time.perf_counter()
            belief.merge_pass(belief.classify_with(classifier))
            t_map += time.perf_counter() - t0
        if synthetic:
            t_map = synthetic.mapping_s
        elapsed += t_map

        log.steps.append(MissionStep(
            step=step, x=float(pose[0]), y=float(pose[1]), z=float(pose[2]),
            t_flight=t_fly, t_planning=t_plan, t_mapping=t_map,
            hs_trace=trace_after, leaf_count=belief.tree.n_leaves,
            hs_trace_before=trace_before,
        ))
        step += 1
    return log
