"""Deviation metrics, task functionals, group characteristics, and the flocking verdict."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .engine import TrajectoryRecord
from .model import ModelParams, SwarmState

__all__ = [
    "FlockVerdict",
    "TaskFunctionals",
    "q_dev",
    "v_dev",
    "task_functionals",
    "group_density",
    "body_speed",
    "classify_flocking",
]

#: verdict levels, weakest to strongest; each implies the previous
FLOCK_LEVELS = ("none", "approximate", "exact", "exact_proper")


@dataclass(frozen=True)
class FlockVerdict:
    """Outcome of the finite-run flocking classification.

    ``level`` is one of :data:`FLOCK_LEVELS`; ``window_start`` is the absolute
    time where the trailing assessment window begins; ``bounds_used`` records
    the (position radius, velocity radius, tolerance) the verdict was
    measured against.
    """

    level: str
    window_start: float
    bounds_used: Tuple[float, float, float]


@dataclass(frozen=True)
class TaskFunctionals:
    """Time-averaged battery drain and formation-quality numbers for one run."""

    u_bar: float
    q_dev_bar: float
    v_dev_bar: float
    horizon: float

    def __post_init__(self):
        for name in ("u_bar", "q_dev_bar", "v_dev_bar", "horizon"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def q_dev(state: SwarmState, leader) -> float:
    """Mean distance of the agents from the leader's position."""
    return float(np.linalg.norm(state.positions - leader.q_l, axis=1).mean())


def v_dev(state: SwarmState, leader) -> float:
    """Mean speed of the agents relative to the leader."""
    return float(np.linalg.norm(state.velocities - leader.v_l, axis=1).mean())


def task_functionals(record: TrajectoryRecord) -> TaskFunctionals:
    """Collapse a record into its three time-averaged functionals.

    The battery series already carries its running integral, so it only needs
    dividing by the horizon; the deviation series are integrated by the
    trapezoid rule over the recorded samples.
    """
    if record.times.size < 2 or record.horizon <= 0:
        raise ValueError("record must span a positive time interval")
    horizon = record.horizon
    return TaskFunctionals(
        u_bar=float(record.u_bar[-1]) / horizon,
        q_dev_bar=float(np.trapezoid(record.q_dev, record.times)) / horizon,
        v_dev_bar=float(np.trapezoid(record.v_dev, record.times)) / horizon,
        horizon=horizon,
    )


def group_density(n: int, d: int, r0: float) -> float:
    """Agents per unit rest volume: ``n * (0.5 / r0)**d``.

    Ratio of the agents' own unit-diameter balls to the volume of the rest
    ball of radius ``r0``; returns ``inf`` for a point-sized rest ball.
    """
    if r0 < 0:
        raise ValueError("r0 must be non-negative")
    if r0 == 0.0:
        return math.inf
    return n * (0.5 / r0) ** d


def body_speed(mp: ModelParams, physical_ratio: float = 10.0) -> float:
    """Leader speed in body lengths per second implied by the force scaling.

    Derived from the relation ``a_coef / b_coef = physical_ratio / v_b``;
    ``physical_ratio`` is the dimensional conservative-to-dissipative force
    ratio (10 for the reference parameterisation used throughout).
    """
    if mp.a_coef <= 0:
        raise ValueError("a_coef must be positive to derive a body speed")
    return physical_ratio * mp.b_coef / mp.a_coef


def classify_flocking(
    record: TrajectoryRecord,
    radius: float,
    vel_radius: float,
    eps: float = 1e-3,
    window: float = 0.1,
) -> FlockVerdict:
    """Grade a finished run on the none/approximate/exact/exact-proper ladder.

    Asymptotic statements are operationalised over a trailing window (the
    last ``window`` fraction of the run): *approximate* needs every agent
    within ``radius`` of the leader and within ``vel_radius`` of its velocity
    throughout the window; *exact* additionally needs the terminal pairwise
    velocity spread at most ``eps``; *proper* tightens that to each agent's
    own velocity deviation.
    """
    if not 0 < window <= 1:
        raise ValueError("window must be a fraction in (0, 1]")
    t_end = record.times[-1]
    window_start = float(t_end - window * record.horizon)
    sel = record.times >= window_start
    if not sel.any():
        raise ValueError("record does not cover the assessment window")

    level = "none"
    if (record.max_q_dev[sel] <= radius).all() and (record.max_v_dev[sel] <= vel_radius).all():
        level = "approximate"
        if record.max_vel_spread[-1] <= eps:
            level = "exact"
            if record.max_v_dev[-1] <= eps:
                level = "exact_proper"
    return FlockVerdict(level, window_start, (radius, vel_radius, eps))
