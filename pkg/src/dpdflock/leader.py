"""Virtual-leader trajectories: analytic position/velocity/acceleration vs time.

Three kinds are supported.  ``UniformLine`` and ``Circle`` are single closed
forms; ``Mission`` is a piecewise itinerary (out-bound leg, a number of full
loops around the destination, and the mirror leg home) assembled by
:func:`build_mission` from constant-acceleration intervals and circular arcs
so that velocity is continuous at every junction.

All trajectories are immutable and safe to query concurrently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

__all__ = [
    "LeaderState",
    "UniformLine",
    "Circle",
    "ConstAccelSegment",
    "ArcSegment",
    "Mission",
    "LeaderTrajectory",
    "leader_state",
    "accel_bound",
    "build_mission",
]


@dataclass(frozen=True)
class LeaderState:
    """Leader kinematics at one instant: position, velocity, acceleration."""

    q_l: np.ndarray
    v_l: np.ndarray
    f_l: np.ndarray


def _vec(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.shape[0] not in (2, 3):
        raise ValueError(f"expected a 2- or 3-vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class UniformLine:
    """Straight coasting at constant velocity; zero acceleration forever."""

    start: Tuple[float, ...] = (0.0, 0.0, 0.0)
    direction: Tuple[float, ...] = (1.0, 0.0, 0.0)
    speed: float = 1.0

    def __post_init__(self):
        d = _vec(self.direction)
        n = np.linalg.norm(d)
        if n == 0.0 and self.speed != 0.0:
            raise ValueError("direction must be nonzero for a moving line")
        object.__setattr__(self, "start", tuple(float(c) for c in _vec(self.start)))
        if n > 0:
            d = d / n
        object.__setattr__(self, "direction", tuple(float(c) for c in d))
        if self.speed < 0:
            raise ValueError("speed must be non-negative")

    def state(self, t: float) -> LeaderState:
        d = np.array(self.direction)
        q = np.array(self.start) + self.speed * t * d
        return LeaderState(q, self.speed * d, np.zeros_like(d))


@dataclass(frozen=True)
class Circle:
    """Uniform circular motion in the plane spanned by two orthonormal axes.

    Position is ``center + radius * (cos(w t) e1 + sin(w t) e2)`` with angular
    rate ``w = speed / radius``; speed is constant and the acceleration is the
    centripetal vector of magnitude ``speed**2 / radius``.
    """

    center: Tuple[float, ...] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    speed: float = 1.0
    e1: Tuple[float, ...] = (1.0, 0.0, 0.0)
    e2: Tuple[float, ...] = (0.0, 1.0, 0.0)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        c = _vec(self.center)
        a = _vec(self.e1)
        b = _vec(self.e2)
        if abs(np.linalg.norm(a) - 1.0) > 1e-9 or abs(np.linalg.norm(b) - 1.0) > 1e-9:
            raise ValueError("plane axes must be unit vectors")
        if abs(float(a @ b)) > 1e-9:
            raise ValueError("plane axes must be orthogonal")
        object.__setattr__(self, "center", tuple(float(x) for x in c))
        object.__setattr__(self, "e1", tuple(float(x) for x in a))
        object.__setattr__(self, "e2", tuple(float(x) for x in b))

    def state(self, t: float) -> LeaderState:
        c = np.array(self.center)
        a = np.array(self.e1)
        b = np.array(self.e2)
        omega = self.speed / self.radius
        ang = omega * t
        radial = math.cos(ang) * a + math.sin(ang) * b
        tangent = -math.sin(ang) * a + math.cos(ang) * b
        q = c + self.radius * radial
        v = self.speed * tangent
        f = -(self.speed**2 / self.radius) * radial
        return LeaderState(q, v, f)


@dataclass(frozen=True)
class ConstAccelSegment:
    """One constant-acceleration interval with its absolute entry state."""

    t0: float
    duration: float
    q0: Tuple[float, ...]
    v0: Tuple[float, ...]
    accel: Tuple[float, ...]

    def state(self, t: float) -> LeaderState:
        tau = t - self.t0
        q0 = np.array(self.q0)
        v0 = np.array(self.v0)
        a = np.array(self.accel)
        return LeaderState(q0 + v0 * tau + 0.5 * a * tau**2, v0 + a * tau, a)

    @property
    def accel_mag(self) -> float:
        return float(np.linalg.norm(self.accel))


@dataclass(frozen=True)
class ArcSegment:
    """Circular-arc interval at constant speed (rotation about a fixed center)."""

    t0: float
    duration: float
    center: Tuple[float, ...]
    radius: float
    omega: float
    e1: Tuple[float, ...]
    e2: Tuple[float, ...]

    def state(self, t: float) -> LeaderState:
        tau = t - self.t0
        c = np.array(self.center)
        a = np.array(self.e1)
        b = np.array(self.e2)
        ang = self.omega * tau
        radial = math.cos(ang) * a + math.sin(ang) * b
        tangent = -math.sin(ang) * a + math.cos(ang) * b
        q = c + self.radius * radial
        v = self.radius * self.omega * tangent
        f = -self.radius * self.omega**2 * radial
        return LeaderState(q, v, f)

    @property
    def accel_mag(self) -> float:
        return float(self.radius * self.omega**2)


@dataclass(frozen=True)
class Mission:
    """Piecewise itinerary; after the last segment the leader rests in place.

    Queries beyond the total duration clamp to terminal uniform motion, which
    for every mission built here is rest at the home position.
    """

    segments: Tuple[Union[ConstAccelSegment, ArcSegment], ...]
    terminal_q: Tuple[float, ...]
    #: construction arguments when assembled by build_mission; lets a mission
    #: be re-serialised compactly instead of segment by segment
    build_spec: Optional[dict] = field(default=None, compare=False, repr=False)

    @property
    def duration(self) -> float:
        last = self.segments[-1]
        return last.t0 + last.duration

    def state(self, t: float) -> LeaderState:
        if t >= self.duration:
            q = np.array(self.terminal_q)
            return LeaderState(q, np.zeros_like(q), np.zeros_like(q))
        for seg in self.segments:
            if t < seg.t0 + seg.duration:
                return seg.state(t)
        # floating-point edge: t fractionally below duration but past the last end
        return self.segments[-1].state(t)


LeaderTrajectory = Union[UniformLine, Circle, Mission]


def leader_state(traj: LeaderTrajectory, t: float) -> LeaderState:
    """Evaluate the leader's analytic state at time ``t >= 0``."""
    return traj.state(t)


def accel_bound(traj: LeaderTrajectory) -> float:
    """Exact supremum of the leader's acceleration magnitude over all time.

    Analytic per kind: zero for a line, the centripetal constant for a circle,
    and the maximum over segments for a mission (the post-mission rest phase
    contributes nothing).
    """
    if isinstance(traj, UniformLine):
        return 0.0
    if isinstance(traj, Circle):
        return traj.speed**2 / traj.radius
    return max((seg.accel_mag for seg in traj.segments), default=0.0)


def _perp_unit(u: np.ndarray) -> np.ndarray:
    """Deterministic unit vector orthogonal to ``u`` (|u| = 1)."""
    basis = np.zeros_like(u)
    basis[int(np.argmin(np.abs(u)))] = 1.0
    p = basis - (basis @ u) * u
    return p / np.linalg.norm(p)


def _trapezoid_legs(t0, q_from, q_to, speed, accel):
    """Rest-to-rest straight legs: ramp up, optional cruise, ramp down.

    Falls back to a triangular profile when the distance is too short to
    reach cruise speed.  Returns (segments, end_time); end position is q_to
    up to roundoff.
    """
    disp = q_to - q_from
    dist = float(np.linalg.norm(disp))
    if dist == 0.0:
        return [], t0
    m = disp / dist
    segs = []
    t = t0
    if dist >= speed**2 / accel:
        t_ramp = speed / accel
        d_ramp = 0.5 * speed**2 / accel
        t_cruise = (dist - 2.0 * d_ramp) / speed
        q1 = q_from + d_ramp * m
        q2 = q_to - d_ramp * m
        v_c = speed * m
        segs.append(ConstAccelSegment(t, t_ramp, tuple(q_from), (0.0,) * len(m), tuple(accel * m)))
        t += t_ramp
        if t_cruise > 0:
            segs.append(ConstAccelSegment(t, t_cruise, tuple(q1), tuple(v_c), (0.0,) * len(m)))
            t += t_cruise
        segs.append(ConstAccelSegment(t, t_ramp, tuple(q2), tuple(v_c), tuple(-accel * m)))
        t += t_ramp
    else:
        v_peak = math.sqrt(accel * dist)
        t_half = v_peak / accel
        q_mid = q_from + 0.5 * disp
        segs.append(ConstAccelSegment(t, t_half, tuple(q_from), (0.0,) * len(m), tuple(accel * m)))
        t += t_half
        segs.append(
            ConstAccelSegment(t, t_half, tuple(q_mid), tuple(v_peak * m), tuple(-accel * m))
        )
        t += t_half
    return segs, t


def build_mission(
    start,
    target,
    cruise_speed: float,
    n_rotations: int,
    rot_radius: float,
    accel: float = 0.05,
) -> Mission:
    """Assemble the three-stage mission: travel out, loop the target, return.

    Stage 1 drives from rest at ``start`` to a staging point short of the
    loop, then a single constant-acceleration blend brings the leader onto
    the circle of radius ``rot_radius`` about ``target`` with an exactly
    tangential velocity.  Stage 2 is ``n_rotations`` full loops at
    ``cruise_speed``.  Stage 3 mirrors stage 1 back to rest at ``start``.
    Velocity is continuous at every junction by construction.
    """
    q_start = _vec(start)
    q_target = _vec(target)
    if cruise_speed <= 0:
        raise ValueError("cruise_speed must be positive")
    if rot_radius <= 0:
        raise ValueError("rot_radius must be positive")
    if accel <= 0:
        raise ValueError("accel must be positive")
    if int(n_rotations) != n_rotations or n_rotations < 1:
        raise ValueError("n_rotations must be a positive integer")
    disp = q_target - q_start
    dist = float(np.linalg.norm(disp))
    if dist == 0.0:
        raise ValueError("start and target must be distinct")

    u = disp / dist
    p_hat = _perp_unit(u)
    # entry point on the loop, with the travel direction as its tangent
    entry = q_target - rot_radius * p_hat
    blend_len = 0.5 * cruise_speed**2 / accel
    staging = entry - blend_len * u
    exit_pt = entry + blend_len * u

    segs = []
    # stage 1: rest-to-rest run to the staging point, then blend up to speed
    leg, t = _trapezoid_legs(0.0, q_start, staging, cruise_speed, accel)
    segs += leg
    t_blend = cruise_speed / accel
    segs.append(
        ConstAccelSegment(t, t_blend, tuple(staging), (0.0,) * len(u), tuple(accel * u))
    )
    t += t_blend

    # stage 2: full loops about the target (entry radial is -p_hat)
    omega = cruise_speed / rot_radius
    arc_dur = n_rotations * 2.0 * math.pi / omega
    segs.append(
        ArcSegment(t, arc_dur, tuple(q_target), rot_radius, omega, tuple(-p_hat), tuple(u))
    )
    t += arc_dur

    # stage 3: blend down to rest, then mirror leg home
    segs.append(
        ConstAccelSegment(
            t, t_blend, tuple(entry), tuple(cruise_speed * u), tuple(-accel * u)
        )
    )
    t += t_blend
    leg, t = _trapezoid_legs(t, exit_pt, q_start, cruise_speed, accel)
    segs += leg

    spec = {
        "start": [float(c) for c in q_start],
        "target": [float(c) for c in q_target],
        "cruise_speed": float(cruise_speed),
        "n_rotations": int(n_rotations),
        "rot_radius": float(rot_radius),
        "accel": float(accel),
    }
    return Mission(tuple(segs), tuple(float(c) for c in q_start), build_spec=spec)
