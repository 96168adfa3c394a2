"""Reference trajectories: closed forms, smoothness at junctions, and mission assembly."""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dpdflock.leader import (
    ArcSegment,
    Circle,
    ConstAccelSegment,
    LeaderState,
    Mission,
    UniformLine,
    accel_bound,
    build_mission,
    leader_state,
)


def fd_check(traj, times, eps=1e-6, rtol=1e-6, atol=1e-8):
    """Central differences of q and v must reproduce v and f away from junctions."""
    for t in times:
        sm = leader_state(traj, t - eps)
        s0 = leader_state(traj, t)
        sp = leader_state(traj, t + eps)
        assert_allclose((sp.q_l - sm.q_l) / (2 * eps), s0.v_l, rtol=rtol, atol=atol)
        assert_allclose((sp.v_l - sm.v_l) / (2 * eps), s0.f_l, rtol=rtol, atol=atol)


# ---------------------------------------------------------------------------
# uniform line
# ---------------------------------------------------------------------------


def test_line_state():
    traj = UniformLine(np.array([1.0, 2.0, 3.0]), np.array([0.0, 0.0, 2.0]), speed=3.0)
    st = leader_state(traj, 4.0)
    assert_allclose(st.q_l, [1.0, 2.0, 15.0])
    assert_allclose(st.v_l, [0.0, 0.0, 3.0])
    assert_allclose(st.f_l, np.zeros(3))
    assert accel_bound(traj) == 0.0


def test_line_rejects_degenerate_direction():
    with pytest.raises(ValueError):
        UniformLine(np.zeros(3), np.zeros(3), speed=1.0)
    with pytest.raises(ValueError):
        UniformLine(np.zeros(3), np.array([1.0, 0, 0]), speed=-1.0)


def test_stationary_line():
    traj = UniformLine(np.array([5.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]), speed=0.0)
    st = leader_state(traj, 100.0)
    assert_allclose(st.q_l, [5.0, 0.0, 0.0])
    assert_allclose(st.v_l, np.zeros(3))


def test_line_fd(rng):
    traj = UniformLine(rng.standard_normal(3), rng.standard_normal(3), speed=2.5)
    fd_check(traj, [0.0, 1.3, 17.0])


# ---------------------------------------------------------------------------
# circle
# ---------------------------------------------------------------------------


def make_circle(radius=46.4, speed=1.0):
    return Circle(
        center=np.zeros(3),
        radius=radius,
        speed=speed,
        e1=np.array([1.0, 0.0, 0.0]),
        e2=np.array([0.0, 1.0, 0.0]),
    )


def test_circle_period_and_centripetal_accel():
    traj = make_circle()
    period = 2 * math.pi * 46.4
    s0 = leader_state(traj, 0.0)
    s1 = leader_state(traj, period)
    assert_allclose(s0.q_l, s1.q_l, atol=1e-9)
    assert_allclose(s0.v_l, s1.v_l, atol=1e-12)
    # |f| = v^2 / R, directed at the centre
    assert np.linalg.norm(s0.f_l) == pytest.approx(1.0 / 46.4)
    assert np.linalg.norm(s0.f_l) == pytest.approx(0.021551724137931036)
    assert_allclose(s0.f_l / np.linalg.norm(s0.f_l), -s0.q_l / np.linalg.norm(s0.q_l))
    assert accel_bound(traj) == pytest.approx(1.0 / 46.4)


def test_circle_speed_is_constant(rng):
    traj = make_circle(radius=3.0, speed=2.0)
    for t in rng.uniform(0, 50, size=20):
        st = leader_state(traj, float(t))
        assert np.linalg.norm(st.v_l) == pytest.approx(2.0)
        assert np.linalg.norm(st.q_l) == pytest.approx(3.0)


def test_circle_fd():
    fd_check(make_circle(radius=5.0, speed=1.5), [0.0, 2.0, 9.7], rtol=1e-5, atol=1e-6)


def test_circle_rejects_bad_axes():
    with pytest.raises(ValueError):
        Circle(np.zeros(3), 1.0, 1.0, np.array([1.0, 0, 0]), np.array([1.0, 0, 0]))
    with pytest.raises(ValueError):
        Circle(np.zeros(3), 1.0, 1.0, np.array([2.0, 0, 0]), np.array([0.0, 1, 0]))
    with pytest.raises(ValueError):
        Circle(np.zeros(3), -1.0, 1.0, np.array([1.0, 0, 0]), np.array([0.0, 1, 0]))


# ---------------------------------------------------------------------------
# mission assembly
# ---------------------------------------------------------------------------

START = np.zeros(3)
TARGET = np.array([100.0, 0.0, 0.0])


def make_test_mission(**kw):
    args = dict(
        start=START,
        target=TARGET,
        cruise_speed=1.0,
        n_rotations=3,
        rot_radius=10.0,
        accel=0.1,
    )
    args.update(kw)
    return build_mission(**args)


def the_arc(mission):
    (arc,) = [s for s in mission.segments if isinstance(s, ArcSegment)]
    return arc


def test_mission_stage_structure():
    m = make_test_mission()
    assert isinstance(m.segments[0], ConstAccelSegment)
    assert isinstance(m.segments[-1], ConstAccelSegment)
    arc = the_arc(m)
    # rest-to-rest legs are slower than a fly-through, so reaching the loop
    # takes at least distance/speed
    entry = leader_state(m, arc.t0).q_l
    assert arc.t0 >= np.linalg.norm(entry - START) / 1.0 - 1e-9
    # the loop stage lasts exactly n_rotations full turns at cruise speed
    assert arc.duration == pytest.approx(3 * 2 * math.pi * 10.0 / 1.0)


def test_mission_arc_entry_geometry():
    m = make_test_mission()
    arc = the_arc(m)
    entry_state = leader_state(m, arc.t0 + 1e-12)
    # entry sits on the loop circle, offset perpendicular to the approach line
    offset = entry_state.q_l - TARGET
    assert np.linalg.norm(offset) == pytest.approx(10.0)
    u = (TARGET - START) / np.linalg.norm(TARGET - START)
    assert abs(offset @ u) < 1e-9
    # and the loop is entered at cruise speed, tangentially (along the approach)
    assert_allclose(entry_state.v_l, u, atol=1e-9)


def test_mission_junction_continuity():
    m = make_test_mission()
    for seg in m.segments[1:]:
        t = seg.t0
        before = leader_state(m, t - 1e-9)
        after = leader_state(m, t + 1e-9)
        assert_allclose(before.q_l, after.q_l, atol=1e-6)
        assert_allclose(before.v_l, after.v_l, atol=1e-6)


def test_mission_starts_and_ends_at_rest():
    m = make_test_mission()
    first = leader_state(m, 0.0)
    assert_allclose(first.q_l, START, atol=1e-12)
    assert_allclose(first.v_l, np.zeros(3), atol=1e-12)
    last = leader_state(m, m.duration)
    assert_allclose(last.v_l, np.zeros(3), atol=1e-9)
    # the return leg comes home
    assert_allclose(last.q_l, START, atol=1e-6)
    # clamped beyond the end: permanent rest
    later = leader_state(m, m.duration + 50.0)
    assert_allclose(later.q_l, last.q_l, atol=1e-12)
    assert_allclose(later.v_l, np.zeros(3))
    assert_allclose(later.f_l, np.zeros(3))


def test_mission_fd_interior():
    m = make_test_mission()
    arc = the_arc(m)
    # probe well inside segments, away from every junction stencil
    times = [arc.t0 / 2.0, arc.t0 + arc.duration / 2.0, m.duration - 1.0]
    fd_check(m, times, rtol=1e-4, atol=1e-5)


def test_mission_accel_bound_attained():
    m = make_test_mission()
    bound = accel_bound(m)
    grid = np.linspace(0.0, m.duration, 20_001)
    mags = np.array([np.linalg.norm(leader_state(m, float(t)).f_l) for t in grid])
    assert mags.max() <= bound + 1e-9
    assert mags.max() == pytest.approx(bound, rel=1e-6)


def test_mission_triangular_fallback():
    # cruise speed so high the straight legs can never reach it
    m = make_test_mission(cruise_speed=10.0, accel=0.1)
    arc = the_arc(m)
    blend = m.segments[[s.t0 for s in m.segments].index(arc.t0) - 1]
    leg_end = blend.t0
    grid = np.linspace(0.0, leg_end * (1 - 1e-9), 5_001)
    speeds = [np.linalg.norm(leader_state(m, float(t)).v_l) for t in grid]
    assert max(speeds) < 10.0  # the plateau was truncated away
    # triangular legs drop the cruise segment: 2 + blend + arc + blend + 2
    assert len(m.segments) == 7
    assert_allclose(leader_state(m, m.duration).q_l, START, atol=1e-6)


def test_mission_validation():
    with pytest.raises(ValueError):
        make_test_mission(cruise_speed=0.0)
    with pytest.raises(ValueError):
        make_test_mission(rot_radius=-1.0)
    with pytest.raises(ValueError):
        make_test_mission(accel=0.0)
    with pytest.raises(ValueError):
        make_test_mission(n_rotations=0)
    with pytest.raises(ValueError):
        make_test_mission(target=START)


def test_mission_records_build_arguments():
    m = make_test_mission()
    assert m.build_spec is not None
    assert m.build_spec["cruise_speed"] == 1.0
    assert m.build_spec["n_rotations"] == 3
    assert_allclose(m.build_spec["target"], TARGET)
    rebuilt = build_mission(
        np.array(m.build_spec["start"]),
        np.array(m.build_spec["target"]),
        cruise_speed=m.build_spec["cruise_speed"],
        n_rotations=m.build_spec["n_rotations"],
        rot_radius=m.build_spec["rot_radius"],
        accel=m.build_spec["accel"],
    )
    assert rebuilt.duration == pytest.approx(m.duration)


def test_leader_state_rejects_unknown_trajectory():
    with pytest.raises((TypeError, AttributeError)):
        leader_state(object(), 0.0)
