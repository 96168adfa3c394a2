"""Integrator correctness: exact solutions, convergence order, determinism, aborts."""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dpdflock.engine import (
    DIVERGENCE_LIMIT,
    InitSpec,
    IntegrationError,
    RunConfig,
    run,
    sample_initial,
    verlet_step,
)
from dpdflock.leader import UniformLine
from dpdflock.model import ControlParams, ModelParams, SwarmState

STILL = UniformLine(np.zeros(3), np.array([1.0, 0.0, 0.0]), speed=0.0)
FREE = ControlParams(alpha=0.0, r0=0.0, beta=0.0, v0=0.0)


def make_cfg(**kw):
    args = dict(
        model=ModelParams(n_agents=2),
        control=ControlParams(alpha=1.0, r0=4.64, beta=1.0, v0=0.5),
        trajectory=STILL,
        dt=1e-2,
        n_steps=100,
        seed=0,
        record_every=10,
    )
    args.update(kw)
    return RunConfig(**args)


# ---------------------------------------------------------------------------
# initial sampling
# ---------------------------------------------------------------------------


def test_sample_initial_supports():
    lead_q = np.array([5.0, -3.0, 2.0])
    traj = UniformLine(lead_q, np.array([0.0, 1.0, 0.0]), speed=2.0)
    cfg = make_cfg(
        model=ModelParams(n_agents=500),
        trajectory=traj,
        init=InitSpec(r_init=4.0, vel_std=1.0, vel_support=0.8),
        seed=11,
    )
    state = sample_initial(cfg)
    assert state.time == 0.0
    q_off = np.linalg.norm(state.positions - lead_q, axis=1)
    v_off = np.linalg.norm(state.velocities - np.array([0.0, 2.0, 0.0]), axis=1)
    assert q_off.max() <= 4.0
    assert v_off.max() <= 0.8
    # the ball is actually explored, not collapsed to its centre
    assert q_off.max() > 2.0
    assert v_off.max() > 0.4


def test_sample_initial_deterministic_and_stream_separation():
    cfg = make_cfg(model=ModelParams(n_agents=8), seed=3)
    a = sample_initial(cfg)
    b = sample_initial(cfg)
    assert_array_equal(a.positions, b.positions)
    assert_array_equal(a.velocities, b.velocities)

    other_seed = sample_initial(make_cfg(model=ModelParams(n_agents=8), seed=4))
    assert not np.array_equal(a.positions, other_seed.positions)

    other_run = sample_initial(make_cfg(model=ModelParams(n_agents=8), seed=3, run_index=1))
    assert not np.array_equal(a.positions, other_run.positions)


def test_sample_initial_statistics():
    # per-coordinate mean of a uniform ball: 0 +/- r_init/sqrt(5)/sqrt(N)
    n = 20_000
    cfg = make_cfg(model=ModelParams(n_agents=n), seed=0, init=InitSpec(r_init=10.0))
    state = sample_initial(cfg)
    sigma_mean = 10.0 / math.sqrt(5) / math.sqrt(n)
    assert np.abs(state.positions.mean(axis=0)).max() < 3 * sigma_mean
    assert np.abs(state.velocities.mean(axis=0)).max() < 3 / math.sqrt(n)
    # radial second moment of the ball: 3/5 r^2
    r2 = (state.positions**2).sum(axis=1).mean()
    assert r2 == pytest.approx(0.6 * 100.0, rel=0.02)


def test_init_spec_validation():
    with pytest.raises(ValueError):
        InitSpec(r_init=0.0)
    with pytest.raises(ValueError):
        InitSpec(vel_support=0.0)
    with pytest.raises(ValueError):
        InitSpec(vel_std=-1.0)


# ---------------------------------------------------------------------------
# exact solutions
# ---------------------------------------------------------------------------


def test_free_flight_is_exact():
    q0 = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
    v0 = np.array([[1.0, -2.0, 0.5], [0.0, 1.0, 0.0]])
    cfg = make_cfg(
        model=ModelParams(n_agents=2, a_coef=0.0, b_coef=0.0),
        control=FREE,
        dt=1e-2,
        n_steps=500,
        record_every=500,
        record_states=True,
    )
    rec = run(cfg, initial_state=SwarmState(0.0, q0, v0))
    assert rec.status == "completed"
    t_end = rec.times[-1]
    assert t_end == pytest.approx(5.0, rel=1e-12)
    assert_allclose(rec.positions[-1], q0 + t_end * v0, rtol=1e-12)
    assert_allclose(rec.velocities[-1], v0, rtol=0, atol=0)


def damped_oscillator_exact(x0, w0, alpha, beta, t):
    """Reference solution of x'' = -alpha x - beta x' (underdamped branch)."""
    wd = math.sqrt(alpha - beta**2 / 4.0)
    decay = np.exp(-0.5 * beta * t)
    a, b = x0, (w0 + 0.5 * beta * x0) / wd
    x = decay * (a * np.cos(wd * t) + b * np.sin(wd * t))
    v = decay * (wd * (b * np.cos(wd * t) - a * np.sin(wd * t))) - 0.5 * beta * x
    return x, v


def test_damped_oscillator_closed_form():
    # single agent, zero thresholds: the feedback is exactly linear damping
    cp = ControlParams(alpha=1.0, r0=0.0, beta=0.5, v0=0.0)
    cfg = make_cfg(
        model=ModelParams(n_agents=1),
        control=cp,
        dt=1e-3,
        n_steps=10_000,
        record_every=100,
        record_states=True,
    )
    x0 = np.array([[1.0, 0.0, 0.0]])
    w0 = np.array([[0.0, 0.5, 0.0]])
    rec = run(cfg, initial_state=SwarmState(0.0, x0, w0))
    assert rec.status == "completed"
    for k, t in enumerate(rec.times):
        for axis in range(3):
            x_exact, v_exact = damped_oscillator_exact(x0[0, axis], w0[0, axis], 1.0, 0.5, t)
            assert abs(rec.positions[k][0, axis] - x_exact) < 1e-4
            assert abs(rec.velocities[k][0, axis] - v_exact) < 1e-4


def test_second_order_convergence():
    # Richardson triple: halving dt must shrink the terminal error ~4x
    cp = ControlParams(alpha=1.0, r0=0.0, beta=0.5, v0=0.0)
    x0 = np.array([[1.0, 0.0, 0.0]])
    w0 = np.array([[0.0, 0.5, 0.0]])

    def terminal(dt, n_steps):
        cfg = make_cfg(
            model=ModelParams(n_agents=1),
            control=cp,
            dt=dt,
            n_steps=n_steps,
            record_every=n_steps,
            record_states=True,
        )
        return run(cfg, initial_state=SwarmState(0.0, x0, w0)).positions[-1][0, 0]

    p1 = terminal(0.04, 50)
    p2 = terminal(0.02, 100)
    p4 = terminal(0.01, 200)
    ratio = (p1 - p2) / (p2 - p4)
    assert 3.0 < ratio < 5.0


def test_time_reversibility():
    # conservative forces only: the scheme is symmetric under v -> -v
    mp = ModelParams(n_agents=3, a_coef=10.0, b_coef=0.0)
    cp = ControlParams(alpha=1.0, r0=0.0, beta=0.0, v0=0.0)
    q = np.array([[0.3, 0.0, 0.0], [-0.2, 0.4, 0.0], [0.1, -0.3, 0.5]])
    v = np.array([[0.1, 0.0, 0.2], [0.0, -0.1, 0.0], [-0.2, 0.1, 0.0]])
    state = SwarmState(0.0, q, v)
    for _ in range(200):
        state = verlet_step(state, STILL, mp, cp, 1e-3)
    state = SwarmState(state.time, state.positions, -state.velocities)
    for _ in range(200):
        state = verlet_step(state, STILL, mp, cp, 1e-3)
    assert_allclose(state.positions, q, rtol=1e-6, atol=1e-9)
    assert_allclose(state.velocities, -v, rtol=1e-6, atol=1e-9)


# ---------------------------------------------------------------------------
# run loop bookkeeping
# ---------------------------------------------------------------------------


def test_run_matches_chained_single_steps():
    cfg = make_cfg(
        model=ModelParams(n_agents=4),
        control=ControlParams(alpha=1.0, r0=1.0, beta=1.0, v0=0.5),
        dt=1e-2,
        n_steps=50,
        record_every=1,
        record_states=True,
        seed=7,
        init=InitSpec(r_init=2.0, vel_std=0.5, vel_support=0.5),
    )
    rec = run(cfg)
    state = sample_initial(cfg)
    assert_array_equal(rec.positions[0], state.positions)
    assert_array_equal(rec.velocities[0], state.velocities)
    for k in range(1, cfg.n_steps + 1):
        state = verlet_step(state, cfg.trajectory, cfg.model, cfg.control, cfg.dt)
        assert_array_equal(rec.positions[k], state.positions)
        assert_array_equal(rec.velocities[k], state.velocities)


def test_run_is_deterministic():
    cfg = make_cfg(n_steps=200, record_every=20)
    a = run(cfg)
    b = run(cfg)
    assert_array_equal(a.q_dev, b.q_dev)
    assert_array_equal(a.u_bar, b.u_bar)
    assert_array_equal(a.energy, b.energy)


def test_sample_cadence_and_horizon():
    cfg = make_cfg(n_steps=100, record_every=30)
    rec = run(cfg)
    # samples at step 0, 30, 60, 90 and the final step
    assert_allclose(rec.times, [0.0, 0.3, 0.6, 0.9, 1.0], rtol=1e-12)
    assert rec.horizon == pytest.approx(1.0, rel=1e-12)
    assert rec.n_agents == 2 and rec.dim == 3
    assert rec.positions is None  # frames only on request


def test_u_bar_monotone_and_energy_finite():
    cfg = make_cfg(n_steps=300, record_every=10)
    rec = run(cfg)
    assert rec.u_bar[0] == 0.0
    assert np.all(np.diff(rec.u_bar) >= 0.0)
    assert np.all(np.isfinite(rec.energy))
    assert np.all(rec.energy >= 0.0)


def test_zero_steps_yields_single_sample():
    cfg = make_cfg(n_steps=0)
    rec = run(cfg)
    assert rec.times.shape == (1,)
    assert rec.times[0] == 0.0
    assert rec.u_bar[0] == 0.0
    assert rec.status == "completed"
    assert rec.horizon == 0.0


def test_run_config_validation():
    with pytest.raises(ValueError):
        make_cfg(dt=0.0)
    with pytest.raises(ValueError):
        make_cfg(n_steps=-1)
    with pytest.raises(ValueError):
        make_cfg(record_every=0)
    with pytest.raises(ValueError):
        make_cfg(run_index=-1)


def test_initial_state_shape_mismatch():
    cfg = make_cfg(model=ModelParams(n_agents=3))
    bad = SwarmState(0.0, np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        run(cfg, initial_state=bad)


# ---------------------------------------------------------------------------
# divergence handling
# ---------------------------------------------------------------------------

RUNAWAY = ControlParams(alpha=1.0, r0=0.0, beta=0.0, v0=0.0, k_kind="exponential")


def test_run_aborts_on_divergence():
    cfg = make_cfg(
        model=ModelParams(n_agents=1),
        control=RUNAWAY,
        dt=1e-2,
        n_steps=100,
        record_every=1,
    )
    far = SwarmState(0.0, np.array([[30.0, 0.0, 0.0]]), np.zeros((1, 3)))
    rec = run(cfg, initial_state=far)
    assert rec.status == "aborted"
    assert rec.abort_time is not None and rec.abort_time <= 3 * cfg.dt
    assert rec.abort_agent == 0
    assert rec.abort_reason
    # the partial record is still usable
    assert rec.times.shape[0] >= 1
    assert np.all(np.isfinite(rec.u_bar))


def test_verlet_step_raises_on_divergence():
    mp = ModelParams(n_agents=1)
    far = SwarmState(0.0, np.array([[30.0, 0.0, 0.0]]), np.zeros((1, 3)))
    state = far
    with pytest.raises(IntegrationError) as err:
        for _ in range(5):
            state = verlet_step(state, STILL, mp, RUNAWAY, 1e-2)
    assert err.value.agent == 0
    assert err.value.time >= 0.0
    assert str(err.value)


def test_divergence_limit_is_generous():
    # a legitimately large but finite flock must not trip the guard
    q = np.array([[1e6, 0.0, 0.0], [1e6 + 10.0, 0.0, 0.0]])
    state = SwarmState(0.0, q, np.zeros((2, 3)))
    mp = ModelParams(n_agents=2)
    out = verlet_step(state, STILL, mp, FREE, 1e-2)
    assert np.all(np.isfinite(out.positions))
    assert DIVERGENCE_LIMIT == 1e9
