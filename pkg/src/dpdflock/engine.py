"""Initial-condition sampling, the velocity-Verlet integrator, and the run loop.

The ambient drag and the velocity-feedback force depend on velocity, which
plain velocity Verlet cannot handle.  We use the standard DPD workaround: a
half-kick/drift, a velocity prediction at the half-kicked value, a force
evaluation at the predicted velocity, the closing half-kick — and then one
fixed-point refinement of that closing kick so the step-end velocity is
self-consistent to first order.  Forces split into a position-only part
(evaluated once per step) and a cheap velocity part (evaluated per refinement),
so each step costs a single pair-geometry pass.

Randomness comes from Philox (counter-based, 4x64), keyed by the user seed
with the run index placed in the high counter word; distinct runs therefore
use disjoint counter ranges and any (seed, run_index) pair is reproducible on
any platform.  The sampling recipe is part of the contract: agents are drawn
in index order; each position is one candidate at a time from the bounding
cube of the init ball (d uniforms per candidate, rejected outside the ball);
each velocity is a Box-Muller normal (ceil(d/2) uniform pairs per candidate,
using 1-u for the log argument), scaled by the std and rejected outside the
support ball.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .leader import LeaderTrajectory, leader_state
from .model import (
    ControlParams,
    ModelParams,
    SwarmState,
    _conservative_sum,
    _pair_geometry,
    _phi_pair,
)

__all__ = [
    "InitSpec",
    "RunConfig",
    "TrajectoryRecord",
    "IntegrationError",
    "sample_initial",
    "verlet_step",
    "run",
]

#: any coordinate beyond this magnitude is treated as numerical escape
DIVERGENCE_LIMIT = 1e9

_REJECTION_CAP = 1_000_000


class IntegrationError(RuntimeError):
    """The integrator produced a non-finite or runaway state."""

    def __init__(self, time: float, agent: int, reason: str):
        super().__init__(f"integration aborted at t={time:g} (agent {agent}): {reason}")
        self.time = time
        self.agent = agent
        self.reason = reason


@dataclass(frozen=True)
class InitSpec:
    """Random initial-condition parameters, relative to the leader at t = 0."""

    r_init: float = 10.0
    vel_std: float = 1.0
    vel_support: float = 1.0

    def __post_init__(self):
        if self.r_init <= 0:
            raise ValueError("r_init must be positive")
        if self.vel_support <= 0:
            raise ValueError("vel_support must be positive")
        if self.vel_std < 0:
            raise ValueError("vel_std must be non-negative")


@dataclass(frozen=True)
class RunConfig:
    """Everything one simulation needs; hashable ingredients, fully deterministic."""

    model: ModelParams
    control: ControlParams
    trajectory: LeaderTrajectory
    dt: float = 1e-2
    n_steps: int = 100_000
    seed: int = 0
    record_every: int = 100
    init: InitSpec = field(default_factory=InitSpec)
    run_index: int = 0
    record_states: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.run_index < 0:
            raise ValueError("run_index must be non-negative")


@dataclass
class TrajectoryRecord:
    """Sampled series of one run plus abort metadata.

    ``u_bar`` is the *running* time integral of the mean feedback-force
    magnitude (trapezoidal, accumulated every step, not just at samples), so
    it is non-decreasing; the time-averaged functional is obtained by
    dividing the final value by the horizon (see metrics.task_functionals).
    ``max_q_dev``/``max_v_dev`` are per-agent worst-case deviations from the
    leader, needed by the flocking classifier and the bound checks.
    """

    times: np.ndarray
    q_dev: np.ndarray
    v_dev: np.ndarray
    u_bar: np.ndarray
    energy: np.ndarray
    max_vel_spread: np.ndarray
    max_q_dev: np.ndarray
    max_v_dev: np.ndarray
    x_bar_norm: np.ndarray
    w_bar_norm: np.ndarray
    w_hat_norm: np.ndarray
    n_agents: int
    dim: int
    status: str = "completed"
    abort_time: Optional[float] = None
    abort_agent: Optional[int] = None
    abort_reason: Optional[str] = None
    positions: Optional[np.ndarray] = None
    velocities: Optional[np.ndarray] = None

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])


def sample_initial(cfg: RunConfig) -> SwarmState:
    """Draw the initial state for ``cfg`` (see the module docstring for the recipe)."""
    gen = np.random.Generator(np.random.Philox(key=cfg.seed, counter=cfg.run_index << 192))
    lead = leader_state(cfg.trajectory, 0.0)
    n = cfg.model.n_agents
    d = cfg.model.dim
    spec = cfg.init

    positions = np.empty((n, d))
    for i in range(n):
        for _ in range(_REJECTION_CAP):
            cand = spec.r_init * (2.0 * gen.random(d) - 1.0)
            if float(cand @ cand) <= spec.r_init**2:
                positions[i] = cand
                break
        else:  # pragma: no cover - astronomically unlikely
            raise RuntimeError("position rejection sampling failed to converge")

    n_pairs = (d + 1) // 2
    velocities = np.empty((n, d))
    for i in range(n):
        for _ in range(_REJECTION_CAP):
            u1 = 1.0 - gen.random(n_pairs)  # in (0, 1]: log is safe
            u2 = gen.random(n_pairs)
            rad = np.sqrt(-2.0 * np.log(u1))
            z = np.concatenate([rad * np.cos(2.0 * math.pi * u2), rad * np.sin(2.0 * math.pi * u2)])
            cand = spec.vel_std * z[:d]
            if float(cand @ cand) <= spec.vel_support**2:
                velocities[i] = cand
                break
        else:
            raise RuntimeError(
                "velocity rejection sampling failed to converge; "
                "vel_support is too small for vel_std"
            )

    return SwarmState(0.0, lead.q_l + positions, lead.v_l + velocities)


# ---------------------------------------------------------------------------
# one-step kernel
# ---------------------------------------------------------------------------


class _StaticEval:
    """Position-dependent force ingredients at one (q, t), reused across kicks."""

    __slots__ = ("lead", "amb_c", "u_pos", "wd", "deg", "r", "x", "xn")

    def __init__(self, q, t, traj, mp, k_law):
        # overflow here only means an already-runaway state; the step guard
        # turns the resulting inf/nan into a clean abort
        with np.errstate(over="ignore", invalid="ignore"):
            self.lead = leader_state(traj, t)
            dq, r, wc, wd = _pair_geometry(q, mp)
            self.amb_c = _conservative_sum(dq, wc, mp)
            self.x = q - self.lead.q_l
            self.xn = np.linalg.norm(self.x, axis=1)
            self.u_pos = -k_law(self.xn)[:, None] * self.x
            self.wd = wd
            self.deg = wd.sum(axis=1)
            self.r = r


def _closing_eval(st: _StaticEval, v, mp, p_law, want_mag=False):
    """Acceleration at fixed positions for a candidate velocity.

    Optionally also returns the mean feedback-force magnitude (the battery
    integrand) at the same point.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        w = v - st.lead.v_l
        wn = np.linalg.norm(w, axis=1)
        u_vel = -p_law(wn)[:, None] * w
        f = st.amb_c + st.u_pos + u_vel
        f = f - mp.b_coef * (st.deg[:, None] * v - st.wd @ v)
        mag = None
        if want_mag:
            mag = float(np.linalg.norm(st.u_pos + u_vel, axis=1).mean())
        return f / mp.mass, mag


def _check_divergence(q, v):
    """Return (agent, reason) if the state is non-finite or escaped, else None."""
    for name, arr in (("position", q), ("velocity", v)):
        bad = ~np.isfinite(arr)
        if bad.any():
            return int(np.argwhere(bad)[0][0]), f"non-finite {name}"
        big = np.abs(arr) > DIVERGENCE_LIMIT
        if big.any():
            return int(np.argwhere(big)[0][0]), f"{name} magnitude exceeded {DIVERGENCE_LIMIT:g}"
    return None


def _advance(q, v, t, st, traj, mp, cp_laws, dt):
    """One integrator step from (q, v, t); returns the new (q, v, t, static).

    Floating-point overflow is deliberately tolerated here: a runaway state
    turns into inf/nan and is caught by the divergence guard right after.
    """
    k_law, p_law = cp_laws
    with np.errstate(over="ignore", invalid="ignore"):
        a0, _ = _closing_eval(st, v, mp, p_law)
        vh = v + 0.5 * dt * a0
        q1 = q + dt * vh
        t1 = t + dt
        st1 = _StaticEval(q1, t1, traj, mp, k_law)
        a1, _ = _closing_eval(st1, vh + 0.5 * dt * a0, mp, p_law)  # lambda = 1/2 predictor
        v1 = vh + 0.5 * dt * a1
        a2, _ = _closing_eval(st1, v1, mp, p_law)  # fixed-point refinement
        v2 = vh + 0.5 * dt * a2
    return q1, v2, t1, st1


def verlet_step(state: SwarmState, traj, mp: ModelParams, cp: ControlParams, dt: float) -> SwarmState:
    """Advance one step of the velocity-dependent velocity-Verlet scheme.

    The leader is advanced analytically to ``state.time`` and
    ``state.time + dt``.  Raises :class:`IntegrationError` on a non-finite or
    runaway result.  Chaining this call reproduces :func:`run` bit for bit.
    """
    laws = (cp.position_law(), cp.velocity_law())
    st = _StaticEval(state.positions, state.time, traj, mp, laws[0])
    q1, v2, t1, _ = _advance(state.positions, state.velocities, state.time, st, traj, mp, laws, dt)
    bad = _check_divergence(q1, v2)
    if bad is not None:
        raise IntegrationError(t1, bad[0], bad[1])
    return SwarmState(t1, q1, v2)


# ---------------------------------------------------------------------------
# run loop
# ---------------------------------------------------------------------------


class _Samples:
    """Column accumulator for the trajectory record."""

    def __init__(self, record_states: bool):
        self.cols: List[List[float]] = [[] for _ in range(11)]
        self.q_frames: Optional[List[np.ndarray]] = [] if record_states else None
        self.v_frames: Optional[List[np.ndarray]] = [] if record_states else None

    def add(self, t, st: _StaticEval, q, v, u_cum, mp, k_law, p_law):
        w = v - st.lead.v_l
        wn = np.linalg.norm(w, axis=1)
        xn = st.xn

        kinetic = 0.5 * mp.mass * float(np.einsum("ij,ij->", w, w))
        close = st.r < mp.r_c
        pot_rep = float(_phi_pair(st.r[close], mp).sum() / 2.0) if close.any() else 0.0
        pot_att = float(k_law.ramp_integral(xn).sum())

        gram = v @ v.T
        sq = np.diag(gram)
        spread2 = sq[:, None] + sq[None, :] - 2.0 * gram
        spread = math.sqrt(max(float(spread2.max()), 0.0))

        w_bar = w.mean(axis=0)
        w_hat = w - w_bar

        row = (
            t,
            float(xn.mean()),
            float(wn.mean()),
            u_cum,
            kinetic + pot_rep + pot_att,
            spread,
            float(xn.max()),
            float(wn.max()),
            float(np.linalg.norm(st.x.mean(axis=0))),
            float(np.linalg.norm(w_bar)),
            float(np.linalg.norm(w_hat)),
        )
        for col, val in zip(self.cols, row):
            col.append(val)
        if self.q_frames is not None:
            self.q_frames.append(q.copy())
            self.v_frames.append(v.copy())

    def finish(self, n, d, status, abort=None) -> TrajectoryRecord:
        arrays = [np.asarray(c) for c in self.cols]
        kw = {}
        if abort is not None:
            kw = {"abort_time": abort[0], "abort_agent": abort[1], "abort_reason": abort[2]}
        return TrajectoryRecord(
            *arrays,
            n_agents=n,
            dim=d,
            status=status,
            positions=np.array(self.q_frames) if self.q_frames is not None else None,
            velocities=np.array(self.v_frames) if self.v_frames is not None else None,
            **kw,
        )


def run(cfg: RunConfig, initial_state: Optional[SwarmState] = None) -> TrajectoryRecord:
    """Integrate ``cfg.n_steps`` steps and return the sampled record.

    Samples are taken at step 0, every ``record_every``-th step, and at the
    final step.  The battery integral accumulates every step regardless of
    the sampling stride.  Divergence does not raise: the run is marked
    aborted and whatever was sampled so far is returned.

    ``initial_state`` overrides the random sampler; it must match the model's
    agent count and dimension (useful for scripted scenarios and tests).
    """
    mp = cfg.model
    laws = (cfg.control.position_law(), cfg.control.velocity_law())
    state0 = sample_initial(cfg) if initial_state is None else initial_state
    if state0.positions.shape != (mp.n_agents, mp.dim):
        raise ValueError(
            f"initial state shape {state0.positions.shape} does not match "
            f"model ({mp.n_agents}, {mp.dim})"
        )

    q = state0.positions.copy()
    v = state0.velocities.copy()
    t = float(state0.time)
    st = _StaticEval(q, t, cfg.trajectory, mp, laws[0])
    a_open, mag = _closing_eval(st, v, mp, laws[1], want_mag=True)

    samples = _Samples(cfg.record_states)
    samples.add(t, st, q, v, 0.0, mp, laws[0], laws[1])

    u_cum = 0.0
    m_prev = mag
    status = "completed"
    abort = None

    for k in range(1, cfg.n_steps + 1):
        dt = cfg.dt
        vh = v + 0.5 * dt * a_open
        q1 = q + dt * vh
        t1 = t + dt
        st1 = _StaticEval(q1, t1, cfg.trajectory, mp, laws[0])
        a1, _ = _closing_eval(st1, vh + 0.5 * dt * a_open, mp, laws[1])
        v1 = vh + 0.5 * dt * a1
        a2, _ = _closing_eval(st1, v1, mp, laws[1])
        v2 = vh + 0.5 * dt * a2

        bad = _check_divergence(q1, v2)
        if bad is not None:
            status = "aborted"
            abort = (t1, bad[0], bad[1])
            break

        # fresh opening acceleration for the next step doubles as the
        # battery-integrand evaluation at the step-end state
        a_open, mag = _closing_eval(st1, v2, mp, laws[1], want_mag=True)
        u_cum += 0.5 * dt * (m_prev + mag)
        m_prev = mag
        q, v, t, st = q1, v2, t1, st1

        if k % cfg.record_every == 0 or k == cfg.n_steps:
            samples.add(t, st, q, v, u_cum, mp, laws[0], laws[1])

    return samples.finish(mp.n_agents, mp.dim, status, abort)
