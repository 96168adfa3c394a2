"""Core swarm model: pair forces, navigational feedback, potentials, and energy diagnostics.

The model couples two ambient dissipative-particle-dynamics-style pair forces
(soft conservative repulsion and viscous velocity damping, both compactly
supported) with a nonlinear feedback law that steers every agent toward a
virtual leader.  Everything in this module is a pure function of immutable
state; the integrator in :mod:`dpdflock.engine` composes these pieces.

Conventions
-----------
* Positions and velocities are ``(n, d)`` float arrays with ``d`` in {2, 3}.
* ``q_ij = q_i - q_j`` points from agent *j* to agent *i*, so a positive
  weight yields repulsion.
* "Moving frame" quantities ``x = q - q_l`` and ``w = v - v_l`` measure
  deviation from the leader.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CoincidentAgentsError",
    "GeneratingFunctionSpec",
    "ModelParams",
    "ControlParams",
    "SwarmState",
    "weight_c",
    "conservative_pair",
    "dissipative_pair",
    "position_alignment",
    "velocity_alignment",
    "accelerations",
    "repulsive_potential",
    "attractive_potential",
    "total_energy",
    "energy_rate_rhs",
    "laplacian_quadform",
    "attractor_residual",
]

GENERATING_KINDS = ("linear", "power", "exponential", "logarithmic")

WEIGHT_KINDS = ("quadratic",)


class CoincidentAgentsError(ValueError):
    """Two agents occupy the same point, so the pair-force direction is undefined.

    Raising beats silently returning zero or NaN: a coincidence is always a
    setup or stability bug and the indices pin down where to look.
    """

    def __init__(self, i: int, j: int):
        super().__init__(f"agents {i} and {j} are coincident; pair force undefined")
        self.pair = (i, j)


# ---------------------------------------------------------------------------
# generating functions (feedback gain profiles)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratingFunctionSpec:
    """Radial gain profile ``h`` for one feedback channel.

    The feedback force is ``-h(|y|) * y``; ``h`` vanishes on
    ``[0, threshold]`` (the dead zone) and beyond it follows one of four
    catalogued shapes:

    ============  =========================
    kind          h(s) for s > threshold
    ============  =========================
    linear        gain
    power         gain * s**exponent
    exponential   gain * exp(s)
    logarithmic   gain * log(1 + s)
    ============  =========================

    Parameters
    ----------
    kind : str
        One of ``linear``, ``power``, ``exponential``, ``logarithmic``.
    gain : float
        Non-negative multiplier (``alpha`` or ``beta``).
    threshold : float
        Dead-zone radius (``r0`` or ``v0``), non-negative.
    exponent : float, optional
        Power-law exponent, used by the ``power`` kind only; must be > 0.
    """

    kind: str
    gain: float
    threshold: float
    exponent: float = 1.0

    def __post_init__(self):
        if self.kind not in GENERATING_KINDS:
            raise ValueError(f"unknown generating-function kind {self.kind!r}")
        if self.gain < 0:
            raise ValueError(f"gain must be non-negative, got {self.gain}")
        if self.threshold < 0:
            raise ValueError(f"threshold must be non-negative, got {self.threshold}")
        if self.exponent <= 0:
            raise ValueError(f"exponent must be positive, got {self.exponent}")

    def __call__(self, s):
        """Evaluate ``h(s)`` elementwise; scalar in, scalar out."""
        s_arr = np.asarray(s, dtype=float)
        out = np.zeros_like(s_arr)
        m = s_arr > self.threshold
        if m.any():
            sm = s_arr[m]
            if self.kind == "linear":
                out[m] = self.gain
            elif self.kind == "power":
                out[m] = self.gain * sm**self.exponent
            elif self.kind == "exponential":
                out[m] = self.gain * np.exp(sm)
            else:
                out[m] = self.gain * np.log1p(sm)
        return float(out) if np.isscalar(s) or np.ndim(s) == 0 else out

    def derivative(self, s):
        """Analytic ``h'(s)`` for s strictly beyond the threshold."""
        s_arr = np.asarray(s, dtype=float)
        if self.kind == "linear":
            d = np.zeros_like(s_arr)
        elif self.kind == "power":
            d = self.gain * self.exponent * s_arr ** (self.exponent - 1.0)
        elif self.kind == "exponential":
            d = self.gain * np.exp(s_arr)
        else:
            d = self.gain / (1.0 + s_arr)
        return float(d) if np.ndim(s) == 0 else d

    def second_derivative(self, s):
        """Analytic ``h''(s)`` for s strictly beyond the threshold."""
        s_arr = np.asarray(s, dtype=float)
        if self.kind == "linear":
            d = np.zeros_like(s_arr)
        elif self.kind == "power":
            e = self.exponent
            d = self.gain * e * (e - 1.0) * s_arr ** (e - 2.0)
        elif self.kind == "exponential":
            d = self.gain * np.exp(s_arr)
        else:
            d = -self.gain / (1.0 + s_arr) ** 2
        return float(d) if np.ndim(s) == 0 else d

    def ramp_integral(self, s):
        """``int_threshold^max(s, threshold) h(u) * u du`` — the channel potential.

        Closed forms per kind (antiderivative of ``h(u) u`` evaluated between
        the threshold and ``s``); zero inside the dead zone.
        """
        s_arr = np.asarray(s, dtype=float)
        lo = self.threshold
        hi = np.maximum(s_arr, lo)

        if self.kind == "linear":
            val = 0.5 * self.gain * (hi**2 - lo**2)
        elif self.kind == "power":
            p = self.exponent + 2.0
            val = self.gain * (hi**p - lo**p) / p
        elif self.kind == "exponential":
            # antiderivative of u e^u is (u - 1) e^u
            val = self.gain * ((hi - 1.0) * np.exp(hi) - (lo - 1.0) * np.exp(lo))
        else:
            # antiderivative of u ln(1+u): (u^2-1)/2 ln(1+u) - u^2/4 + u/2
            def _anti(u):
                return 0.5 * (u**2 - 1.0) * np.log1p(u) - 0.25 * u**2 + 0.5 * u

            val = self.gain * (_anti(hi) - _anti(lo))
        return float(val) if np.ndim(s) == 0 else val


# ---------------------------------------------------------------------------
# parameter containers and state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Ambient-force and bulk parameters shared by every agent.

    ``a_coef``/``b_coef`` scale the conservative and dissipative pair forces;
    ``r_c``/``r_d`` are their support radii.  All quantities are dimensionless.
    """

    n_agents: int
    dim: int = 3
    mass: float = 1.0
    a_coef: float = 10.0
    b_coef: float = 1.0
    r_c: float = 1.0
    r_d: float = 5.0
    weight_kind: str = "quadratic"

    def __post_init__(self):
        if self.n_agents < 1:
            raise ValueError(f"n_agents must be >= 1, got {self.n_agents}")
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.a_coef < 0 or self.b_coef < 0:
            raise ValueError("force coefficients must be non-negative")
        if not 0 < self.r_c <= self.r_d:
            raise ValueError(
                f"cutoffs must satisfy 0 < r_c <= r_d, got r_c={self.r_c}, r_d={self.r_d}"
            )
        if self.weight_kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kind {self.weight_kind!r}")


@dataclass(frozen=True)
class ControlParams:
    """Feedback-law parameters: gains, dead-zone radii, and profile kinds."""

    alpha: float
    r0: float
    beta: float
    v0: float
    k_kind: str = "linear"
    p_kind: str = "linear"
    k_exponent: float = 1.0
    p_exponent: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "r0", "beta", "v0"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        # building the channel specs validates kinds and exponents
        self.position_law()
        self.velocity_law()

    def position_law(self) -> GeneratingFunctionSpec:
        """Gain profile of the position-feedback channel."""
        return GeneratingFunctionSpec(self.k_kind, self.alpha, self.r0, self.k_exponent)

    def velocity_law(self) -> GeneratingFunctionSpec:
        """Gain profile of the velocity-feedback channel."""
        return GeneratingFunctionSpec(self.p_kind, self.beta, self.v0, self.p_exponent)


@dataclass(frozen=True)
class SwarmState:
    """Positions and velocities of every agent at one instant."""

    time: float
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.positions, dtype=float)
        v = np.asarray(self.velocities, dtype=float)
        if q.ndim != 2 or q.shape[1] not in (2, 3):
            raise ValueError(f"positions must be (n, 2|3), got shape {q.shape}")
        if v.shape != q.shape:
            raise ValueError(
                f"velocities shape {v.shape} does not match positions shape {q.shape}"
            )
        if q.shape[0] < 1:
            raise ValueError("state needs at least one agent")
        if not (np.isfinite(q).all() and np.isfinite(v).all()):
            raise ValueError("state contains non-finite entries")
        object.__setattr__(self, "positions", q)
        object.__setattr__(self, "velocities", v)

    @property
    def n_agents(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


# ---------------------------------------------------------------------------
# force laws
# ---------------------------------------------------------------------------


def weight_c(s, cutoff: float = 1.0):
    """Quadratic contact weight ``(1 - s/cutoff)**2`` for ``s < cutoff``, else 0.

    Non-increasing on [0, cutoff] and C^1 at the cutoff (value and slope both
    vanish there).  Used with ``cutoff=r_c`` for the conservative force and
    ``cutoff=r_d`` for the dissipative one.
    """
    s_arr = np.asarray(s, dtype=float)
    w = np.where(s_arr < cutoff, (1.0 - s_arr / cutoff) ** 2, 0.0)
    return float(w) if np.ndim(s) == 0 else w


def conservative_pair(q_ij, mp: ModelParams):
    """Soft repulsion ``a_coef * w(|q_ij|; r_c) * q_ij`` exerted on agent i by j."""
    q_ij = np.asarray(q_ij, dtype=float)
    r = math.sqrt(float(q_ij @ q_ij))
    if r == 0.0:
        raise CoincidentAgentsError(-1, -1)
    return mp.a_coef * weight_c(r, mp.r_c) * q_ij


def dissipative_pair(q_ij, v_ij, mp: ModelParams):
    """Viscous drag ``-b_coef * w(|q_ij|; r_d) * v_ij`` on agent i from j."""
    q_ij = np.asarray(q_ij, dtype=float)
    v_ij = np.asarray(v_ij, dtype=float)
    r = math.sqrt(float(q_ij @ q_ij))
    if r == 0.0:
        raise CoincidentAgentsError(-1, -1)
    return -mp.b_coef * weight_c(r, mp.r_d) * v_ij


def position_alignment(q_il, cp: ControlParams):
    """Feedback force ``-h(|q_il|) * q_il`` pulling the agent toward the leader."""
    q_il = np.asarray(q_il, dtype=float)
    r = math.sqrt(float(q_il @ q_il))
    return -cp.position_law()(r) * q_il


def velocity_alignment(v_il, cp: ControlParams):
    """Feedback force ``-g(|v_il|) * v_il`` aligning the agent's velocity."""
    v_il = np.asarray(v_il, dtype=float)
    s = math.sqrt(float(v_il @ v_il))
    return -cp.velocity_law()(s) * v_il


# ---------------------------------------------------------------------------
# vectorised internals (shared with the engine)
# ---------------------------------------------------------------------------


def _pair_geometry(positions: np.ndarray, mp: ModelParams):
    """All-pairs displacements, distances, and both contact weights.

    Returns ``(dq, r, wc, wd)`` where ``dq[i, j] = q_i - q_j`` and ``r`` has
    ``inf`` on the diagonal so self-terms drop out of every weight.
    """
    dq = positions[:, None, :] - positions[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", dq, dq))
    np.fill_diagonal(r, np.inf)
    if (r == 0.0).any():
        i, j = np.argwhere(r == 0.0)[0]
        raise CoincidentAgentsError(int(i), int(j))
    wc = np.where(r < mp.r_c, (1.0 - r / mp.r_c) ** 2, 0.0)
    wd = np.where(r < mp.r_d, (1.0 - r / mp.r_d) ** 2, 0.0)
    return dq, r, wc, wd


def _conservative_sum(dq, wc, mp: ModelParams):
    return mp.a_coef * np.einsum("ij,ijk->ik", wc, dq)


def _dissipative_sum(wd, velocities, mp: ModelParams):
    deg = wd.sum(axis=1)
    return -mp.b_coef * (deg[:, None] * velocities - wd @ velocities)


def accelerations(state: SwarmState, leader, mp: ModelParams, cp: ControlParams):
    """Net acceleration of every agent: (pair forces + feedback) / mass.

    ``leader`` is a :class:`dpdflock.leader.LeaderState` at ``state.time``.
    Pair sums are evaluated once per unordered pair via the antisymmetric
    all-pairs tensor; the reduction order is fixed, so results are
    bit-reproducible.
    """
    q = state.positions
    v = state.velocities
    dq, _, wc, wd = _pair_geometry(q, mp)
    f = _conservative_sum(dq, wc, mp)
    f = f + _dissipative_sum(wd, v, mp)
    x = q - leader.q_l
    w = v - leader.v_l
    xn = np.linalg.norm(x, axis=1)
    wn = np.linalg.norm(w, axis=1)
    f = f - cp.position_law()(xn)[:, None] * x
    f = f - cp.velocity_law()(wn)[:, None] * w
    return f / mp.mass


# ---------------------------------------------------------------------------
# potentials and energy
# ---------------------------------------------------------------------------


def _phi_pair(r, mp: ModelParams):
    """Closed-form pair potential whose negative gradient is the conservative force.

    Antiderivative of ``a_coef * w(s; r_c) * s`` from r to r_c:
    ``a_coef * (r_c^2/12 - r^2/2 + 2 r^3 / (3 r_c) - r^4 / (4 r_c^2))``.
    """
    rc = mp.r_c
    return mp.a_coef * (rc**2 / 12.0 - r**2 / 2.0 + 2.0 * r**3 / (3.0 * rc) - r**4 / (4.0 * rc**2))


def repulsive_potential(state: SwarmState, mp: ModelParams) -> float:
    """Total pair repulsion energy; exactly zero once all pairs clear ``r_c``."""
    _, r, _, _ = _pair_geometry(state.positions, mp)
    mask = r < mp.r_c
    if not mask.any():
        return 0.0
    # each unordered pair appears twice in the symmetric matrix
    return float(_phi_pair(r[mask], mp).sum() / 2.0)


def attractive_potential(state: SwarmState, leader, cp: ControlParams) -> float:
    """Leader-attraction energy: per-agent ramp integral of the position law."""
    x = state.positions - leader.q_l
    xn = np.linalg.norm(x, axis=1)
    return float(cp.position_law().ramp_integral(xn).sum())


def total_energy(state: SwarmState, leader, mp: ModelParams, cp: ControlParams) -> float:
    """Mechanical energy in the leader frame: kinetic + repulsion + attraction."""
    w = state.velocities - leader.v_l
    kinetic = 0.5 * mp.mass * float(np.einsum("ij,ij->", w, w))
    return kinetic + repulsive_potential(state, mp) + attractive_potential(state, leader, cp)


def laplacian_quadform(state: SwarmState, w: np.ndarray, mp: ModelParams) -> float:
    """Dissipative quadratic form ``b_coef * sum_edges w_d(|q_ij|) |w_i - w_j|^2``.

    Agrees with the dense product against the weighted graph Laplacian
    (Kronecker-expanded to d coordinates); the edge-sum form is O(n^2) and
    never materialises that matrix.
    """
    _, _, _, wd = _pair_geometry(state.positions, mp)
    gram = w @ w.T
    sq = np.diag(gram)
    dist2 = sq[:, None] + sq[None, :] - 2.0 * gram
    return float(mp.b_coef * (wd * dist2).sum() / 2.0)


def _velocity_quadform(w: np.ndarray, cp: ControlParams) -> float:
    wn = np.linalg.norm(w, axis=1)
    return float((cp.velocity_law()(wn) * wn**2).sum())


def energy_rate_rhs(state: SwarmState, leader, mp: ModelParams, cp: ControlParams) -> float:
    """Analytic dE/dt: minus the two dissipation forms minus the leader drive.

    With a coasting leader (zero leader acceleration) this is non-positive,
    which is the dissipation identity the energy tests check.
    """
    w = state.velocities - leader.v_l
    quad = laplacian_quadform(state, w, mp)
    gsum = _velocity_quadform(w, cp)
    drive = mp.mass * float(np.asarray(leader.f_l, dtype=float) @ w.sum(axis=0))
    return -quad - gsum - drive


def attractor_residual(state: SwarmState, leader, mp: ModelParams, cp: ControlParams) -> float:
    """Non-negative defect of the attractor condition; zero exactly on the attractor.

    Combines the graph-dissipation form with the velocity-feedback form, both
    of which must vanish on any limiting motion.
    """
    w = state.velocities - leader.v_l
    return laplacian_quadform(state, w, mp) + _velocity_quadform(w, cp)
