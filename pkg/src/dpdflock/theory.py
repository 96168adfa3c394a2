"""Stability theory: linearity envelopes, eigenvalues, absorbing-set bounds,
velocity-consensus decay, rigid periodic ("wobbler") solutions, and the
monotonicity certificate that rules wobblers out.

Everything here is a closed-form constant or a predicate over a finished
:class:`~dpdflock.engine.TrajectoryRecord`.  The asymptotic statements behind
the predicates quantify over an unknown entry time, so each checker takes an
explicit window and slack and reports margins rather than bare booleans.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .engine import TrajectoryRecord
from .leader import LeaderTrajectory, accel_bound
from .model import ControlParams, GeneratingFunctionSpec, ModelParams

__all__ = [
    "EnvelopeError",
    "LinearEnvelope",
    "BoundReport",
    "BoundCheck",
    "DecayCheck",
    "MonotonicityResult",
    "envelope",
    "eigenvalues",
    "bound_report",
    "check_bounds",
    "decay_check",
    "wobbler_closed_form",
    "wobbler_admissible",
    "monotonicity_check",
]


class EnvelopeError(ValueError):
    """The feedback law admits no linear envelope with positive gain."""


@dataclass(frozen=True)
class LinearEnvelope:
    """Linear bracketing of both feedback channels.

    The position force stays within ``c_p`` of ``-k_p * y`` everywhere, and
    likewise for the velocity channel; the gains must be strictly positive
    for any of the downstream bounds to exist.
    """

    k_p: float
    c_p: float
    k_v: float
    c_v: float

    def __post_init__(self):
        if self.k_p <= 0 or self.k_v <= 0:
            raise ValueError("envelope gains must be strictly positive")
        if self.c_p < 0 or self.c_v < 0:
            raise ValueError("envelope offsets must be non-negative")


@dataclass(frozen=True)
class BoundReport:
    """Closed-form constants and predicted asymptotic radii for one setup."""

    c1: float
    c2: float
    c3: float
    c4: float
    lambda1: complex
    lambda2: complex
    gamma: float
    k_hat: float
    x_bound: float
    w_bound: float
    regime: str
    k_p_tilde: float
    k_v_tilde: float
    c_delta_v: float
    c_l: float
    com_bound: float
    n_agents: int
    mass: float
    notes: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        for name in ("c1", "c2", "c3", "c4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.regime not in ("distinct_real", "complex", "repeated"):
            raise ValueError(f"unknown regime {self.regime!r}")


@dataclass(frozen=True)
class BoundCheck:
    """Observed-vs-predicted comparison for the absorbing bounds.

    Margins are relative: ``(allowed - observed) / bound``, so a record that
    overshoots a bound by 10% under zero slack scores -0.1.  A zero
    ``w_bound`` (repeated-eigenvalue case) is asymptotic-only and is reported
    but not enforced.
    """

    passed: bool
    x_margin: float
    w_margin: Optional[float]
    x_observed: float
    w_observed: float
    window_start: float


@dataclass(frozen=True)
class DecayCheck:
    """Verdict of the velocity-consensus decay test."""

    applicable: bool
    passed: bool
    fitted_rate: Optional[float]
    bound_rate: float
    reason: Optional[str] = None


@dataclass(frozen=True)
class MonotonicityResult:
    """Outcome of the three-function growth certificate."""

    passed: bool
    first_violation: Optional[Tuple[str, float]] = None


# ---------------------------------------------------------------------------
# envelopes and eigenvalues
# ---------------------------------------------------------------------------


def _channel_envelope(law: GeneratingFunctionSpec, symbol: str) -> Tuple[float, float]:
    """Best (gain, offset) linear envelope of one channel, or a failure.

    Linear laws are handled exactly: the force equals ``-gain * y`` outside
    the dead zone, so the deviation peaks at the threshold with value
    ``gain * threshold``.  Other shapes are scanned numerically on two nested
    radial grids; if widening the grid grows the supremum the deviation is
    unbounded and no envelope exists.
    """
    if law.gain == 0:
        raise EnvelopeError(f"Assumption 2 unmet ({symbol} = 0)")
    if law.kind == "linear":
        return law.gain, law.gain * law.threshold

    span = 10.0 * max(law.threshold, 1.0)

    def sup_dev(s_max: float) -> float:
        s = np.linspace(0.0, s_max, 20001)
        k_fit = law(s_max)
        return float(np.abs(law(s) * s - k_fit * s).max())

    inner, outer = sup_dev(span), sup_dev(2.0 * span)
    if outer > inner * (1.0 + 1e-9) + 1e-12:
        raise EnvelopeError(
            f"{law.kind} law is not approximately linear: envelope deviation "
            f"grows with radius ({inner:.3g} -> {outer:.3g})"
        )
    return float(law(span)), inner  # pragma: no cover - no catalogued law reaches here


def envelope(cp: ControlParams) -> LinearEnvelope:
    """Linear envelope of both feedback channels, if one exists.

    Raises :class:`EnvelopeError` when a gain is zero (no positive linear
    part) or when the law deviates unboundedly from every line, as all the
    catalogued non-linear shapes do.
    """
    k_p, c_p = _channel_envelope(cp.position_law(), "K_p")
    k_v, c_v = _channel_envelope(cp.velocity_law(), "K_v")
    return LinearEnvelope(k_p, c_p, k_v, c_v)


def eigenvalues(k_p_tilde: float, k_v_tilde: float) -> Tuple[complex, complex]:
    """Roots of ``lambda^2 + k_v_tilde * lambda + k_p_tilde``.

    Both real parts are strictly negative whenever the two mass-scaled gains
    are positive.
    """
    if k_p_tilde <= 0 or k_v_tilde <= 0:
        raise ValueError("mass-scaled gains must be strictly positive")
    disc = k_v_tilde**2 - 4.0 * k_p_tilde
    root = cmath.sqrt(disc)
    return (-k_v_tilde + root) / 2.0, (-k_v_tilde - root) / 2.0


def bound_report(
    env: LinearEnvelope,
    mp: ModelParams,
    traj: LeaderTrajectory,
    n_agents: int,
) -> BoundReport:
    """All closed-form constants and the predicted absorbing radii.

    The two perturbation constants aggregate the envelope offsets with the
    leader's acceleration bound and the ambient-force magnitudes; the
    eigenvalue discriminant of the mass-scaled linear part selects which
    asymptotic-radius formula applies.  A repeated eigenvalue collapses the
    velocity radius to zero (velocities converge to the leader's), which is
    reported as a note and not enforced pointwise by the checker.
    """
    if env.k_v <= 0:
        raise ValueError("envelope velocity gain must be positive")
    n = int(n_agents)
    if n < 1:
        raise ValueError("n_agents must be >= 1")
    m = mp.mass
    c_l = accel_bound(traj)

    c1 = math.sqrt(n) * (env.c_p + env.c_v + m * c_l)
    c2 = (
        math.sqrt(n - 1) * mp.a_coef * mp.r_c
        + math.sqrt(n * n - n) * mp.b_coef * c1 / env.k_v
        + c1 / math.sqrt(n)
    ) / m

    ktp = env.k_p / m
    ktv = env.k_v / m
    disc = ktv**2 - 4.0 * ktp
    gamma = 4.0 * ktp / ktv**2
    lam1, lam2 = eigenvalues(ktp, ktv)

    notes = []
    if disc == 0.0:
        regime = "repeated"
        x_bound = 4.0 * c2 / ktv
        w_bound = 0.0
        notes.append("repeated eigenvalue: velocities converge to the leader's")
    else:
        regime = "distinct_real" if disc > 0 else "complex"
        root = math.sqrt(abs(disc))
        x_bound = 2.0 * ktv * c2 / (ktp * root)
        w_bound = 2.0 * c2 / root

    # velocity-channel nonlinearity bound: the deviation from the linear part
    # is k_v * y inside the dead zone and zero outside, so it vanishes exactly
    # when the dead zone does
    c_delta_v = env.k_v if env.c_v > 0 else 0.0
    c3 = math.sqrt(2.0 * (n - 1)) * c_delta_v
    k_hat = env.k_v - c3
    c4 = math.sqrt(n) * c_delta_v + m * c_l
    com_bound = 2.0 * c4 / env.k_v

    return BoundReport(
        c1=c1,
        c2=c2,
        c3=c3,
        c4=c4,
        lambda1=lam1,
        lambda2=lam2,
        gamma=gamma,
        k_hat=k_hat,
        x_bound=x_bound,
        w_bound=w_bound,
        regime=regime,
        k_p_tilde=ktp,
        k_v_tilde=ktv,
        c_delta_v=c_delta_v,
        c_l=c_l,
        com_bound=com_bound,
        n_agents=n,
        mass=m,
        notes=tuple(notes),
    )


def check_bounds(
    record: TrajectoryRecord,
    report: BoundReport,
    transient_fraction: float = 0.5,
    eta: float = 0.0,
) -> BoundCheck:
    """Compare the post-transient per-agent deviations against the predicted radii.

    The first ``transient_fraction`` of the run is discarded (the theory
    guarantees an entry time exists but says nothing about its value); the
    remaining samples must stay within ``(1 + eta)`` of each radius.
    """
    if not 0 <= transient_fraction < 1:
        raise ValueError("transient_fraction must be in [0, 1)")
    t0 = record.times[0] + transient_fraction * record.horizon
    sel = record.times >= t0
    if not sel.any():
        raise ValueError("record too short for the requested transient window")

    x_obs = float(record.max_q_dev[sel].max())
    w_obs = float(record.max_v_dev[sel].max())
    x_margin = ((1.0 + eta) * report.x_bound - x_obs) / report.x_bound
    if report.w_bound > 0:
        w_margin = ((1.0 + eta) * report.w_bound - w_obs) / report.w_bound
        passed = x_margin >= 0 and w_margin >= 0
    else:
        w_margin = None
        passed = x_margin >= 0
    return BoundCheck(passed, x_margin, w_margin, x_obs, w_obs, float(t0))


def decay_check(
    record: TrajectoryRecord,
    k_hat: float,
    mass: float,
    t1: float,
    *,
    r0: float,
    slack: float = 0.05,
    floor: float = 1e-10,
) -> DecayCheck:
    """Velocity-consensus decay test on the tail of a run.

    Applicable only when ``k_hat`` is positive and every agent stays inside
    the ``r0`` rest ball from ``t1`` on (spatial stabilisation).  Passing
    requires the centred velocity norm to stay under the exponential envelope
    ``|W(t1)| * exp(-k_hat (t - t1) / mass)`` within the multiplicative
    ``slack`` until it reaches ``floor``; the fitted log-slope is reported
    alongside.
    """
    bound_rate = -k_hat / mass
    if k_hat <= 0:
        return DecayCheck(False, False, None, bound_rate, "k_hat is not positive")
    sel = record.times >= t1
    if not sel.any():
        return DecayCheck(False, False, None, bound_rate, "record does not reach t1")
    if float(record.max_q_dev[sel].max()) > r0 + 1e-12:
        return DecayCheck(
            False, False, None, bound_rate, "agents leave the rest ball after t1"
        )

    times = record.times[sel]
    w_hat = record.w_hat_norm[sel]
    w0 = float(w_hat[0])
    if w0 == 0.0:
        return DecayCheck(True, True, None, bound_rate, None)

    above = w_hat >= floor
    env_vals = w0 * np.exp(bound_rate * (times - times[0]))
    ok = bool((w_hat[above] <= env_vals[above] * (1.0 + slack)).all())

    fitted = None
    if above.sum() >= 2:
        # simple least-squares slope of log|W| on the pre-floor window
        tt = times[above]
        yy = np.log(w_hat[above])
        fitted = float(np.polyfit(tt, yy, 1)[0])
    return DecayCheck(True, ok, fitted, bound_rate, None)


# ---------------------------------------------------------------------------
# wobblers
# ---------------------------------------------------------------------------


def wobbler_closed_form(x0, w0, f0, alpha: float, t0: float, t: float):
    """Rigid periodic translation of an initial array under pure linear feedback.

    With dead zones removed the moving-frame dynamics is a forced harmonic
    oscillator shared by every agent; the whole array translates by

    ``x*(t) = a cos(mu t) + b sin(mu t) + f0 / alpha``,  ``mu = sqrt(alpha)``

    with ``a`` and ``b`` fixed by the common velocity ``w0`` and forcing
    ``f0`` at time ``t0``.  Returns ``(positions, velocity)`` at ``t``: the
    translated array and the (agent-independent) frame velocity.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x0 = np.asarray(x0, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    f0 = np.asarray(f0, dtype=float)
    mu = math.sqrt(alpha)
    c0, s0 = math.cos(mu * t0), math.sin(mu * t0)
    a = -(c0 / alpha) * f0 - (s0 / mu) * w0
    b = (c0 / mu) * w0 - (s0 / alpha) * f0
    c, s = math.cos(mu * t), math.sin(mu * t)
    x_star = a * c + b * s + f0 / alpha
    vel = -a * mu * s + b * mu * c
    return x0 + x_star, vel


def wobbler_admissible(x0, w0, mu: float, v0: float, radius: float) -> bool:
    """Whether a rigid oscillation stays inside its speed and position budget.

    True iff the common speed never exceeds ``v0`` and every agent's orbit
    ``x0_i + sin(phase)/mu * w0`` stays inside the ``radius`` ball; by
    convexity it suffices to test the two extreme phases.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    w0 = np.asarray(w0, dtype=float)
    if float(np.linalg.norm(w0)) > v0:
        return False
    for sign in (1.0, -1.0):
        pts = x0 + sign / mu * w0
        if (np.linalg.norm(pts, axis=1) > radius).any():
            return False
    return True


def monotonicity_check(
    h_spec: GeneratingFunctionSpec,
    s_lo: float,
    s_hi: float,
    grid_n: int,
) -> MonotonicityResult:
    """Certify the three growth conditions that exclude wobblers.

    Evaluates ``h``, ``s h'``, and ``s (h')^2 / (3 h' + s h'')`` on a uniform
    grid with the analytic derivatives of the catalogued law and demands each
    be strictly increasing between consecutive nodes.  The functions are
    checked in order and the first violation is reported with its location;
    the third function is only formed when the first two pass, and a
    vanishing denominator there is an error (the certificate is undefined),
    not a verdict.
    """
    if s_lo <= h_spec.threshold:
        raise ValueError("s_lo must lie strictly beyond the dead zone")
    if s_hi <= s_lo:
        raise ValueError("s_hi must exceed s_lo")
    if grid_n < 100:
        raise ValueError("grid_n must be at least 100")

    s = np.linspace(s_lo, s_hi, grid_n)

    def first_drop(vals):
        bad = np.nonzero(np.diff(vals) <= 0)[0]
        return None if bad.size == 0 else float(s[bad[0]])

    h = h_spec(s)
    loc = first_drop(h)
    if loc is not None:
        return MonotonicityResult(False, ("h", loc))

    d1 = h_spec.derivative(s)
    loc = first_drop(s * d1)
    if loc is not None:
        return MonotonicityResult(False, ("s*h'", loc))

    d2 = h_spec.second_derivative(s)
    denom = 3.0 * d1 + s * d2
    zero = np.nonzero(denom == 0.0)[0]
    if zero.size:
        raise ValueError(
            f"third growth function undefined at s={s[zero[0]]:g}: "
            "denominator 3 h' + s h'' vanishes"
        )
    loc = first_drop(s * d1**2 / denom)
    if loc is not None:
        return MonotonicityResult(False, ("s*(h')^2/(3h'+s*h'')", loc))
    return MonotonicityResult(True, None)
