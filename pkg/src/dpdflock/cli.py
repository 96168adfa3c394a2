"""Command-line surface: simulate, sweep, optimize, verify-bounds, wobbler.

Exit codes are stable API: 0 success, 2 input error, 3 infeasible
optimization, 4 theory not applicable, 5 numerical abort.  All file output is
deterministic byte-for-byte for identical inputs (floats at 17 significant
digits); progress and human chatter go to stderr, machine-readable results
(JSON, dumped configs) to stdout.
"""
from __future__ import annotations

import functools
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence, Tuple

import click
import numpy as np

from .config import (
    ConfigError,
    config_as_dict,
    config_from_dict,
    dump_config,
    load_config,
)
from .engine import InitSpec, IntegrationError, RunConfig, TrajectoryRecord, run
from .leader import Circle, UniformLine, build_mission
from .metrics import body_speed, classify_flocking, group_density, task_functionals
from .model import ControlParams, ModelParams
from .sweep import (
    SWEEP_HEADER,
    constrained_argmin,
    format_sweep_row,
    read_sweep_table,
    run_sweep,
)
from .sweep import regime_preset as _regime_preset
from .theory import (
    EnvelopeError,
    bound_report,
    check_bounds,
    decay_check,
    envelope,
    monotonicity_check,
    wobbler_admissible,
    wobbler_closed_form,
)
from .model import GeneratingFunctionSpec

EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_APPLICABLE = 4
EXIT_ABORT = 5

#: environment variable supplying the default sweep worker count
WORKERS_ENV = "DPDFLOCK_WORKERS"


def _die(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    """Translate library exceptions into the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EnvelopeError as exc:  # before ValueError: it is one
            _die(EXIT_NOT_APPLICABLE, str(exc))
        except IntegrationError as exc:
            _die(EXIT_ABORT, str(exc))
        except (ConfigError, ValueError, OSError) as exc:
            _die(EXIT_INPUT, str(exc))

    return wrapper


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _json_safe(obj):
    """Replace non-finite floats with None so the JSON stays strictly valid."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _echo_json(payload):
    click.echo(json.dumps(_json_safe(payload), indent=2))


# ---------------------------------------------------------------------------
# config resolution shared by simulate / sweep / verify-bounds
# ---------------------------------------------------------------------------


def _unit_axes(d: int) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    e1 = (1.0,) + (0.0,) * (d - 1)
    e2 = (0.0, 1.0) + (0.0,) * (d - 2)
    return e1, e2


def _scenario_overlay(name: str, control: ControlParams, init: InitSpec, d: int):
    """Built-in leader scenarios; mission also switches to the tighter
    velocity initialisation used for battery studies."""
    origin = (0.0,) * d
    e1, e2 = _unit_axes(d)
    if name == "line":
        return UniformLine(start=origin, direction=e1, speed=1.0), init
    radius = 10.0 * control.r0 if control.r0 > 0 else 10.0
    if name == "circle":
        return Circle(center=origin, radius=radius, speed=1.0, e1=e1, e2=e2), init
    target = (100.0,) + (0.0,) * (d - 1)
    traj = build_mission(origin, target, cruise_speed=1.0, n_rotations=3, rot_radius=radius)
    return traj, InitSpec(r_init=init.r_init, vel_std=0.5, vel_support=0.5)


def _resolve_config(
    config_path: Optional[str],
    regime: Optional[int],
    scenario: Optional[str],
    seed: Optional[int],
    record_states: bool = False,
) -> RunConfig:
    """Layer CLI flags over an optional config file.

    Order: file (or built-in defaults) -> --regime preset -> --scenario
    trajectory -> --seed / --record-states.  Without a file, --regime is
    mandatory because there is no default control law.
    """
    if config_path is not None:
        cfg = load_config(config_path)
        model, control, traj, init = cfg.model, cfg.control, cfg.trajectory, cfg.init
        run_kw = dict(
            dt=cfg.dt,
            n_steps=cfg.n_steps,
            seed=cfg.seed,
            record_every=cfg.record_every,
            run_index=cfg.run_index,
            record_states=cfg.record_states,
        )
    else:
        if regime is None:
            raise ConfigError("no config file given: --regime is required to pick control parameters")
        model, control, traj, init = ModelParams(n_agents=100), None, None, InitSpec()
        run_kw = {}

    if regime is not None:
        overrides, control = _regime_preset(regime)
        model = replace(model, **overrides)

    if scenario is not None:
        traj, init = _scenario_overlay(scenario, control, init, model.dim)
    elif traj is None:
        e1, _ = _unit_axes(model.dim)
        traj = UniformLine(start=(0.0,) * model.dim, direction=e1, speed=1.0)

    if seed is not None:
        run_kw["seed"] = seed
    if record_states:
        run_kw["record_states"] = True
    return RunConfig(model=model, control=control, trajectory=traj, init=init, **run_kw)


# ---------------------------------------------------------------------------
# output writers
# ---------------------------------------------------------------------------

SERIES_HEADER = "t,q_dev,v_dev,u_bar,energy,max_vel_spread"


def _write_series(path: Path, rec: TrajectoryRecord):
    cols = (rec.times, rec.q_dev, rec.v_dev, rec.u_bar, rec.energy, rec.max_vel_spread)
    with open(path, "w") as fh:
        fh.write(SERIES_HEADER + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _state_header(d: int) -> str:
    return ",".join(["t", "agent"] + [f"q{i}" for i in range(d)] + [f"v{i}" for i in range(d)])


def _write_states(path: Path, rec: TrajectoryRecord):
    with open(path, "w") as fh:
        fh.write(_state_header(rec.dim) + "\n")
        for t, q, v in zip(rec.times, rec.positions, rec.velocities):
            for i in range(rec.n_agents):
                cells = [_fmt(t), str(i)] + [_fmt(x) for x in q[i]] + [_fmt(x) for x in v[i]]
                fh.write(",".join(cells) + "\n")


def _verdict_radii(cfg: RunConfig) -> Tuple[float, float]:
    """Default classification radii: twice the rest radii, floored by the
    initial support so a run that merely holds its initial spread still
    counts as approximate."""
    r = max(2.0 * cfg.control.r0, cfg.init.r_init)
    v = max(2.0 * cfg.control.v0, 2.0 * cfg.init.vel_support)
    return r, v


def _summarize(cfg: RunConfig, rec: TrajectoryRecord, runtime: float, outputs: dict) -> dict:
    mp = cfg.model
    density = group_density(mp.n_agents, mp.dim, cfg.control.r0)
    summary = {
        "status": rec.status,
        "runtime_seconds": runtime,
        "task_functionals": None,
        "flock_verdict": None,
        "group": {
            "n_agents": mp.n_agents,
            "dim": mp.dim,
            "density": None if math.isinf(density) else density,
            "body_speed": body_speed(mp) if mp.a_coef > 0 else None,
        },
        "abort": None,
        "config": config_as_dict(cfg),
        "outputs": outputs,
    }
    if rec.status == "aborted":
        summary["abort"] = {
            "time": rec.abort_time,
            "agent": rec.abort_agent,
            "reason": rec.abort_reason,
        }
        return summary

    f = task_functionals(rec)
    radius, vel_radius = _verdict_radii(cfg)
    verdict = classify_flocking(rec, radius, vel_radius)
    summary["task_functionals"] = {
        "u_bar": f.u_bar,
        "q_dev_bar": f.q_dev_bar,
        "v_dev_bar": f.v_dev_bar,
        "horizon": f.horizon,
    }
    summary["flock_verdict"] = {
        "level": verdict.level,
        "window_start": verdict.window_start,
        "radius": radius,
        "vel_radius": vel_radius,
        "eps": verdict.bounds_used[2],
    }
    return summary


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


@click.group()
def main():
    """Swarm simulation, control sweeps, and stability-theory checks."""


@main.command("simulate")
@click.argument("config", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--regime", type=int, default=None, help="Overlay a published motion-regime preset (1-9).")
@click.option(
    "--scenario",
    type=click.Choice(["line", "circle", "mission"]),
    default=None,
    help="Replace the leader trajectory with a built-in scenario.",
)
@click.option("--seed", type=int, default=None, help="Override the RNG seed.")
@click.option(
    "--out",
    type=click.Path(file_okay=False),
    default="out",
    show_default=True,
    help="Output directory for series.csv and summary.json.",
)
@click.option("--record-states", is_flag=True, help="Also dump full states.csv at every sample.")
@click.option("--dump-config", "dump", is_flag=True, help="Print the resolved config as TOML and exit.")
@_guarded
def cmd_simulate(config, regime, scenario, seed, out, record_states, dump):
    """Run one simulation and write its series, summary, and optional states."""
    cfg = _resolve_config(config, regime, scenario, seed, record_states)
    if dump:
        click.echo(dump_config(cfg), nl=False)
        return

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rec = run(cfg)
    runtime = time.perf_counter() - t0

    outputs = {"series": "series.csv", "summary": "summary.json"}
    _write_series(out_dir / "series.csv", rec)
    if cfg.record_states and rec.positions is not None:
        _write_states(out_dir / "states.csv", rec)
        outputs["states"] = "states.csv"

    summary = _summarize(cfg, rec, runtime, outputs)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(_json_safe(summary), fh, indent=2)
        fh.write("\n")

    if rec.status == "aborted":
        _die(
            EXIT_ABORT,
            f"integration aborted at t={rec.abort_time:g} "
            f"(agent {rec.abort_agent}): {rec.abort_reason}; partial outputs in {out_dir}",
        )
    click.echo(
        f"completed {cfg.n_steps} steps in {runtime:.1f}s; "
        f"verdict {summary['flock_verdict']['level']}; outputs in {out_dir}",
        err=True,
    )


def _parse_axis(name: str, text: str) -> np.ndarray:
    """Axis flag syntax: 'lo:hi:n' (inclusive linspace) or 'v1,v2,...'."""
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
            if n < 1:
                raise ValueError("point count must be >= 1")
            if lo > hi:
                raise ValueError("lo must not exceed hi")
            return np.linspace(lo, hi, n)
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad --{name} axis {text!r}: {exc}") from exc


@main.command("sweep")
@click.argument("config", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", default="0:5:26", show_default=True, help="Position-gain axis (lo:hi:n or comma list).")
@click.option("--r0", default="0:20:26", show_default=True, help="Rest-radius axis.")
@click.option("--beta", default="0:5:26", show_default=True, help="Velocity-gain axis.")
@click.option("--v0", default="0:2:26", show_default=True, help="Velocity dead-zone axis.")
@click.option("--regime", type=int, default=None, help="Base ambient-force preset (control part is swept).")
@click.option(
    "--scenario",
    type=click.Choice(["line", "circle", "mission"]),
    default=None,
    help="Leader scenario shared by every grid point.",
)
@click.option("--seed", type=int, default=None, help="Shared seed (identical initial conditions).")
@click.option(
    "--out",
    type=click.Path(file_okay=False),
    default="sweep_out",
    show_default=True,
    help="Directory for sweep.csv and checkpoint.csv.",
)
@click.option(
    "--parallel",
    type=int,
    default=None,
    help=f"Worker processes (default: ${WORKERS_ENV} or 1).",
)
@click.option("--resume", is_flag=True, help="Skip grid points already in the checkpoint.")
@_guarded
def cmd_sweep(config, alpha, r0, beta, v0, regime, scenario, seed, out, parallel, resume):
    """Evaluate the task functionals on a control-parameter grid.

    The grid is the Cartesian product of the four axes in lexicographic
    order (alpha outermost, v0 innermost).  Every point reuses the base
    configuration and seed, so all points see identical initial conditions.
    Finished points append to an on-disk checkpoint; --resume skips them
    after an interrupt, and the final table is byte-identical either way.
    """
    base = _resolve_config(config, regime, scenario, seed)
    if parallel is None:
        parallel = int(os.environ.get(WORKERS_ENV, "1"))
    if parallel < 1:
        raise ConfigError("--parallel must be >= 1")

    axes = [
        _parse_axis("alpha", alpha),
        _parse_axis("r0", r0),
        _parse_axis("beta", beta),
        _parse_axis("v0", v0),
    ]
    grid = [
        ControlParams(float(a), float(r), float(b), float(v))
        for a in axes[0]
        for r in axes[1]
        for b in axes[2]
        for v in axes[3]
    ]

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / "checkpoint.csv"

    last_pct = -1

    def progress(done: int, total: int):
        nonlocal last_pct
        pct = (100 * done) // total
        if pct > last_pct:
            last_pct = pct
            click.echo(f"sweep: {pct}% ({done}/{total})", err=True)

    records = run_sweep(
        grid,
        base,
        base.seed,
        parallelism=parallel,
        checkpoint=checkpoint,
        resume=resume,
        progress=progress,
    )

    table = out_dir / "sweep.csv"
    with open(table, "w") as fh:
        fh.write(SWEEP_HEADER + "\n")
        for rec in records:
            fh.write(format_sweep_row(rec.idx, rec.theta, rec.functionals, rec.status) + "\n")
    n_aborted = sum(1 for r in records if r.status != "ok")
    click.echo(
        f"sweep finished: {len(records)} points ({n_aborted} aborted) -> {table}", err=True
    )


@main.command("optimize")
@click.argument("sweep_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--qmax", type=float, required=True, help="Upper bound on the mean position deviation.")
@click.option("--vmax", type=float, required=True, help="Upper bound on the mean velocity deviation.")
@_guarded
def cmd_optimize(sweep_csv, qmax, vmax):
    """Pick the cheapest grid point satisfying both deviation caps.

    Prints the winning control parameters and battery cost as JSON; exits 3
    when no finished point satisfies the constraints.
    """
    records = read_sweep_table(Path(sweep_csv).read_text())
    if not records:
        raise ConfigError(f"{sweep_csv} contains no sweep rows")
    best = constrained_argmin(records, qmax, vmax)
    if best is None:
        _echo_json(
            {
                "feasible": False,
                "q_max": qmax,
                "v_max": vmax,
                "message": "no finished grid point satisfies both deviation caps",
            }
        )
        sys.exit(EXIT_INFEASIBLE)
    f = best.functionals
    _echo_json(
        {
            "feasible": True,
            "idx": best.idx,
            "theta": {
                "alpha": best.theta.alpha,
                "r0": best.theta.r0,
                "beta": best.theta.beta,
                "v0": best.theta.v0,
            },
            "u_bar": f.u_bar,
            "q_dev_bar": f.q_dev_bar,
            "v_dev_bar": f.v_dev_bar,
            "q_max": qmax,
            "v_max": vmax,
        }
    )


def _complex_json(z: complex) -> dict:
    return {"re": z.real, "im": z.imag}


@main.command("verify-bounds")
@click.argument("target", type=click.Path(exists=True))
@click.option(
    "--transient",
    type=float,
    default=0.5,
    show_default=True,
    help="Fraction of the run discarded before checking the bounds.",
)
@click.option("--eta", type=float, default=0.0, show_default=True, help="Relative slack on the radii.")
@_guarded
def cmd_verify_bounds(target, transient, eta):
    """Re-run a configuration and test it against the predicted stability radii.

    TARGET is either a TOML config or a simulate output directory (its
    summary.json embeds the resolved config).  Exits 4 when the control law
    admits no linear envelope, 5 when the re-run diverges; a failed check is
    still exit 0 — the verdict is in the JSON.
    """
    path = Path(target)
    if path.is_dir():
        summary_path = path / "summary.json"
        if not summary_path.exists():
            raise ConfigError(f"{path} has no summary.json")
        with open(summary_path) as fh:
            doc = json.load(fh)
        if "config" not in doc:
            raise ConfigError(f"{summary_path} lacks an embedded config")
        cfg = config_from_dict(doc["config"])
    else:
        cfg = load_config(path)

    env = envelope(cfg.control)  # EnvelopeError -> exit 4 via the guard
    report = bound_report(env, cfg.model, cfg.trajectory, cfg.model.n_agents)

    rec = run(cfg)
    if rec.status == "aborted":
        _die(
            EXIT_ABORT,
            f"re-run aborted at t={rec.abort_time:g} (agent {rec.abort_agent}): {rec.abort_reason}",
        )

    check = check_bounds(rec, report, transient_fraction=transient, eta=eta)
    t1 = float(rec.times[0] + transient * rec.horizon)
    decay = decay_check(rec, report.k_hat, report.mass, t1, r0=cfg.control.r0)

    _echo_json(
        {
            "report": {
                "c1": report.c1,
                "c2": report.c2,
                "c3": report.c3,
                "c4": report.c4,
                "lambda1": _complex_json(report.lambda1),
                "lambda2": _complex_json(report.lambda2),
                "gamma": report.gamma,
                "k_hat": report.k_hat,
                "x_bound": report.x_bound,
                "w_bound": report.w_bound,
                "com_bound": report.com_bound,
                "regime": report.regime,
                "k_p_tilde": report.k_p_tilde,
                "k_v_tilde": report.k_v_tilde,
                "c_delta_v": report.c_delta_v,
                "c_l": report.c_l,
                "notes": list(report.notes),
            },
            "envelope": {"k_p": env.k_p, "c_p": env.c_p, "k_v": env.k_v, "c_v": env.c_v},
            "bound_check": {
                "passed": check.passed,
                "x_margin": check.x_margin,
                "w_margin": check.w_margin,
                "x_observed": check.x_observed,
                "w_observed": check.w_observed,
                "window_start": check.window_start,
            },
            "decay_check": {
                "applicable": decay.applicable,
                "passed": decay.passed,
                "fitted_rate": decay.fitted_rate,
                "bound_rate": decay.bound_rate,
                "reason": decay.reason,
            },
        }
    )


def _parse_vector(name: str, text: str) -> Tuple[float, ...]:
    try:
        vec = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --{name} vector {text!r}: {exc}") from exc
    if len(vec) not in (2, 3):
        raise ConfigError(f"--{name} must have 2 or 3 components, got {len(vec)}")
    return vec


@main.command("wobbler")
@click.option("--mode", type=click.Choice(["construct", "check"]), required=True)
@click.option("--alpha", type=float, default=1.0, show_default=True, help="Linear position gain (construct).")
@click.option("--w0", default="0,0,0", show_default=True, help="Common initial velocity, comma-separated.")
@click.option("--f0", default="0,0,0", show_default=True, help="Constant leader acceleration, comma-separated.")
@click.option(
    "--x0",
    "x0_list",
    multiple=True,
    help="Agent offset from the leader (repeatable; default one agent at the origin).",
)
@click.option("--t0", type=float, default=0.0, show_default=True, help="Anchor time of the initial data.")
@click.option("--duration", type=float, default=None, help="Trajectory length (default two periods).")
@click.option("--samples", type=int, default=1000, show_default=True, help="Number of CSV samples.")
@click.option("--out", type=click.Path(dir_okay=False), default="wobbler.csv", show_default=True)
@click.option(
    "--kind",
    type=click.Choice(["linear", "power", "exponential", "logarithmic"]),
    default="power",
    show_default=True,
    help="Force-profile kind to certify (check).",
)
@click.option("--gain", type=float, default=1.0, show_default=True)
@click.option("--threshold", type=float, default=0.0, show_default=True)
@click.option("--exponent", type=float, default=1.0, show_default=True)
@click.option("--s-lo", type=float, default=None, help="Certificate interval start (default threshold+0.01).")
@click.option("--s-hi", type=float, default=None, help="Certificate interval end (default threshold+100).")
@click.option("--grid-n", type=int, default=10000, show_default=True)
@click.option("--v0", type=float, default=None, help="Speed budget for the admissibility test (check).")
@click.option("--radius", type=float, default=None, help="Position budget for the admissibility test (check).")
@_guarded
def cmd_wobbler(
    mode, alpha, w0, f0, x0_list, t0, duration, samples, out,
    kind, gain, threshold, exponent, s_lo, s_hi, grid_n, v0, radius,
):
    """Construct a rigid periodic solution, or certify that none can exist.

    construct: writes the closed-form oscillating trajectory as a states CSV.
    check: runs the three-function growth certificate on the chosen force
    profile (and, when --v0/--radius are given, tests whether the --w0/--x0
    oscillation fits the speed and position budgets); certificates print as
    JSON.  A profile whose certificate is undefined (the third function's
    denominator vanishes) exits 4.
    """
    w0_v = np.array(_parse_vector("w0", w0))
    x0_rows = [_parse_vector("x0", s) for s in x0_list] or [(0.0,) * len(w0_v)]
    if any(len(r) != len(w0_v) for r in x0_rows):
        raise ConfigError("--x0 and --w0 must have the same dimension")
    x0_arr = np.array(x0_rows)

    if mode == "construct":
        if alpha <= 0:
            raise ConfigError("--alpha must be positive")
        f0_v = np.array(_parse_vector("f0", f0))
        if len(f0_v) != len(w0_v):
            raise ConfigError("--f0 and --w0 must have the same dimension")
        mu = math.sqrt(alpha)
        horizon = duration if duration is not None else 2.0 * (2.0 * math.pi / mu)
        if horizon <= 0 or samples < 2:
            raise ConfigError("--duration must be positive and --samples >= 2")
        d = len(w0_v)
        with open(out, "w") as fh:
            fh.write(_state_header(d) + "\n")
            for t in np.linspace(t0, t0 + horizon, samples):
                pos, vel = wobbler_closed_form(x0_arr, w0_v, f0_v, alpha, t0, float(t))
                for i in range(pos.shape[0]):
                    cells = [_fmt(float(t)), str(i)]
                    cells += [_fmt(x) for x in pos[i]] + [_fmt(x) for x in vel]
                    fh.write(",".join(cells) + "\n")
        click.echo(f"wrote {samples} samples to {out}", err=True)
        return

    spec = GeneratingFunctionSpec(kind, gain, threshold, exponent)
    lo = s_lo if s_lo is not None else threshold + 0.01
    hi = s_hi if s_hi is not None else threshold + 100.0
    if lo <= threshold:
        raise ConfigError("--s-lo must lie strictly beyond the dead zone")
    if hi <= lo:
        raise ConfigError("--s-hi must exceed --s-lo")
    if grid_n < 100:
        raise ConfigError("--grid-n must be at least 100")
    try:
        mono = monotonicity_check(spec, lo, hi, grid_n)
    except ValueError as exc:
        _die(EXIT_NOT_APPLICABLE, f"certificate undefined: {exc}")

    admissible = None
    if v0 is not None and radius is not None:
        if alpha <= 0:
            raise ConfigError("--alpha must be positive")
        admissible = wobbler_admissible(x0_arr, w0_v, math.sqrt(alpha), v0, radius)

    payload = {
        "law": {"kind": kind, "gain": gain, "threshold": threshold, "exponent": exponent},
        "interval": {"s_lo": lo, "s_hi": hi, "grid_n": grid_n},
        "monotonicity": {
            "passed": mono.passed,
            "first_violation": (
                None
                if mono.first_violation is None
                else {"function": mono.first_violation[0], "s": mono.first_violation[1]}
            ),
        },
        "wobblers_excluded": mono.passed,
    }
    if admissible is not None:
        payload["admissible"] = admissible
    _echo_json(payload)


if __name__ == "__main__":
    main()
