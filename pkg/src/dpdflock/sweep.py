"""Control-parameter grid sweeps, marginal surfaces, and the constrained optimum.

A sweep evaluates the task functionals once per grid point, always from the
same seed so every point sees identical initial conditions.  Progress is
checkpointed line-by-line (same CSV schema as the final table, keyed by grid
index) so a long sweep can be killed and resumed; results are ordered by grid
index no matter how many workers ran them, which makes the output byte-stable
across parallelism settings.
"""
from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .engine import RunConfig, run
from .metrics import TaskFunctionals, task_functionals
from .model import ControlParams

__all__ = [
    "GridSpec",
    "SweepRecord",
    "MarginalSurface",
    "SWEEP_HEADER",
    "CONTROL_AXES",
    "make_grid",
    "run_sweep",
    "marginalize",
    "constrained_argmin",
    "regime_preset",
    "REGIME_TABLE",
    "format_sweep_row",
    "parse_sweep_rows",
    "read_sweep_table",
]

CONTROL_AXES = ("alpha", "r0", "beta", "v0")

SWEEP_HEADER = "idx,alpha,r0,beta,v0,u_bar,q_dev_bar,v_dev_bar,status"


@dataclass(frozen=True)
class GridSpec:
    """Per-axis (lo, hi, n_points) ranges over the four control parameters."""

    alpha: Tuple[float, float, int] = (0.0, 5.0, 26)
    r0: Tuple[float, float, int] = (0.0, 20.0, 26)
    beta: Tuple[float, float, int] = (0.0, 5.0, 26)
    v0: Tuple[float, float, int] = (0.0, 2.0, 26)

    def __post_init__(self):
        for name in CONTROL_AXES:
            lo, hi, n = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lo must not exceed hi")
            if n < 1:
                raise ValueError(f"{name}: n_points must be >= 1")

    def axis_values(self, name: str) -> np.ndarray:
        lo, hi, n = getattr(self, name)
        return np.linspace(lo, hi, int(n))


@dataclass(frozen=True)
class SweepRecord:
    """One evaluated grid point; functionals are present exactly when it finished."""

    idx: int
    theta: ControlParams
    functionals: Optional[TaskFunctionals]
    seed: int
    status: str

    def __post_init__(self):
        if (self.status == "ok") != (self.functionals is not None):
            raise ValueError("functionals must be present exactly for status 'ok'")


@dataclass(frozen=True)
class MarginalSurface:
    """Functional means over all suppressed axes, on the kept axes' grid."""

    axes: Tuple[str, ...]
    grids: Tuple[np.ndarray, ...]
    u_bar: np.ndarray
    q_dev_bar: np.ndarray
    v_dev_bar: np.ndarray
    n_aborted: int


def make_grid(spec: GridSpec) -> List[ControlParams]:
    """Cartesian grid in lexicographic axis order (alpha outermost, v0 innermost)."""
    out = []
    for a in spec.axis_values("alpha"):
        for r in spec.axis_values("r0"):
            for b in spec.axis_values("beta"):
                for v in spec.axis_values("v0"):
                    out.append(ControlParams(float(a), float(r), float(b), float(v)))
    return out


# ---------------------------------------------------------------------------
# sweep execution
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def format_sweep_row(idx: int, theta: ControlParams, f: Optional[TaskFunctionals], status: str) -> str:
    """Serialise one record in the table/checkpoint schema."""
    vals = (f.u_bar, f.q_dev_bar, f.v_dev_bar) if f is not None else (math.nan,) * 3
    return ",".join(
        [str(idx), _fmt(theta.alpha), _fmt(theta.r0), _fmt(theta.beta), _fmt(theta.v0)]
        + [_fmt(v) for v in vals]
        + [status]
    )


def parse_sweep_rows(text: str) -> Dict[int, Tuple[float, float, float, str]]:
    """Read a table/checkpoint back into {idx: (u_bar, q_dev_bar, v_dev_bar, status)}."""
    out: Dict[int, Tuple[float, float, float, str]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("idx,"):
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise ValueError(f"malformed sweep row: {line!r}")
        out[int(parts[0])] = (float(parts[5]), float(parts[6]), float(parts[7]), parts[8])
    return out


def read_sweep_table(text: str) -> List[SweepRecord]:
    """Reconstruct full records (with control parameters) from a finished table.

    The table does not persist seeds or horizons, so loaded records carry
    ``seed = -1`` and a NaN horizon; that is enough for post-processing
    (marginal surfaces, the constrained optimum).
    """
    records = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("idx,"):
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise ValueError(f"malformed sweep row: {line!r}")
        theta = ControlParams(
            alpha=float(parts[1]), r0=float(parts[2]), beta=float(parts[3]), v0=float(parts[4])
        )
        status = parts[8]
        values = None
        if status == "ok":
            values = (float(parts[5]), float(parts[6]), float(parts[7]), math.nan)
        records.append(_record_from_values(int(parts[0]), theta, -1, values, status))
    return records


def _evaluate_point(args):
    idx, cfg = args
    record = run(cfg)
    if record.status != "completed":
        return idx, None, "aborted"
    f = task_functionals(record)
    return idx, (f.u_bar, f.q_dev_bar, f.v_dev_bar, f.horizon), "ok"


def _record_from_values(idx, theta, seed, values, status) -> SweepRecord:
    f = None
    if status == "ok":
        f = TaskFunctionals(u_bar=values[0], q_dev_bar=values[1], v_dev_bar=values[2], horizon=values[3])
    return SweepRecord(idx=idx, theta=theta, functionals=f, seed=seed, status=status)


def run_sweep(
    grid: Sequence[ControlParams],
    base_cfg: RunConfig,
    base_seed: int,
    parallelism: int = 1,
    *,
    checkpoint: Optional[Path] = None,
    resume: bool = False,
    progress: Optional[Callable[[int, int], None]] = None,
) -> List[SweepRecord]:
    """Evaluate every grid point; shared seed, resumable, order-deterministic.

    Each point runs ``base_cfg`` with its control parameters swapped in and
    ``seed = base_seed`` (identical initial conditions across the grid).  A
    point that diverges is recorded as aborted and the sweep continues.  With
    ``checkpoint`` set, finished points are appended to that file as they
    complete and ``resume=True`` skips any indices already present.

    Records resumed from a checkpoint carry the stored functional values with
    an unknown (NaN) horizon — the table schema does not persist horizons.
    """
    total = len(grid)
    done: Dict[int, Tuple[float, float, float, str]] = {}
    if checkpoint is not None:
        checkpoint = Path(checkpoint)
        if resume and checkpoint.exists():
            done = {i: v for i, v in parse_sweep_rows(checkpoint.read_text()).items() if i < total}

    pending = [i for i in range(total) if i not in done]
    jobs = [(i, replace(base_cfg, control=grid[i], seed=base_seed)) for i in pending]

    ckpt_handle = None
    if checkpoint is not None:
        fresh = not (resume and checkpoint.exists())
        ckpt_handle = open(checkpoint, "w" if fresh else "a")
        if fresh:
            ckpt_handle.write(SWEEP_HEADER + "\n")

    results: Dict[int, Tuple[Optional[Tuple[float, float, float, float]], str]] = {}
    completed = len(done)
    executor = None
    try:
        if parallelism <= 1 or not jobs:
            iterator = map(_evaluate_point, jobs)
        else:
            executor = concurrent.futures.ProcessPoolExecutor(max_workers=parallelism)
            iterator = executor.map(_evaluate_point, jobs)
        for idx, values, status in iterator:
            results[idx] = (values, status)
            completed += 1
            if ckpt_handle is not None:
                f = None
                if status == "ok":
                    f = TaskFunctionals(values[0], values[1], values[2], values[3])
                ckpt_handle.write(format_sweep_row(idx, grid[idx], f, status) + "\n")
                ckpt_handle.flush()
            if progress is not None:
                progress(completed, total)
    finally:
        if executor is not None:
            executor.shutdown()
        if ckpt_handle is not None:
            ckpt_handle.close()

    records = []
    for i in range(total):
        if i in results:
            values, status = results[i]
            rec = _record_from_values(i, grid[i], base_seed, values, status)
        else:
            u, qd, vd, status = done[i]
            values = (u, qd, vd, math.nan) if status == "ok" else None
            rec = _record_from_values(i, grid[i], base_seed, values, status)
        records.append(rec)
    return records


# ---------------------------------------------------------------------------
# post-processing
# ---------------------------------------------------------------------------


def marginalize(records: Sequence[SweepRecord], keep_axes: Sequence[str]) -> MarginalSurface:
    """Average the functionals over every axis not in ``keep_axes``.

    Requires a complete rectangular grid (every combination of the axis
    values present exactly once).  Aborted points are left out of the
    averages — their count is reported — and a cell whose points all aborted
    comes out NaN.
    """
    keep = tuple(a for a in CONTROL_AXES if a in keep_axes)
    if len(keep) != len(set(keep_axes)):
        raise ValueError(f"keep_axes must be a subset of {CONTROL_AXES}")
    if not records:
        raise ValueError("no records to marginalize")

    axis_vals = {
        name: np.array(sorted({getattr(r.theta, name) for r in records}))
        for name in CONTROL_AXES
    }
    shape = tuple(len(axis_vals[a]) for a in CONTROL_AXES)
    if math.prod(shape) != len(records):
        raise ValueError("records do not form a complete rectangular grid")
    index = {name: {v: i for i, v in enumerate(axis_vals[name])} for name in CONTROL_AXES}

    sums = np.zeros((3,) + shape)
    counts = np.zeros(shape)
    seen = np.zeros(shape, dtype=bool)
    n_aborted = 0
    for r in records:
        pos = tuple(index[a][getattr(r.theta, a)] for a in CONTROL_AXES)
        if seen[pos]:
            raise ValueError("duplicate grid point; grid is not rectangular")
        seen[pos] = True
        if r.status != "ok":
            n_aborted += 1
            continue
        f = r.functionals
        sums[(0,) + pos] = f.u_bar
        sums[(1,) + pos] = f.q_dev_bar
        sums[(2,) + pos] = f.v_dev_bar
        counts[pos] = 1.0
    if not seen.all():
        raise ValueError("records do not form a complete rectangular grid")

    reduce_over = tuple(i for i, a in enumerate(CONTROL_AXES) if a not in keep)
    tot = sums.sum(axis=tuple(i + 1 for i in reduce_over))
    cnt = counts.sum(axis=reduce_over)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(cnt > 0, tot / cnt, np.nan)

    return MarginalSurface(
        axes=keep,
        grids=tuple(axis_vals[a] for a in keep),
        u_bar=means[0],
        q_dev_bar=means[1],
        v_dev_bar=means[2],
        n_aborted=n_aborted,
    )


def constrained_argmin(
    records: Sequence[SweepRecord], q_max: float, v_max: float
) -> Optional[SweepRecord]:
    """Cheapest point satisfying both deviation caps, or None when infeasible.

    Ties on the battery functional break toward the lexicographically
    smallest (alpha, r0, beta, v0).
    """
    best = None
    best_key = None
    for r in records:
        if r.status != "ok":
            continue
        f = r.functionals
        if f.q_dev_bar > q_max or f.v_dev_bar > v_max:
            continue
        key = (f.u_bar, (r.theta.alpha, r.theta.r0, r.theta.beta, r.theta.v0))
        if best_key is None or key < best_key:
            best, best_key = r, key
    return best


# ---------------------------------------------------------------------------
# published motion regimes
# ---------------------------------------------------------------------------

#: published rows: b_coef, alpha, r0, beta, v0, plus the quoted group density
#: and body speed (stored verbatim as metadata; the derived values can differ
#: — see metrics.group_density / metrics.body_speed)
REGIME_TABLE = {
    1: {"b_coef": 1.0, "alpha": 1.0, "r0": 4.64, "beta": 1.0, "v0": 0.5, "rho": 0.25, "v_b": 1.0},
    2: {"b_coef": 1.0, "alpha": 1.0, "r0": 4.64, "beta": 0.0, "v0": 0.0, "rho": 0.25, "v_b": 1.0},
    3: {"b_coef": 1.0, "alpha": 1.0, "r0": 4.64, "beta": 1.0, "v0": 0.0, "rho": 0.25, "v_b": 1.0},
    4: {"b_coef": 1.0, "alpha": 0.0, "r0": 4.64, "beta": 1.0, "v0": 0.0, "rho": 0.25, "v_b": 1.0},
    5: {"b_coef": 10.0, "alpha": 1.0, "r0": 7.93, "beta": 1.0, "v0": 0.5, "rho": 0.1, "v_b": 1.0},
    6: {"b_coef": 10.0, "alpha": 1.0, "r0": 3.23, "beta": 1.0, "v0": 0.5, "rho": 0.74, "v_b": 1.0},
    7: {"b_coef": 10.0, "alpha": 1.0, "r0": 2.32, "beta": 1.0, "v0": 0.5, "rho": 2.0, "v_b": 1.0},
    8: {"b_coef": 0.2, "alpha": 1.0, "r0": 4.64, "beta": 0.2, "v0": 0.5, "rho": 0.25, "v_b": 0.2},
    9: {"b_coef": 5.0, "alpha": 1.0, "r0": 4.64, "beta": 5.0, "v0": 0.5, "rho": 0.25, "v_b": 2.0},
}


def regime_preset(regime_id: int):
    """Published parameter row ``regime_id`` -> (model overrides, control params).

    All regimes share ``a_coef = 10``, ``r_c = 1``, ``r_d = 5``; only the
    dissipation coefficient and the four control parameters vary.
    """
    if regime_id not in REGIME_TABLE:
        raise ValueError(f"unknown regime id {regime_id}; valid: 1..9")
    row = REGIME_TABLE[regime_id]
    overrides = {"a_coef": 10.0, "b_coef": row["b_coef"], "r_c": 1.0, "r_d": 5.0}
    control = ControlParams(alpha=row["alpha"], r0=row["r0"], beta=row["beta"], v0=row["v0"])
    return overrides, control
