"""Shared builders for synthetic trajectory records."""
import numpy as np
import pytest

from dpdflock.engine import TrajectoryRecord


def make_record(times, *, n_agents=1, dim=3, status="completed", **columns) -> TrajectoryRecord:
    """A TrajectoryRecord with the given columns; everything else zeros.

    ``u_bar`` defaults to a cumulative column (zeros), and any unspecified
    series is zero — convenient for exercising metrics and checkers on
    hand-crafted data.
    """
    t = np.asarray(times, dtype=float)
    names = (
        "q_dev",
        "v_dev",
        "u_bar",
        "energy",
        "max_vel_spread",
        "max_q_dev",
        "max_v_dev",
        "x_bar_norm",
        "w_bar_norm",
        "w_hat_norm",
    )
    data = {}
    for name in names:
        col = columns.pop(name, None)
        data[name] = np.zeros_like(t) if col is None else np.asarray(col, dtype=float)
        if data[name].shape != t.shape:
            raise ValueError(f"column {name} does not match the time axis")
    if columns:
        raise TypeError(f"unknown columns: {sorted(columns)}")
    return TrajectoryRecord(times=t, n_agents=n_agents, dim=dim, status=status, **data)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
