import os
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from voltage_control_bench.engine.data import TimeSeriesDataset
from voltage_control_bench.grid.grid_model import NetworkModel, load_network

TESTS_DIR = os.path.dirname(os.path.abspath(__file__))
REPO_DIR = os.path.dirname(TESTS_DIR)


def fixture_path(name: str) -> str:
    return os.path.join(REPO_DIR, "fixtures", name)


def data_path(name: str) -> str:
    return os.path.join(TESTS_DIR, "data", name)


def load_fixture(name: str) -> NetworkModel:
    path = fixture_path(name) if os.path.isfile(fixture_path(name)) else data_path(name)
    return load_network(path)


def gauss_seidel(
    network: NetworkModel, p: np.ndarray, q: np.ndarray, tol: float = 1e-12, max_iter: int = 200000
) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed-point power flow written straight from the bus admittance equations, independent of the solver."""
    ybus = np.zeros((network.n_bus, network.n_bus), dtype=complex)
    for br in network.branches:
        y = 1.0 / complex(br.r, br.x)
        ybus[br.from_bus, br.from_bus] += y
        ybus[br.to_bus, br.to_bus] += y
        ybus[br.from_bus, br.to_bus] -= y
        ybus[br.to_bus, br.from_bus] -= y
    s = p + 1j * q
    v = np.full(network.n_bus, network.v0, dtype=complex)
    for _ in range(max_iter):
        change = 0.0
        for i in range(1, network.n_bus):
            coupling = ybus[i] @ v - ybus[i, i] * v[i]
            new = (np.conj(s[i]) / np.conj(v[i]) - coupling) / ybus[i, i]
            change = max(change, abs(new - v[i]))
            v[i] = new
        if change < tol:
            return np.abs(v), np.angle(v)
    raise RuntimeError("Gauss-Seidel oracle did not converge")


def constant_dataset(
    network: NetworkModel,
    n_rows: int,
    load_p: float = 0.05,
    load_q: float = 0.02,
    pv_p: float = 0.0,
    step_minutes: int = 3,
    pv_p_rows: Optional[np.ndarray] = None,
) -> TimeSeriesDataset:
    timestamps = pd.date_range("2012-01-01", periods=n_rows, freq=f"{step_minutes}min")
    n_loads, n_pvs = len(network.loads), len(network.pvs)
    pv = np.full((n_rows, n_pvs), pv_p) if pv_p_rows is None else np.tile(pv_p_rows[:, None], (1, n_pvs))
    return TimeSeriesDataset(
        step_minutes,
        timestamps,
        np.full((n_rows, n_loads), load_p),
        np.full((n_rows, n_loads), load_q),
        pv,
        [site.column for site in network.loads],
        [site.column for site in network.pvs],
    )


def random_feasible_injections(network: NetworkModel, rng: np.random.Generator, scale: float = 0.1):
    p = rng.uniform(-scale, scale, size=network.n_bus)
    q = rng.uniform(-scale / 2, scale / 2, size=network.n_bus)
    p[0] = q[0] = 0.0
    return p, q


def fake_transition(
    rng: np.random.Generator,
    n_agents: int = 2,
    obs_dim: int = 3,
    state_dim: int = 5,
    reward: Optional[float] = None,
    cost: Optional[float] = None,
    terminal: bool = False,
):
    from voltage_control_bench.engine.env import Transition  # pylint: disable=import-outside-toplevel

    return Transition(
        state=rng.normal(size=state_dim),
        obs=rng.normal(size=(n_agents, obs_dim)),
        action=rng.uniform(-1, 1, size=n_agents),
        reward=float(-rng.uniform(0, 1)) if reward is None else reward,
        cost_raw=0.0,
        cost_norm=float(rng.uniform(-1, 1)) if cost is None else cost,
        next_state=rng.normal(size=state_dim),
        next_obs=rng.normal(size=(n_agents, obs_dim)),
        done=terminal,
        terminal=terminal,
        info={"v": np.ones(3), "q_pv": np.zeros(n_agents)},
    )
