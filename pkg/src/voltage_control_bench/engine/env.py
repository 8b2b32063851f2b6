"""
Constrained Markov game over a radial network and a time-series dataset.

Agents are the PVs in network-file order. An agent's action in [-1, 1] is the share of the inverter's reactive
headroom it injects (positive) or absorbs (negative).

Observation layout per agent, for the agent's zone with members sorted by bus id:
    [load p..., load q..., pv p..., pv q..., bus v..., bus theta...]
zero-padded at the end to the longest zone observation. Global state layout:
    [v (all buses), theta (all buses), load p, load q, pv p, pv q]
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional

import numpy as np

from voltage_control_bench.config import EnvConfig
from voltage_control_bench.data_postprocessors.metrics import EpisodeTrace
from voltage_control_bench.engine import costs
from voltage_control_bench.engine.data import DatasetTooShort, TimeSeriesDataset, injections_at, resolve_s_ratings
from voltage_control_bench.grid.grid_model import NetworkModel
from voltage_control_bench.grid.power_flow import PowerFlowError, PowerFlowSolution, SolverOptions, solve

logger = logging.getLogger(__name__)

EpisodeKind = Literal["train", "eval"]


@dataclass
class Transition:
    state: np.ndarray
    obs: np.ndarray
    action: np.ndarray
    reward: float
    cost_raw: float
    cost_norm: float
    next_state: np.ndarray
    next_obs: np.ndarray
    done: bool
    terminal: bool
    info: Dict[str, Any] = field(default_factory=dict)


def clip_actions(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if np.any(np.abs(a) > 1.0):
        logger.warning(f"Clipping out-of-range actions {a} to [-1, 1]")
        return np.clip(a, -1.0, 1.0)
    return a


def action_to_reactive(a: np.ndarray, p_pv: np.ndarray, s_rating: np.ndarray) -> np.ndarray:
    q_max = np.sqrt(np.maximum(np.asarray(s_rating) ** 2 - np.asarray(p_pv) ** 2, 0.0))
    return clip_actions(a) * q_max


class VoltageControlEnv:
    def __init__(
        self,
        network: NetworkModel,
        dataset: TimeSeriesDataset,
        cfg: EnvConfig,
        s_ratings: Optional[np.ndarray] = None,
    ) -> None:
        self.network = network
        self.dataset = dataset
        self.cfg = cfg
        self.s_ratings = s_ratings if s_ratings is not None else resolve_s_ratings(network, dataset)
        self.cost_fn = costs.COST_FUNCTIONS[cfg.cost_function]
        self.cost_cap = costs.raw_max(cfg.cost_function, cfg.vloss_cap)
        self.solver_opts = SolverOptions(cfg.solver.tolerance, cfg.solver.max_iter, cfg.solver.v_floor)

        self.n_agents = len(network.pvs)
        self._zone_layout = self._build_zone_layout()
        self.obs_dim = max((len(layout) for layout in self._zone_layout), default=0)
        self.state_dim = 2 * network.n_bus + 2 * len(network.loads) + 2 * self.n_agents

        self.horizon = 0
        self.start = 0
        self.t = 0
        self.pv_q = np.zeros(self.n_agents)
        self.solution: Optional[PowerFlowSolution] = None
        self.trace = EpisodeTrace()

    def _build_zone_layout(self) -> List[List[tuple]]:
        """For each agent, an ordered list of (kind, index) pointers into the current grid quantities."""
        zone_of = self.network.zone_of
        layouts = []
        for pv in self.network.pvs:
            zone = zone_of[pv.bus]
            loads = sorted((site.bus, k) for k, site in enumerate(self.network.loads) if zone_of[site.bus] == zone)
            pvs = sorted((site.bus, k) for k, site in enumerate(self.network.pvs) if zone_of[site.bus] == zone)
            buses = self.network.buses_in_zone(zone)
            layout = (
                [("load_p", k) for _, k in loads]
                + [("load_q", k) for _, k in loads]
                + [("pv_p", k) for _, k in pvs]
                + [("pv_q", k) for _, k in pvs]
                + [("v", bus) for bus in buses]
                + [("theta", bus) for bus in buses]
            )
            layouts.append(layout)
        return layouts

    @property
    def row(self) -> int:
        return self.start + self.t

    def _quantities(self) -> Dict[str, np.ndarray]:
        assert self.solution is not None
        return {
            "v": self.solution.v,
            "theta": self.solution.theta,
            "load_p": self.dataset.load_p[self.row],
            "load_q": self.dataset.load_q[self.row],
            "pv_p": self.dataset.pv_p[self.row],
            "pv_q": self.pv_q,
        }

    def state(self) -> np.ndarray:
        qty = self._quantities()
        return np.concatenate([qty["v"], qty["theta"], qty["load_p"], qty["load_q"], qty["pv_p"], qty["pv_q"]])

    def observations(self) -> np.ndarray:
        qty = self._quantities()
        obs = np.zeros((self.n_agents, self.obs_dim))
        for agent, layout in enumerate(self._zone_layout):
            obs[agent, : len(layout)] = [qty[kind][idx] for kind, idx in layout]
        return obs

    def monitored_voltages(self) -> np.ndarray:
        assert self.solution is not None
        return self.solution.v[1:]

    def reset(self, episode_kind: EpisodeKind, rng: np.random.Generator, start: Optional[int] = None) -> np.ndarray:
        self.horizon = self.cfg.train_horizon if episode_kind == "train" else self.cfg.eval_horizon
        n_rows = len(self.dataset)
        if start is None:
            if episode_kind == "train":
                if n_rows < self.horizon + 1:
                    raise DatasetTooShort(f"Dataset has {n_rows} rows, a training episode needs {self.horizon + 1}")
                start = int(rng.integers(0, n_rows - self.horizon))
            else:
                candidates = self.eval_starts()
                if len(candidates) == 0:
                    raise DatasetTooShort(f"No day in the dataset has {self.horizon} steps left for an evaluation")
                start = int(rng.choice(candidates))
        elif start + self.horizon > n_rows - 1:
            raise DatasetTooShort(f"Start row {start} leaves fewer than {self.horizon} steps")

        self.start = start
        self.t = 0
        self.pv_q = np.zeros(self.n_agents)
        self.trace = EpisodeTrace()
        self.solution = solve(self.network, injections_at(self.network, self.dataset, self.row), self.solver_opts)
        logger.debug(f"Reset {episode_kind} episode at row {start} with horizon {self.horizon}")
        return self.observations()

    def eval_starts(self) -> np.ndarray:
        starts = self.dataset.day_starts()
        return starts[starts + self.horizon <= len(self.dataset) - 1]

    def _step_info(self, iterations: int, failure: bool) -> Dict[str, Any]:
        v = self.monitored_voltages()
        n = max(len(v), 1)
        assert self.solution is not None
        return {
            "iterations": iterations,
            "c_percent": costs.c_percent(v, self.cfg.v_lower, self.cfg.v_upper),
            "below": float(np.count_nonzero(v < self.cfg.v_lower) / n),
            "above": float(np.count_nonzero(v > self.cfg.v_upper) / n),
            "v_deviation": costs.cost_vloss(v),
            "line_loss": self.solution.p_loss,
            "solver_failure": failure,
            "v": v.copy(),
            "q_pv": self.pv_q.copy(),
        }

    def step(self, action: np.ndarray) -> Transition:
        if self.solution is None:
            raise RuntimeError("step() called before reset()")
        action = clip_actions(np.asarray(action, dtype=float).reshape(self.n_agents))

        state, obs = self.state(), self.observations()
        self.t += 1
        pv_q = action_to_reactive(action, self.dataset.pv_p[self.row], self.s_ratings)
        inj = injections_at(self.network, self.dataset, self.row, pv_q)

        prev_solution, prev_q = self.solution, self.pv_q
        self.pv_q = pv_q
        try:
            self.solution = solve(self.network, inj, self.solver_opts, warm_start=prev_solution)
        except PowerFlowError as e:
            logger.warning(f"Power flow failed at row {self.row}: {e}; terminating the episode")
            # keep the last solved grid; the failed step is not observable
            self.t -= 1
            self.solution, self.pv_q = prev_solution, prev_q
            info = self._step_info(-1, True)
            info["q_pv"] = pv_q
            return Transition(
                state=state,
                obs=obs,
                action=action,
                reward=costs.reward(pv_q),
                cost_raw=self.cost_cap,
                cost_norm=costs.normalize_cost(self.cost_cap, self.cost_cap),
                next_state=state,
                next_obs=obs,
                done=True,
                terminal=True,
                info=info,
            )

        v = self.monitored_voltages()
        cost_raw = float(self.cost_fn(v, self.cfg.v_lower, self.cfg.v_upper))
        self.trace.append(v, pv_q, np.abs(self.solution.i_branch) ** 2)
        return Transition(
            state=state,
            obs=obs,
            action=action,
            reward=costs.reward(pv_q),
            cost_raw=cost_raw,
            cost_norm=costs.normalize_cost(cost_raw, self.cost_cap),
            next_state=self.state(),
            next_obs=self.observations(),
            done=self.t >= self.horizon,
            terminal=False,
            info=self._step_info(self.solution.iterations, False),
        )

    def episode_trace(self) -> EpisodeTrace:
        return self.trace
