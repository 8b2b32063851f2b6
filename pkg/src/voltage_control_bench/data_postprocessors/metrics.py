"""
Episode-level voltage-control metrics computed from an evaluation trace.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np
from pydantic import BaseModel

from voltage_control_bench.engine.costs import V_LOWER, V_UPPER
from voltage_control_bench.grid.grid_model import NetworkModel

METRIC_NAMES = ["cr", "pvooc", "vdd", "vrd", "ql", "pl"]


class EmptyTrace(ValueError):
    pass


@dataclass
class EpisodeTrace:
    """
    Per-step records of one episode.

    v holds monitored (non-slack) bus voltages (T, n_monitored), q the agents' reactive outputs (T, n_agents),
    l the squared branch current magnitudes (T, n_branches).
    """

    v: List[np.ndarray] = field(default_factory=list)
    q: List[np.ndarray] = field(default_factory=list)
    l: List[np.ndarray] = field(default_factory=list)

    def append(self, v: np.ndarray, q: np.ndarray, l: np.ndarray) -> None:
        self.v.append(np.asarray(v, dtype=float))
        self.q.append(np.asarray(q, dtype=float))
        self.l.append(np.asarray(l, dtype=float))

    @property
    def steps(self) -> int:
        return len(self.v)

    def stack(self, rows: List[np.ndarray]) -> np.ndarray:
        if not rows:
            raise EmptyTrace("Episode trace has no steps")
        return np.vstack(rows)


class MetricsRecord(BaseModel):
    cr: float
    pvooc: float
    vdd: float
    vrd: float
    ql: float
    pl: float


def _out_of_band(v: np.ndarray, v_lower: float, v_upper: float) -> np.ndarray:
    return (v < v_lower) | (v > v_upper)


def controllable_ratio(trace: EpisodeTrace, v_lower: float = V_LOWER, v_upper: float = V_UPPER) -> float:
    v = trace.stack(trace.v)
    return float(np.mean(~np.any(_out_of_band(v, v_lower, v_upper), axis=1)))


def pvooc(trace: EpisodeTrace, v_lower: float = V_LOWER, v_upper: float = V_UPPER) -> float:
    v = trace.stack(trace.v)
    if v.shape[1] == 0:
        return 0.0
    return float(np.mean(np.mean(_out_of_band(v, v_lower, v_upper), axis=1)))


def vdd(trace: EpisodeTrace, v_lower: float = V_LOWER) -> float:
    v = trace.stack(trace.v)
    if v.shape[1] == 0:
        return 0.0
    return float(np.mean(np.max(np.clip(v_lower - v, 0.0, None), axis=1)))


def vrd(trace: EpisodeTrace, v_upper: float = V_UPPER) -> float:
    v = trace.stack(trace.v)
    if v.shape[1] == 0:
        return 0.0
    return float(np.mean(np.max(np.clip(v - v_upper, 0.0, None), axis=1)))


def q_loss(trace: EpisodeTrace) -> float:
    q = trace.stack(trace.q)
    if q.shape[1] == 0:
        return 0.0
    return float(np.mean(np.mean(np.abs(q), axis=1)))


def power_loss(trace: EpisodeTrace, network: NetworkModel) -> float:
    l = trace.stack(trace.l)
    if l.shape[1] == 0:
        return 0.0
    return float(np.mean(l @ network.resistances))


def compute_metrics(
    trace: EpisodeTrace, network: NetworkModel, v_lower: float = V_LOWER, v_upper: float = V_UPPER
) -> MetricsRecord:
    return MetricsRecord(
        cr=controllable_ratio(trace, v_lower, v_upper),
        pvooc=pvooc(trace, v_lower, v_upper),
        vdd=vdd(trace, v_lower),
        vrd=vrd(trace, v_upper),
        ql=q_loss(trace),
        pl=power_loss(trace, network),
    )
