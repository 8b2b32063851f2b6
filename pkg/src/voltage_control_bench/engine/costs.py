"""Reward and safety-cost functions over the monitored (non-slack) bus voltages."""

from typing import Callable, Dict

import numpy as np

V_LOWER = 0.95
V_UPPER = 1.05
V_NOMINAL = 1.0
NORMALIZE_EPS = 1e-6


def c_percent(v: np.ndarray, v_lower: float = V_LOWER, v_upper: float = V_UPPER) -> float:
    """Fraction of monitored buses inside [v_lower, v_upper], bounds inclusive."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return 1.0
    out = np.count_nonzero((v < v_lower) | (v > v_upper))
    return 1.0 - out / v.size


def cost_boolean(v: np.ndarray, v_lower: float = V_LOWER, v_upper: float = V_UPPER) -> float:
    return 0.0 if c_percent(v, v_lower, v_upper) == 1.0 else 1.0


def cost_step(v: np.ndarray, v_lower: float = V_LOWER, v_upper: float = V_UPPER) -> float:
    share = c_percent(v, v_lower, v_upper)
    if share == 1.0:
        return 0.0
    if share >= 0.9:
        return 0.5
    return 1.0


def cost_vloss(v: np.ndarray, v_lower: float = V_LOWER, v_upper: float = V_UPPER) -> float:
    # band unused; signature matches the other COST_FUNCTIONS
    del v_lower, v_upper
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return 0.0
    return float(np.mean(np.abs(v - V_NOMINAL)))


COST_FUNCTIONS: Dict[str, Callable[..., float]] = {
    "boolean": cost_boolean,
    "step": cost_step,
    "vloss": cost_vloss,
}


def raw_max(cost_function: str, vloss_cap: float = 0.2) -> float:
    return vloss_cap if cost_function == "vloss" else 1.0


def normalize_cost(raw: float, cap: float = 1.0) -> float:
    """Affine map of [0, cap] onto (-1, 1); raw is clipped to the cap first."""
    clipped = min(max(float(raw), 0.0), cap)
    return (1.0 - NORMALIZE_EPS) * (2.0 * clipped / cap - 1.0)


def reward(q_pv: np.ndarray) -> float:
    """Negative mean absolute reactive output over agents."""
    q_pv = np.asarray(q_pv, dtype=float)
    if q_pv.size == 0:
        return 0.0
    return -float(np.mean(np.abs(q_pv)))


def barrier_reward(v: np.ndarray, q_pv: np.ndarray, beta: float) -> float:
    """L1 voltage barrier plus beta-weighted reactive loss, for the unconstrained baseline."""
    return -cost_vloss(v) + beta * reward(q_pv)
