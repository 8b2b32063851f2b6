from dataclasses import dataclass
from typing import Optional

import numpy as np

from voltage_control_bench.engine.env import Transition


@dataclass
class Batch:
    state: np.ndarray
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    cost: np.ndarray
    next_state: np.ndarray
    next_obs: np.ndarray
    terminal: np.ndarray

    def __len__(self) -> int:
        return len(self.reward)


class ReplayBuffer:
    """Fixed-capacity ring buffer. Storage is allocated on the first append, once the shapes are known."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError(f"Replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.idx = 0
        self.size = 0
        self._storage: Optional[dict] = None

    def _allocate(self, tr: Transition) -> dict:
        def buf(shape: tuple) -> np.ndarray:
            return np.zeros((self.capacity,) + shape)

        return {
            "state": buf(tr.state.shape),
            "obs": buf(tr.obs.shape),
            "action": buf(tr.action.shape),
            "reward": buf(()),
            "cost": buf(()),
            "next_state": buf(tr.next_state.shape),
            "next_obs": buf(tr.next_obs.shape),
            "terminal": buf(()),
        }

    def append(self, tr: Transition, reward: Optional[float] = None) -> None:
        """Store a transition with its normalized cost. `reward` replaces the environment reward when given."""
        if self._storage is None:
            self._storage = self._allocate(tr)
        s = self._storage
        s["state"][self.idx] = tr.state
        s["obs"][self.idx] = tr.obs
        s["action"][self.idx] = tr.action
        s["reward"][self.idx] = tr.reward if reward is None else reward
        s["cost"][self.idx] = tr.cost_norm
        s["next_state"][self.idx] = tr.next_state
        s["next_obs"][self.idx] = tr.next_obs
        s["terminal"][self.idx] = float(tr.terminal)
        self.idx = (self.idx + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __len__(self) -> int:
        return self.size

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._storage is None or self.size < batch_size:
            raise ValueError(f"Cannot sample {batch_size} transitions from a buffer holding {self.size}")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return Batch(**{key: values[idx] for key, values in self._storage.items()})
