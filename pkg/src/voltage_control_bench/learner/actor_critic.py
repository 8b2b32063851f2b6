"""
Shared machinery for centralized-critic, decentralized-actor learners.

One actor is shared by all agents; its input is the agent's local observation with a one-hot agent id appended,
its output a single tanh action. Critics see the global state concatenated with the joint action.
"""

import logging
from typing import Dict, Tuple

import numpy as np

from voltage_control_bench.config import LearnerConfig
from voltage_control_bench.learner.approximator import (
    AdamState,
    MlpParams,
    Tape,
    adam_step,
    backward,
    forward,
    init_mlp,
    soft_update,
)
from voltage_control_bench.learner.replay import Batch, ReplayBuffer

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, losses: Dict[str, float]) -> None:
        super().__init__(message)
        self.losses = losses


class ActorCriticLearner:
    def __init__(
        self, n_agents: int, obs_dim: int, state_dim: int, cfg: LearnerConfig, gamma: float, rng: np.random.Generator
    ) -> None:
        self.n_agents = n_agents
        self.obs_dim = obs_dim
        self.state_dim = state_dim
        self.cfg = cfg
        self.gamma = gamma
        self.updates = 0

        hidden = list(cfg.hidden_sizes)
        self.actor = init_mlp([obs_dim + n_agents] + hidden + [1], "tanh", rng)
        self.reward_critic = init_mlp([state_dim + n_agents] + hidden + [1], "identity", rng)
        self.actor_target = self.actor.copy()
        self.reward_critic_target = self.reward_critic.copy()
        self.actor_opt = AdamState.for_params(self.actor)
        self.reward_critic_opt = AdamState.for_params(self.reward_critic)
        self.buffer = ReplayBuffer(cfg.buffer_size)

    def actor_inputs(self, obs: np.ndarray) -> np.ndarray:
        """(B, n, obs_dim) or (n, obs_dim) observations to (B * n, obs_dim + n) actor inputs."""
        batch = obs.reshape(-1, self.n_agents, self.obs_dim)
        ids = np.broadcast_to(np.eye(self.n_agents), (batch.shape[0], self.n_agents, self.n_agents))
        return np.concatenate([batch, ids], axis=2).reshape(-1, self.obs_dim + self.n_agents)

    def policy(self, params: MlpParams, obs: np.ndarray) -> Tuple[np.ndarray, Tape]:
        """Joint actions (B, n) for batched observations."""
        out, tape = forward(params, self.actor_inputs(obs))
        return out.reshape(-1, self.n_agents), tape

    def select_actions(self, obs: np.ndarray, explore: bool, rng: np.random.Generator) -> np.ndarray:
        actions, _ = self.policy(self.actor, obs)
        actions = actions[0]
        if explore:
            actions = actions + rng.normal(0.0, self.cfg.noise_std, size=self.n_agents)
        return np.clip(actions, -1.0, 1.0)

    def critic(self, params: MlpParams, state: np.ndarray, action: np.ndarray) -> Tuple[np.ndarray, Tape]:
        out, tape = forward(params, np.concatenate([state, action], axis=1))
        return out[:, 0], tape

    def action_gradient(self, params: MlpParams, state: np.ndarray, action: np.ndarray) -> np.ndarray:
        """Per-sample dQ/da, shape (B, n)."""
        _, tape = self.critic(params, state, action)
        _, input_grad = backward(params, tape, np.ones((len(state), 1)))
        return input_grad[:, self.state_dim :]

    def fit_critic(
        self, params: MlpParams, opt: AdamState, state: np.ndarray, action: np.ndarray, target: np.ndarray, lr: float
    ) -> Tuple[MlpParams, AdamState, float]:
        """One Adam step on the mean squared error to `target`; returns the loss before the step."""
        value, tape = self.critic(params, state, action)
        err = value - target
        loss = float(np.mean(err**2))
        grads, _ = backward(params, tape, (2.0 * err / len(err))[:, None])
        new_params, new_opt = adam_step(params, grads, opt, lr)
        return new_params, new_opt, loss

    def step_actor(self, batch: Batch, action_grad: np.ndarray) -> None:
        """Push dJ/da (B, n) through the shared actor and take one Adam step."""
        _, tape = self.policy(self.actor, batch.obs)
        grads, _ = backward(self.actor, tape, action_grad.reshape(-1, 1))
        self.actor, self.actor_opt = adam_step(self.actor, grads, self.actor_opt, self.cfg.lr_actor)

    def bootstrap(self, params: MlpParams, batch: Batch) -> np.ndarray:
        """Target-critic value of the next state under the target actor, zeroed on absorbing transitions."""
        next_action, _ = self.policy(self.actor_target, batch.next_obs)
        value, _ = self.critic(params, batch.next_state, next_action)
        return (1.0 - batch.terminal) * value

    def soft_update_targets(self) -> None:
        self.actor_target = soft_update(self.actor_target, self.actor, self.cfg.tau)
        self.reward_critic_target = soft_update(self.reward_critic_target, self.reward_critic, self.cfg.tau)

    def networks(self) -> Dict[str, MlpParams]:
        return {
            "actor": self.actor,
            "actor_target": self.actor_target,
            "reward_critic": self.reward_critic,
            "reward_critic_target": self.reward_critic_target,
        }

    def scalars(self) -> Dict[str, float]:
        return {}

    def learn(self, rng: np.random.Generator) -> Dict[str, float]:
        raise NotImplementedError

    @staticmethod
    def check_finite(losses: Dict[str, float]) -> None:
        bad = {k: v for k, v in losses.items() if not np.isfinite(v)}
        if bad:
            raise TrainingDiverged(f"Non-finite losses {bad}", losses)
