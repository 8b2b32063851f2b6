"""
Lagrangian actor-critic with two safety estimates: a bootstrapped cost critic that shapes the actor gradient and
a one-step cost estimator that drives the multiplier.
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from voltage_control_bench.config import LearnerConfig, VariantConfig
from voltage_control_bench.learner.actor_critic import ActorCriticLearner
from voltage_control_bench.learner.approximator import AdamState, MlpParams, backward, init_mlp, soft_update
from voltage_control_bench.learner.replay import Batch

logger = logging.getLogger(__name__)


class ConflictingFlags(ValueError):
    pass


class MADELC(ActorCriticLearner):
    def __init__(
        self,
        n_agents: int,
        obs_dim: int,
        state_dim: int,
        cfg: LearnerConfig,
        gamma: float,
        cost_limit: float,
        rng: np.random.Generator,
        variant: Optional[VariantConfig] = None,
    ) -> None:
        super().__init__(n_agents, obs_dim, state_dim, cfg, gamma, rng)
        flags = variant.ablation_flags if variant is not None else {}
        enabled = [name for name, on in flags.items() if on]
        if len(enabled) > 1:
            raise ConflictingFlags(f"At most one ablation flag may be set, got {enabled}")
        self.no_cost_critic = flags.get("no_cost_critic", False)
        self.no_cost_estimator = flags.get("no_cost_estimator", False)
        self.no_q_loss = flags.get("no_q_loss", False)

        self.cost_limit = cost_limit
        self.alpha = cfg.alpha_init
        hidden = list(cfg.hidden_sizes)
        self.cost_critic = init_mlp([state_dim + n_agents] + hidden + [1], "identity", rng)
        self.cost_critic_target = self.cost_critic.copy()
        self.cost_estimator = init_mlp([state_dim + n_agents] + hidden + [1], "identity", rng)
        self.cost_critic_opt = AdamState.for_params(self.cost_critic)
        self.cost_estimator_opt = AdamState.for_params(self.cost_estimator)

    def cost_value(self, params: MlpParams, state: np.ndarray, action: np.ndarray) -> np.ndarray:
        return self.critic(params, state, action)[0]

    def cost_estimate(self, state: np.ndarray, action: np.ndarray) -> np.ndarray:
        return self.critic(self.cost_estimator, state, action)[0]

    def critic_targets(self, batch: Batch) -> Tuple[np.ndarray, np.ndarray]:
        y_r = batch.reward + self.gamma * self.bootstrap(self.reward_critic_target, batch)
        if self.no_cost_critic:
            return y_r, batch.cost.copy()
        y_c = batch.cost + self.gamma * self.bootstrap(self.cost_critic_target, batch)
        return y_r, y_c

    def update_critics(self, batch: Batch) -> Tuple[float, float]:
        y_r, y_c = self.critic_targets(batch)
        self.reward_critic, self.reward_critic_opt, loss_r = self.fit_critic(
            self.reward_critic, self.reward_critic_opt, batch.state, batch.action, y_r, self.cfg.lr_critic
        )
        loss_c = 0.0
        if not self.no_cost_critic:
            self.cost_critic, self.cost_critic_opt, loss_c = self.fit_critic(
                self.cost_critic, self.cost_critic_opt, batch.state, batch.action, y_c, self.cfg.lr_critic
            )
        return loss_r, loss_c

    def update_cost_estimator(self, batch: Batch) -> float:
        """Regress the estimator onto the recorded one-step normalized cost."""
        self.cost_estimator, self.cost_estimator_opt, loss = self.fit_critic(
            self.cost_estimator,
            self.cost_estimator_opt,
            batch.state,
            batch.action,
            batch.cost,
            self.cfg.lr_cost_estimator,
        )
        return loss

    def _safety_gradient(self, state: np.ndarray, action: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        params = self.cost_estimator if self.no_cost_critic else self.cost_critic
        value, tape = self.critic(params, state, action)
        _, input_grad = backward(params, tape, np.ones((len(state), 1)))
        return value, input_grad[:, self.state_dim :]

    def update_actor(self, batch: Batch) -> float:
        """One step on mean(-Q_r(s, pi(s)) + alpha * Q_c(s, pi(s))) with the critics and alpha held fixed."""
        action, _ = self.policy(self.actor, batch.obs)
        n = len(batch)
        loss = np.zeros(n)
        grad = np.zeros_like(action)
        if not self.no_q_loss:
            q_r, _ = self.critic(self.reward_critic, batch.state, action)
            loss -= q_r
            grad -= self.action_gradient(self.reward_critic, batch.state, action)
        safety, safety_grad = self._safety_gradient(batch.state, action)
        loss += self.alpha * safety
        grad += self.alpha * safety_grad
        self.step_actor(batch, grad / n)
        return float(np.mean(loss))

    def update_alpha(self, batch: Batch) -> float:
        """alpha <- max(alpha - lr * mean(limit - C(s, pi(s))), 0)."""
        action, _ = self.policy(self.actor, batch.obs)
        if self.no_cost_estimator:
            estimate = self.cost_value(self.cost_critic, batch.state, action)
        else:
            estimate = self.cost_estimate(batch.state, action)
        grad = float(np.mean(self.cost_limit - estimate))
        self.alpha = max(self.alpha - self.cfg.lr_alpha * grad, 0.0)
        return self.alpha

    def soft_update_targets(self) -> None:
        super().soft_update_targets()
        if not self.no_cost_critic:
            self.cost_critic_target = soft_update(self.cost_critic_target, self.cost_critic, self.cfg.tau)

    def networks(self) -> Dict[str, MlpParams]:
        nets = super().networks()
        nets.update(
            {
                "cost_critic": self.cost_critic,
                "cost_critic_target": self.cost_critic_target,
                "cost_estimator": self.cost_estimator,
            }
        )
        return nets

    def scalars(self) -> Dict[str, float]:
        return {"alpha": self.alpha}

    def learn(self, rng: np.random.Generator) -> Dict[str, float]:
        """critic batches, then estimator -> actor -> alpha on a shared batch per actor epoch, then targets."""
        batch_size = self.cfg.batch_size
        losses = {"loss_r": 0.0, "loss_c": 0.0, "loss_est": 0.0, "loss_pi": 0.0}
        for _ in range(self.cfg.critic_epochs):
            losses["loss_r"], losses["loss_c"] = self.update_critics(self.buffer.sample(batch_size, rng))
        for _ in range(self.cfg.actor_epochs):
            batch = self.buffer.sample(batch_size, rng)
            if not self.no_cost_estimator:
                losses["loss_est"] = self.update_cost_estimator(batch)
            losses["loss_pi"] = self.update_actor(batch)
            self.update_alpha(batch)
        self.soft_update_targets()
        self.updates += 1
        losses["alpha"] = self.alpha
        self.check_finite(losses)
        logger.debug(f"Update {self.updates}: {losses}")
        return losses
