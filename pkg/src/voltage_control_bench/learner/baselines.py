import logging
from typing import Dict

import numpy as np

from voltage_control_bench.learner.actor_critic import ActorCriticLearner
from voltage_control_bench.learner.replay import Batch

logger = logging.getLogger(__name__)


class MADDPGBaseline(ActorCriticLearner):
    """Unconstrained learner: one centralized reward critic, actor ascends Q_r. Trained on the barrier reward."""

    def critic_target(self, batch: Batch) -> np.ndarray:
        return batch.reward + self.gamma * self.bootstrap(self.reward_critic_target, batch)

    def update_critics(self, batch: Batch) -> float:
        self.reward_critic, self.reward_critic_opt, loss = self.fit_critic(
            self.reward_critic,
            self.reward_critic_opt,
            batch.state,
            batch.action,
            self.critic_target(batch),
            self.cfg.lr_critic,
        )
        return loss

    def update_actor(self, batch: Batch) -> float:
        action, _ = self.policy(self.actor, batch.obs)
        q_r, _ = self.critic(self.reward_critic, batch.state, action)
        grad = -self.action_gradient(self.reward_critic, batch.state, action)
        self.step_actor(batch, grad / len(batch))
        return -float(np.mean(q_r))

    def learn(self, rng: np.random.Generator) -> Dict[str, float]:
        losses = {"loss_r": 0.0, "loss_pi": 0.0}
        for _ in range(self.cfg.critic_epochs):
            losses["loss_r"] = self.update_critics(self.buffer.sample(self.cfg.batch_size, rng))
        for _ in range(self.cfg.actor_epochs):
            losses["loss_pi"] = self.update_actor(self.buffer.sample(self.cfg.batch_size, rng))
        self.soft_update_targets()
        self.updates += 1
        self.check_finite(losses)
        logger.debug(f"Update {self.updates}: {losses}")
        return losses
