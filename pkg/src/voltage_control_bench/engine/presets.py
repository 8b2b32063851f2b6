from typing import Any, Dict

from pydantic import BaseModel, Field


class BasePreset(BaseModel):
    """Named bundle of learner/env/schedule values. Keys already present in the config file win."""

    def overwrite_config(self, data: Dict[str, Any]) -> Dict[str, Any]:
        for section, values in self.model_dump().items():
            if isinstance(values, dict):
                target = data.setdefault(section, {})
                for k, v in values.items():
                    target.setdefault(k, v)
            else:
                data.setdefault(section, values)
        return data


class Paper(BasePreset):
    train_episodes: int = 300
    eval_every: int = 10
    eval_episodes: int = 5
    env: Dict[str, Any] = Field(default_factory=lambda: {"train_horizon": 240, "eval_horizon": 480, "cost_limit": -0.5})
    learner: Dict[str, Any] = Field(
        default_factory=lambda: {
            "tau": 0.01,
            "buffer_size": 5000,
            "batch_size": 128,
            "noise_std": 1.0,
            "update_every": 60,
            "critic_epochs": 10,
            "actor_epochs": 1,
        }
    )


class Desk(BasePreset):
    train_episodes: int = 300
    eval_every: int = 10
    eval_episodes: int = 5
    env: Dict[str, Any] = Field(default_factory=lambda: {"train_horizon": 240, "eval_horizon": 480, "cost_limit": -0.5})
    learner: Dict[str, Any] = Field(
        default_factory=lambda: {
            "buffer_size": 5000,
            "batch_size": 128,
            "noise_std": 0.3,
            "lr_actor": 1e-3,
            "update_every": 20,
            "critic_epochs": 10,
            "actor_epochs": 1,
        }
    )


PRESETS = {"paper": Paper, "desk": Desk}

