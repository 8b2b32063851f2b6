import json
import os
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from voltage_control_bench.engine.presets import PRESETS
from voltage_control_bench.utils.utils import output_root

CostFunctionName = Literal["boolean", "step", "vloss"]
AlgorithmName = Literal["madelc", "maddpg_baseline"]
ReferencePolicyName = Literal["zero", "random"]


class ConfigError(ValueError):
    pass


class _Config(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SolverConfig(_Config):
    tolerance: float = Field(1e-8, gt=0)
    max_iter: int = Field(50, ge=1)
    v_floor: float = Field(0.3, gt=0)


class EnvConfig(_Config):
    cost_function: CostFunctionName = "step"
    cost_limit: float = -0.5
    gamma: float = Field(0.99, ge=0, le=1)
    vloss_cap: float = Field(0.2, gt=0)
    train_horizon: int = Field(240, ge=1)
    eval_horizon: int = Field(480, ge=1)
    v_lower: float = 0.95
    v_upper: float = 1.05
    solver: SolverConfig = Field(default_factory=SolverConfig)


class LearnerConfig(_Config):
    hidden_sizes: List[int] = Field(default_factory=lambda: [64, 64])
    lr_critic: float = 1e-3
    lr_actor: float = 1e-4
    lr_alpha: float = 1e-4
    lr_cost_estimator: float = 1e-3
    tau: float = Field(0.01, ge=0, le=1)
    buffer_size: int = Field(5000, ge=1)
    batch_size: int = Field(128, ge=1)
    noise_std: float = Field(1.0, ge=0)
    alpha_init: float = Field(1.0, ge=0)
    update_every: int = Field(60, ge=1)
    critic_epochs: int = Field(10, ge=0)
    actor_epochs: int = Field(1, ge=0)


class SynthConfig(_Config):
    """Synthetic scenario: PV bell, two-peak load, noise and the over-voltage check."""

    days: int = Field(20, ge=1)
    step_minutes: int = Field(3, ge=1)
    start: str = "2012-01-01 00:00"
    pv_peak: float = Field(0.5, ge=0)
    sunrise_hour: float = 6.0
    sunset_hour: float = 19.0
    cloudiness: float = Field(0.3, ge=0, le=1)
    load_base: float = Field(0.05, ge=0)
    load_peak: float = Field(0.1, ge=0)
    load_noise: float = Field(0.05, ge=0)
    power_factor: float = Field(0.95, gt=0, le=1)
    overvoltage_margin: float = Field(0.0, ge=0)
    scale_factor: float = Field(1.2, gt=1)
    max_scale_tries: int = Field(10, ge=0)


class VariantConfig(_Config):
    name: str
    algorithm: AlgorithmName = "madelc"
    no_cost_critic: bool = False
    no_cost_estimator: bool = False
    no_q_loss: bool = False
    cost_function: Optional[CostFunctionName] = None
    beta: float = Field(0.1, ge=0)

    @property
    def ablation_flags(self) -> Dict[str, bool]:
        return {
            "no_cost_critic": self.no_cost_critic,
            "no_cost_estimator": self.no_cost_estimator,
            "no_q_loss": self.no_q_loss,
        }


class RunConfig(_Config):
    network: str
    dataset: Optional[str] = None
    data_seed: int = 0
    output_dir: str = "out"
    seeds: List[int] = Field(default_factory=lambda: [0])
    variants: List[VariantConfig] = Field(default_factory=lambda: [VariantConfig(name="madelc")])
    train_episodes: int = Field(300, ge=0)
    eval_every: int = Field(10, ge=1)
    eval_episodes: int = Field(5, ge=1)
    reference_policies: List[ReferencePolicyName] = Field(default_factory=list)
    preset: Optional[str] = None
    env: EnvConfig = Field(default_factory=EnvConfig)
    learner: LearnerConfig = Field(default_factory=LearnerConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)

    @model_validator(mode="after")
    def _unique_variant_names(self) -> "RunConfig":
        names = [variant.name for variant in self.variants]
        if len(names) != len(set(names)):
            raise ValueError(f"Variant names must be unique, got {names}")
        return self

    def env_for(self, variant: VariantConfig) -> EnvConfig:
        if variant.cost_function is None:
            return self.env
        return self.env.model_copy(update={"cost_function": variant.cost_function})


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """Apply `dotted.key=value` assignments to a raw config dict. Values are parsed as JSON when possible."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"Override '{item}' is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"Override '{item}': '{part}' is not a section")
            node = child
        node[parts[-1]] = _parse_value(raw)
    return data


def resolve_path(path: str, base_dir: str) -> str:
    if os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))


def load_run_config(
    path: str,
    overrides: Optional[List[str]] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    preset: Optional[str] = None,
) -> RunConfig:
    """
    Read a run config, apply the preset and CLI overrides, and validate it.

    Relative `network` and `dataset` paths are resolved against the config file's directory.
    """
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file {path} does not exist") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a JSON object")

    if preset is not None:
        data["preset"] = preset
    preset = data.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"Unknown preset '{preset}' in {path}, expected one of {sorted(PRESETS)}")
        data = PRESETS[preset]().overwrite_config(data)
    data = apply_overrides(data, overrides or [])
    if seed is not None:
        data["seeds"] = [seed]
    data["output_dir"] = output_root(data.get("output_dir", "out"), out)

    base_dir = os.path.dirname(os.path.abspath(path))
    for key in ("network", "dataset"):
        if isinstance(data.get(key), str):
            data[key] = resolve_path(data[key], base_dir)

    try:
        return RunConfig.model_validate(data)
    except ValueError as e:
        raise ConfigError(f"Invalid config {path}: {e}") from e
