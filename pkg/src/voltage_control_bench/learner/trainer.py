"""
Training loop, periodic evaluation and run artifacts for both learners.

A run directory holds:
    run.json                 run id, variant, algorithm, seed, status
    metrics.csv              one row per evaluation episode
    traces.csv               one row per learning update
    reference.csv            reference-policy metrics on the same evaluation episodes (if requested)
    checkpoints/             eval_XXXX.npz per evaluation, final.npz
    diagnostics.json         written only when a loss became non-finite
"""

import json
import logging
import os
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from opentelemetry import trace
from opentelemetry.trace import SpanKind
from tqdm import tqdm

from voltage_control_bench.config import RunConfig, VariantConfig
from voltage_control_bench.data_postprocessors.metrics import METRIC_NAMES, EmptyTrace, MetricsRecord, compute_metrics
from voltage_control_bench.engine import costs
from voltage_control_bench.engine.data import DatasetTooShort, TimeSeriesDataset, load_dataset, synth_dataset
from voltage_control_bench.engine.env import Transition, VoltageControlEnv
from voltage_control_bench.grid.grid_model import NetworkModel, load_network
from voltage_control_bench.grid.power_flow import SolverOptions
from voltage_control_bench.learner.actor_critic import TrainingDiverged
from voltage_control_bench.learner.approximator import save_checkpoint
from voltage_control_bench.learner.baselines import MADDPGBaseline
from voltage_control_bench.learner.madelc import MADELC
from voltage_control_bench.utils.telemetry import create_span_attributes, telemetry_enabled

logger = logging.getLogger(__name__)

Learner = Union[MADELC, MADDPGBaseline]
Policy = Callable[[np.ndarray], np.ndarray]

MADELC_TRACE_COLUMNS = ["update", "loss_r", "loss_c", "loss_est", "loss_pi", "alpha"]
BASELINE_TRACE_COLUMNS = ["update", "loss_r", "loss_pi"]
METRICS_COLUMNS = ["eval_index", "train_episode", "test_episode"] + METRIC_NAMES


@dataclass
class RunArtifacts:
    run_id: str
    run_dir: str
    variant: str
    algorithm: str
    seed: int
    status: str = "ok"
    error: Optional[str] = None
    metrics: List[Dict[str, Any]] = field(default_factory=list)
    traces: List[Dict[str, float]] = field(default_factory=list)
    reference: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def final_cr(self) -> float:
        if not self.metrics:
            return float("nan")
        last = max(row["eval_index"] for row in self.metrics)
        return float(np.mean([row["cr"] for row in self.metrics if row["eval_index"] == last]))

    def write_run_info(self) -> None:
        info = {
            "run_id": self.run_id,
            "variant": self.variant,
            "algorithm": self.algorithm,
            "seed": self.seed,
            "status": self.status,
            "error": self.error,
        }
        with open(os.path.join(self.run_dir, "run.json"), "w") as f:
            json.dump(info, f, indent=4)


def build_learner(
    variant: VariantConfig, env: VoltageControlEnv, cfg: RunConfig, rng: np.random.Generator
) -> Learner:
    env_cfg = cfg.env_for(variant)
    if variant.algorithm == "maddpg_baseline":
        return MADDPGBaseline(env.n_agents, env.obs_dim, env.state_dim, cfg.learner, env_cfg.gamma, rng)
    return MADELC(
        env.n_agents, env.obs_dim, env.state_dim, cfg.learner, env_cfg.gamma, env_cfg.cost_limit, rng, variant
    )


def stored_reward(variant: VariantConfig, tr: Transition, vloss_cap: float = 0.2) -> float:
    """Reward written to the replay buffer for this variant."""
    if variant.algorithm == "maddpg_baseline":
        if tr.info.get("solver_failure", False):
            # a collapsed grid has no voltages; charge the capped barrier
            return -vloss_cap + variant.beta * costs.reward(tr.info["q_pv"])
        return costs.barrier_reward(tr.info["v"], tr.info["q_pv"], variant.beta)
    if variant.no_q_loss:
        return 0.0
    return tr.reward


def _failed_episode_metrics() -> MetricsRecord:
    return MetricsRecord(cr=0.0, pvooc=1.0, vdd=0.0, vrd=0.0, ql=0.0, pl=0.0)


def run_episode(env: VoltageControlEnv, policy: Policy, start: int) -> MetricsRecord:
    obs = env.reset("eval", np.random.default_rng(0), start=start)
    done = False
    while not done:
        tr = env.step(policy(obs))
        obs, done = tr.next_obs, tr.done
    try:
        return compute_metrics(env.episode_trace(), env.network, env.cfg.v_lower, env.cfg.v_upper)
    except EmptyTrace:
        logger.warning(f"Evaluation episode at row {start} failed on its first step")
        return _failed_episode_metrics()


def evaluate(env: VoltageControlEnv, policy: Policy, starts: List[int]) -> List[MetricsRecord]:
    return [run_episode(env, policy, start) for start in starts]


def pick_eval_starts(env: VoltageControlEnv, n_episodes: int, rng: np.random.Generator) -> List[int]:
    env.horizon = env.cfg.eval_horizon
    candidates = env.eval_starts()
    if len(candidates) == 0:
        raise DatasetTooShort(f"No day in the dataset has {env.horizon} steps left for an evaluation episode")
    replace = len(candidates) < n_episodes
    return [int(s) for s in rng.choice(candidates, size=n_episodes, replace=replace)]


def reference_policy(name: str, n_agents: int, rng: np.random.Generator) -> Policy:
    if name == "zero":
        return lambda obs: np.zeros(n_agents)
    if name == "random":
        return lambda obs: rng.uniform(-1.0, 1.0, size=n_agents)
    raise ValueError(f"Unknown reference policy '{name}'")


def _write_csv(rows: List[Dict[str, Any]], columns: List[str], path: str) -> None:
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)


def train(
    cfg: RunConfig,
    variant: VariantConfig,
    network: NetworkModel,
    dataset: TimeSeriesDataset,
    seed: int,
    run_dir: str,
    run_id: str = "run",
    disable_tqdm: bool = True,
) -> RunArtifacts:
    """Train one (variant, seed) cell and write its artifacts to run_dir."""
    os.makedirs(os.path.join(run_dir, "checkpoints"), exist_ok=True)
    artifacts = RunArtifacts(run_id, run_dir, variant.name, variant.algorithm, seed)
    env_cfg = cfg.env_for(variant)
    env = VoltageControlEnv(network, dataset, env_cfg)

    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(6)]
    init_rng, explore_rng, sample_rng, episode_rng, eval_rng, ref_rng = streams
    learner = build_learner(variant, env, cfg, init_rng)
    eval_starts = pick_eval_starts(env, cfg.eval_episodes, eval_rng)
    trace_columns = BASELINE_TRACE_COLUMNS if variant.algorithm == "maddpg_baseline" else MADELC_TRACE_COLUMNS

    def greedy(obs: np.ndarray) -> np.ndarray:
        return learner.select_actions(obs, explore=False, rng=explore_rng)

    def run_evaluation(eval_index: int, train_episode: int) -> None:
        records = evaluate(env, greedy, eval_starts)
        for k, record in enumerate(records):
            artifacts.metrics.append(
                {"eval_index": eval_index, "train_episode": train_episode, "test_episode": k, **record.model_dump()}
            )
        mean_cr = float(np.mean([r.cr for r in records]))
        logger.info(f"[{run_id}] eval {eval_index} after {train_episode} episodes: CR {mean_cr:.3f}")
        _write_csv(artifacts.metrics, METRICS_COLUMNS, os.path.join(run_dir, "metrics.csv"))
        save_checkpoint(
            os.path.join(run_dir, "checkpoints", f"eval_{eval_index:04d}.npz"), learner.networks(), learner.scalars()
        )

    for name in cfg.reference_policies:
        records = evaluate(env, reference_policy(name, env.n_agents, ref_rng), eval_starts)
        for k, record in enumerate(records):
            artifacts.reference.append({"policy": name, "test_episode": k, **record.model_dump()})
    if artifacts.reference:
        reference_columns = ["policy", "test_episode"] + METRIC_NAMES
        _write_csv(artifacts.reference, reference_columns, os.path.join(run_dir, "reference.csv"))

    run_evaluation(0, 0)
    steps = 0
    eval_index = 0
    last_losses: Dict[str, float] = {}
    for episode in tqdm(range(1, cfg.train_episodes + 1), desc=run_id, disable=disable_tqdm):
        obs = env.reset("train", episode_rng)
        done = False
        while not done:
            action = learner.select_actions(obs, explore=True, rng=explore_rng)
            tr = env.step(action)
            learner.buffer.append(tr, stored_reward(variant, tr, env_cfg.vloss_cap))
            steps += 1
            if steps % cfg.learner.update_every == 0 and len(learner.buffer) >= cfg.learner.batch_size:
                try:
                    last_losses = learner.learn(sample_rng)
                except TrainingDiverged as e:
                    _write_diagnostics(run_dir, learner.updates, e.losses, learner.scalars())
                    _write_csv(artifacts.traces, trace_columns, os.path.join(run_dir, "traces.csv"))
                    raise
                artifacts.traces.append({"update": learner.updates, **last_losses})
            obs, done = tr.next_obs, tr.done
        if episode % cfg.eval_every == 0:
            eval_index += 1
            run_evaluation(eval_index, episode)

    _write_csv(artifacts.traces, trace_columns, os.path.join(run_dir, "traces.csv"))
    save_checkpoint(os.path.join(run_dir, "checkpoints", "final.npz"), learner.networks(), learner.scalars())
    return artifacts


def _write_diagnostics(run_dir: str, update: int, losses: Dict[str, float], scalars: Dict[str, float]) -> None:
    with open(os.path.join(run_dir, "diagnostics.json"), "w") as f:
        json.dump({"update": update, "losses": {k: repr(v) for k, v in losses.items()}, **scalars}, f, indent=4)


def load_inputs(cfg: RunConfig) -> Tuple[NetworkModel, TimeSeriesDataset]:
    network = load_network(cfg.network)
    if cfg.dataset is not None:
        dataset = load_dataset(cfg.dataset, network, min_rows=cfg.env.eval_horizon + 1)
    else:
        opts = SolverOptions(cfg.env.solver.tolerance, cfg.env.solver.max_iter, cfg.env.solver.v_floor)
        dataset = synth_dataset(cfg.synth, cfg.data_seed, network, cfg.env.v_upper, opts)
    return network, dataset


def run_cell(
    cfg: RunConfig, variant: VariantConfig, seed: int, run_id: str, run_dir: str, disable_tqdm: bool = True
) -> RunArtifacts:
    """Entry point for one (variant, seed) run; never raises, failures are reported in the returned status."""
    tracer = trace.get_tracer(__name__)
    span_cm = tracer.start_as_current_span(run_id, kind=SpanKind.INTERNAL) if telemetry_enabled() else nullcontext()
    with span_cm as span:
        os.makedirs(run_dir, exist_ok=True)
        try:
            network, dataset = load_inputs(cfg)
            trainer = TRAINERS[variant.algorithm]
            artifacts = trainer(cfg, network, dataset, seed, run_dir, variant, run_id, disable_tqdm)
        except Exception as e:  # pylint: disable=broad-except
            logger.error(f"[{run_id}] run failed: {e}")
            artifacts = RunArtifacts(run_id, run_dir, variant.name, variant.algorithm, seed, "failed", str(e))
        artifacts.write_run_info()
        if span:
            span.set_attributes(
                create_span_attributes(run_id, variant.algorithm, seed, cfg.train_episodes, artifacts.final_cr)
            )
        logger.info(f"[{run_id}] finished with status {artifacts.status}, final CR {artifacts.final_cr:.3f}")
        return artifacts


def madelc_train(
    cfg: RunConfig,
    network: NetworkModel,
    dataset: TimeSeriesDataset,
    seed: int,
    run_dir: str,
    variant: Optional[VariantConfig] = None,
    run_id: str = "run",
    disable_tqdm: bool = True,
) -> RunArtifacts:
    if variant is None:
        variant = next((v for v in cfg.variants if v.algorithm == "madelc"), VariantConfig(name="madelc"))
    if variant.algorithm != "madelc":
        raise ValueError(f"Variant '{variant.name}' is not an MA-DELC variant")
    return train(cfg, variant, network, dataset, seed, run_dir, run_id, disable_tqdm)


def maddpg_train(
    cfg: RunConfig,
    network: NetworkModel,
    dataset: TimeSeriesDataset,
    seed: int,
    run_dir: str,
    variant: Optional[VariantConfig] = None,
    run_id: str = "run",
    disable_tqdm: bool = True,
) -> RunArtifacts:
    if variant is None:
        variant = next(
            (v for v in cfg.variants if v.algorithm == "maddpg_baseline"),
            VariantConfig(name="maddpg", algorithm="maddpg_baseline"),
        )
    if variant.algorithm != "maddpg_baseline":
        raise ValueError(f"Variant '{variant.name}' is not a baseline variant")
    return train(cfg, variant, network, dataset, seed, run_dir, run_id, disable_tqdm)


TRAINERS = {"madelc": madelc_train, "maddpg_baseline": maddpg_train}
