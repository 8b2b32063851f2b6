import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from typing import Any, List, NoReturn, Optional, Tuple

import pandas as pd
from opentelemetry import trace
from opentelemetry.trace import SpanKind
from pydantic import ValidationError

from voltage_control_bench.config import ConfigError, RunConfig, SynthConfig, VariantConfig, load_run_config
from voltage_control_bench.data_postprocessors.report import NoRunsFound, add_report_parser, write_report
from voltage_control_bench.engine.data import DatasetError, injections_at, load_dataset, save_dataset, synth_dataset
from voltage_control_bench.engine.presets import PRESETS
from voltage_control_bench.grid.grid_model import NetworkError, load_network
from voltage_control_bench.grid.power_flow import InjectionProfile, PowerFlowError, solve
from voltage_control_bench.learner.trainer import RunArtifacts, run_cell
from voltage_control_bench.utils.telemetry import setup_telemetry, telemetry_enabled
from voltage_control_bench.utils.utils import configure_logging, hash_object

logger = logging.getLogger(__name__)

EXIT_RUN_FAILED = 1
EXIT_BAD_INPUT = 2


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--debug", action="store_true", help="Log debug messages.")


def add_run_parser(subparsers: argparse._SubParsersAction) -> Any:  # type: ignore[type-arg]
    run_parser = subparsers.add_parser("run", help="Train and evaluate every (variant, seed) cell of a run config")
    run_parser.add_argument("--config", type=str, required=True, help="Path to the JSON run config.")
    run_parser.add_argument("--seed", type=int, default=None, help="Run only this seed instead of the config's list.")
    run_parser.add_argument("--out", type=str, default=None, help="Output root; overrides VCB_OUTPUT_ROOT.")
    run_parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config field, e.g. --set learner.batch_size=64. May be repeated.",
    )
    run_parser.add_argument(
        "--preset", type=str, default=None, choices=list(PRESETS.keys()), help="Hyper-parameter preset to apply."
    )
    run_parser.add_argument("--dry-run", action="store_true", help="Validate the config and print the run plan.")
    run_parser.add_argument("--parallel", type=int, default=1, help="Number of runs to execute concurrently.")
    run_parser.add_argument("--disable-tqdm", action="store_true", help="Specify to disable tqdm progress bar.")
    add_common_arguments(run_parser)
    return run_parser


def add_solve_pf_parser(subparsers: argparse._SubParsersAction) -> None:  # type: ignore[type-arg]
    pf_parser = subparsers.add_parser("solve-pf", help="Solve one power flow and dump it as CSV")
    pf_parser.add_argument("--net", type=str, required=True, help="Path to the network file.")
    source = pf_parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--zero-injections", action="store_true", help="Solve with all injections at zero.")
    source.add_argument("--dataset", type=str, help="Dataset CSV to read injections from (PV reactive power 0).")
    pf_parser.add_argument("--row", type=int, default=0, help="Dataset row to solve.")
    pf_parser.add_argument("--output", type=str, default=None, help="CSV path; stdout when omitted.")
    add_common_arguments(pf_parser)


def add_make_data_parser(subparsers: argparse._SubParsersAction) -> None:  # type: ignore[type-arg]
    data_parser = subparsers.add_parser("make-data", help="Generate a synthetic dataset for a network")
    data_parser.add_argument("--net", type=str, required=True, help="Path to the network file.")
    data_parser.add_argument("--days", type=int, default=None, help="Number of days to generate.")
    data_parser.add_argument("--seed", type=int, default=0, help="Seed for the generator.")
    data_parser.add_argument("--synth-config", type=str, default=None, help="JSON file with synthesis settings.")
    data_parser.add_argument("--output", type=str, required=True, help="Where to write the CSV.")
    add_common_arguments(data_parser)


def add_validate_net_parser(subparsers: argparse._SubParsersAction) -> None:  # type: ignore[type-arg]
    net_parser = subparsers.add_parser("validate-net", help="Check a network file and print its summary")
    net_parser.add_argument("path", type=str, help="Path to the network file.")
    add_common_arguments(net_parser)


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Voltage control benchmark")

    subparsers = parser.add_subparsers(title="Subcommands", dest="subcommand", required=True)

    add_run_parser(subparsers)
    add_report_parser(subparsers)
    add_solve_pf_parser(subparsers)
    add_make_data_parser(subparsers)
    add_validate_net_parser(subparsers)

    args = parser.parse_args(argv)
    configure_logging(args)
    return args


def fail(msg: str, code: int = EXIT_BAD_INPUT) -> NoReturn:
    logger.error(msg)
    sys.exit(code)


def plan_runs(cfg: RunConfig) -> List[Tuple[VariantConfig, int, str, str]]:
    """(variant, seed, run id, run dir) for every cell; the id carries the config hash."""
    config_hash = hash_object(cfg.model_dump(exclude={"output_dir", "seeds"}))
    cells = []
    for variant in cfg.variants:
        for seed in cfg.seeds:
            run_id = f"{variant.name}-{config_hash[:8]}-s{seed}"
            cells.append((variant, seed, run_id, os.path.join(cfg.output_dir, run_id)))
    return cells


def run_main(args: argparse.Namespace) -> None:
    try:
        cfg = load_run_config(args.config, args.overrides, seed=args.seed, out=args.out, preset=args.preset)
    except ConfigError as e:
        fail(str(e))
    for path in [cfg.network] + ([cfg.dataset] if cfg.dataset else []):
        if not os.path.isfile(path):
            fail(f"Input file {path} does not exist")
    try:
        load_network(cfg.network)
    except ValueError as e:
        fail(f"Invalid network file {cfg.network}: {e}")

    cells = plan_runs(cfg)
    if args.dry_run:
        print("{s:{c}^{n}}".format(s=" Run plan ", n=60, c="="))
        print("{:<40} {:<10}".format("Network:", cfg.network))
        print("{:<40} {:<10}".format("Dataset:", cfg.dataset or f"synthetic (seed {cfg.data_seed})"))
        print("{:<40} {:<10}".format("Training episodes:", cfg.train_episodes))
        for variant, seed, run_id, run_dir in cells:
            print("{:<40} {:<10}".format(run_id, f"{variant.algorithm} seed={seed} -> {run_dir}"))
        return

    logger.info(f"Starting {len(cells)} run(s) under {cfg.output_dir}")
    os.makedirs(cfg.output_dir, exist_ok=True)
    setup_telemetry()
    tracer = trace.get_tracer(__name__)
    experiment_span = (
        tracer.start_as_current_span(
            "experiment",
            kind=SpanKind.INTERNAL,
            attributes={"vcb.command": json.dumps({"subcommand": args.subcommand, "config": args.config})},
        )
        if telemetry_enabled()
        else nullcontext()
    )
    with experiment_span:
        results: List[RunArtifacts] = []
        if args.parallel > 1:
            with ProcessPoolExecutor(max_workers=args.parallel) as executor:
                futures = [
                    executor.submit(run_cell, cfg, variant, seed, run_id, run_dir, True)
                    for variant, seed, run_id, run_dir in cells
                ]
                results = [future.result() for future in futures]
        else:
            for variant, seed, run_id, run_dir in cells:
                results.append(run_cell(cfg, variant, seed, run_id, run_dir, args.disable_tqdm))

        failed = [r.run_id for r in results if r.status != "ok"]
        run_table = pd.DataFrame(
            [
                {
                    "run_id": r.run_id,
                    "variant": r.variant,
                    "algorithm": r.algorithm,
                    "seed": r.seed,
                    "status": r.status,
                    "run_dir": r.run_dir,
                }
                for r in results
            ]
        )
        try:
            write_report(cfg.output_dir, runs=run_table)
        except NoRunsFound as e:
            logger.error(f"No summary written: {e}")
            run_table.drop(columns=["run_dir"]).to_csv(os.path.join(cfg.output_dir, "runs.csv"), index=False)

    if failed:
        fail(f"{len(failed)} run(s) failed: {failed}", EXIT_RUN_FAILED)
    logger.info("All runs finished")


def solve_pf_main(args: argparse.Namespace) -> None:
    try:
        network = load_network(args.net)
        if args.zero_injections:
            inj = InjectionProfile.zeros(network.n_bus)
        else:
            dataset = load_dataset(args.dataset, network, min_rows=args.row + 1)
            inj = injections_at(network, dataset, args.row)
    except (OSError, ValidationError, NetworkError, DatasetError) as e:
        fail(f"Cannot read inputs: {e}")
    try:
        sol = solve(network, inj)
    except PowerFlowError as e:
        fail(f"Power flow failed: {e}", EXIT_RUN_FAILED)
    frame = pd.DataFrame(
        {"bus": network.buses, "v": sol.v, "theta": sol.theta, "p_inj": sol.p_injected, "q_inj": sol.q_injected}
    )
    logger.info(f"Converged in {sol.iterations} iterations, line loss {sol.p_loss:.6g} p.u.")
    if args.output:
        frame.to_csv(args.output, index=False)
    else:
        frame.to_csv(sys.stdout, index=False)


def make_data_main(args: argparse.Namespace) -> None:
    try:
        network = load_network(args.net)
        synth_cfg = SynthConfig()
        if args.synth_config:
            with open(args.synth_config, "r") as f:
                synth_cfg = SynthConfig.model_validate(json.load(f))
    except (OSError, ValueError) as e:
        fail(f"Cannot read inputs: {e}")
    if args.days is not None:
        synth_cfg = synth_cfg.model_copy(update={"days": args.days})
    try:
        dataset = synth_dataset(synth_cfg, args.seed, network)
    except (DatasetError, PowerFlowError) as e:
        fail(f"Data generation failed: {e}", EXIT_RUN_FAILED)
    save_dataset(dataset, args.output)
    logger.info(f"Wrote {len(dataset)} rows to {args.output}")


def validate_net_main(args: argparse.Namespace) -> None:
    try:
        network = load_network(args.path)
    except (OSError, ValueError) as e:
        fail(f"Invalid network file {args.path}: {e}")
    print("{s:{c}^{n}}".format(s=f" {network.name} ", n=50, c="="))
    print("{:<40} {:<10}".format("Buses:", network.n_bus))
    print("{:<40} {:<10}".format("Branches:", len(network.branches)))
    print("{:<40} {:<10}".format("Loads:", len(network.loads)))
    print("{:<40} {:<10}".format("PVs (agents):", len(network.pvs)))
    print("{:<40} {:<10}".format("Zones:", ", ".join(network.zone_names)))


def main() -> None:
    args = parse_args()
    if args.subcommand == "report":
        try:
            write_report(args.out_dir, plot=args.plot)
        except NoRunsFound as e:
            fail(str(e))
    elif args.subcommand == "run":
        run_main(args)
    elif args.subcommand == "solve-pf":
        solve_pf_main(args)
    elif args.subcommand == "make-data":
        make_data_main(args)
    elif args.subcommand == "validate-net":
        validate_net_main(args)
    else:
        raise ValueError(f"Invalid subcommand {args.subcommand}")


if __name__ == "__main__":
    main()
