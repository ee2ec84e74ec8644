import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import pandas as pd

from bench.experiments import run_all
from bench.suite import BenchSuite, dataset_dir, model_path
from controller.coordination import coordinate
from controller.lqr import build_weights
from errors import CefcError
from grid_sim.simulator import simulate
from koopman.dataset import Dataset, generate_dataset
from koopman.prediction import eval_metrics, onset_index, predict_rollout
from koopman.regression import KoopmanModel, fit, fit_oracle_model
from models import METHODS, ControlLimits, ObservableConfig, RunConfig, load_run_config, pu_to_hz
from robustness.modes import enumerate_modes
from robustness.prop1 import check_prop1, default_terminal
from settings import settings

logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format="%(asctime)s [%(levelname)s] %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)
logger = logging.getLogger(__name__)


def _method_config(config: RunConfig, method: str) -> ObservableConfig:
    if method == "cefc":
        return config.observables
    return ObservableConfig.for_method(method, dt=config.observables.dt)


def _load_model(config: RunConfig, args) -> KoopmanModel:
    path = Path(args.model) if args.model else model_path(config, args.method)
    return KoopmanModel.load(path)


def _write_json(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
    logger.info(f"wrote {path}")


def cmd_gen_data(config: RunConfig, args) -> None:
    grid = config.load_grid()
    n_train = args.train or config.dataset.n_train
    n_test = args.test or config.dataset.n_test
    data = generate_dataset(
        grid, n_train, n_test, config.seed, config.dataset, args.jobs, dt=config.observables.dt
    )
    data.save(dataset_dir(config))


def cmd_fit(config: RunConfig, args) -> None:
    data = Dataset.load(dataset_dir(config))
    model = fit(data, _method_config(config, args.method), ridge=config.ridge, method=args.method)
    model.save(Path(args.model) if args.model else model_path(config, args.method))


def cmd_predict(config: RunConfig, args) -> None:
    model = _load_model(config, args)
    grid = config.load_grid()
    scenario = config.load_scenario()
    base_hz = grid.base_frequency_hz

    data_path = dataset_dir(config)
    if data_path.exists():
        metrics = eval_metrics(model, Dataset.load(data_path).test, base_hz)
        _write_json(metrics.model_dump(mode="json"), Path(config.output_dir) / f"predict_{model.method or args.method}.json")

    record = simulate(grid, scenario)
    k0 = onset_index(scenario)
    start = k0 - model.config.n_delay
    steps = len(record) - k0
    predicted = predict_rollout(
        model, record.omega[start : k0 + 1], record.y[start : k0 + 1], record.ul[k0:], record.ud[k0:], steps
    )
    frame = pd.DataFrame(
        {
            "t": record.t[k0:],
            "frequency_hz": base_hz + pu_to_hz(record.omega[k0:], base_hz),
            "frequency_predicted_hz": base_hz + pu_to_hz(predicted, base_hz),
        }
    )
    path = Path(config.output_dir) / f"predict_{model.method or args.method}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=settings.CSV_FLOAT_FORMAT)
    logger.info(f"wrote {path}")


def cmd_control(config: RunConfig, args) -> None:
    model = _load_model(config, args)
    grid = config.load_grid()
    scenario = config.load_scenario()
    limits = ControlLimits.from_grid(grid, config.limits)
    trace = coordinate(
        grid,
        scenario,
        model,
        limits,
        build_weights(model, config.weights),
        config.horizon_steps,
        dc_mode=args.dc_mode,
        objective=args.objective,
    )
    trace.write(config.output_dir, f"control_{args.dc_mode}")


def cmd_prop1(config: RunConfig, args) -> None:
    learned = _load_model(config, args)
    grid = config.load_grid()
    scenario = config.load_scenario()
    limits = ControlLimits.from_grid(grid, config.limits)
    feeders = config.feeders
    n_feeders = feeders.n_feeders if args.feeders is None else args.feeders
    feeder_nodes = feeders.feeder_nodes if args.feeders is None else None

    rbf_count = 2 * learned.config.rbf.count if learned.config.rbf is not None else None
    oracle = fit_oracle_model(
        grid, learned.config, config.seed + 1, args.oracle_scenarios, rbf_count=rbf_count, jobs=args.jobs
    )

    modes = enumerate_modes(
        n_feeders,
        feeders.quantum_mw,
        learned,
        limits.node_load_mw,
        config.horizon_steps,
        levels=feeders.levels,
        feeder_nodes=feeder_nodes,
    )
    report = check_prop1(
        learned,
        oracle,
        grid,
        scenario,
        modes,
        limits,
        terminal=default_terminal(learned, args.terminal == "diagnostic"),
        costate_source=args.costate_source,
        mask_infeasible=not args.no_mask,
        jobs=args.jobs,
    )
    payload = report.model_dump(mode="json")
    payload["n_modes"] = modes.n_modes
    _write_json(payload, Path(config.output_dir) / "prop1.json")


def cmd_bench(config: RunConfig, args) -> None:
    suite = BenchSuite.from_run_config(config)
    model = _load_model(config, args) if args.model else None
    run_all(suite, model, args.jobs)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "control": cmd_control,
    "prop1": cmd_prop1,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Coordinated emergency frequency control: data, identification, control and checks."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="Path to the run config JSON")
        p.add_argument("--jobs", type=int, default=settings.DEFAULT_JOBS, help="Parallel workers")
        return p

    p = add("gen-data", "Simulate training and test trajectories")
    p.add_argument("--train", type=int, default=None)
    p.add_argument("--test", type=int, default=None)

    for name, help_text in (
        ("fit", "Fit a lifted linear model"),
        ("predict", "Evaluate prediction errors and predict the configured scenario"),
        ("control", "Run the coordinated closed loop on the configured scenario"),
        ("prop1", "Compare mode selections of the learned and accurate models"),
        ("bench", "Run all experiments"),
    ):
        p = add(name, help_text)
        p.add_argument("--model", default=None, help="Model JSON path")
        p.add_argument("--method", choices=METHODS, default="cefc")
        if name == "control":
            p.add_argument("--dc-mode", choices=("lqr", "max"), default="lqr")
            p.add_argument("--objective", choices=("quadratic", "linear"), default="quadratic")
        if name == "prop1":
            p.add_argument("--feeders", type=int, default=None)
            p.add_argument("--terminal", choices=("zero", "diagnostic"), default="zero")
            p.add_argument("--costate-source", choices=("learned", "oracle"), default="learned")
            p.add_argument("--no-mask", action="store_true", help="Do not mask model-infeasible modes")
            p.add_argument("--oracle-scenarios", type=int, default=180, help="Noise-free scenarios for the accurate model")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = load_run_config(args.config)
        logger.info(f"running '{args.command}' with config {args.config}")
        COMMANDS[args.command](config, args)
    except CefcError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
