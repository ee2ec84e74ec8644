"""
Эксперименты: таблица ошибок прогноза, подслучаи с разной инерцией,
сравнение LQR и постоянной поддержки ПТ, сравнение методов в контуре.
"""

import logging
from pathlib import Path
from typing import Optional

import pandas as pd
from joblib import Parallel, delayed

from bench.suite import BenchSuite
from controller.coordination import CoordinationTrace, coordinate
from controller.lqr import build_weights
from errors import DependencyError, NumericalError
from koopman.dataset import Dataset
from koopman.prediction import eval_metrics, one_step_error
from koopman.regression import KoopmanModel, fit
from models import pu_to_hz
from settings import settings

logger = logging.getLogger(__name__)


def _write(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=settings.CSV_FLOAT_FORMAT)
    logger.info(f"wrote {path}")
    return path


def load_dataset(suite: BenchSuite) -> Dataset:
    if not suite.dataset_dir.exists():
        raise DependencyError(f"dataset not found in {suite.dataset_dir}, run 'gen-data' first")
    return Dataset.load(suite.dataset_dir)


def fit_methods(suite: BenchSuite, data: Dataset) -> dict[str, KoopmanModel]:
    return {
        method: fit(data, suite.method_config(method), ridge=suite.ridge, method=method)
        for method in suite.methods
    }


def run_prediction_table(
    suite: BenchSuite,
    data: Optional[Dataset] = None,
    models: Optional[dict[str, KoopmanModel]] = None,
) -> pd.DataFrame:
    """Средние ошибки прогноза по тестовой выборке для каждого метода -> table1.csv."""
    data = data or load_dataset(suite)
    models = models or fit_methods(suite, data)
    base_hz = suite.grid.base_frequency_hz
    rows = []
    for method, model in models.items():
        metrics = eval_metrics(model, data.test, base_hz)
        rows.append(
            {
                "method": method,
                "nadir_error_hz": metrics.nadir_error_hz,
                "steady_state_error_hz": metrics.steady_state_error_hz,
                "mean_error_hz": metrics.mean_error_hz,
                "one_step_error_hz": float(pu_to_hz(one_step_error(model, data.test, suite.steps), base_hz)),
                "n_test": metrics.n_trajectories,
            }
        )
    table = pd.DataFrame(rows)
    _write(table, suite.output_dir / "table1.csv")
    return table


def _coordinate(suite: BenchSuite, model: KoopmanModel, scenario, dc_mode: str = "lqr") -> CoordinationTrace:
    weights = build_weights(model, suite.weights)
    return coordinate(suite.grid, scenario, model, suite.limits, weights, suite.steps, dc_mode=dc_mode)


def _summary_rows(traces: list[CoordinationTrace], key: str, labels) -> pd.DataFrame:
    rows = []
    for label, trace in zip(labels, traces):
        row = {key: label}
        row.update(trace.summary.model_dump(exclude={"shed_mw"}))
        rows.append(row)
    return pd.DataFrame(rows)


def run_control_subcases(suite: BenchSuite, model: KoopmanModel, jobs: Optional[int] = None) -> list[CoordinationTrace]:
    """Замкнутый контур для сценария при пяти масштабах инерции -> subcases/*.csv."""
    scenarios = [suite.scenario.model_copy(update={"inertia_scale": s}) for s in suite.inertia_scales]
    traces = Parallel(n_jobs=jobs or settings.DEFAULT_JOBS)(
        delayed(_coordinate)(suite, model, scenario) for scenario in scenarios
    )
    directory = suite.output_dir / "subcases"
    for scale, trace in zip(suite.inertia_scales, traces):
        trace.write(directory, f"inertia_{scale:.2f}")
    _write(_summary_rows(traces, "inertia_scale", suite.inertia_scales), directory / "summary.csv")
    return traces


def run_edcps_comparison(suite: BenchSuite, model: KoopmanModel) -> pd.DataFrame:
    """Один сценарий с LQR-модуляцией и с постоянной максимальной поддержкой ПТ."""
    traces = [_coordinate(suite, model, suite.scenario, mode) for mode in ("lqr", "max")]
    summary = _summary_rows(traces, "dc_mode_run", ("lqr", "max"))
    _write(summary, suite.output_dir / "edcps_compare.csv")

    base_hz = suite.grid.base_frequency_hz
    long_rows = []
    for mode, trace in zip(("lqr", "max"), traces):
        record = trace.record
        frame = pd.DataFrame(
            {
                "dc_mode": mode,
                "t": record.t,
                "frequency_hz": base_hz + pu_to_hz(record.omega, base_hz),
                "ud_total_mw": record.ud.sum(axis=1),
                "shed_total_mw": record.ul @ suite.limits.node_load_mw if record.n_loads else 0.0,
            }
        )
        long_rows.append(frame)
    _write(pd.concat(long_rows, ignore_index=True), suite.output_dir / "edcps_traces.csv")
    return summary


def run_method_comparison(
    suite: BenchSuite,
    data: Optional[Dataset] = None,
    models: Optional[dict[str, KoopmanModel]] = None,
) -> pd.DataFrame:
    """Все методы идентификации в одном и том же сценарии с управлением -> method_compare.csv."""
    models = models or fit_methods(suite, data or load_dataset(suite))
    traces, labels = [], []
    for method, model in models.items():
        try:
            traces.append(_coordinate(suite, model, suite.scenario))
        except NumericalError as e:
            logger.warning(f"closed loop with {method} model skipped: {e}")
            continue
        labels.append(method)
    table = _summary_rows(traces, "method_run", labels)
    _write(table, suite.output_dir / "method_compare.csv")
    return table


def run_all(suite: BenchSuite, model: Optional[KoopmanModel] = None, jobs: Optional[int] = None) -> None:
    data = load_dataset(suite)
    models = fit_methods(suite, data)
    run_prediction_table(suite, data, models)
    if model is None:
        model = models.get("cefc") or fit(data, suite.method_config("cefc"), ridge=suite.ridge, method="cefc")
    run_control_subcases(suite, model, jobs)
    run_edcps_comparison(suite, model)
    run_method_comparison(suite, data, models)
