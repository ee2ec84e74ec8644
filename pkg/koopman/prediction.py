import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel
from sklearn.metrics import mean_absolute_error

from errors import DependencyError, HorizonLengthError
from koopman.dataset import DatasetEntry
from koopman.observables import lift
from koopman.regression import KoopmanModel
from models import Scenario, pu_to_hz
from settings import settings

logger = logging.getLogger(__name__)


class PredictionMetrics(BaseModel):
    """Средние абсолютные ошибки по тестовой выборке, Гц."""

    method: Optional[str] = None
    nadir_error_hz: float
    steady_state_error_hz: float
    mean_error_hz: float
    n_trajectories: int


def onset_index(scenario: Scenario) -> int:
    """Первое измерение после возмущения: момент отключения + задержка измерения."""
    return scenario.trip_index + int(round(settings.MEASUREMENT_DELAY_S / scenario.dt))


def _check_sequence(seq: np.ndarray, steps: int, width: int, name: str) -> np.ndarray:
    seq = np.asarray(seq, dtype=float)
    if seq.ndim < 2:
        if width == 0:
            return np.zeros((steps, 0))
        seq = seq.reshape(-1, width)
    if len(seq) < steps:
        raise HorizonLengthError(f"{name} sequence has {len(seq)} steps, horizon is {steps}")
    return seq[:steps]


def rollout(model: KoopmanModel, g1: np.ndarray, ul_seq: np.ndarray, ud_pu_seq: np.ndarray, steps: int) -> np.ndarray:
    """Траектория наблюдаемых g_1..g_steps при заданных управлениях."""
    G = np.zeros((steps, model.dim))
    G[0] = g1
    for t in range(steps - 1):
        G[t + 1] = model.step(G[t], ul_seq[t], ud_pu_seq[t])
    return G


def predict_rollout(
    model: KoopmanModel,
    omega_window,
    y_window,
    ul_seq,
    ud_seq_mw,
    steps: int,
) -> np.ndarray:
    """
    Прогноз omega на steps шагов вперёд; первый элемент - текущее omega (g_1).
    Управления u_l (доли) и u_d (МВт) задаются на каждый шаг прогноза.
    """
    if steps < 1:
        raise HorizonLengthError("horizon must be at least one step")
    g1 = lift(omega_window, y_window, model.config)
    ul = _check_sequence(ul_seq, steps, model.n_loads, "u_l")
    ud = _check_sequence(ud_seq_mw, steps, model.n_links, "u_d")
    return rollout(model, g1, ul, model.dc_to_pu(ud), steps)[:, 0]


def _entry_rollout(model: KoopmanModel, entry: DatasetEntry):
    record = entry.record
    k0 = onset_index(entry.scenario)
    start = k0 - model.config.n_delay
    if start < 0:
        raise HorizonLengthError("delay window reaches before the start of the record")
    steps = len(record) - k0
    predicted = predict_rollout(
        model,
        record.omega[start : k0 + 1],
        record.y[start : k0 + 1],
        record.ul[k0:],
        record.ud[k0:],
        steps,
    )
    return predicted, record.omega[k0:]


def eval_metrics(model: KoopmanModel, entries: list[DatasetEntry], base_hz: float = 50.0) -> PredictionMetrics:
    """Ошибки прогноза надира, установившегося значения и средней траектории."""
    if not entries:
        raise DependencyError("test set is empty")
    nadir, steady, mean = [], [], []
    for entry in entries:
        predicted, actual = _entry_rollout(model, entry)
        tail = max(1, int(round(1.0 / entry.scenario.dt)))
        nadir.append(abs(predicted.min() - actual.min()))
        steady.append(abs(predicted[-tail:].mean() - actual[-tail:].mean()))
        mean.append(mean_absolute_error(actual, predicted))
    metrics = PredictionMetrics(
        method=model.method,
        nadir_error_hz=float(pu_to_hz(np.mean(nadir), base_hz)),
        steady_state_error_hz=float(pu_to_hz(np.mean(steady), base_hz)),
        mean_error_hz=float(pu_to_hz(np.mean(mean), base_hz)),
        n_trajectories=len(entries),
    )
    logger.info(
        f"{model.method or 'model'}: nadir {metrics.nadir_error_hz:.4f} Hz, "
        f"ssv {metrics.steady_state_error_hz:.4f} Hz, mean {metrics.mean_error_hz:.4f} Hz"
    )
    return metrics


def horizon_errors(model: KoopmanModel, entries: list[DatasetEntry], steps: int) -> tuple[float, float]:
    """
    Средние ошибки (о.е.) одношагового и многошагового прогноза на одном горизонте:
    одношаговый прогноз каждый раз поднимает фактическое окно измерений.
    """
    if not entries:
        raise DependencyError("test set is empty")
    n_delay = model.config.n_delay
    one_step, multi_step = [], []
    for entry in entries:
        record = entry.record
        k0 = onset_index(entry.scenario)
        n = min(steps, len(record) - 1 - k0)
        if n < 1:
            continue
        ud_pu = model.dc_to_pu(record.ud)
        for k in range(k0, k0 + n):
            g = lift(record.omega[k - n_delay : k + 1], record.y[k - n_delay : k + 1], model.config)
            one_step.append(abs(model.step(g, record.ul[k], ud_pu[k])[0] - record.omega[k + 1]))
        predicted, actual = _entry_rollout(model, entry)
        multi_step.extend(np.abs(predicted[1 : n + 1] - actual[1 : n + 1]))
    if not one_step:
        raise HorizonLengthError("records are too short for the requested horizon")
    return float(np.mean(one_step)), float(np.mean(multi_step))


def one_step_error(model: KoopmanModel, entries: list[DatasetEntry], steps: int = 100) -> float:
    return horizon_errors(model, entries, steps)[0]
