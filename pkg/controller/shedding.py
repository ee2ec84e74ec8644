"""
Однократное отключение нагрузки по прогнозу модели Купмана.

Решение - вектор отключаемой мощности x (МВт) по узлам. Доля u_l = x / P0
подаётся со второго шага прогноза и держится до конца горизонта, поэтому
динамика сводится к omega_t = omega_free(t) + S_t x, а целевая функция
sum_t u_t'Q1u_t = (T-1) x' diag(q/P0^2) x.
"""

import logging
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel
from scipy.optimize import linprog

from controller.qp import solve_qp
from errors import ConfigError, QpError
from koopman.observables import lift
from koopman.prediction import rollout
from koopman.regression import KoopmanModel
from models import ControlLimits

logger = logging.getLogger(__name__)

Objective = Literal["quadratic", "linear"]


class SheddingPlan(BaseModel):
    continuous_mw: tuple[float, ...]
    quantized_mw: tuple[float, ...]
    shed_time: float = 0.0
    feasible: bool = True
    node_load_mw: tuple[float, ...] = ()

    @property
    def total_mw(self) -> float:
        return float(sum(self.quantized_mw))

    @property
    def ratios(self) -> np.ndarray:
        """Доли отключения по узлам, в которых их исполняет модель сети."""
        return np.asarray(self.quantized_mw) / np.asarray(self.node_load_mw)


def default_q1(limits: ControlLimits) -> np.ndarray:
    """Веса на доли отключения пропорциональны нагрузке узла."""
    load = np.asarray(limits.node_load_mw, dtype=float)
    return np.diag(load / load.sum())


def quantize(amounts_mw, quantum_mw: float) -> np.ndarray:
    """Округление до ближайшего кратного d, половина - вверх."""
    if quantum_mw <= 0:
        raise ConfigError("feeder quantum must be positive")
    amounts = np.asarray(amounts_mw, dtype=float)
    return np.floor(amounts / quantum_mw + 0.5) * quantum_mw


def condense(model: KoopmanModel, g1: np.ndarray, ud_mw: np.ndarray, node_load_mw, steps: int):
    """
    Свободный прогноз omega при u_l = 0 и матрица чувствительности S (steps x n_loads)
    к отключаемой мощности в МВт. Строки t = 1, 2 нулевые.
    """
    ud_pu = np.tile(model.dc_to_pu(ud_mw), (steps, 1))
    free = rollout(model, g1, np.zeros((steps, model.n_loads)), ud_pu, steps)[:, 0]

    S = np.zeros((steps, model.n_loads))
    # acc = sum_{s<t-1} A^s B_l
    acc = np.zeros_like(model.B_l)
    for t in range(2, steps):
        acc = model.A @ acc + model.B_l
        S[t] = acc[0]
    S = S / np.asarray(node_load_mw, dtype=float)
    return free, S


def _solve_linear(cost: np.ndarray, S_rows: np.ndarray, rhs: np.ndarray, upper: np.ndarray):
    # допуски HiGHS абсолютные, строки нормируются
    if len(S_rows):
        norms = np.abs(S_rows).max(axis=1)
        S_rows = S_rows / norms[:, None]
        rhs = rhs / norms
    result = linprog(
        cost,
        A_ub=-S_rows if len(S_rows) else None,
        b_ub=-rhs if len(S_rows) else None,
        bounds=list(zip(np.zeros_like(upper), upper)),
        method="highs",
    )
    if result.status == 2:
        return None
    if result.status != 0:
        raise QpError(f"linear shedding problem failed: {result.message}")
    return result.x


def solve_shedding_from_state(
    model: KoopmanModel,
    g1: np.ndarray,
    limits: ControlLimits,
    steps: int,
    shed_time: float = 0.0,
    q1: Optional[np.ndarray] = None,
    objective: Objective = "quadratic",
) -> SheddingPlan:
    if model.n_loads != limits.n_loads:
        raise ConfigError(f"model has {model.n_loads} load inputs, limits have {limits.n_loads}")
    node_load = np.asarray(limits.node_load_mw, dtype=float)
    upper = limits.ul_max_mw()
    q1 = default_q1(limits) if q1 is None else np.asarray(q1, dtype=float)
    if q1.shape != (limits.n_loads, limits.n_loads) or np.any(np.linalg.eigvalsh(q1) <= 0):
        raise ConfigError("Q1 must be a symmetric positive definite n_loads x n_loads matrix")

    free, S = condense(model, g1, limits.max_support_mw(), node_load, steps)
    rhs = limits.omega_min - free
    sensitive = np.any(S != 0, axis=1)
    # шаги, на которые отключение ещё не влияет, выполнимы только сами по себе
    blind_violation = np.any(rhs[~sensitive] > 1e-12)

    x = None
    if not blind_violation:
        scale = 1.0 / node_load
        if objective == "linear":
            cost = (steps - 1) * np.diag(q1) * scale
            x = _solve_linear(cost, S[sensitive], rhs[sensitive], upper)
        else:
            H = 2.0 * (steps - 1) * (scale[:, None] * q1 * scale[None, :])
            C = np.vstack([S[sensitive], np.eye(len(upper)), -np.eye(len(upper))])
            b = np.concatenate([rhs[sensitive], np.zeros(len(upper)), -upper])
            result = solve_qp(H, np.zeros(len(upper)), C, b)
            x = np.clip(result.x, 0.0, upper) if result.feasible else None

    feasible = x is not None
    if not feasible:
        logger.warning("shedding problem infeasible, shedding the maximum allowed amount")
        x = upper.copy()
    quantized = np.minimum(quantize(x, limits.feeder_quantum_mw), upper)
    plan = SheddingPlan(
        continuous_mw=tuple(float(v) for v in x),
        quantized_mw=tuple(float(v) for v in quantized),
        shed_time=shed_time,
        feasible=feasible,
        node_load_mw=tuple(float(v) for v in node_load),
    )
    logger.info(
        f"shedding plan at t={shed_time:.2f}s: {plan.total_mw:.1f} MW "
        f"({', '.join(f'{v:.1f}' for v in plan.quantized_mw)}), feasible={feasible}"
    )
    return plan


def solve_shedding(
    model: KoopmanModel,
    omega_window,
    y_window,
    limits: ControlLimits,
    steps: int,
    shed_time: float = 0.0,
    q1: Optional[np.ndarray] = None,
    objective: Objective = "quadratic",
) -> SheddingPlan:
    g1 = lift(omega_window, y_window, model.config)
    return solve_shedding_from_state(model, g1, limits, steps, shed_time, q1, objective)


def predicted_with_plan(model: KoopmanModel, g1: np.ndarray, limits: ControlLimits, plan: SheddingPlan, steps: int) -> np.ndarray:
    """Прогноз omega с максимальной поддержкой ПТ и исполненным планом отключения."""
    ul = np.zeros((steps, model.n_loads))
    ul[1:] = plan.ratios
    ud_pu = np.tile(model.dc_to_pu(limits.max_support_mw()), (steps, 1))
    return rollout(model, g1, ul, ud_pu, steps)[:, 0]
