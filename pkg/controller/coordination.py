"""
Замкнутый контур: запуск по порогу частоты, прогноз при максимальной поддержке ПТ,
однократное отключение нагрузки на следующем шаге и LQR-модуляция ПТ далее.
"""

import json
import logging
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from controller.activation import check_activation, needs_shedding, predict_max_dc
from controller.lqr import RiccatiSolution, lqr_step, solve_dare
from controller.shedding import Objective, SheddingPlan, predicted_with_plan, solve_shedding_from_state
from errors import ConfigError
from grid_sim.simulator import simulate
from grid_sim.trajectory import TrajectoryRecord
from koopman.observables import lift
from koopman.regression import KoopmanModel
from models import ControlLimits, GridModel, LqrWeights, Scenario, pu_to_hz
from settings import settings

logger = logging.getLogger(__name__)

DcMode = Literal["lqr", "max"]


class CoordinationSummary(BaseModel):
    method: Optional[str] = None
    dc_mode: DcMode = "lqr"
    activated: bool = False
    activation_time: Optional[float] = None
    shed_time: Optional[float] = None
    shed_mw: tuple[float, ...] = ()
    shed_total_mw: float = 0.0
    shed_dynamic_mw: float = 0.0
    shed_static_mw: float = 0.0
    shed_feasible: Optional[bool] = None
    nadir_hz: float
    steady_state_hz: float
    steady_state_ok: bool = True
    dc_energy_mw_s: float


class CoordinationTrace(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    record: TrajectoryRecord
    summary: CoordinationSummary
    plan: Optional[SheddingPlan] = None
    # прогноз omega в момент запуска, выровнен по отсчётам записи (NaN вне горизонта)
    predicted: np.ndarray

    def to_frame(self):
        frame = self.record.to_frame()
        frame["omega_predicted"] = self.predicted
        return frame

    def write(self, directory: str | Path, stem: str = "coordination") -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(directory / f"{stem}.csv", index=False, float_format=settings.CSV_FLOAT_FORMAT)
        payload = self.summary.model_dump(mode="json")
        payload["plan"] = self.plan.model_dump(mode="json") if self.plan else None
        with open(directory / f"{stem}_summary.json", "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2)
        logger.info(f"coordination trace written to {directory / stem}.csv")
        return directory / f"{stem}.csv"


class _CoordinatedPolicy:
    """Политика для simulate(); хранит состояние запуска между вызовами."""

    def __init__(
        self,
        grid: GridModel,
        model: KoopmanModel,
        limits: ControlLimits,
        solution: Optional[RiccatiSolution],
        steps: int,
        q1: Optional[np.ndarray],
        objective: Objective,
        dt: float,
    ):
        self.model = model
        self.dt = dt
        self.limits = limits
        self.solution = solution
        self.steps = steps
        self.q1 = q1
        self.objective = objective
        self.no_shed = np.zeros(grid.n_loads)
        self.no_dc = np.zeros(grid.n_links)
        self.max_dc = limits.max_support_mw()
        # LQR только уменьшает поддержку, направление перетока не меняется
        self.lqr_limits = limits.support_only()
        self.length = model.config.window_length

        self.activation_index: Optional[int] = None
        self.activation_time: Optional[float] = None
        self.plan: Optional[SheddingPlan] = None
        self.predicted: Optional[np.ndarray] = None

    def _activate(self, t: float, k: int, omega: np.ndarray, y: np.ndarray) -> None:
        self.activation_index = k
        self.activation_time = t
        window = slice(k + 1 - self.length, k + 1)
        logger.info(f"emergency control activated at t={t:.2f}s, omega={omega[-1]:.5f} p.u.")
        predicted = predict_max_dc(self.model, omega[window], y[window], self.limits, self.steps)
        if needs_shedding(predicted, self.limits):
            g1 = lift(omega[window], y[window], self.model.config)
            self.plan = solve_shedding_from_state(
                self.model, g1, self.limits, self.steps, t + self.dt, self.q1, self.objective
            )
            predicted = predicted_with_plan(self.model, g1, self.limits, self.plan, self.steps)
        self.predicted = predicted

    def __call__(self, t: float, omega: np.ndarray, y: np.ndarray):
        k = len(omega) - 1
        if self.activation_index is None:
            if k + 1 < self.length or not check_activation(omega[-1], self.limits):
                return self.no_shed, self.no_dc
            self._activate(t, k, omega, y)
            return self.no_shed, self.limits.clamp_dc(self.max_dc)

        shed = self.plan.ratios if self.plan is not None else self.no_shed
        if self.solution is None:
            return shed, self.limits.clamp_dc(self.max_dc)
        g = lift(omega[-self.length:], y[-self.length:], self.model.config)
        return shed, lqr_step(g, self.solution, self.lqr_limits)


def _shed_split(grid: GridModel, plan: Optional[SheddingPlan]) -> tuple[float, float]:
    if plan is None:
        return 0.0, 0.0
    dynamic = sum(mw * load.dynamic_fraction for mw, load in zip(plan.quantized_mw, grid.loads))
    return float(dynamic), float(plan.total_mw - dynamic)


def coordinate(
    grid: GridModel,
    scenario: Scenario,
    model: KoopmanModel,
    limits: ControlLimits,
    weights: Optional[LqrWeights] = None,
    steps: int = 100,
    dc_mode: DcMode = "lqr",
    q1: Optional[np.ndarray] = None,
    objective: Objective = "quadratic",
) -> CoordinationTrace:
    """
    Прогоняет сценарий с аварийным управлением.
    dc_mode="max" - постоянная максимальная поддержка ПТ после запуска (EDCPS без LQR).
    """
    if model.n_loads != grid.n_loads or model.n_links != grid.n_links:
        raise ConfigError("model inputs do not match the grid's load nodes and HVDC links")
    if not scenario.trip and scenario.deficit_pu == 0.0:
        raise ConfigError("coordination needs a scenario with a generation trip")
    solution = None
    if dc_mode == "lqr":
        if weights is None:
            raise ConfigError("LQR weights are required for dc_mode='lqr'")
        solution = solve_dare(model, weights)

    policy = _CoordinatedPolicy(grid, model, limits, solution, steps, q1, objective, scenario.dt)
    record = simulate(grid, scenario, policy)

    predicted = np.full(len(record), np.nan)
    if policy.predicted is not None:
        start = policy.activation_index
        end = min(len(record), start + len(policy.predicted))
        predicted[start:end] = policy.predicted[: end - start]

    base_hz = grid.base_frequency_hz
    dynamic, static = _shed_split(grid, policy.plan)
    plan = policy.plan
    summary = CoordinationSummary(
        method=model.method,
        dc_mode=dc_mode,
        activated=policy.activation_index is not None,
        activation_time=policy.activation_time,
        shed_time=plan.shed_time if plan else None,
        shed_mw=plan.quantized_mw if plan else (),
        shed_total_mw=plan.total_mw if plan else 0.0,
        shed_dynamic_mw=dynamic,
        shed_static_mw=static,
        shed_feasible=plan.feasible if plan else None,
        nadir_hz=float(base_hz + pu_to_hz(record.nadir(), base_hz)),
        steady_state_hz=float(base_hz + pu_to_hz(record.steady_state(), base_hz)),
        steady_state_ok=bool(record.steady_state() >= limits.steady_state_floor),
        dc_energy_mw_s=float(np.abs(record.ud).sum() * record.dt),
    )
    logger.info(
        f"closed loop ({dc_mode}): nadir {summary.nadir_hz:.3f} Hz, "
        f"steady state {summary.steady_state_hz:.3f} Hz, shed {summary.shed_total_mw:.1f} MW"
    )
    return CoordinationTrace(record=record, summary=summary, plan=plan, predicted=predicted)
