"""
Проверка совпадения режима, выбранного по обученной модели (k*), и режима
по точной модели (i*), плюс перебор режимов на эталонном симуляторе.
"""

import logging
from typing import Literal, Optional

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel

from controller.activation import check_activation
from errors import ConfigError
from grid_sim.simulator import simulate
from koopman.observables import lift
from koopman.prediction import rollout
from koopman.regression import KoopmanModel
from models import ControlLimits, GridModel, Scenario, pu_to_hz
from robustness.costate import diagnostic_terminal, mode_hamiltonian_values, select_mode, solve_costate
from robustness.modes import ModeSet
from settings import settings

logger = logging.getLogger(__name__)

CostateSource = Literal["learned", "oracle"]


class Prop1Report(BaseModel):
    learned_mode: int
    oracle_mode: int
    holds: Optional[bool]
    learned_values: list[Optional[float]]
    oracle_values: list[Optional[float]]
    costs: list[float]
    learned_feasible: list[bool]
    oracle_feasible: list[bool]
    per_step_consistent: bool
    brute_force_mode: Optional[int] = None
    brute_force_nadirs_hz: list[float] = []
    activation_time: float
    terminal: Literal["zero", "diagnostic"] = "zero"
    costate_source: CostateSource = "learned"


class _ModePolicy:
    """Запуск по порогу, максимальная поддержка ПТ, отключение режима на следующем шаге."""

    def __init__(self, ratios: np.ndarray, limits: ControlLimits, n_loads: int):
        self.ratios = ratios
        self.limits = limits
        self.no_shed = np.zeros(n_loads)
        self.no_dc = np.zeros(limits.n_links)
        self.activation: Optional[int] = None

    def __call__(self, t, omega, y):
        k = len(omega) - 1
        if self.activation is None:
            if not check_activation(omega[-1], self.limits):
                return self.no_shed, self.no_dc
            self.activation = k
            return self.no_shed, self.limits.clamp_dc(self.limits.max_support_mw())
        return self.ratios, self.limits.clamp_dc(self.limits.max_support_mw())


def activation_window(grid: GridModel, scenario: Scenario, limits: ControlLimits, length: int):
    record = simulate(grid, scenario)
    for k in range(length - 1, len(record)):
        if check_activation(record.omega[k], limits):
            window = slice(k + 1 - length, k + 1)
            return record.t[k], record.omega[window], record.y[window]
    raise ConfigError("scenario never reaches the activation threshold")


def _mode_trajectories(model: KoopmanModel, g1: np.ndarray, modes: ModeSet, limits: ControlLimits):
    """Прогноз g для каждого режима: отключение со второго шага, ПТ на максимуме."""
    steps = modes.steps
    ud_pu = np.tile(model.dc_to_pu(limits.max_support_mw()), (steps, 1))
    paths = []
    for ratios in modes.ratios:
        ul = np.zeros((steps, model.n_loads))
        ul[1:] = ratios
        paths.append(rollout(model, g1, ul, ud_pu, steps))
    return np.array(paths)


def mode_values(
    model: KoopmanModel,
    g1: np.ndarray,
    modes: ModeSet,
    limits: ControlLimits,
    costate,
    mask_infeasible: bool = True,
):
    """Усреднённые по t значения a_i, значения по шагам и флаги выполнимости."""
    paths = _mode_trajectories(model, g1, modes, limits)
    feasible = paths[:, :, 0].min(axis=1) >= limits.omega_min
    # состояние без отключения задаёт g(t), в котором сравниваются режимы
    free = paths[0]
    per_step = np.array(
        [mode_hamiltonian_values(costate.at(t + 1), free[t], modes) for t in range(modes.steps)]
    )
    values = per_step.mean(axis=0)
    if mask_infeasible and feasible.any():
        values = np.where(feasible, values, np.inf)
        per_step = np.where(feasible[None, :], per_step, np.inf)
    return values, per_step, feasible


def _finite_or_none(values) -> list[Optional[float]]:
    # замаскированные режимы
    return [float(v) if np.isfinite(v) else None for v in values]


def _brute_force_nadir(grid: GridModel, scenario: Scenario, ratios: np.ndarray, limits: ControlLimits) -> float:
    record = simulate(grid, scenario, _ModePolicy(ratios, limits, grid.n_loads))
    return record.nadir()


def brute_force_mode(
    grid: GridModel,
    scenario: Scenario,
    modes: ModeSet,
    limits: ControlLimits,
    jobs: Optional[int] = None,
) -> tuple[Optional[int], list[float]]:
    """Самый дешёвый режим среди тех, что держат надир выше omega_min на эталонной модели."""
    nadirs = Parallel(n_jobs=jobs or settings.DEFAULT_JOBS)(
        delayed(_brute_force_nadir)(grid, scenario, ratios, limits) for ratios in modes.ratios
    )
    nadirs = np.asarray(nadirs)
    feasible = nadirs >= limits.omega_min
    base_hz = limits.base_frequency_hz
    nadirs_hz = [float(base_hz + pu_to_hz(n, base_hz)) for n in nadirs]
    if not feasible.any():
        logger.warning("no feeder mode keeps the simulated nadir above the floor")
        return None, nadirs_hz
    return select_mode(np.where(feasible, modes.costs, np.inf)), nadirs_hz


def check_prop1(
    learned: KoopmanModel,
    oracle: KoopmanModel,
    grid: GridModel,
    scenario: Scenario,
    modes: ModeSet,
    limits: ControlLimits,
    terminal: Optional[np.ndarray] = None,
    costate_source: CostateSource = "learned",
    mask_infeasible: bool = True,
    brute_force: bool = True,
    jobs: Optional[int] = None,
) -> Prop1Report:
    if (
        learned.config.window_length != oracle.config.window_length
        or not np.isclose(learned.config.dt, oracle.config.dt)
    ):
        raise ConfigError("learned and oracle models must share the delay window and sampling step")
    if learned.dim != oracle.dim and costate_source == "learned":
        # при разных словарях у опорной модели свой костейт
        costate_source = "oracle"
    steps = modes.steps
    t_act, omega_w, y_w = activation_window(grid, scenario, limits, learned.config.window_length)
    g1 = lift(omega_w, y_w, learned.config)
    g1_oracle = lift(omega_w, y_w, oracle.config)

    learned_modes = modes.rebind(learned)
    oracle_modes = modes.rebind(oracle)
    lam = solve_costate(learned.A, steps, modes=learned_modes, terminal=terminal)
    lam_oracle = lam
    if costate_source == "oracle":
        lam_oracle = solve_costate(oracle.A, steps, modes=oracle_modes, terminal=terminal)

    values, per_step, feasible = mode_values(learned, g1, learned_modes, limits, lam, mask_infeasible)
    values_o, per_step_o, feasible_o = mode_values(oracle, g1_oracle, oracle_modes, limits, lam_oracle, mask_infeasible)
    k_star = select_mode(values)
    i_star = select_mode(values_o)
    per_step_consistent = bool(
        np.all(np.argmin(per_step, axis=1) == np.argmin(per_step_o, axis=1))
    )

    bf_mode, nadirs_hz = (None, [])
    if brute_force:
        bf_mode, nadirs_hz = brute_force_mode(grid, scenario, modes, limits, jobs)
    holds = None if brute_force and bf_mode is None else k_star == i_star

    report = Prop1Report(
        learned_mode=k_star,
        oracle_mode=i_star,
        holds=holds,
        learned_values=_finite_or_none(values),
        oracle_values=_finite_or_none(values_o),
        costs=[float(c) for c in modes.costs],
        learned_feasible=[bool(f) for f in feasible],
        oracle_feasible=[bool(f) for f in feasible_o],
        per_step_consistent=per_step_consistent,
        brute_force_mode=bf_mode,
        brute_force_nadirs_hz=nadirs_hz,
        activation_time=float(t_act),
        terminal="zero" if terminal is None or not np.any(terminal) else "diagnostic",
        costate_source=costate_source,
    )
    logger.info(f"k*={k_star}, i*={i_star}, brute force={bf_mode}, holds={holds}")
    return report


def default_terminal(model: KoopmanModel, diagnostic: bool) -> Optional[np.ndarray]:
    return diagnostic_terminal(model.dim) if diagnostic else None
