"""
Эталонная нелинейная модель частоты центра инерции.

Состояние: [omega, P_mech_1..n, omega_f_1..p (фильтры двигательной нагрузки),
P_dc_1..q (фактическая мощность ЛЭП ПТ, МВт)].

    M * domega/dt = sum(P_mech) + P_dc + P_shed - P_deficit - P_motor - D * omega
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from errors import BoundsError, IntegrationDivergenceError
from grid_sim.trajectory import TrajectoryRecord
from models import GridModel, Scenario
from settings import settings

logger = logging.getLogger(__name__)

# (t, история omega, история y) -> (u_l, u_d)
ControlPolicy = Callable[[float, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class _Segment:
    """Параметры, постоянные на одном шаге дискретизации."""

    inertia: float
    damping: float
    gain: np.ndarray
    pm_low: np.ndarray
    pm_high: np.ndarray
    online: np.ndarray
    deficit: float
    shed: np.ndarray
    load_noise: np.ndarray
    dc_ref: np.ndarray


class _Plant:
    def __init__(self, grid: GridModel, scenario: Scenario):
        self.grid = grid
        self.scenario = scenario
        base = grid.base_power_mw
        machines = grid.machines

        self.n_m = len(machines)
        self.n_l = grid.n_loads
        self.n_q = grid.n_links

        self.inertia = np.array([m.inertia for m in machines]) * scenario.inertia_scale
        self.damping = np.array([m.damping for m in machines])
        self.gain = np.array([m.governor_gain for m in machines])
        self.gov_t = np.array([m.governor_time_constant for m in machines])
        dispatch = np.array([m.dispatch_mw for m in machines]) * scenario.dispatch_scale
        capacity = np.array([m.capacity_mw for m in machines])
        self.pm_high = np.maximum(capacity - dispatch, 0.0) / base
        self.pm_low = -dispatch / base

        self.tripped = np.zeros(self.n_m, dtype=bool)
        self.tripped[list(scenario.trip)] = True
        self.trip_deficit = float(dispatch[self.tripped].sum() / base) + scenario.deficit_pu

        self.load_pu = np.array([ld.base_mw for ld in grid.loads]) / base
        self.motor_pu = (
            np.array([ld.dynamic_fraction * ld.motor_sensitivity for ld in grid.loads])
            * self.load_pu
        )
        self.motor_t = np.array([ld.motor_time_constant for ld in grid.loads])

        self.dc_sign = np.array([link.sign for link in grid.hvdc])
        self.dc_lag = np.array([link.response_lag_s for link in grid.hvdc])
        self.dc_ramp = np.array([link.ramp_rate_mw_s for link in grid.hvdc])
        self.ud_min = np.array([link.ud_min_mw for link in grid.hvdc])
        self.ud_max = np.array([link.ud_max_mw for link in grid.hvdc])
        self.sensitivity = grid.sensitivity_matrix()

        self.i_pm = slice(1, 1 + self.n_m)
        self.i_wf = slice(1 + self.n_m, 1 + self.n_m + self.n_l)
        self.i_dc = slice(1 + self.n_m + self.n_l, 1 + self.n_m + self.n_l + self.n_q)
        self.n_state = 1 + self.n_m + self.n_l + self.n_q

    def segment(self, tripped: bool, shed, load_noise, dc_ref) -> _Segment:
        online = ~self.tripped if tripped else np.ones(self.n_m, dtype=bool)
        return _Segment(
            inertia=float(self.inertia[online].sum()),
            damping=float(self.damping[online].sum()),
            gain=np.where(online, self.gain, 0.0),
            pm_low=np.where(online, self.pm_low, 0.0),
            pm_high=np.where(online, self.pm_high, 0.0),
            online=online,
            deficit=self.trip_deficit if tripped else 0.0,
            shed=shed,
            load_noise=load_noise,
            dc_ref=dc_ref,
        )

    def accelerating_power(self, x: np.ndarray, seg: _Segment) -> float:
        base = self.grid.base_power_mw
        omega = x[0]
        p_mech = float(x[self.i_pm][seg.online].sum())
        p_dc = float(self.dc_sign @ x[self.i_dc]) / base
        p_shed = float(seg.shed @ self.load_pu)
        p_noise = float(seg.load_noise.sum()) / base
        p_motor = float((self.motor_pu * (1.0 - seg.shed)) @ (omega - x[self.i_wf]))
        return p_mech + p_dc + p_shed - seg.deficit - p_noise - p_motor - seg.damping * omega

    def derivatives(self, x: np.ndarray, seg: _Segment) -> np.ndarray:
        dx = np.zeros_like(x)
        omega = x[0]
        dx[0] = self.accelerating_power(x, seg) / seg.inertia
        target = np.clip(-seg.gain * omega, seg.pm_low, seg.pm_high)
        dx[self.i_pm] = (target - x[self.i_pm]) / self.gov_t
        dx[self.i_wf] = (omega - x[self.i_wf]) / self.motor_t
        lagged = self.dc_lag > 0
        dc = x[self.i_dc]
        dx[self.i_dc] = np.where(
            lagged, (seg.dc_ref - dc) / np.where(lagged, self.dc_lag, 1.0), 0.0
        )
        return dx

    def voltages(self, x: np.ndarray, shed: np.ndarray, load_noise: np.ndarray) -> np.ndarray:
        base = self.grid.base_power_mw
        injections = np.concatenate(
            [shed * self.load_pu - load_noise / base, self.dc_sign * x[self.i_dc] / base]
        )
        return 1.0 + self.sensitivity @ injections

    def rk4(self, x: np.ndarray, seg: _Segment, h: float, n_sub: int) -> np.ndarray:
        for _ in range(n_sub):
            k1 = self.derivatives(x, seg)
            k2 = self.derivatives(x + 0.5 * h * k1, seg)
            k3 = self.derivatives(x + 0.5 * h * k2, seg)
            k4 = self.derivatives(x + h * k3, seg)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return x


def _noise(scenario: Scenario, n_samples: int, n_loads: int, n_links: int):
    rng = np.random.default_rng(scenario.noise.seed)
    load_noise = np.zeros((n_samples, n_loads))
    dc_noise = np.zeros((n_samples, n_links))
    noise = scenario.noise
    if noise.enabled:
        draws_l = rng.standard_normal((n_samples, n_loads)) * noise.amplitude_mw
        draws_d = rng.standard_normal((n_samples, n_links)) * noise.dc_amplitude
        hold = max(1, int(round(noise.dc_hold_s / scenario.dt)))
        if hold > 1:
            # ступенчатое изменение уставок ПТ
            draws_d = draws_d[(np.arange(n_samples) // hold) * hold]
        start = scenario.trip_index
        if "loads" in scenario.noise.channels:
            load_noise[start:] = draws_l[start:]
        if "dc" in scenario.noise.channels:
            dc_noise[start:] = draws_d[start:]
    return load_noise, dc_noise


def _check_bounds(ul: np.ndarray, ud: np.ndarray, plant: _Plant) -> None:
    if ul.shape != (plant.n_l,) or ud.shape != (plant.n_q,):
        raise BoundsError(
            f"policy must return u_l of shape ({plant.n_l},) and u_d of shape ({plant.n_q},)"
        )
    if not (np.all(np.isfinite(ul)) and np.all(np.isfinite(ud))):
        raise BoundsError("policy returned non-finite controls")
    if np.any(ul < 0) or np.any(ul > 1):
        raise BoundsError(f"shedding ratios out of [0, 1]: {ul}")
    if np.any(ud < plant.ud_min - 1e-9) or np.any(ud > plant.ud_max + 1e-9):
        raise BoundsError(f"DC commands out of link limits: {ud}")


@dataclass(frozen=True)
class _Step:
    """Один шаг интегрирования: параметры и состояния на его концах."""

    segment: _Segment
    start: np.ndarray
    end: np.ndarray


def _integrate(
    grid: GridModel,
    scenario: Scenario,
    policy: Optional[ControlPolicy],
    until: Optional[float],
    substeps: Optional[int],
) -> tuple[TrajectoryRecord, _Plant, list[_Step]]:
    scenario.validate_against(grid)
    plant = _Plant(grid, scenario)
    n_sub = max(substeps or settings.RK4_SUBSTEPS, 4)
    dt = scenario.dt
    h = dt / n_sub
    horizon = scenario.horizon if until is None else min(until, scenario.horizon)
    n_steps = int(round(horizon / dt))
    n_samples = n_steps + 1

    load_noise, dc_noise = _noise(scenario, n_samples, plant.n_l, plant.n_q)

    t = np.arange(n_samples) * dt
    omega = np.zeros(n_samples)
    y = np.zeros((n_samples, grid.n_buses))
    ul_log = np.zeros((n_samples, plant.n_l))
    ud_log = np.zeros((n_samples, plant.n_q))
    steps: list[_Step] = []

    x = np.zeros(plant.n_state)
    shed = np.zeros(plant.n_l)
    dc_ref = np.zeros(plant.n_q)
    prev_noise = np.zeros(plant.n_l)

    for k in range(n_samples):
        if not np.all(np.isfinite(x)):
            raise IntegrationDivergenceError(f"non-finite state at t={t[k]:.3f}s")
        omega[k] = x[0]
        y[k] = plant.voltages(x, shed, prev_noise)

        if policy is not None:
            ul_cmd, ud_cmd = policy(t[k], omega[: k + 1], y[: k + 1])
            ul_cmd = np.asarray(ul_cmd, dtype=float)
            ud_cmd = np.asarray(ud_cmd, dtype=float)
            _check_bounds(ul_cmd, ud_cmd, plant)
        else:
            ul_cmd = np.zeros(plant.n_l)
            ud_cmd = np.zeros(plant.n_q)

        event = scenario.shed_event
        if event is not None and t[k] >= event.time - 1e-9 and k >= scenario.trip_index:
            ul_cmd = np.maximum(ul_cmd, np.asarray(event.ratios))
        shed = np.maximum(shed, ul_cmd)

        target = np.clip(ud_cmd + dc_noise[k], plant.ud_min, plant.ud_max)
        step = plant.dc_ramp * dt
        dc_ref = dc_ref + np.clip(target - dc_ref, -step, step)
        x[plant.i_dc] = np.where(plant.dc_lag > 0, x[plant.i_dc], dc_ref)

        ul_log[k] = shed
        ud_log[k] = dc_ref
        prev_noise = load_noise[k]

        if k < n_steps:
            seg = plant.segment(k >= scenario.trip_index, shed, load_noise[k], dc_ref)
            start = x.copy()
            x = plant.rk4(x, seg, h, n_sub)
            steps.append(_Step(segment=seg, start=start, end=x.copy()))

    logger.debug(
        f"simulated {horizon:.1f}s, trip={scenario.trip}, nadir={omega.min():.5f} p.u."
    )
    record = TrajectoryRecord(dt=dt, t=t, omega=omega, y=y, ul=ul_log, ud=ud_log)
    return record, plant, steps


def simulate(
    grid: GridModel,
    scenario: Scenario,
    policy: Optional[ControlPolicy] = None,
    until: Optional[float] = None,
    substeps: Optional[int] = None,
) -> TrajectoryRecord:
    """
    Интегрирует модель RK4 с фиксированным шагом dt/substeps.
    Управление фиксируется на шаг дискретизации (ZOH), политика вызывается в каждой точке.
    """
    return _integrate(grid, scenario, policy, until, substeps)[0]


def steady_state_deviation(grid: GridModel, deficit_pu: float) -> float:
    """
    Установившееся отклонение первого порядка: -дефицит / (D + sum K).
    Без демпфирования и регуляторов установившегося значения нет: -inf при дефиците.
    """
    if deficit_pu == 0.0:
        return 0.0
    total = sum(m.damping + m.governor_gain for m in grid.machines)
    if total <= 0.0:
        return -math.copysign(math.inf, deficit_pu)
    return -deficit_pu / total


def coi_balance(
    grid: GridModel,
    scenario: Scenario,
    policy: Optional[ControlPolicy] = None,
    substeps: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Баланс COI вдоль прогона: M * (omega_{k+1} - omega_k) / dt по записанной траектории
    и ускоряющая мощность, усреднённая по концам шага (трапеции).
    """
    record, plant, steps = _integrate(grid, scenario, policy, None, substeps)
    inertia_term = np.array(
        [step.segment.inertia for step in steps]
    ) * np.diff(record.omega) / record.dt
    accelerating = np.array(
        [
            0.5 * (plant.accelerating_power(step.start, step.segment) + plant.accelerating_power(step.end, step.segment))
            for step in steps
        ]
    )
    return inertia_term, accelerating
