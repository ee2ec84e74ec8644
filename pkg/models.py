import json
import math
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from errors import ConfigError


LinkEnd = Literal["sending", "receiving"]
DictionaryKind = Literal["identity", "rbf", "delay", "delay_rbf"]
METHODS = ("cefc", "cefc-ntd", "edmd", "dmd")


def hz_to_pu(value_hz: float, base_hz: float = 50.0) -> float:
    return value_hz / base_hz


def pu_to_hz(value_pu, base_hz: float = 50.0):
    return value_pu * base_hz


def _is_multiple(value: float, step: float) -> bool:
    ratio = value / step
    return abs(ratio - round(ratio)) < 1e-9


class Machine(BaseModel):
    """Эквивалентный синхронный генератор с регулятором первого порядка."""

    model_config = ConfigDict(frozen=True)

    inertia: float = Field(gt=0, description="M_i, s")
    damping: float = Field(default=0.0, ge=0)
    governor_gain: float = Field(default=0.0, ge=0)
    governor_time_constant: float = Field(default=8.0, gt=0)
    capacity_mw: float = Field(gt=0)
    dispatch_mw: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def check_dispatch(self):
        if self.dispatch_mw > self.capacity_mw:
            raise ValueError("dispatch_mw must not exceed capacity_mw")
        return self


class LoadNode(BaseModel):
    model_config = ConfigDict(frozen=True)

    node_id: str
    base_mw: float = Field(gt=0)
    dynamic_fraction: float = Field(default=0.4, ge=0, le=1)
    motor_time_constant: float = Field(default=0.5, gt=0)
    # изменение мощности двигателей на единицу скольжения, о.е./о.е.
    motor_sensitivity: float = Field(default=2.0, ge=0)


class HvdcLink(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    base_setpoint_mw: float = Field(default=0.0, ge=0)
    ud_min_mw: float = Field(le=0)
    ud_max_mw: float = Field(ge=0)
    ramp_rate_mw_s: float = Field(gt=0)
    response_lag_s: float = Field(default=0.0, ge=0)
    end: LinkEnd = "receiving"

    @property
    def sign(self) -> float:
        """+1, если энергосистема на приёмном конце, -1 на передающем."""
        return 1.0 if self.end == "receiving" else -1.0


class GridModel(BaseModel):
    """Нелинейная модель частоты COI: генераторы, нагрузки, ЛЭП ПТ."""

    model_config = ConfigDict(frozen=True)

    name: str = "grid"
    base_power_mw: float = Field(default=1000.0, gt=0)
    base_frequency_hz: float = Field(default=50.0, gt=0)
    machines: tuple[Machine, ...] = Field(min_length=1)
    loads: tuple[LoadNode, ...] = ()
    hvdc: tuple[HvdcLink, ...] = ()
    monitored_buses: tuple[str, ...] = ()
    # строки - контролируемые шины, столбцы - [нагрузки..., ЛЭП ПТ...]
    voltage_sensitivity: tuple[tuple[float, ...], ...] = ()

    @model_validator(mode="after")
    def check_sensitivity(self):
        if len(self.voltage_sensitivity) != len(self.monitored_buses):
            raise ValueError(
                "voltage_sensitivity must have one row per monitored bus"
            )
        n_cols = len(self.loads) + len(self.hvdc)
        for row in self.voltage_sensitivity:
            if len(row) != n_cols:
                raise ValueError(
                    f"voltage_sensitivity rows must have {n_cols} columns"
                )
        return self

    @property
    def n_loads(self) -> int:
        return len(self.loads)

    @property
    def n_links(self) -> int:
        return len(self.hvdc)

    @property
    def n_buses(self) -> int:
        return len(self.monitored_buses)

    def sensitivity_matrix(self) -> np.ndarray:
        return np.array(self.voltage_sensitivity, dtype=float).reshape(
            self.n_buses, self.n_loads + self.n_links
        )

    def total_load_mw(self) -> float:
        return sum(load.base_mw for load in self.loads)


class NoiseSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    amplitude_mw: float = Field(default=0.0, ge=0)
    # уставки ПТ: своя амплитуда и время удержания ступеньки (0 - новое значение каждый шаг)
    dc_amplitude_mw: Optional[float] = Field(default=None, ge=0)
    dc_hold_s: float = Field(default=0.0, ge=0)
    seed: int = 0
    channels: tuple[Literal["loads", "dc"], ...] = ("loads", "dc")

    @property
    def dc_amplitude(self) -> float:
        return self.amplitude_mw if self.dc_amplitude_mw is None else self.dc_amplitude_mw

    @property
    def enabled(self) -> bool:
        return (self.amplitude_mw > 0 or self.dc_amplitude > 0) and len(self.channels) > 0


class ShedEvent(BaseModel):
    """Сценарная разгрузка (для возбуждения канала u_l в обучающих данных)."""

    model_config = ConfigDict(frozen=True)

    time: float = Field(ge=0)
    ratios: tuple[float, ...]

    @model_validator(mode="after")
    def check_ratios(self):
        if any(r < 0 or r > 1 for r in self.ratios):
            raise ValueError("shed ratios must lie in [0, 1]")
        return self


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    inertia_scale: float = Field(default=1.0, gt=0)
    dispatch_scale: float = Field(default=1.0, gt=0)
    trip: tuple[int, ...] = Field(default=(), max_length=3)
    trip_time: float = Field(default=1.0, ge=0)
    deficit_pu: float = 0.0
    noise: NoiseSpec = NoiseSpec()
    shed_event: Optional[ShedEvent] = None
    horizon: float = Field(default=60.0, gt=0)
    dt: float = Field(default=0.1, gt=0)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def check_timing(self):
        if not _is_multiple(self.trip_time, self.dt):
            raise ValueError("trip_time must be an integer multiple of dt")
        if len(set(self.trip)) != len(self.trip):
            raise ValueError("trip indices must be unique")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def trip_index(self) -> int:
        return int(round(self.trip_time / self.dt))

    def validate_against(self, grid: GridModel) -> None:
        n_machines = len(grid.machines)
        for idx in self.trip:
            if idx < 0 or idx >= n_machines:
                raise ConfigError(f"trip index {idx} out of range for {n_machines} machines")
        if len(self.trip) >= n_machines:
            raise ConfigError("at least one machine must stay online")
        if self.shed_event is not None and len(self.shed_event.ratios) != grid.n_loads:
            raise ConfigError("shed_event.ratios must have one entry per load node")
        if self.trip:
            tripped_mw = sum(
                grid.machines[i].dispatch_mw * self.dispatch_scale for i in self.trip
            )
            if not math.isfinite(tripped_mw):
                raise ConfigError("tripped generation is not finite")


class RbfSpec(BaseModel):
    count: int = Field(gt=0)
    centers: Optional[tuple[tuple[float, ...], ...]] = None
    widths: Optional[tuple[float, ...]] = None

    @property
    def resolved(self) -> bool:
        return self.centers is not None and self.widths is not None


class ObservableConfig(BaseModel):
    dictionary: DictionaryKind = "delay_rbf"
    tau: float = Field(default=0.4, ge=0)
    dt: float = Field(default=0.1, gt=0)
    rbf: Optional[RbfSpec] = None
    include_voltage: bool = True

    @model_validator(mode="after")
    def check_config(self):
        if not _is_multiple(self.tau, self.dt):
            raise ValueError("tau must be an integer multiple of dt")
        if self.dictionary in ("rbf", "delay_rbf") and self.rbf is None:
            raise ValueError(f"dictionary '{self.dictionary}' needs an rbf spec")
        return self

    @property
    def n_delay(self) -> int:
        return int(round(self.tau / self.dt))

    @property
    def window_length(self) -> int:
        return self.n_delay + 1

    @classmethod
    def for_method(cls, method: str, dt: float = 0.1, tau: float = 0.4) -> "ObservableConfig":
        """Наборы наблюдаемых для сравниваемых методов идентификации."""
        if method == "cefc":
            return cls(dictionary="delay_rbf", tau=tau, dt=dt, rbf=RbfSpec(count=30))
        if method == "cefc-ntd":
            return cls(dictionary="delay_rbf", tau=0.0, dt=dt, rbf=RbfSpec(count=30))
        if method == "edmd":
            return cls(dictionary="rbf", tau=0.0, dt=dt, rbf=RbfSpec(count=100))
        if method == "dmd":
            return cls(dictionary="identity", tau=0.0, dt=dt)
        raise ConfigError(f"unknown method '{method}', expected one of {METHODS}")


class LimitsConfig(BaseModel):
    feeder_quantum_mw: float = Field(default=10.0, gt=0)
    activation_threshold_hz: float = Field(default=0.2, gt=0)
    frequency_floor_hz: float = 49.0
    steady_state_floor_hz: float = 49.5
    ul_max: float = Field(default=0.3, ge=0, le=1)


class ControlLimits(BaseModel):
    ud_min_mw: tuple[float, ...]
    ud_max_mw: tuple[float, ...]
    link_ends: tuple[LinkEnd, ...]
    ul_max: tuple[float, ...]
    node_load_mw: tuple[float, ...]
    feeder_quantum_mw: float = Field(gt=0)
    activation_threshold_hz: float = Field(default=0.2, gt=0)
    omega_min: float = Field(lt=0, description="nadir floor, p.u. deviation")
    steady_state_floor: float = Field(default=-0.01, lt=0)
    base_frequency_hz: float = Field(default=50.0, gt=0)

    @model_validator(mode="after")
    def check_limits(self):
        if not (len(self.ud_min_mw) == len(self.ud_max_mw) == len(self.link_ends)):
            raise ValueError("per-link limits must have equal lengths")
        if len(self.ul_max) != len(self.node_load_mw):
            raise ValueError("per-node limits must have equal lengths")
        for lo, hi in zip(self.ud_min_mw, self.ud_max_mw):
            if not lo <= 0 <= hi:
                raise ValueError("DC limits must satisfy ud_min <= 0 <= ud_max")
        if -self.activation_threshold_pu <= self.omega_min:
            raise ValueError("activation threshold must be less severe than omega_min")
        return self

    @property
    def activation_threshold_pu(self) -> float:
        return hz_to_pu(self.activation_threshold_hz, self.base_frequency_hz)

    @property
    def n_links(self) -> int:
        return len(self.ud_min_mw)

    @property
    def n_loads(self) -> int:
        return len(self.node_load_mw)

    def max_support_mw(self) -> np.ndarray:
        """Максимальная поддержка ПТ: верхний предел на приёмном конце, нижний на передающем."""
        return np.array(
            [
                hi if end == "receiving" else lo
                for lo, hi, end in zip(self.ud_min_mw, self.ud_max_mw, self.link_ends)
            ],
            dtype=float,
        )

    def ul_max_mw(self) -> np.ndarray:
        return np.asarray(self.ul_max, dtype=float) * np.asarray(self.node_load_mw, dtype=float)

    def clamp_dc(self, ud_mw: np.ndarray) -> np.ndarray:
        return np.clip(ud_mw, np.asarray(self.ud_min_mw), np.asarray(self.ud_max_mw))

    def support_only(self) -> "ControlLimits":
        """Пределы ПТ между нулём и максимальной поддержкой: без реверса мощности."""
        support = self.max_support_mw()
        return self.model_copy(
            update={
                "ud_min_mw": tuple(float(v) for v in np.minimum(support, 0.0)),
                "ud_max_mw": tuple(float(v) for v in np.maximum(support, 0.0)),
            }
        )

    @classmethod
    def from_grid(cls, grid: GridModel, config: Optional[LimitsConfig] = None) -> "ControlLimits":
        config = config or LimitsConfig()
        base_hz = grid.base_frequency_hz
        return cls(
            ud_min_mw=tuple(link.ud_min_mw for link in grid.hvdc),
            ud_max_mw=tuple(link.ud_max_mw for link in grid.hvdc),
            link_ends=tuple(link.end for link in grid.hvdc),
            ul_max=tuple(config.ul_max for _ in grid.loads),
            node_load_mw=tuple(load.base_mw for load in grid.loads),
            feeder_quantum_mw=config.feeder_quantum_mw,
            activation_threshold_hz=config.activation_threshold_hz,
            omega_min=hz_to_pu(config.frequency_floor_hz - base_hz, base_hz),
            steady_state_floor=hz_to_pu(config.steady_state_floor_hz - base_hz, base_hz),
            base_frequency_hz=base_hz,
        )


class LqrWeightsConfig(BaseModel):
    q_omega: float = Field(default=1e4, ge=0)
    q_other: float = Field(default=0.0, ge=0)
    r: float = Field(default=1.0, gt=0)
    # коэффициент дисконтирования стоимости за шаг; 1 - классическая DARE
    discount: float = Field(default=0.98, gt=0, le=1)


class LqrWeights(BaseModel):
    q2_diag: tuple[float, ...]
    r2_diag: tuple[float, ...]
    discount: float = Field(default=1.0, gt=0, le=1)

    @model_validator(mode="after")
    def check_weights(self):
        if any(q < 0 for q in self.q2_diag):
            raise ValueError("Q2 must be positive semidefinite")
        if any(r <= 0 for r in self.r2_diag):
            raise ValueError("R2 must have a strictly positive diagonal")
        return self

    @property
    def Q2(self) -> np.ndarray:
        return np.diag(np.asarray(self.q2_diag, dtype=float))

    @property
    def R2(self) -> np.ndarray:
        return np.diag(np.asarray(self.r2_diag, dtype=float))


class FeederConfig(BaseModel):
    n_feeders: int = Field(default=3, ge=0)
    levels: int = Field(default=2, ge=2)
    quantum_mw: float = Field(default=20.0, gt=0)
    # номер узла нагрузки для каждого фидера; по умолчанию по кругу
    feeder_nodes: Optional[tuple[int, ...]] = None


class DatasetConfig(BaseModel):
    n_train: int = Field(default=300, gt=0)
    n_test: int = Field(default=200, gt=0)
    inertia_range: tuple[float, float] = (0.8, 0.95)
    dispatch_range: tuple[float, float] = (0.85, 1.05)
    trip_fraction_range: tuple[float, float] = (0.05, 0.20)
    noise_amplitude_mw: float = Field(default=10.0, ge=0)
    dc_noise_amplitude_mw: float = Field(default=50.0, ge=0)
    dc_noise_hold_s: float = Field(default=3.0, ge=0)
    shed_probability: float = Field(default=0.5, ge=0, le=1)
    shed_ratio_max: float = Field(default=0.1, ge=0, le=1)
    horizon: float = Field(default=60.0, ge=60.0)
    trip_time: float = 1.0


class RunConfig(BaseModel):
    grid_file: Path
    scenario_file: Path
    observables: ObservableConfig = Field(
        default_factory=lambda: ObservableConfig.for_method("cefc")
    )
    limits: LimitsConfig = LimitsConfig()
    weights: LqrWeightsConfig = LqrWeightsConfig()
    dataset: DatasetConfig = DatasetConfig()
    feeders: FeederConfig = FeederConfig()
    seed: int
    output_dir: Path = Path("output")
    horizon_steps: int = Field(default=100, gt=1)
    ridge: Optional[float] = Field(default=None, ge=0)

    def load_grid(self) -> GridModel:
        return _load_json_model(self.grid_file, GridModel)

    def load_scenario(self) -> Scenario:
        return _load_json_model(self.scenario_file, Scenario)


def _load_json_model(path: Path, model_cls):
    if not Path(path).is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return model_cls.model_validate(json.load(f))
    except (ValidationError, json.JSONDecodeError) as e:
        raise ConfigError(f"invalid {model_cls.__name__} in {path}: {e}") from e


def load_run_config(path: str | Path) -> RunConfig:
    """Читает конфиг запуска; относительные пути считаются от папки конфига."""
    path = Path(path)
    config = _load_json_model(path, RunConfig)
    root = path.parent
    updates = {}
    for field in ("grid_file", "scenario_file", "output_dir"):
        value = getattr(config, field)
        if not value.is_absolute():
            updates[field] = root / value
    return config.model_copy(update=updates)
