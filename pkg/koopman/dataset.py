"""
Генерация и хранение обучающих траекторий.

Датасет на диске - папка с CSV траекторий и manifest.json:
    manifest.json
    train/traj_0000.csv ...
    test/traj_0000.csv ...
"""

import itertools
import json
import logging
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, ValidationError

from errors import ConfigError, DependencyError, IntegrationDivergenceError
from grid_sim.simulator import simulate
from grid_sim.trajectory import TrajectoryRecord
from models import DatasetConfig, GridModel, NoiseSpec, Scenario, ShedEvent
from settings import settings

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class DatasetEntry(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    split: Literal["train", "test"]
    file: str
    scenario: Scenario
    record: Optional[TrajectoryRecord] = None


class DatasetManifest(BaseModel):
    seed: int
    dt: float
    grid: GridModel
    entries: list[DatasetEntry]


class Dataset(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    seed: int
    grid: GridModel
    train: list[DatasetEntry]
    test: list[DatasetEntry]

    @property
    def entries(self) -> list[DatasetEntry]:
        return self.train + self.test

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        for split in ("train", "test"):
            (directory / split).mkdir(parents=True, exist_ok=True)
        for entry in self.entries:
            entry.record.write_csv(directory / entry.file)
        dt = self.entries[0].scenario.dt if self.entries else 0.1
        manifest = DatasetManifest(
            seed=self.seed,
            dt=dt,
            grid=self.grid,
            entries=[entry.model_copy(update={"record": None}) for entry in self.entries],
        )
        path = directory / MANIFEST_NAME
        with open(path, "w", encoding="utf-8") as f:
            f.write(manifest.model_dump_json(indent=1, exclude={"entries": {"__all__": {"record"}}}))
        logger.info(f"dataset with {len(self.train)} train / {len(self.test)} test written to {directory}")
        return path

    @classmethod
    def load(cls, directory: str | Path) -> "Dataset":
        directory = Path(directory)
        path = directory / MANIFEST_NAME
        if not path.is_file():
            raise DependencyError(f"dataset manifest not found: {path}, run 'gen-data' first")
        try:
            with open(path, "r", encoding="utf-8") as f:
                manifest = DatasetManifest.model_validate(json.load(f))
        except (ValidationError, json.JSONDecodeError) as e:
            raise ConfigError(f"invalid dataset manifest {path}: {e}") from e

        entries = []
        for entry in manifest.entries:
            csv_path = directory / entry.file
            if not csv_path.is_file():
                raise DependencyError(f"trajectory file missing: {csv_path}")
            record = TrajectoryRecord.read_csv(csv_path, entry.scenario.dt)
            entries.append(entry.model_copy(update={"record": record}))
        return cls(
            seed=manifest.seed,
            grid=manifest.grid,
            train=[e for e in entries if e.split == "train"],
            test=[e for e in entries if e.split == "test"],
        )


def fit_start_index(scenario: Scenario) -> int:
    """Первый отсчёт после возмущения (до него omega тождественно 0)."""
    return scenario.trip_index + 1


def trip_combinations(grid: GridModel, dispatch_scale: float, config: DatasetConfig) -> list[tuple[int, ...]]:
    """Наборы из 1-3 генераторов, отключение которых даёт дефицит в заданной доле нагрузки."""
    n = len(grid.machines)
    reference = grid.total_load_mw() or sum(m.dispatch_mw for m in grid.machines)
    low, high = config.trip_fraction_range
    combos = []
    for size in range(1, min(3, n - 1) + 1):
        for combo in itertools.combinations(range(n), size):
            lost = sum(grid.machines[i].dispatch_mw for i in combo) * dispatch_scale
            if low <= lost / reference <= high:
                combos.append(combo)
    return combos


def sample_scenario(grid: GridModel, seed: int, config: DatasetConfig, attempt: int = 0, dt: float = 0.1) -> Scenario:
    rng = np.random.default_rng([seed, attempt])
    dispatch_scale = float(rng.uniform(*config.dispatch_range))
    combos = trip_combinations(grid, dispatch_scale, config)
    if not combos:
        # крайние значения диапазона могут не давать подходящих отключений
        dispatch_scale = float(np.mean(config.dispatch_range))
        combos = trip_combinations(grid, dispatch_scale, config)
    if not combos:
        raise ConfigError(
            f"no machine combination gives a trip in {config.trip_fraction_range} of load"
        )
    trip = combos[int(rng.integers(len(combos)))]
    inertia_scale = float(rng.uniform(*config.inertia_range))

    shed_event = None
    if grid.n_loads and rng.uniform() < config.shed_probability:
        delay = float(rng.uniform(0.5, 5.0))
        time = config.trip_time + round(delay / dt) * dt
        ratios = tuple(float(r) for r in rng.uniform(0.0, config.shed_ratio_max, grid.n_loads))
        shed_event = ShedEvent(time=time, ratios=ratios)

    return Scenario(
        inertia_scale=inertia_scale,
        dispatch_scale=dispatch_scale,
        trip=trip,
        trip_time=config.trip_time,
        noise=NoiseSpec(
            amplitude_mw=config.noise_amplitude_mw,
            dc_amplitude_mw=config.dc_noise_amplitude_mw,
            dc_hold_s=config.dc_noise_hold_s,
            seed=int(rng.integers(2**31 - 1)),
        ),
        shed_event=shed_event,
        horizon=config.horizon,
        dt=dt,
        seed=seed,
    )


def _generate_one(grid: GridModel, seed: int, config: DatasetConfig, dt: float) -> tuple[Scenario, TrajectoryRecord]:
    for attempt in range(settings.DATASET_MAX_RETRIES + 1):
        scenario = sample_scenario(grid, seed, config, attempt, dt)
        try:
            return scenario, simulate(grid, scenario)
        except IntegrationDivergenceError as e:
            logger.warning(f"scenario seed={seed} attempt={attempt} diverged ({e}), resampling")
    raise IntegrationDivergenceError(
        f"scenario seed={seed} diverged {settings.DATASET_MAX_RETRIES + 1} times"
    )


def scenario_seeds(seed: int, count: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(count)
    seeds = [int(child.generate_state(1, dtype=np.uint32)[0]) for child in children]
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"seed {seed} produced colliding scenario seeds, pick another")
    return seeds


def generate_dataset(
    grid: GridModel,
    n_train: int,
    n_test: int,
    seed: int,
    config: Optional[DatasetConfig] = None,
    jobs: Optional[int] = None,
    dt: float = 0.1,
) -> Dataset:
    """
    Случайные отключения 1-3 генераторов при разной инерции и загрузке,
    шум по узлам нагрузки и уставкам ПТ. Обучающие и тестовые сценарии
    различаются по seed.
    """
    if n_train <= 0 or n_test <= 0:
        raise ConfigError("n_train and n_test must be positive")
    config = config or DatasetConfig()
    jobs = jobs or settings.DEFAULT_JOBS
    seeds = scenario_seeds(seed, n_train + n_test)

    results = Parallel(n_jobs=jobs)(
        delayed(_generate_one)(grid, s, config, dt) for s in seeds
    )

    entries = []
    for i, (scenario, record) in enumerate(results):
        split = "train" if i < n_train else "test"
        index = i if i < n_train else i - n_train
        entries.append(
            DatasetEntry(split=split, file=f"{split}/traj_{index:04d}.csv", scenario=scenario, record=record)
        )
    logger.info(f"generated {n_train} train / {n_test} test trajectories (seed={seed})")
    return Dataset(
        seed=seed,
        grid=grid,
        train=entries[:n_train],
        test=entries[n_train:],
    )
