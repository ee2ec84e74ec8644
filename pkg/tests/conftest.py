import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from grid_sim.defaults import desk_grid, single_machine_grid
from koopman.dataset import generate_dataset
from koopman.regression import KoopmanModel, fit
from models import ControlLimits, DatasetConfig, ObservableConfig, Scenario


# ================================================================
# GRIDS
# ================================================================
@pytest.fixture(scope="session")
def grid():
    return desk_grid()


@pytest.fixture(scope="session")
def single_grid():
    return single_machine_grid()


@pytest.fixture(scope="session")
def limits(grid):
    return ControlLimits.from_grid(grid)


@pytest.fixture
def trip_scenario():
    return Scenario(trip=(0,), trip_time=1.0, horizon=20.0, dt=0.1)


# ================================================================
# DATA AND MODELS
# ================================================================
@pytest.fixture(scope="session")
def small_dataset(grid):
    """12 траекторий по 60 с; в каждой есть сценарное отключение нагрузки."""
    config = DatasetConfig(n_train=8, n_test=4, shed_probability=1.0)
    return generate_dataset(grid, 8, 4, seed=11, config=config)


@pytest.fixture(scope="session")
def cefc_model(small_dataset):
    return fit(small_dataset, ObservableConfig.for_method("cefc"), method="cefc")


@pytest.fixture(scope="session")
def dmd_model(small_dataset):
    return fit(small_dataset, ObservableConfig.for_method("dmd"), method="dmd")


@pytest.fixture
def linear_model():
    """Модель на g = [omega, const]: omega дрейфует вниз на 0.001 за шаг."""

    def _create(b: float = 0.02, n_loads: int = 1, drift: float = -0.001):
        return KoopmanModel(
            config=ObservableConfig(dictionary="identity", tau=0.0, include_voltage=True),
            A=np.array([[1.0, drift], [0.0, 1.0]]),
            B_l=np.vstack([np.full((1, n_loads), b), np.zeros((1, n_loads))]),
            B_d=np.zeros((2, 0)),
            base_power_mw=1000.0,
            n_buses=1,
        )

    return _create


@pytest.fixture
def node_limits():
    """Пределы для одного узла 1000 МВт без ЛЭП ПТ."""

    def _create(n_loads: int = 1, ul_max: float = 0.3, quantum: float = 10.0):
        return ControlLimits(
            ud_min_mw=(),
            ud_max_mw=(),
            link_ends=(),
            ul_max=tuple(ul_max for _ in range(n_loads)),
            node_load_mw=tuple(1000.0 for _ in range(n_loads)),
            feeder_quantum_mw=quantum,
            activation_threshold_hz=0.2,
            omega_min=-0.02,
        )

    return _create


# ================================================================
# RUN CONFIGS
# ================================================================
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="session")
def write_config():
    """Копирует конфиги схемы и сценария в папку и пишет run.json с выводом в out/."""

    def _create(directory: Path, **overrides) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        shutil.copy(CONFIGS / "desk_grid.json", directory / "desk_grid.json")
        shutil.copy(CONFIGS / "scenario_large_trip.json", directory / "scenario_large_trip.json")
        with open(CONFIGS / "run.json") as f:
            config = json.load(f)
        config.update({"output_dir": "out", "horizon_steps": 50}, **overrides)
        path = directory / "run.json"
        with open(path, "w") as f:
            json.dump(config, f)
        return path

    return _create
