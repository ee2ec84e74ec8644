from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field

from models import (
    METHODS,
    ControlLimits,
    GridModel,
    LqrWeightsConfig,
    ObservableConfig,
    RunConfig,
    Scenario,
    load_run_config,
)

SUBCASE_INERTIA_SCALES = (0.80, 0.85, 0.94, 0.89, 0.82)


class BenchSuite(BaseModel):
    """Набор экспериментов: один датасет, четыре способа идентификации, общий сценарий."""

    grid: GridModel
    scenario: Scenario
    dataset_dir: Path
    output_dir: Path
    methods: tuple[str, ...] = METHODS
    observables: ObservableConfig
    inertia_scales: tuple[float, ...] = SUBCASE_INERTIA_SCALES
    limits: ControlLimits
    weights: LqrWeightsConfig = LqrWeightsConfig()
    steps: int = Field(default=100, gt=1)
    ridge: Optional[float] = None
    seed: int

    def method_config(self, method: str) -> ObservableConfig:
        """cefc берёт окно задержек из конфига запуска, остальные - фиксированные наборы."""
        if method == "cefc":
            return self.observables
        return ObservableConfig.for_method(method, dt=self.observables.dt)

    @classmethod
    def from_run_config(cls, config: RunConfig) -> "BenchSuite":
        grid = config.load_grid()
        scenario = config.load_scenario()
        scenario.validate_against(grid)
        return cls(
            grid=grid,
            scenario=scenario,
            dataset_dir=dataset_dir(config),
            output_dir=Path(config.output_dir) / "bench",
            observables=config.observables,
            limits=ControlLimits.from_grid(grid, config.limits),
            weights=config.weights,
            steps=config.horizon_steps,
            ridge=config.ridge,
            seed=config.seed,
        )

    @classmethod
    def load(cls, path: str | Path) -> "BenchSuite":
        return cls.from_run_config(load_run_config(path))


def dataset_dir(config: RunConfig) -> Path:
    return Path(config.output_dir) / "dataset"


def model_path(config: RunConfig, method: str) -> Path:
    return Path(config.output_dir) / f"model_{method}.json"
