import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, ValidationError

from errors import ConfigError, DependencyError, SingularRegressionError
from koopman.dataset import Dataset, DatasetEntry, fit_start_index, generate_dataset
from koopman.observables import embedding_series, feature_dimension, lift_series, resolve_rbf
from models import DatasetConfig, GridModel, ObservableConfig, RbfSpec
from settings import settings

logger = logging.getLogger(__name__)


class KoopmanModel(BaseModel):
    """
    Линейная система в пространстве наблюдаемых:
        g_{t+1} = A g_t + B_l u_l + B_d u_d,
    u_l - доли разгрузки, u_d - в о.е. на base_power_mw.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    config: ObservableConfig
    A: np.ndarray
    B_l: np.ndarray
    B_d: np.ndarray
    ridge: float = 0.0
    base_power_mw: float = 1000.0
    n_buses: int = 0
    method: Optional[str] = None

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def n_loads(self) -> int:
        return self.B_l.shape[1]

    @property
    def n_links(self) -> int:
        return self.B_d.shape[1]

    @property
    def B(self) -> np.ndarray:
        return np.hstack([self.B_l, self.B_d])

    def dc_to_pu(self, ud_mw):
        return np.asarray(ud_mw, dtype=float) / self.base_power_mw

    def dc_to_mw(self, ud_pu):
        return np.asarray(ud_pu, dtype=float) * self.base_power_mw

    def step(self, g: np.ndarray, ul: np.ndarray, ud_pu: np.ndarray) -> np.ndarray:
        return self.A @ g + self.B_l @ ul + self.B_d @ ud_pu

    def to_dict(self) -> dict:
        return {
            "dims": {
                "state": self.dim,
                "loads": self.n_loads,
                "links": self.n_links,
                "buses": self.n_buses,
            },
            "config": self.config.model_dump(mode="json"),
            "ridge": self.ridge,
            "base_power_mw": self.base_power_mw,
            "method": self.method,
            "A": self.A.tolist(),
            "B_l": self.B_l.tolist(),
            "B_d": self.B_d.tolist(),
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1)
        logger.info(f"model saved to {path}")

    @classmethod
    def from_dict(cls, data: dict) -> "KoopmanModel":
        dims = data["dims"]
        return cls(
            config=ObservableConfig.model_validate(data["config"]),
            A=np.array(data["A"], dtype=float).reshape(dims["state"], dims["state"]),
            B_l=np.array(data["B_l"], dtype=float).reshape(dims["state"], dims["loads"]),
            B_d=np.array(data["B_d"], dtype=float).reshape(dims["state"], dims["links"]),
            ridge=data.get("ridge", 0.0),
            base_power_mw=data.get("base_power_mw", 1000.0),
            n_buses=dims.get("buses", 0),
            method=data.get("method"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "KoopmanModel":
        path = Path(path)
        if not path.is_file():
            raise DependencyError(f"model file not found: {path}, run 'fit' first")
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls.from_dict(json.load(f))
        except (KeyError, ValueError, ValidationError) as e:
            raise ConfigError(f"invalid model file {path}: {e}") from e


def fit_pairs(G: np.ndarray, U: np.ndarray, G_next: np.ndarray, ridge: float):
    """
    Гребневая регрессия [A B] по парам (g_t, u_t) -> g_{t+1}
    через полное ортогональное разложение (LAPACK gelsy).
    """
    G = np.asarray(G, dtype=float)
    U = np.asarray(U, dtype=float).reshape(len(G), -1)
    G_next = np.asarray(G_next, dtype=float)
    d = G.shape[1]
    X = np.hstack([G, U])
    n_features = X.shape[1]
    Y = G_next
    if ridge > 0:
        X = np.vstack([X, np.sqrt(ridge) * np.eye(n_features)])
        Y = np.vstack([Y, np.zeros((n_features, d))])
    theta, _, rank, _ = scipy.linalg.lstsq(X, Y, lapack_driver="gelsy")
    if ridge == 0 and rank < n_features:
        raise SingularRegressionError(
            f"regressors are rank deficient ({rank} < {n_features}); use ridge > 0"
        )
    return theta[:d].T, theta[d:].T


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0


def training_pairs(entries: list[DatasetEntry], config: ObservableConfig, base_power_mw: float):
    G_parts, U_parts, N_parts = [], [], []
    for entry in entries:
        record = entry.record
        G = lift_series(record.omega, record.y, config)
        # окна, захватывающие доаварийные нули, тоже нужны: с них начинается активация
        first = max(fit_start_index(entry.scenario), config.n_delay)
        last = len(record) - 1
        if last <= first:
            continue
        rows = np.arange(first, last)
        G_parts.append(G[rows - config.n_delay])
        N_parts.append(G[rows + 1 - config.n_delay])
        U_parts.append(np.hstack([record.ul[rows], record.ud[rows] / base_power_mw]))
    if not G_parts:
        raise DependencyError("dataset has no usable post-disturbance samples")
    return np.vstack(G_parts), np.vstack(U_parts), np.vstack(N_parts)


def resolve_dictionary(entries: list[DatasetEntry], config: ObservableConfig) -> ObservableConfig:
    if config.rbf is None or config.rbf.resolved:
        return config
    parts = []
    for entry in entries:
        z = embedding_series(entry.record.omega, entry.record.y, config)
        parts.append(z[max(fit_start_index(entry.scenario) - config.n_delay, 0):])
    return resolve_rbf(config, np.vstack(parts))


def fit(
    data: Dataset,
    config: ObservableConfig,
    ridge: Optional[float] = None,
    method: Optional[str] = None,
) -> KoopmanModel:
    if not data.train:
        raise DependencyError("training set is empty")
    ridge = settings.RIDGE if ridge is None else ridge
    grid = data.grid
    config = resolve_dictionary(data.train, config)
    G, U, G_next = training_pairs(data.train, config, grid.base_power_mw)
    A, B = fit_pairs(G, U, G_next, ridge)
    n_l = grid.n_loads
    model = KoopmanModel(
        config=config,
        A=A,
        B_l=B[:, :n_l],
        B_d=B[:, n_l:],
        ridge=ridge,
        base_power_mw=grid.base_power_mw,
        n_buses=grid.n_buses,
        method=method,
    )
    expected = feature_dimension(config, grid.n_buses)
    if model.dim != expected:
        raise SingularRegressionError(f"lifted dimension {model.dim} != {expected}")
    radius = spectral_radius(model.A)
    if radius > 1.0 + settings.SPECTRAL_RADIUS_TOL:
        logger.warning(
            f"fitted A is unstable: spectral radius {radius:.4f}, free predictions will diverge"
        )
    logger.info(
        f"fitted {method or config.dictionary} model: dim={model.dim}, "
        f"pairs={len(G)}, ridge={ridge:g}"
    )
    return model


def fit_oracle_model(
    grid: GridModel,
    config: ObservableConfig,
    seed: int,
    n_scenarios: int = 180,
    rbf_count: Optional[int] = None,
    jobs: Optional[int] = None,
) -> KoopmanModel:
    """
    Опорная модель для проверки условия k* = i*: втрое больше сценариев,
    без шума нагрузки (ступеньки уставок ПТ остаются как известный вход),
    словарь RBF вдвое больше обучаемого, если rbf_count не задан.
    """
    dataset_config = DatasetConfig(
        n_train=n_scenarios, n_test=1, noise_amplitude_mw=0.0, shed_probability=0.7
    )
    data = generate_dataset(grid, n_scenarios, 1, seed, dataset_config, jobs=jobs)
    if config.rbf is not None:
        count = rbf_count if rbf_count is not None else 2 * config.rbf.count
        config = config.model_copy(update={"rbf": RbfSpec(count=count)})
    return fit(data, config, method="oracle")
