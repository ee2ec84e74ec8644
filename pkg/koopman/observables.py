import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.metrics.pairwise import euclidean_distances

from errors import InsufficientHistoryError
from models import ObservableConfig, RbfSpec

logger = logging.getLogger(__name__)


def _uses_delays(config: ObservableConfig) -> bool:
    return config.dictionary in ("delay", "delay_rbf")


def _uses_rbf(config: ObservableConfig) -> bool:
    return config.dictionary in ("rbf", "delay_rbf")


def frequency_indices(config: ObservableConfig) -> list[int]:
    """Индексы координат g, которые являются отсчётами omega."""
    if _uses_delays(config):
        return list(range(config.window_length))
    return [0]


def feature_dimension(config: ObservableConfig, n_buses: int) -> int:
    n_y = n_buses if config.include_voltage else 0
    if _uses_delays(config):
        dim = config.window_length * (1 + n_y)
    else:
        dim = 1 + n_y
    if _uses_rbf(config):
        dim += config.rbf.count
    return dim


def _embeddings(omega_windows: np.ndarray, y_windows: np.ndarray, config: ObservableConfig) -> np.ndarray:
    # omega_windows: (n, L), y_windows: (n, L, m); вектор задержек, старые отсчёты первыми
    parts = [omega_windows]
    if config.include_voltage and y_windows.shape[2]:
        parts.append((y_windows - 1.0).reshape(len(y_windows), -1))
    return np.concatenate(parts, axis=1)


def _rbf_features(z: np.ndarray, spec: RbfSpec) -> np.ndarray:
    centers = np.asarray(spec.centers, dtype=float)
    widths = np.asarray(spec.widths, dtype=float)
    sq = euclidean_distances(z, centers, squared=True)
    # сдвиг: в равновесии (z = 0) все признаки равны нулю
    at_rest = np.exp(-np.sum(centers**2, axis=1) / (2.0 * widths**2))
    return np.exp(-sq / (2.0 * widths**2)) - at_rest


def _lift_windows(omega_windows: np.ndarray, y_windows: np.ndarray, config: ObservableConfig) -> np.ndarray:
    n = len(omega_windows)
    current = omega_windows[:, -1:]
    parts = [current]
    if _uses_delays(config):
        parts.append(omega_windows[:, :-1])
        if config.include_voltage and y_windows.shape[2]:
            parts.append((y_windows - 1.0).reshape(n, -1))
    elif config.include_voltage and y_windows.shape[2]:
        parts.append(y_windows[:, -1, :] - 1.0)
    if _uses_rbf(config):
        if not config.rbf.resolved:
            raise ValueError("rbf centers are not resolved; fit the dictionary first")
        parts.append(_rbf_features(_embeddings(omega_windows, y_windows, config), config.rbf))
    return np.concatenate(parts, axis=1)


def lift(omega_window, y_window, config: ObservableConfig) -> np.ndarray:
    """
    Поднимает хвостовое окно измерений в наблюдаемые g.
    Первая компонента всегда равна текущему omega.
    """
    omega_window = np.asarray(omega_window, dtype=float).reshape(-1)
    y_window = np.asarray(y_window, dtype=float)
    if y_window.ndim == 1:
        y_window = y_window.reshape(len(omega_window), -1) if len(omega_window) else y_window
    length = config.window_length
    if len(omega_window) < length or len(y_window) < length:
        raise InsufficientHistoryError(
            f"lift needs {length} samples, got {len(omega_window)}"
        )
    omega_window = omega_window[-length:]
    y_window = y_window[-length:].reshape(length, -1)
    return _lift_windows(omega_window[None, :], y_window[None, :, :], config)[0]


def _windows(omega: np.ndarray, y: np.ndarray, length: int):
    omega_w = sliding_window_view(omega, length)
    y_w = sliding_window_view(y, length, axis=0).transpose(0, 2, 1)
    return omega_w, y_w


def lift_series(omega: np.ndarray, y: np.ndarray, config: ObservableConfig) -> np.ndarray:
    """Пакетный lift: строка j соответствует моменту j + n_delay."""
    length = config.window_length
    if len(omega) < length:
        raise InsufficientHistoryError(f"series of {len(omega)} samples is shorter than the window")
    omega_w, y_w = _windows(np.asarray(omega, dtype=float), np.asarray(y, dtype=float), length)
    return _lift_windows(omega_w, y_w, config)


def embedding_series(omega: np.ndarray, y: np.ndarray, config: ObservableConfig) -> np.ndarray:
    omega_w, y_w = _windows(np.asarray(omega, dtype=float), np.asarray(y, dtype=float), config.window_length)
    return _embeddings(omega_w, y_w, config)


def resolve_rbf(config: ObservableConfig, embeddings: np.ndarray) -> ObservableConfig:
    """
    Центры RBF - квантили обучающих векторов задержек по текущему omega,
    ширина - медиана попарных расстояний между центрами.
    """
    if not _uses_rbf(config) or config.rbf.resolved:
        return config
    count = config.rbf.count
    order = np.argsort(embeddings[:, config.n_delay], kind="stable")
    positions = ((np.arange(count) + 0.5) / count * len(order)).astype(int)
    centers = embeddings[order[np.minimum(positions, len(order) - 1)]]

    distances = euclidean_distances(centers)
    upper = distances[np.triu_indices(count, k=1)]
    upper = upper[upper > 0]
    width = float(np.median(upper)) if upper.size else 1.0
    logger.info(f"resolved {count} rbf centers, width={width:.3e}")

    spec = RbfSpec(
        count=count,
        centers=tuple(tuple(float(v) for v in row) for row in centers),
        widths=tuple(width for _ in range(count)),
    )
    return config.model_copy(update={"rbf": spec})


def equilibrium_lift(config: ObservableConfig, n_buses: int) -> np.ndarray:
    """Наблюдаемые в доаварийном равновесии: omega = 0, напряжения 1 о.е."""
    length = config.window_length
    return lift(np.zeros(length), np.ones((length, n_buses)), config)
