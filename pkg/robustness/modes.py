"""
Переключаемое представление отключения фидеров.

Режим i - набор уровней отключения всех фидеров; номер режима считается с 1,
режимы упорядочены лексикографически (режим 1 - без отключения).
"""

import itertools
import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from errors import ConfigError, ModeCountError
from koopman.regression import KoopmanModel

logger = logging.getLogger(__name__)

MAX_FEEDERS = 12
MAX_MODES = 2**MAX_FEEDERS


class ModeSet(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    n_feeders: int
    levels: int
    quanta_mw: tuple[float, ...]
    feeder_nodes: tuple[int, ...]
    node_load_mw: tuple[float, ...]
    steps: int
    # (n_modes, n_feeders) уровни 0..levels-1
    vectors: np.ndarray
    # (n_modes, n_loads) доли отключения по узлам
    ratios: np.ndarray
    # (n_modes, dim) столбцы B_i = B_l u^i
    inputs: np.ndarray
    # (n_modes,) P_i
    costs: np.ndarray
    A: np.ndarray
    q1: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.vectors)

    def shed_mw(self, mode: int) -> np.ndarray:
        return self.ratios[self.index(mode)] * np.asarray(self.node_load_mw)

    def index(self, mode: int) -> int:
        if not 1 <= mode <= self.n_modes:
            raise ValueError(f"mode {mode} out of range 1..{self.n_modes}")
        return mode - 1

    def rebind(self, model: KoopmanModel) -> "ModeSet":
        """Те же режимы для другой модели той же размерности входов."""
        return self.model_copy(update={"inputs": self.ratios @ model.B_l.T, "A": model.A})


def feeder_matrix(n_loads: int, nodes: Sequence[int]) -> np.ndarray:
    """Матрица (n_loads, n_feeders): 1, если фидер питается от узла."""
    n_feeders = len(nodes)
    matrix = np.zeros((n_loads, n_feeders))
    for f, node in enumerate(nodes):
        if not 0 <= node < n_loads:
            raise ConfigError(f"feeder {f} refers to missing load node {node}")
        matrix[node, f] = 1.0
    return matrix


def enumerate_modes(
    n_feeders: int,
    quanta_mw,
    model: KoopmanModel,
    node_load_mw: Sequence[float],
    steps: int,
    levels: int = 2,
    feeder_nodes: Optional[Sequence[int]] = None,
    q1: Optional[np.ndarray] = None,
) -> ModeSet:
    if n_feeders > MAX_FEEDERS or levels**n_feeders > MAX_MODES:
        raise ModeCountError(
            f"{n_feeders} feeders with {levels} levels exceed the limit of {MAX_MODES} modes"
        )
    quanta = np.broadcast_to(np.asarray(quanta_mw, dtype=float), (n_feeders,)).copy()
    node_load = np.asarray(node_load_mw, dtype=float)
    if len(node_load) != model.n_loads:
        raise ConfigError(f"model has {model.n_loads} load inputs, got {len(node_load)} node loads")
    if q1 is None:
        q1 = np.diag(node_load / node_load.sum()) if len(node_load) else np.zeros((0, 0))

    if feeder_nodes is None:
        feeder_nodes = [f % max(len(node_load), 1) for f in range(n_feeders)]
    nodes = list(feeder_nodes)
    if len(nodes) != n_feeders:
        raise ConfigError("feeder_nodes must list one load node per feeder")
    mapping = feeder_matrix(len(node_load), nodes)

    combos = list(itertools.product(range(levels), repeat=n_feeders))
    vectors = np.array(combos, dtype=float).reshape(len(combos), n_feeders)
    shed_mw = (vectors * quanta) @ mapping.T
    ratios = shed_mw / node_load if len(node_load) else shed_mw
    if np.any(ratios > 1.0):
        raise ConfigError("a mode sheds more than the load connected to a node")
    # однократное отключение держится с шага 2 по шаг T
    costs = (steps - 1) * np.einsum("mi,ij,mj->m", ratios, q1, ratios)
    logger.debug(f"enumerated {len(vectors)} modes for {n_feeders} feeders")
    return ModeSet(
        n_feeders=n_feeders,
        levels=levels,
        quanta_mw=tuple(float(q) for q in quanta),
        feeder_nodes=tuple(int(n) for n in nodes),
        node_load_mw=tuple(float(v) for v in node_load),
        steps=steps,
        vectors=vectors,
        ratios=ratios,
        inputs=ratios @ model.B_l.T,
        costs=costs,
        A=model.A,
        q1=q1,
    )


def switched_step(g: np.ndarray, mode: int, modes: ModeSet) -> np.ndarray:
    return modes.A @ g + modes.inputs[modes.index(mode)]


def mode_weights(v) -> np.ndarray:
    """Коэффициенты v_i * prod_{j<i}(1 - v_j) произведения переключателей."""
    v = np.asarray(v, dtype=float)
    blocked = np.concatenate([[1.0], np.cumprod(1.0 - v)[:-1]])
    return v * blocked


def product_form_step(g: np.ndarray, v, modes: ModeSet) -> np.ndarray:
    """Шаг переключаемой системы по вектору переключателей v длины n_modes."""
    v = np.asarray(v, dtype=float)
    if len(v) != modes.n_modes:
        raise ValueError(f"switch vector must have {modes.n_modes} entries")
    return modes.A @ g + mode_weights(v) @ modes.inputs
