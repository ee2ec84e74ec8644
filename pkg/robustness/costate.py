import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.optimize import linprog

from robustness.modes import ModeSet, mode_weights

logger = logging.getLogger(__name__)


class CostateTrajectory(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    # (T, dim), строка t-1 - lambda(t)
    values: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.values)

    def at(self, t: int) -> np.ndarray:
        return self.values[t - 1]


def solve_costate(
    A: np.ndarray,
    steps: int,
    schedule: Optional[Sequence[int]] = None,
    modes: Optional[ModeSet] = None,
    terminal: Optional[np.ndarray] = None,
) -> CostateTrajectory:
    """
    Обратная рекурсия lambda(t) = -A' lambda(t+1) * sum_i v_i prod_{j<i}(1 - v_j)
    от lambda(T) = terminal (по умолчанию 0).
    schedule - номер активного режима на каждом шаге (с 1).
    """
    if steps < 1:
        raise ValueError("costate horizon must be at least one step")
    A = np.asarray(A, dtype=float)
    dim = A.shape[0]
    values = np.zeros((steps, dim))
    if terminal is not None:
        values[-1] = np.asarray(terminal, dtype=float)
    n_modes = modes.n_modes if modes is not None else 1
    schedule = list(schedule) if schedule is not None else [1] * steps
    if len(schedule) < steps:
        raise ValueError(f"mode schedule has {len(schedule)} entries, horizon is {steps}")
    for t in range(steps - 2, -1, -1):
        switches = np.zeros(n_modes)
        switches[schedule[t] - 1] = 1.0
        factor = float(mode_weights(switches).sum())
        values[t] = -A.T @ values[t + 1] * factor
    return CostateTrajectory(values=values)


def diagnostic_terminal(dim: int, scale: float = 1.0) -> np.ndarray:
    """Ненулевое граничное условие на координате omega."""
    terminal = np.zeros(dim)
    terminal[0] = scale
    return terminal


def mode_hamiltonian_values(lam: np.ndarray, g: np.ndarray, modes: ModeSet) -> np.ndarray:
    """a_i = lambda'(A g + B_i) + P_i для всех режимов."""
    lam = np.asarray(lam, dtype=float)
    return float(lam @ (modes.A @ g)) + modes.inputs @ lam + modes.costs


def select_mode(values) -> int:
    """Номер режима (с 1) с минимальным a_i; при равенстве - меньший номер."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("no mode values to select from")
    return int(np.argmin(values)) + 1


def relaxed_minimum(values) -> float:
    """Минимум sum a_i w_i по симплексу весов w."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    result = linprog(values, A_eq=np.ones((1, n)), b_eq=[1.0], bounds=[(0.0, None)] * n, method="highs")
    return float(result.fun)
