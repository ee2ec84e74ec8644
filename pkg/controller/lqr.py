import logging
from typing import Optional

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from errors import ConfigError, StabilizabilityError
from koopman.observables import frequency_indices
from koopman.regression import KoopmanModel
from models import ControlLimits, LqrWeights, LqrWeightsConfig
from settings import settings

logger = logging.getLogger(__name__)


class RiccatiSolution(BaseModel):
    """P - решение DARE, K - усиление в о.е. модели (u_d = -K g)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    P: np.ndarray
    K: np.ndarray
    residual: float
    iterations: int
    base_power_mw: float = 1.0


def build_weights(model: KoopmanModel, config: Optional[LqrWeightsConfig] = None) -> LqrWeights:
    """Вес q_omega на координатах g, равных отсчётам omega, q_other на остальных."""
    config = config or LqrWeightsConfig()
    q = np.full(model.dim, config.q_other)
    q[frequency_indices(model.config)] = config.q_omega
    return LqrWeights(
        q2_diag=tuple(float(v) for v in q),
        r2_diag=tuple(config.r for _ in range(model.n_links)),
        discount=config.discount,
    )


def check_stabilizable(A: np.ndarray, B: np.ndarray, tol: float = 1e-9) -> None:
    """Тест Попова-Белевича-Хаутуса для строго неустойчивых собственных чисел."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) <= 1.0 + tol:
            continue
        pencil = np.hstack([A - lam * np.eye(n), B])
        if np.linalg.matrix_rank(pencil) < n:
            raise StabilizabilityError(f"mode with eigenvalue {lam:.4g} is unstable and uncontrollable")


def riccati_map(P: np.ndarray, A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    BtPA = B.T @ P @ A
    gain_term = BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA) if B.shape[1] else 0.0
    return Q + A.T @ P @ A - gain_term


def solve_dare_matrices(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    base_power_mw: float = 1.0,
    discount: float = 1.0,
) -> RiccatiSolution:
    """
    DARE итерацией P <- Q + A'PA - A'PB(R + B'PB)^-1 B'PA.
    При discount < 1 стоимость шага k умножается на discount^k, что равносильно
    масштабированию A и B на sqrt(discount).
    """
    tol = settings.DARE_TOL if tol is None else tol
    max_iter = max_iter or settings.DARE_MAX_ITER
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float).reshape(B.shape[1], B.shape[1])
    if Q.shape != A.shape:
        raise ConfigError(f"Q2 shape {Q.shape} does not match A {A.shape}")
    if not 0.0 < discount <= 1.0:
        raise ConfigError(f"discount must be in (0, 1], got {discount}")
    A = np.sqrt(discount) * A
    B = np.sqrt(discount) * B
    check_stabilizable(A, B)

    P = Q.copy()
    for iteration in range(1, max_iter + 1):
        P_next = riccati_map(P, A, B, Q, R)
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise StabilizabilityError(f"Riccati iteration diverged after {iteration} steps")
        P = P_next
        residual = float(np.linalg.norm(riccati_map(P, A, B, Q, R) - P))
        if residual < tol * (1.0 + np.linalg.norm(P)):
            break
    else:
        raise StabilizabilityError(f"Riccati iteration did not converge in {max_iter} steps")

    if B.shape[1]:
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    else:
        K = np.zeros((0, A.shape[0]))
    logger.debug(f"DARE converged in {iteration} iterations, residual={residual:.2e}")
    return RiccatiSolution(P=P, K=K, residual=residual, iterations=iteration, base_power_mw=base_power_mw)


def solve_dare(model: KoopmanModel, weights: LqrWeights) -> RiccatiSolution:
    if len(weights.q2_diag) != model.dim or len(weights.r2_diag) != model.n_links:
        raise ConfigError(
            f"weights ({len(weights.q2_diag)}, {len(weights.r2_diag)}) do not match "
            f"model ({model.dim}, {model.n_links})"
        )
    solution = solve_dare_matrices(
        model.A,
        model.B_d,
        weights.Q2,
        weights.R2,
        base_power_mw=model.base_power_mw,
        discount=weights.discount,
    )
    logger.info(f"LQR gain computed: |K|={np.linalg.norm(solution.K):.3e}, iterations={solution.iterations}")
    return solution


def lqr_step(g: np.ndarray, solution: RiccatiSolution, limits: ControlLimits) -> np.ndarray:
    """Команда ПТ в МВт: -K g, ограниченная пределами каждой линии."""
    command = -(solution.K @ np.asarray(g, dtype=float)) * solution.base_power_mw
    return limits.clamp_dc(command)
