"""
Двойственный метод активного набора (Goldfarb-Idnani) для строго выпуклой задачи

    min 1/2 x'Hx + c'x   при   C x >= b.

Размерность задачи - число узлов нагрузки, поэтому используется явная H^-1.
"""

import logging
from typing import Optional

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from errors import ConfigError, QpError
from settings import settings

logger = logging.getLogger(__name__)


class QpResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    feasible: bool
    active: list[int]
    multipliers: np.ndarray
    iterations: int


def solve_qp(
    H: np.ndarray,
    c: np.ndarray,
    C: np.ndarray,
    b: np.ndarray,
    max_iter: Optional[int] = None,
    tol: float = 1e-12,
) -> QpResult:
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    n = len(c)
    C = np.asarray(C, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).reshape(-1)
    max_iter = max_iter or settings.QP_MAX_ITER
    try:
        factor = scipy.linalg.cho_factor(H)
    except np.linalg.LinAlgError as e:
        raise ConfigError("QP Hessian must be symmetric positive definite") from e
    H_inv = scipy.linalg.cho_solve(factor, np.eye(n))

    x = -H_inv @ c
    active: list[int] = []
    u = np.zeros(0)
    row_scale = 1.0 + np.abs(C).sum(axis=1) + np.abs(b)
    iterations = 0

    while True:
        slack = C @ x - b
        slack[active] = np.inf
        if len(slack) == 0 or np.all(slack >= -tol * row_scale):
            logger.debug(f"QP solved in {iterations} iterations, active={active}")
            return QpResult(x=x, feasible=True, active=active, multipliers=u, iterations=iterations)

        p = int(np.argmin(slack / row_scale))
        n_p = C[p]
        u_plus = np.append(u, 0.0)

        while True:
            iterations += 1
            if iterations > max_iter:
                raise QpError(f"active-set method did not converge in {max_iter} iterations")

            if active:
                N = C[active].T
                HN = H_inv @ N
                r = scipy.linalg.solve(N.T @ HN, HN.T @ n_p, assume_a="pos")
                z = H_inv @ n_p - HN @ r
            else:
                r = np.zeros(0)
                z = H_inv @ n_p

            # шаг в двойственном пространстве до обнуления множителя активного ограничения
            t_dual, drop = np.inf, None
            for j, r_j in enumerate(r):
                if r_j > tol:
                    ratio = u_plus[j] / r_j
                    if ratio < t_dual:
                        t_dual, drop = ratio, j

            # полный шаг до выполнения нарушенного ограничения p
            z_n = float(z @ n_p)
            if np.linalg.norm(z) <= 1e-14 * (1.0 + np.linalg.norm(H_inv @ n_p)) or z_n <= 0:
                t_primal = np.inf
            else:
                t_primal = -(float(n_p @ x) - b[p]) / z_n

            step = min(t_dual, t_primal)
            if not np.isfinite(step):
                logger.debug(f"QP infeasible: constraint {p} cannot be satisfied")
                return QpResult(x=x, feasible=False, active=active, multipliers=u, iterations=iterations)

            if np.isfinite(t_primal):
                x = x + step * z
            u_plus[:-1] -= step * r
            u_plus[-1] += step

            if t_primal <= t_dual:
                active.append(p)
                u = u_plus
                break
            del active[drop]
            u_plus = np.delete(u_plus, drop)
