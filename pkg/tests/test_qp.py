import numpy as np
import pytest

from controller.qp import solve_qp
from errors import ConfigError


def test_projection_onto_halfplane():
    result = solve_qp(np.eye(2), -np.array([1.0, 2.0]), np.array([[-1.0, -1.0]]), np.array([-1.0]))
    assert result.feasible
    assert result.x == pytest.approx([0.0, 1.0])
    assert result.active == [0]
    assert result.multipliers == pytest.approx([1.0])


def test_unconstrained_minimum_when_constraints_inactive():
    result = solve_qp(2 * np.eye(2), np.array([-2.0, 4.0]), np.array([[1.0, 0.0]]), np.array([-5.0]))
    assert result.feasible
    assert result.x == pytest.approx([1.0, -2.0])
    assert result.active == []


@pytest.mark.parametrize("seed", range(5))
def test_random_problem_satisfies_kkt(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(4, 4))
    H = M @ M.T + np.eye(4)
    c = rng.normal(size=4)
    C = rng.normal(size=(6, 4))
    x0 = rng.normal(size=4)
    b = C @ x0 - rng.uniform(0.0, 1.0, size=6)

    result = solve_qp(H, c, C, b)
    assert result.feasible
    x, u, active = result.x, result.multipliers, result.active
    assert np.all(C @ x >= b - 1e-9)
    assert np.all(u >= -1e-10)
    assert H @ x + c == pytest.approx(C[active].T @ u, abs=1e-8)
    assert C[active] @ x == pytest.approx(b[active], abs=1e-9)


def test_contradictory_constraints_reported():
    C = np.array([[1.0], [-1.0]])
    b = np.array([2.0, -1.0])
    result = solve_qp(np.eye(1), np.zeros(1), C, b)
    assert not result.feasible


def test_indefinite_hessian_rejected():
    with pytest.raises(ConfigError):
        solve_qp(np.diag([1.0, -1.0]), np.zeros(2), np.zeros((0, 2)), np.zeros(0))
