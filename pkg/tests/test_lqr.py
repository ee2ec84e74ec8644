import numpy as np
import pytest
import scipy.linalg

from controller.lqr import (
    RiccatiSolution,
    build_weights,
    lqr_step,
    solve_dare,
    solve_dare_matrices,
)
from errors import ConfigError, StabilizabilityError
from koopman.observables import equilibrium_lift
from models import LqrWeights, LqrWeightsConfig


def closed_loop_cost(A, B, Q, R, K):
    """Матрица стоимости бесконечного горизонта для u = -K g."""
    A_cl = A - B @ K
    return scipy.linalg.solve_discrete_lyapunov(A_cl.T, Q + K.T @ R @ K)


@pytest.fixture
def random_system():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(4, 4))
    A *= 1.1 / np.max(np.abs(np.linalg.eigvals(A)))
    B = rng.normal(size=(4, 2))
    return A, B, np.eye(4), np.eye(2)


class TestRiccati:
    def test_scalar_golden_ratio(self):
        solution = solve_dare_matrices(np.eye(1), np.eye(1), np.eye(1), np.eye(1))
        golden = (1 + np.sqrt(5)) / 2
        assert solution.P[0, 0] == pytest.approx(golden, rel=1e-6)
        assert solution.K[0, 0] == pytest.approx(golden / (1 + golden), rel=1e-6)

    def test_scalar_stable_plant(self):
        solution = solve_dare_matrices(np.array([[0.5]]), np.eye(1), np.eye(1), np.eye(1))
        assert solution.P[0, 0] == pytest.approx(1.132782, abs=1e-6)

    def test_matches_scipy(self, random_system):
        A, B, Q, R = random_system
        solution = solve_dare_matrices(A, B, Q, R)
        expected = scipy.linalg.solve_discrete_are(A, B, Q, R)
        assert np.allclose(solution.P, expected, rtol=1e-6, atol=1e-8)
        assert np.max(np.abs(np.linalg.eigvals(A - B @ solution.K))) < 1.0

    def test_residual_within_tolerance(self, random_system):
        solution = solve_dare_matrices(*random_system)
        assert solution.residual < 1e-10 * (1 + np.linalg.norm(solution.P))
        assert np.allclose(solution.P, solution.P.T)

    def test_without_inputs_reduces_to_lyapunov(self):
        A = np.array([[0.9, 0.2], [0.0, 0.5]])
        Q = np.diag([1.0, 2.0])
        solution = solve_dare_matrices(A, np.zeros((2, 0)), Q, np.zeros((0, 0)))
        assert np.allclose(solution.P, scipy.linalg.solve_discrete_lyapunov(A.T, Q), rtol=1e-8)
        assert solution.K.shape == (0, 2)

    def test_uncontrollable_unstable_mode(self):
        A = np.diag([2.0, 0.5])
        B = np.array([[0.0], [1.0]])
        with pytest.raises(StabilizabilityError):
            solve_dare_matrices(A, B, np.eye(2), np.eye(1))

    def test_discount_scales_the_plant(self, random_system):
        A, B, Q, R = random_system
        solution = solve_dare_matrices(A, B, Q, R, discount=0.81)
        expected = scipy.linalg.solve_discrete_are(0.9 * A, 0.9 * B, Q, R)
        assert np.allclose(solution.P, expected, rtol=1e-6, atol=1e-8)

    def test_discount_one_is_the_classic_solution(self, random_system):
        plain = solve_dare_matrices(*random_system)
        discounted = solve_dare_matrices(*random_system, discount=1.0)
        assert np.array_equal(plain.P, discounted.P)

    @pytest.mark.parametrize("discount", [0.0, -0.5, 1.5])
    def test_invalid_discount(self, discount):
        with pytest.raises(ConfigError):
            solve_dare_matrices(np.eye(1), np.eye(1), np.eye(1), np.eye(1), discount=discount)

    def test_discount_hides_slowly_unstable_mode(self):
        A = np.diag([1.005, 0.5])
        B = np.array([[0.0], [1.0]])
        solution = solve_dare_matrices(A, B, np.eye(2), np.eye(1), discount=0.98)
        assert np.all(np.isfinite(solution.P))

    def test_optimal_gain_beats_perturbations(self, random_system):
        A, B, Q, R = random_system
        solution = solve_dare_matrices(A, B, Q, R)
        optimal = closed_loop_cost(A, B, Q, R, solution.K)
        rng = np.random.default_rng(0)
        for _ in range(20):
            K = solution.K + rng.normal(scale=0.02, size=solution.K.shape)
            if np.max(np.abs(np.linalg.eigvals(A - B @ K))) >= 1.0:
                continue
            extra = closed_loop_cost(A, B, Q, R, K) - optimal
            assert np.min(np.linalg.eigvalsh(0.5 * (extra + extra.T))) >= -1e-8


class TestKoopmanLqr:
    def test_weights_hit_frequency_coordinates(self, cefc_model):
        weights = build_weights(cefc_model, LqrWeightsConfig(q_omega=100.0, q_other=0.5, r=2.0))
        q = np.asarray(weights.q2_diag)
        n_freq = cefc_model.config.window_length
        assert np.sum(q == 100.0) == n_freq
        assert np.sum(q == 0.5) == cefc_model.dim - n_freq
        assert weights.r2_diag == (2.0, 2.0)
        assert weights.discount == LqrWeightsConfig().discount

    def test_equilibrium_gives_zero_command(self, cefc_model, grid, limits):
        solution = solve_dare(cefc_model, build_weights(cefc_model))
        g_eq = equilibrium_lift(cefc_model.config, grid.n_buses)
        assert lqr_step(g_eq, solution, limits) == pytest.approx([0.0, 0.0], abs=1e-9)

    def test_dimension_mismatch(self, cefc_model):
        weights = LqrWeights(q2_diag=(1.0,), r2_diag=(1.0, 1.0))
        with pytest.raises(ConfigError):
            solve_dare(cefc_model, weights)


class TestLqrStep:
    @pytest.fixture
    def solution(self):
        return RiccatiSolution(
            P=np.eye(3), K=np.ones((2, 3)), residual=0.0, iterations=1, base_power_mw=1000.0
        )

    def test_zero_state_gives_zero_command(self, solution, limits):
        assert lqr_step(np.zeros(3), solution, limits) == pytest.approx([0.0, 0.0])

    def test_command_scaled_to_mw(self, solution, limits):
        assert lqr_step(np.full(3, -0.01), solution, limits) == pytest.approx([30.0, 30.0])

    def test_support_only_limits_never_reverse(self, solution, limits):
        support = limits.support_only()
        assert support.ud_min_mw == (0.0, -200.0)
        assert support.ud_max_mw == (300.0, 0.0)
        assert lqr_step(np.full(3, -0.01), solution, support) == pytest.approx([30.0, 0.0])
        assert lqr_step(np.full(3, 0.01), solution, support) == pytest.approx([0.0, -30.0])

    def test_command_clamped_to_link_limits(self, solution, limits):
        assert lqr_step(np.full(3, 100.0), solution, limits) == pytest.approx(limits.ud_min_mw)
        assert lqr_step(np.full(3, -100.0), solution, limits) == pytest.approx(limits.ud_max_mw)
