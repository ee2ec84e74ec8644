import numpy as np
import pytest

from errors import InsufficientHistoryError
from koopman.observables import (
    embedding_series,
    equilibrium_lift,
    feature_dimension,
    frequency_indices,
    lift,
    lift_series,
    resolve_rbf,
)
from models import ObservableConfig, RbfSpec


def test_identity_lift_is_current_frequency():
    config = ObservableConfig(dictionary="identity", tau=0.0, include_voltage=False)
    assert lift([0.02], np.zeros((1, 0)), config) == pytest.approx([0.02])


def test_delay_lift_puts_current_sample_first():
    config = ObservableConfig(dictionary="delay", tau=0.2, include_voltage=False)
    a, b, c = -0.001, -0.002, -0.003
    assert lift([a, b, c], np.zeros((3, 0)), config) == pytest.approx([c, a, b])


def test_voltage_enters_as_deviation():
    config = ObservableConfig(dictionary="identity", tau=0.0)
    assert lift([0.0], np.array([[2.0]]), config) == pytest.approx([0.0, 1.0])


def test_lift_uses_trailing_window():
    config = ObservableConfig(dictionary="delay", tau=0.1, include_voltage=False)
    assert lift([9.0, 1.0, 2.0], np.zeros((3, 0)), config) == pytest.approx([2.0, 1.0])


def test_short_window_raises():
    config = ObservableConfig(dictionary="delay", tau=0.4, include_voltage=False)
    with pytest.raises(InsufficientHistoryError):
        lift([0.0, 0.0], np.zeros((2, 0)), config)
    with pytest.raises(ValueError):
        lift([0.0], np.zeros((1, 0)), config)


def test_tau_must_be_multiple_of_dt():
    with pytest.raises(ValueError):
        ObservableConfig(dictionary="delay", tau=0.25, dt=0.1)


def test_rbf_feature_peaks_at_its_center():
    spec = RbfSpec(count=1, centers=((0.0, 0.5),), widths=(0.3,))
    config = ObservableConfig(dictionary="rbf", tau=0.0, rbf=spec)
    g = lift([0.0], np.array([[1.5]]), config)
    assert g == pytest.approx([0.0, 0.5, 1.0 - np.exp(-0.25 / 0.18)])


def test_rbf_feature_follows_gaussian_profile():
    spec = RbfSpec(count=1, centers=((0.0,),), widths=(2.0,))
    config = ObservableConfig(dictionary="rbf", tau=0.0, include_voltage=False, rbf=spec)
    g = lift([1.0], np.zeros((1, 0)), config)
    assert g[1] == pytest.approx(np.exp(-1.0 / 8.0) - 1.0)


def test_rbf_features_vanish_at_rest():
    spec = RbfSpec(count=2, centers=((-0.01, 0.02), (0.03, -0.01)), widths=(0.05, 0.05))
    config = ObservableConfig(dictionary="rbf", tau=0.0, rbf=spec)
    assert lift([0.0], np.array([[1.0]]), config) == pytest.approx(np.zeros(4))


class TestSeries:
    @pytest.fixture
    def series(self):
        rng = np.random.default_rng(5)
        omega = rng.normal(scale=0.01, size=40)
        y = 1.0 + rng.normal(scale=0.01, size=(40, 2))
        return omega, y

    @pytest.fixture
    def config(self, series):
        omega, y = series
        base = ObservableConfig(dictionary="delay_rbf", tau=0.4, rbf=RbfSpec(count=6))
        return resolve_rbf(base, embedding_series(omega, y, base))

    def test_series_rows_match_single_lift(self, series, config):
        omega, y = series
        G = lift_series(omega, y, config)
        n = config.n_delay
        for row in (0, 7, len(G) - 1):
            k = row + n
            expected = lift(omega[k - n : k + 1], y[k - n : k + 1], config)
            assert G[row] == pytest.approx(expected)

    def test_dimension_matches_lift(self, series, config):
        omega, y = series
        g = lift(omega[:5], y[:5], config)
        assert len(g) == feature_dimension(config, 2) == 5 * 3 + 6

    def test_frequency_indices_cover_window(self, series, config):
        omega, y = series
        g = lift(omega[:5], y[:5], config)
        assert g[frequency_indices(config)] == pytest.approx(np.r_[omega[4], omega[:4]])

    def test_resolved_centers_and_width(self, config):
        assert config.rbf.resolved
        assert len(config.rbf.centers) == 6
        assert all(w > 0 for w in config.rbf.widths)

    def test_equilibrium_lifts_to_zero(self, config):
        g_eq = equilibrium_lift(config, 2)
        assert len(g_eq) == feature_dimension(config, 2)
        assert np.max(np.abs(g_eq)) < 1e-12

    def test_unresolved_rbf_cannot_lift(self, series):
        omega, y = series
        config = ObservableConfig(dictionary="rbf", tau=0.0, rbf=RbfSpec(count=3))
        with pytest.raises(ValueError):
            lift(omega[:1], y[:1], config)
