import json
import logging

import numpy as np
import pytest

from errors import ConfigError, DependencyError, SingularRegressionError
from koopman.dataset import Dataset, fit_start_index, generate_dataset, scenario_seeds
from koopman.observables import equilibrium_lift, feature_dimension
from koopman.regression import KoopmanModel, fit, fit_oracle_model, fit_pairs, spectral_radius, training_pairs
from models import DatasetConfig, ObservableConfig
from settings import settings


class TestFitPairs:
    @pytest.fixture
    def scalar_pairs(self):
        rng = np.random.default_rng(1)
        u = rng.normal(size=200)
        g = np.zeros(201)
        for k in range(200):
            g[k + 1] = 0.9 * g[k] + 0.1 * u[k]
        return g[:-1, None], u[:, None], g[1:, None]

    def test_recovers_known_scalar_system(self, scalar_pairs):
        A, B = fit_pairs(*scalar_pairs, ridge=0.0)
        assert A[0, 0] == pytest.approx(0.9, abs=1e-10)
        assert B[0, 0] == pytest.approx(0.1, abs=1e-10)

    def test_small_ridge_barely_moves_solution(self, scalar_pairs):
        A, B = fit_pairs(*scalar_pairs, ridge=1e-8)
        assert A[0, 0] == pytest.approx(0.9, abs=1e-6)

    def test_rank_deficient_without_ridge_raises(self, scalar_pairs):
        G, U, G_next = scalar_pairs
        G2 = np.hstack([G, G])
        with pytest.raises(SingularRegressionError):
            fit_pairs(G2, U, np.hstack([G_next, G_next]), ridge=0.0)

    def test_rank_deficient_with_ridge_is_solved(self, scalar_pairs):
        G, U, G_next = scalar_pairs
        A, _ = fit_pairs(np.hstack([G, G]), U, np.hstack([G_next, G_next]), ridge=1e-6)
        assert np.all(np.isfinite(A))


class TestDataset:
    def test_train_and_test_are_seed_disjoint(self, small_dataset):
        train = {e.scenario.seed for e in small_dataset.train}
        test = {e.scenario.seed for e in small_dataset.test}
        assert len(train) == 8 and len(test) == 4
        assert not train & test

    def test_scenarios_follow_sampling_ranges(self, small_dataset):
        for entry in small_dataset.entries:
            scenario = entry.scenario
            assert 0.8 <= scenario.inertia_scale <= 0.95
            assert 1 <= len(scenario.trip) <= 3
            assert scenario.horizon >= 60.0
            assert len(entry.record) == 601

    def test_seeds_are_deterministic(self):
        assert scenario_seeds(42, 5) == scenario_seeds(42, 5)

    def test_regeneration_is_identical(self, grid):
        config = DatasetConfig(n_train=2, n_test=1)
        first = generate_dataset(grid, 2, 1, seed=3, config=config)
        second = generate_dataset(grid, 2, 1, seed=3, config=config)
        for a, b in zip(first.entries, second.entries):
            assert a.scenario == b.scenario
            assert np.array_equal(a.record.omega, b.record.omega)

    def test_save_and_load(self, small_dataset, tmp_path):
        small_dataset.save(tmp_path / "data")
        loaded = Dataset.load(tmp_path / "data")
        assert len(loaded.train) == 8 and len(loaded.test) == 4
        assert np.array_equal(loaded.train[0].record.omega, small_dataset.train[0].record.omega)
        with open(tmp_path / "data" / "manifest.json") as f:
            manifest = json.load(f)
        assert len(manifest["entries"]) == 12
        assert "record" not in manifest["entries"][0]

    def test_missing_manifest_is_dependency_error(self, tmp_path):
        with pytest.raises(DependencyError):
            Dataset.load(tmp_path)

    def test_nonpositive_counts_rejected(self, grid):
        with pytest.raises(ConfigError):
            generate_dataset(grid, 0, 1, seed=1)


class TestFit:
    def test_dimensions(self, cefc_model, grid):
        assert cefc_model.dim == feature_dimension(cefc_model.config, grid.n_buses)
        assert cefc_model.B_l.shape == (cefc_model.dim, 3)
        assert cefc_model.B_d.shape == (cefc_model.dim, 2)
        assert cefc_model.config.rbf.resolved

    def test_duplicated_trajectories_give_same_model(self, small_dataset):
        config = ObservableConfig.for_method("dmd")
        single = fit(small_dataset, config, ridge=0.0)
        doubled = small_dataset.model_copy(update={"train": small_dataset.train * 2})
        twice = fit(doubled, config, ridge=0.0)
        assert np.allclose(single.A, twice.A, rtol=1e-8, atol=1e-10)
        assert np.allclose(single.B, twice.B, rtol=1e-8, atol=1e-10)

    def test_empty_training_set(self, small_dataset):
        empty = small_dataset.model_copy(update={"train": []})
        with pytest.raises(DependencyError):
            fit(empty, ObservableConfig.for_method("dmd"))


class TestSerialization:
    def test_json_round_trip(self, cefc_model, tmp_path):
        path = tmp_path / "model.json"
        cefc_model.save(path)
        loaded = KoopmanModel.load(path)
        assert np.array_equal(loaded.A, cefc_model.A)
        assert np.array_equal(loaded.B_d, cefc_model.B_d)
        assert loaded.config == cefc_model.config
        with open(path) as f:
            assert json.load(f)["dims"]["state"] == cefc_model.dim

    def test_missing_file(self, tmp_path):
        with pytest.raises(DependencyError):
            KoopmanModel.load(tmp_path / "nope.json")

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            KoopmanModel.load(path)


class TestTrainingPairs:
    def test_first_pair_starts_right_after_trip(self, small_dataset):
        entry = small_dataset.train[0]
        config = ObservableConfig(dictionary="delay", tau=0.4, include_voltage=False)
        G, U, G_next = training_pairs([entry], config, small_dataset.grid.base_power_mw)
        k = fit_start_index(entry.scenario)
        assert k == entry.scenario.trip_index + 1
        assert G[0, 0] == entry.record.omega[k]
        assert G_next[0, 0] == entry.record.omega[k + 1]
        # окно активации захватывает доаварийные нули
        assert np.all(G[0, 1:] == 0.0)
        assert np.all(np.any(G != 0.0, axis=1))
        assert len(G) == len(entry.record) - 1 - k

    def test_dc_setpoints_are_excited(self, small_dataset):
        for entry in small_dataset.train:
            noise = entry.scenario.noise
            assert noise.dc_amplitude == 50.0
            assert noise.dc_hold_s == 3.0
        record = small_dataset.train[0].record
        assert np.ptp(record.ud[small_dataset.train[0].scenario.trip_index + 1 :]) > 0.0


class TestStability:
    def test_spectral_radius(self):
        assert spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9)
        assert spectral_radius(np.array([[0.0, -1.0], [1.0, 0.0]])) == pytest.approx(1.0)

    def test_unstable_fit_is_reported(self, small_dataset, monkeypatch, caplog):
        monkeypatch.setattr(settings, "SPECTRAL_RADIUS_TOL", -1.0)
        with caplog.at_level(logging.WARNING, logger="koopman.regression"):
            fit(small_dataset, ObservableConfig.for_method("dmd"))
        assert "spectral radius" in caplog.text

    def test_equilibrium_is_a_fixed_point(self, cefc_model, grid):
        g_eq = equilibrium_lift(cefc_model.config, grid.n_buses)
        assert np.max(np.abs(cefc_model.A @ g_eq)) < 1e-12


class TestOracleModel:
    def test_oracle_has_a_larger_dictionary(self, grid, cefc_model):
        oracle = fit_oracle_model(grid, cefc_model.config, seed=5, n_scenarios=6)
        assert oracle.method == "oracle"
        assert oracle.config.rbf.count == 2 * cefc_model.config.rbf.count
        assert oracle.config.window_length == cefc_model.config.window_length
        assert oracle.dim == cefc_model.dim + cefc_model.config.rbf.count
