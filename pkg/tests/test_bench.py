import numpy as np
import pandas as pd
import pytest

from bench.experiments import (
    fit_methods,
    load_dataset,
    run_all,
    run_control_subcases,
    run_edcps_comparison,
    run_prediction_table,
)
from bench.suite import SUBCASE_INERTIA_SCALES, BenchSuite
from controller.coordination import coordinate
from controller.lqr import build_weights
from errors import DependencyError
from koopman.dataset import generate_dataset
from koopman.regression import fit
from models import ObservableConfig, pu_to_hz


@pytest.fixture
def suite(tmp_path, write_config):
    return BenchSuite.load(write_config(tmp_path))


def test_suite_follows_run_config(suite, tmp_path):
    assert suite.output_dir == tmp_path / "out" / "bench"
    assert suite.dataset_dir == tmp_path / "out" / "dataset"
    assert suite.steps == 50
    assert suite.inertia_scales == SUBCASE_INERTIA_SCALES
    assert suite.method_config("cefc").dictionary == "delay_rbf"
    assert suite.method_config("dmd") == ObservableConfig.for_method("dmd")


def test_missing_dataset(suite):
    with pytest.raises(DependencyError):
        load_dataset(suite)


def test_prediction_table(suite, small_dataset, dmd_model):
    table = run_prediction_table(suite, small_dataset, {"dmd": dmd_model})
    assert list(table["method"]) == ["dmd"]
    assert table.loc[0, "n_test"] == 4
    written = pd.read_csv(suite.output_dir / "table1.csv")
    assert written.loc[0, "nadir_error_hz"] == pytest.approx(table.loc[0, "nadir_error_hz"])


# ================================================================
# DESK-SCALE RUNS
# ================================================================
@pytest.fixture(scope="module")
def desk_bench(tmp_path_factory, write_config, grid):
    suite = BenchSuite.load(write_config(tmp_path_factory.mktemp("bench"), horizon_steps=100))
    data = generate_dataset(grid, 300, 200, seed=suite.seed)
    data.save(suite.dataset_dir)
    return suite, data


@pytest.fixture(scope="module")
def desk_models(desk_bench):
    suite, data = desk_bench
    return fit_methods(suite, data)


@pytest.fixture(scope="module")
def desk_table(desk_bench, desk_models):
    suite, data = desk_bench
    return run_prediction_table(suite, data, desk_models).set_index("method")


@pytest.mark.slow
class TestDeskScale:
    def test_method_ordering(self, desk_table):
        errors = desk_table["mean_error_hz"]
        assert errors["cefc"] <= errors["cefc-ntd"] <= max(errors["edmd"], errors["dmd"])

    def test_cefc_mean_error_below_tenth_of_hertz(self, desk_table):
        assert desk_table.loc["cefc", "mean_error_hz"] < 0.1

    def test_delay_window_helps(self, desk_bench):
        suite, data = desk_bench
        with_delays = fit(data, suite.method_config("cefc"), method="cefc")
        without = fit(data, suite.method_config("cefc").model_copy(update={"tau": 0.0}), method="cefc-ntd")
        table = run_prediction_table(suite, data, {"cefc": with_delays, "cefc-ntd": without}).set_index("method")
        assert table.loc["cefc", "mean_error_hz"] <= table.loc["cefc-ntd", "mean_error_hz"]

    def test_subcases_hold_frequency_floor(self, desk_bench, desk_models):
        suite, _ = desk_bench
        floor_hz = suite.grid.base_frequency_hz + pu_to_hz(suite.limits.omega_min, suite.grid.base_frequency_hz)
        traces = run_control_subcases(suite, desk_models["cefc"])
        assert len(traces) == len(SUBCASE_INERTIA_SCALES)
        for trace in traces:
            assert trace.summary.nadir_hz >= floor_hz - 0.02
            changes = np.any(np.diff(trace.record.ul, axis=0) != 0.0, axis=1)
            assert changes.sum() <= 1

    def test_lqr_uses_less_dc_energy_than_max(self, desk_bench, desk_models):
        suite, _ = desk_bench
        summary = run_edcps_comparison(suite, desk_models["cefc"]).set_index("dc_mode_run")
        floor_hz = suite.grid.base_frequency_hz + pu_to_hz(suite.limits.omega_min, suite.grid.base_frequency_hz)
        assert summary.loc["lqr", "dc_energy_mw_s"] < summary.loc["max", "dc_energy_mw_s"]
        assert summary.loc["lqr", "nadir_hz"] >= floor_hz
        assert bool(summary.loc["lqr", "steady_state_ok"])
        assert summary.loc["lqr", "steady_state_hz"] >= 49.5
        assert (suite.output_dir / "edcps_traces.csv").exists()

    def test_weak_dc_support_gives_partial_shedding(self, desk_bench, desk_models):
        suite, _ = desk_bench
        limits = suite.limits.model_copy(update={"ud_min_mw": (-50.0, -50.0), "ud_max_mw": (50.0, 50.0)})
        model = desk_models["cefc"]
        trace = coordinate(
            suite.grid, suite.scenario, model, limits, build_weights(model, suite.weights), suite.steps
        )
        max_shed = float(np.dot(limits.ul_max, limits.node_load_mw))
        assert trace.plan is not None
        assert trace.summary.shed_feasible
        assert 0.0 < trace.summary.shed_total_mw < max_shed

    def test_run_all_writes_every_table(self, desk_bench):
        suite, _ = desk_bench
        run_all(suite)
        for name in ("table1.csv", "edcps_compare.csv", "method_compare.csv", "subcases/summary.csv"):
            assert (suite.output_dir / name).exists()
        summary = pd.read_csv(suite.output_dir / "subcases" / "summary.csv")
        assert np.allclose(summary["inertia_scale"], SUBCASE_INERTIA_SCALES)
