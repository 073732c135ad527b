import json
import os

import numpy as np
import pandas as pd
import pytest

from src.config.config_manager import load_config
from src.experiments.acceptance import (
    CriterionResult,
    acceptance_frame,
    batch_means_se,
    check_ess_dominance,
    check_filtering_parity,
    check_pmmh_protocol,
    check_variance_reduction,
)
from src.experiments.commands import (
    PF_COMPARE_TABLES,
    StageResult,
    StudyReport,
    _run_stage,
    cmd_inla_fit,
    cmd_pf_compare,
    cmd_pf_run,
    cmd_pmmh,
    cmd_simulate,
    dataset_for,
    dataset_paths,
    load_pf_compare,
    stage_context,
)
from src.experiments.experiment_config import ExperimentConfig
from src.models.dataset import Dataset
from src.utils.errors import NoConvergence


@pytest.fixture
def config():
    return load_config(None, {"processing": {"max_workers": 2, "show_progress": False}})


@pytest.fixture
def small_experiment(tmp_path):
    return ExperimentConfig(experiment_id="small", T=[15, 25], N=[20, 40], replicates=3, reference_n=300,
                            seed=5, out_dir=str(tmp_path))


@pytest.fixture
def dataset_path(config, small_experiment, tmp_path):
    path = str(tmp_path / "data" / "dataset.csv")
    cmd_simulate(config, small_experiment, path)
    return path


class TestDatasetFiles:
    def test_paths(self):
        paths = dataset_paths(os.path.join("out", "dataset.csv"), [100, 500])
        assert paths == {100: os.path.join("out", "dataset.csv"), 500: os.path.join("out", "dataset_T500.csv")}

    def test_simulate_writes_each_length(self, dataset_path):
        assert Dataset.load(dataset_path).T == 15
        assert dataset_for(dataset_path, 25).T == 25
        assert dataset_for(dataset_path, 10).T == 10
        sibling = dataset_path.replace("dataset.csv", "dataset_T25.meta.json")
        with open(sibling, "r", encoding="utf-8") as f:
            assert json.load(f)["seed"] == 6


class TestStageHelpers:
    def test_stage_context_adds_location(self):
        with pytest.raises(NoConvergence, match="stage=pf-compare T=100 N=1000"):
            with stage_context("pf-compare", T=100, N=1000):
                raise NoConvergence("未收敛")

    def test_run_stage_statuses(self, tmp_path):
        report = StudyReport(out_dir=str(tmp_path))
        existing = tmp_path / "done.csv"
        existing.write_text("x\n1\n", encoding="utf-8")

        def fail():
            raise NoConvergence("牛顿迭代失败")

        assert _run_stage(report, "a", [str(existing)], lambda: None)
        assert not _run_stage(report, "b", [str(tmp_path / "missing.csv")], fail)
        assert not _run_stage(report, "c", [], lambda: None, "b")
        assert _run_stage(report, "d", [str(tmp_path / "other.csv")], lambda: None)
        assert [s.status for s in report.stages] == ["skipped", "failed", "blocked", "done"]
        assert not report.stages_ok

    def test_report_passes_only_with_all_criteria(self, tmp_path):
        report = StudyReport(out_dir=str(tmp_path), stages=[StageResult("a", "done")])
        assert not report.passed
        report.criteria = [CriterionResult(1, "x", True), CriterionResult(2, "y", True)]
        assert report.passed
        report.criteria.append(CriterionResult(3, "z", False, "detail"))
        assert not report.passed
        assert "[FAIL] 3. z: detail" in report.to_text()
        assert list(acceptance_frame(report.criteria).columns) == ["number", "criterion", "passed", "detail"]


class TestCommands:
    def test_inla_fit_outputs(self, config, dataset_path, tmp_path):
        out_dir = str(tmp_path / "inla")
        cmd_inla_fit(config, dataset_path, out_dir)
        for name in ("theta_rho_marginal.csv", "theta_sigma_marginal.csv", "theta_alpha_marginal.csv",
                     "latent_summary.csv", "grid.csv", "inla_report.txt", "latent_summary.svg"):
            assert os.path.exists(os.path.join(out_dir, name)), name
        latent = pd.read_csv(os.path.join(out_dir, "latent_summary.csv"))
        assert list(latent.columns) == ["t", "mean", "sd"]
        assert latent["t"].tolist() == list(range(1, 16))
        with open(os.path.join(out_dir, "inla_report.txt"), "r", encoding="utf-8") as f:
            assert "log π̃(θ|y)" in f.read()

    def test_pf_run_outputs(self, config, dataset_path, tmp_path):
        out_dir = str(tmp_path / "pf")
        summary = cmd_pf_run(config, dataset_path, out_dir, seed=3, N=30, proposal="bootstrap", replicates=4,
                             reference_n=0)
        assert summary.R == 4
        loglik = pd.read_csv(os.path.join(out_dir, "loglik.csv"))
        assert list(loglik.columns) == ["replicate", "loglik"]
        ess = pd.read_csv(os.path.join(out_dir, "ess.csv"))
        assert list(ess.columns) == ["t", "method", "mean_ess"]
        filtering = pd.read_csv(os.path.join(out_dir, "filtering.csv"))
        assert filtering["reference"].isna().all()

    def test_pf_compare_tables(self, config, small_experiment, dataset_path, tmp_path):
        out_dir = str(tmp_path / "compare")
        tables = cmd_pf_compare(config, small_experiment, dataset_path, out_dir)
        variance = tables["variance"]
        assert len(variance) == 2 * 2 * 2
        assert list(variance.columns[:3]) == ["method", "N", "T"]
        assert set(tables["loglik"]["replicate"]) == {1, 2, 3}
        filtering = tables["filtering"]
        np.testing.assert_allclose(np.exp(filtering["log_abs_error"]), filtering["abs_error"], rtol=1e-12)
        assert os.path.exists(os.path.join(out_dir, "study_results.xlsx"))
        assert os.path.exists(os.path.join(out_dir, "loglik_box_T15.svg"))
        assert os.path.exists(os.path.join(out_dir, "ess_T25_N40.svg"))
        reloaded = load_pf_compare(out_dir)
        assert set(reloaded) == set(PF_COMPARE_TABLES)
        pd.testing.assert_frame_equal(reloaded["variance"], variance, check_dtype=False)

        again = cmd_pf_compare(config, small_experiment, dataset_path, str(tmp_path / "compare2"))
        np.testing.assert_array_equal(again["loglik"]["loglik"], tables["loglik"]["loglik"])

        for check, number in ((check_variance_reduction, 4), (check_ess_dominance, 5), (check_filtering_parity, 6)):
            result = check(out_dir)
            assert result.number == number
            assert "T=15" in result.detail

    def test_pmmh_outputs(self, config, dataset_path, tmp_path):
        config["pmmh"].update({"iterations": 30, "burn_in": 10, "thin": 2, "n_particles": 20})
        out_dir = str(tmp_path / "pmmh")
        chain = cmd_pmmh(config, dataset_path, out_dir, seed=4)
        assert len(chain.samples) == 10
        for name in ("chain.csv", "summary.csv", "hist_sigma.csv", "inla_marginal_sigma.csv", "pmmh_info.json",
                     "hist_rho.svg", "trace.svg"):
            assert os.path.exists(os.path.join(out_dir, name)), name
        with open(os.path.join(out_dir, "pmmh_info.json"), "r", encoding="utf-8") as f:
            info = json.load(f)
        assert info["init"] == "inla"
        assert info["n_samples"] == 10
        assert info["theta_true"] == {"rho": 0.7, "sigma": 0.5, "alpha": 1.0}
        result = check_pmmh_protocol(out_dir, true_sigma=0.5)
        assert result.number == 8


def _write_table(directory, filename, frame):
    os.makedirs(directory, exist_ok=True)
    frame.to_csv(os.path.join(directory, filename), index=False)


class TestStudyCriteria:
    def test_variance_reduction(self, tmp_path):
        frame = pd.DataFrame({"method": ["bootstrap", "inla", "bootstrap", "inla"], "N": [100, 100, 1000, 1000],
                              "T": 100, "variance": [2.0, 0.3, 0.2, 0.03]})
        _write_table(tmp_path, "loglik_variance.csv", frame)
        assert check_variance_reduction(str(tmp_path)).passed
        frame.loc[1, "variance"] = 0.9
        _write_table(tmp_path, "loglik_variance.csv", frame)
        assert not check_variance_reduction(str(tmp_path)).passed

    def test_ess_dominance(self, tmp_path):
        t = np.arange(1, 11)
        frame = pd.concat([
            pd.DataFrame({"method": "bootstrap", "N": 100, "T": 10, "t": t, "mean_ess": 40.0}),
            pd.DataFrame({"method": "inla", "N": 100, "T": 10, "t": t, "mean_ess": np.where(t <= 8, 90.0, 10.0)}),
        ])
        _write_table(tmp_path, "ess.csv", frame)
        assert check_ess_dominance(str(tmp_path)).passed

    def test_filtering_parity(self, tmp_path):
        frame = pd.DataFrame({"method": ["bootstrap", "inla"] * 2, "N": 1000, "T": 100, "t": [1, 1, 2, 2],
                              "abs_error": [0.01, 0.025, 0.01, 0.025]})
        _write_table(tmp_path, "filtering_error.csv", frame)
        assert not check_filtering_parity(str(tmp_path)).passed

    def test_missing_files(self, tmp_path):
        for check in (check_variance_reduction, check_ess_dominance, check_filtering_parity):
            result = check(str(tmp_path))
            assert not result.passed and "缺少" in result.detail
        assert not check_pmmh_protocol(str(tmp_path)).passed

    def test_pmmh_protocol(self, tmp_path):
        with open(tmp_path / "pmmh_info.json", "w", encoding="utf-8") as f:
            json.dump({"init": "inla", "accept_rate": 0.25}, f)
        _write_table(tmp_path, "summary.csv", pd.DataFrame({"parameter": ["rho", "sigma", "alpha"],
                                                           "mean": 0.0, "sd": 0.1, "mode": [0.8, 0.52, 0.5]}))
        _write_table(tmp_path, "inla_marginal_sigma.csv", pd.DataFrame({"value": [0.3, 0.45, 0.6],
                                                                       "density": [0.1, 2.0, 0.3]}))
        assert check_pmmh_protocol(str(tmp_path), true_sigma=0.5).passed


class TestBatchMeans:
    def test_iid_standard_error(self, rng):
        values = rng.normal(size=50000)
        assert batch_means_se(values) == pytest.approx(1 / np.sqrt(50000), rel=0.3)
