import argparse
import os

import pandas as pd
import pytest

from main import EXIT_OK, EXIT_USAGE, main, parse_theta


@pytest.fixture
def out_dir(tmp_path):
    return str(tmp_path / "out")


def simulate(out_dir, *extra):
    return main(["simulate", "--T", "20", "--seed", "3", "--out-dir", out_dir, *extra])


class TestParseTheta:
    def test_valid(self):
        theta = parse_theta("0.7,0.5,1")
        assert (theta.rho, theta.sigma, theta.alpha) == (0.7, 0.5, 1.0)

    @pytest.mark.parametrize("text", ["0.7,0.5", "1.2,0.5,1", "a,b,c"])
    def test_invalid(self, text):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_theta(text)


class TestUsageErrors:
    def test_zero_length(self, out_dir):
        assert main(["simulate", "--T", "0", "--out-dir", out_dir]) == EXIT_USAGE

    def test_bad_theta(self, out_dir):
        assert main(["simulate", "--theta", "1.5,0.5,1", "--out-dir", out_dir]) == EXIT_USAGE

    def test_missing_data_flag(self):
        assert main(["inla-fit"]) == EXIT_USAGE

    def test_missing_dataset(self, out_dir):
        assert main(["inla-fit", "--data", os.path.join(out_dir, "none.csv"), "--out-dir", out_dir]) == EXIT_USAGE

    def test_unknown_config_key(self, tmp_path, out_dir):
        path = tmp_path / "bad.yaml"
        path.write_text("filter:\n  particles: 10\n", encoding="utf-8")
        assert main(["simulate", "--config", str(path), "--out-dir", out_dir]) == EXIT_USAGE

    def test_help(self):
        assert main(["--help"]) == EXIT_OK


class TestSubcommands:
    def test_simulate(self, out_dir):
        assert simulate(out_dir) == EXIT_OK
        frame = pd.read_csv(os.path.join(out_dir, "dataset.csv"))
        assert list(frame.columns) == ["t", "y", "x_true"]
        assert len(frame) == 20
        assert os.path.exists(os.path.join(out_dir, "dataset.meta.json"))

    def test_simulate_linear_gaussian_output(self, tmp_path, out_dir):
        target = str(tmp_path / "lg.csv")
        assert simulate(out_dir, "--model", "linear_gaussian", "--obs-noise", "0.5", "--output", target) == EXIT_OK
        assert len(pd.read_csv(target)) == 20

    def test_global_flags_before_subcommand(self, out_dir):
        assert main(["--seed", "3", "--out-dir", out_dir, "simulate", "--T", "12"]) == EXIT_OK
        assert len(pd.read_csv(os.path.join(out_dir, "dataset.csv"))) == 12

    def test_inla_fit_and_pf_run(self, out_dir):
        assert simulate(out_dir) == EXIT_OK
        data = os.path.join(out_dir, "dataset.csv")
        assert main(["inla-fit", "--data", data, "--out-dir", out_dir, "--threads", "2"]) == EXIT_OK
        assert os.path.exists(os.path.join(out_dir, "latent_summary.csv"))
        assert main(["pf-run", "--data", data, "--N", "30", "--replicates", "3", "--reference-n", "200",
                     "--proposal", "inla", "--out-dir", out_dir]) == EXIT_OK
        assert len(pd.read_csv(os.path.join(out_dir, "loglik.csv"))) == 3
        filtering = pd.read_csv(os.path.join(out_dir, "filtering.csv"))
        assert filtering["abs_error"].notna().all()

    def test_pf_run_truncated(self, out_dir):
        assert simulate(out_dir) == EXIT_OK
        data = os.path.join(out_dir, "dataset.csv")
        assert main(["pf-run", "--data", data, "--T", "8", "--N", "10", "--reference-n", "0",
                     "--theta", "0.5,0.4,0.8", "--out-dir", out_dir]) == EXIT_OK
        assert len(pd.read_csv(os.path.join(out_dir, "ess.csv"))) == 8
        assert main(["pf-run", "--data", data, "--T", "50", "--out-dir", out_dir]) == EXIT_USAGE
