import json

import numpy as np
import pytest

from nnmpc import cli, data, mlp
from nnmpc.config import RunConfig
from nnmpc.errors import ConfigError


FAST = {
    "mpc": {"horizon": 8, "dt": 0.05, "max_iters": 80},
    "train": {"epochs": 2, "batch_size": 32},
}


def write_config(tmp_path, extra):
    doc = {**FAST, **extra}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


class TestRunConfig:
    def test_defaults(self):
        rc = RunConfig.from_dict({})
        assert rc.mpc_cfg.horizon == 25
        assert rc.dagger_config().iterations == 10
        assert rc.eval_config().n_sims == 200

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown top-level"):
            RunConfig.from_dict({"typo": 1})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown keys in mpc"):
            RunConfig.from_dict({"mpc": {"horizons": 10}})

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"mpc": {"horizon": 0}})

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError):
            RunConfig.from_json_file(path)

    def test_seed_fans_out(self):
        rc = RunConfig.from_dict({"seed": 5})
        assert rc.train_config().seed != 5  # derived, not reused raw


class TestGenerateCommand:
    def test_single_row_csv(self, tmp_path):
        cfg = write_config(tmp_path, {"out_dir": str(tmp_path / "out")})
        rc = cli.main(["generate", "--config", cfg, "--n-sims", "1", "--steps", "1"])
        assert rc == 0
        d = data.load_csv(tmp_path / "out" / "dataset.csv")
        assert len(d) == 1
        report = json.loads((tmp_path / "out" / "generation_report.json").read_text())
        assert report["n_samples"] == 1
        assert report["config"]["mpc"]["horizon"] == 8

    def test_reproducible_files(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            cfg = write_config(tmp_path, {"out_dir": str(tmp_path / name)})
            assert cli.main(["generate", "--config", cfg, "--n-sims", "2",
                             "--steps", "3", "--seed", "11"]) == 0
            outs.append((tmp_path / name / "dataset.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_bad_config_exit_code(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"mpc": {"bogus": 1}}))
        assert cli.main(["generate", "--config", str(path)]) == 2


class TestBcCommand:
    def test_model_and_report(self, tmp_path):
        cfg = write_config(tmp_path, {
            "out_dir": str(tmp_path / "out"),
            "bc": {"n_sims": 2, "steps_per_sim": 10},
        })
        assert cli.main(["bc", "--config", cfg]) == 0
        params = mlp.load_params(tmp_path / "out" / "model.bin")
        report = json.loads((tmp_path / "out" / "bc_report.json").read_text())
        assert len(report["val_losses"]) == 2
        assert report["config"]["n_sims"] == 2
        assert isinstance(params, mlp.MlpParams)

    def test_default_epoch_count_is_five(self, tmp_path):
        cfg = write_config(tmp_path, {
            "out_dir": str(tmp_path / "out"),
            "train": {"batch_size": 32},
            "bc": {"n_sims": 1, "steps_per_sim": 10},
        })
        assert cli.main(["bc", "--config", cfg]) == 0
        report = json.loads((tmp_path / "out" / "bc_report.json").read_text())
        assert len(report["val_losses"]) == 5

    def test_dataset_from_csv(self, tmp_path):
        rng = np.random.default_rng(0)
        d = data.Dataset(rng.uniform(-1, 1, (50, 4)), rng.uniform(-1, 1, (50, 2)),
                         data.PROV_EXPERT)
        csv_path = tmp_path / "d.csv"
        data.save_csv(d, csv_path)
        cfg = write_config(tmp_path, {"out_dir": str(tmp_path / "out")})
        assert cli.main(["bc", "--config", cfg, "--dataset", str(csv_path)]) == 0


class TestDaggerCommand:
    def test_checkpoints_and_report(self, tmp_path):
        cfg = write_config(tmp_path, {
            "out_dir": str(tmp_path / "out"),
            "dagger": {"initial_train_size": 20, "initial_val_size": 5,
                       "iterations": 1, "added_train_per_iter": 5,
                       "added_val_per_iter": 2, "rollout_steps": 5,
                       "eval_n_sims": 1, "eval_steps": 3},
        })
        assert cli.main(["dagger", "--config", cfg]) == 0
        out = tmp_path / "out"
        assert (out / "model_iter_00.bin").exists()
        assert (out / "model_iter_01.bin").exists()
        report = json.loads((out / "dagger_report.json").read_text())
        assert len(report["iterations"]) == 2
        assert all("rmse" in e for e in report["iterations"])

    def test_iterations_override(self, tmp_path):
        cfg = write_config(tmp_path, {
            "out_dir": str(tmp_path / "out"),
            "dagger": {"initial_train_size": 10, "initial_val_size": 3,
                       "iterations": 5, "added_train_per_iter": 4,
                       "added_val_per_iter": 2, "rollout_steps": 4,
                       "eval_n_sims": 1, "eval_steps": 2},
        })
        assert cli.main(["dagger", "--config", cfg, "--iterations", "1"]) == 0
        files = list((tmp_path / "out").glob("model_iter_*.bin"))
        assert len(files) == 2  # iteration 0 + 1


class TestEvalCommand:
    def _make_model(self, tmp_path):
        path = tmp_path / "model.bin"
        mlp.save_params(mlp.init_params(0), path)
        return str(path)

    def test_trajectory_csv_count(self, tmp_path):
        model = self._make_model(tmp_path)
        cfg = write_config(tmp_path, {"out_dir": str(tmp_path / "out")})
        assert cli.main(["eval", "--config", cfg, "--model", model,
                         "--n-sims", "2", "--steps", "4"]) == 0
        trajs = list((tmp_path / "out" / "trajectories").glob("*.csv"))
        assert len(trajs) == 4  # 2 mpc + 2 neural
        report = json.loads((tmp_path / "out" / "eval_report.json").read_text())
        assert "rmse_overall" in report
        assert len(report["per_sim"]) == 2

    def test_missing_model_file(self, tmp_path):
        cfg = write_config(tmp_path, {"out_dir": str(tmp_path / "out")})
        rc = cli.main(["eval", "--config", cfg, "--model",
                       str(tmp_path / "nope.bin"), "--n-sims", "1", "--steps", "2"])
        assert rc == 4

    def test_corrupt_model_file(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"not a model")
        cfg = write_config(tmp_path, {"out_dir": str(tmp_path / "out")})
        rc = cli.main(["eval", "--config", cfg, "--model", str(bad),
                       "--n-sims", "1", "--steps", "2"])
        assert rc == 2

    def test_manifest_written(self, tmp_path):
        model = self._make_model(tmp_path)
        cfg = write_config(tmp_path, {"out_dir": str(tmp_path / "out")})
        assert cli.main(["eval", "--config", cfg, "--model", model,
                         "--n-sims", "1", "--steps", "2"]) == 0
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["command"] == "eval"
        assert "created_utc" in manifest
        assert "eval_report.json" in manifest["files"]
