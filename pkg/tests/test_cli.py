"""Tests for the command-line interface."""

import json

import pytest

from seqopt.cli import main

HAND_TABLE = {"0 0": 0.0, "0 1": 1.0, "1 0": 0.0, "1 1": 2.0}


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "environment": {"kind": "tabular", "vocab_size": 2, "length": 2,
                        "table": HAND_TABLE},
        "model": {"hidden": 32, "learning_rate": 0.005, "tabular": True},
        "agent": {"alpha": 0.05, "top_k": 2, "batch_episodes": 8,
                  "buffer_capacity": 500, "polyak_rho": 0.99, "use_filter": False},
        "iterations": 25,
        "seeds": [1, 2],
    }))
    return str(path)


class TestRun:
    def test_run_writes_outputs(self, config_path, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["run", "--config", config_path, "--out", str(out)])
        assert code == 0
        assert (out / "curve_seed1.csv").exists()
        assert (out / "curve_seed2.csv").exists()
        stdout = capsys.readouterr().out
        assert "seed=1" in stdout and "seed=2" in stdout

    def test_seed_flag_overrides(self, config_path, tmp_path):
        out = tmp_path / "out"
        code = main(["run", "--config", config_path, "--seed", "9", "--out", str(out)])
        assert code == 0
        assert (out / "curve_seed9.csv").exists()
        assert not (out / "curve_seed1.csv").exists()

    def test_env_var_overrides_config(self, config_path, tmp_path, monkeypatch):
        monkeypatch.setenv("SEQOPT_SEED", "4,5")
        out = tmp_path / "out"
        assert main(["run", "--config", config_path, "--out", str(out)]) == 0
        assert (out / "curve_seed4.csv").exists()
        assert (out / "curve_seed5.csv").exists()

    def test_seed_flag_beats_env_var(self, config_path, tmp_path, monkeypatch):
        monkeypatch.setenv("SEQOPT_SEED", "4,5")
        out = tmp_path / "out"
        assert main(["run", "--config", config_path, "--seed", "6", "--out", str(out)]) == 0
        assert (out / "curve_seed6.csv").exists()
        assert not (out / "curve_seed4.csv").exists()

    def test_iters_flag(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--config", config_path, "--iters", "7",
                     "--seed", "1", "--out", str(out)]) == 0
        lines = (out / "curve_seed1.csv").read_text().splitlines()
        assert len(lines) == 8


class TestErrors:
    def test_bad_config_gives_tagged_error_and_nonzero_exit(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"environment": {"kind": "nope"}}))
        code = main(["run", "--config", path.as_posix()])
        assert code == 2
        err = capsys.readouterr().err
        assert err.startswith("seqopt-error: config:")
        assert err.count("\n") == 1

    def test_invalid_json_reported(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["run", "--config", path.as_posix()]) == 2
        assert "seqopt-error: config:" in capsys.readouterr().err

    def test_bad_seed_list(self, config_path, capsys):
        assert main(["run", "--config", config_path, "--seed", "1,two"]) == 2
        assert "seeds" in capsys.readouterr().err


class TestCompareAndSweep:
    def test_compare_prints_table(self, config_path, tmp_path, capsys):
        out = tmp_path / "cmp"
        code = main(["compare", "--config", config_path, "--iters", "10",
                     "--variants", "pin_no_fluency,rlprompt_rb", "--out", str(out)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "pin_no_fluency" in stdout and "rlprompt_rb" in stdout
        assert (out / "comparison.csv").exists()
        assert (out / "curves_long.csv").exists()

    def test_sweep_prints_rows(self, config_path, tmp_path, capsys):
        out = tmp_path / "sw"
        code = main(["sweep", "--config", config_path, "--iters", "10",
                     "--parameter", "reward_scale", "--values", "1,2", "--out", str(out)])
        assert code == 0
        assert "sweep over reward_scale" in capsys.readouterr().out
        assert (out / "sweep.csv").exists()


class TestVerify:
    def test_quick_verification_passes(self, capsys):
        assert main(["verify", "--quick"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out
        assert "FAIL" not in out
