import json
import subprocess
import sys

import numpy as np
import pytest

from prefopt.cli import main


@pytest.fixture()
def config_file(tmp_path):
    config = {
        "objective": "forrester",
        "acquisition": "mpes",
        "acquisition_config": {
            "query_size": 2,
            "k": 1,
            "mc_samples": 200,
            "candidate_queries": 80,
        },
        "fit_config": {"steps": 120, "mc_samples_per_step": 24},
        "oracle_config": {"delta_true": 0.0, "k": 1, "query_size": 2},
        "initial_observations": 3,
        "iterations": 1,
        "repetitions": 1,
        "base_seed": 5,
        "output_dir": str(tmp_path / "out"),
        "pool_size": 40,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path, tmp_path


def test_run_and_replay(config_file, capsys):
    path, tmp_path = config_file
    assert main(["run", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "completed 1/1" in out
    assert (tmp_path / "out" / "regrets.csv").exists()
    assert (tmp_path / "out" / "regret_curve.png").exists()

    assert main(["replay", "--dir", str(tmp_path / "out")]) == 0
    assert "replay ok" in capsys.readouterr().out


def test_replay_flags_tampering(config_file, capsys):
    path, tmp_path = config_file
    main(["run", "--config", str(path)])
    capsys.readouterr()
    params = tmp_path / "out" / "run_000" / "params.jsonl"
    lines = params.read_text().splitlines()
    record = json.loads(lines[0])
    record["log_likelihood_at_mean"] -= 1.0
    lines[0] = json.dumps(record)
    params.write_text("\n".join(lines) + "\n")
    assert main(["replay", "--dir", str(tmp_path / "out")]) == 1
    assert "FAILED" in capsys.readouterr().out


def test_score_pair(config_file, capsys):
    path, _ = config_file
    assert main(["score", "--config", str(path), "--pair", "0", "20"]) == 0
    value = float(capsys.readouterr().out.strip())
    assert np.isfinite(value)
    assert value > -0.01


def test_score_grid(config_file, tmp_path, capsys):
    path, _ = config_file
    grid_png = tmp_path / "grid.png"
    # a 40-point pool has 780 pairs; keep the run short but real
    assert main(["score", "--config", str(path), "--grid", str(grid_png)]) == 0
    assert grid_png.exists()
    grid = np.loadtxt(grid_png.with_suffix(".csv"), delimiter=",")
    assert grid.shape == (40, 40)
    assert np.allclose(grid, grid.T)


def test_seed_env_override(config_file, monkeypatch, capsys):
    path, tmp_path = config_file
    monkeypatch.setenv("PREFOPT_SEED", "99")
    main(["run", "--config", str(path)])
    out = capsys.readouterr().out
    assert "seed 99" in out


def test_score_requires_pair_or_grid(config_file):
    path, _ = config_file
    with pytest.raises(SystemExit):
        main(["score", "--config", str(path)])


def test_console_entry_point():
    result = subprocess.run(
        [sys.executable, "-m", "prefopt.cli", "--help"],
        capture_output=True,
        text=True,
        check=True,
    )
    assert "run" in result.stdout and "serve" in result.stdout
