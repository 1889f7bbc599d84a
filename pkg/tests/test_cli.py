import json
import math
import subprocess
import sys

import numpy as np
import pytest

from dqc1lab.cli import main
from dqc1lab.export import density_from_json, read_csv


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_trace_columns_and_values(tmp_path):
    assert run(tmp_path, "trace", "--phi-points", "9") == 0
    comments, rows = read_csv(tmp_path / "trace.csv")
    assert list(rows[0]) == ["phi", "re_ideal", "im_ideal"]
    assert float(rows[0]["re_ideal"]) == pytest.approx(1.0, abs=1e-12)
    assert abs(float(rows[0]["im_ideal"])) < 1e-12
    quarter = rows[1]
    assert float(quarter["phi"]) == pytest.approx(math.pi / 4)
    assert abs(float(quarter["re_ideal"])) < 1e-12 and abs(float(quarter["im_ideal"])) < 1e-12
    assert any(c.startswith("# tool: dqc1lab") for c in comments)
    assert any(c.startswith("# seed: 0") for c in comments)


def test_noisy_trace_adds_columns(tmp_path):
    assert run(tmp_path, "trace", "--phi-points", "3", "--noise", "--format", "csv") == 0
    comments, rows = read_csv(tmp_path / "trace.csv")
    assert list(rows[0]) == ["phi", "re_ideal", "im_ideal", "re_noisy", "im_noisy"]
    assert all(math.isfinite(float(r["re_noisy"])) for r in rows)
    config = json.loads(next(c for c in comments if c.startswith("# config:"))[len("# config: "):])
    assert config["noise_params"]["gate_durations"]["hadamard"] == 1.0
    assert not (tmp_path / "trace.json").exists()


def test_sweep_outputs(tmp_path, capsys):
    assert run(tmp_path, "sweep", "--phi-points", "5") == 0
    assert "max(discord - delta_C)" in capsys.readouterr().out
    _, rows = read_csv(tmp_path / "sweep.csv")
    assert list(rows[0]) == ["phi", "delta_C", "discord", "discord_converged", "joint_fidelity",
                             "trace_re", "trace_im"]
    at_pi = rows[2]
    assert float(at_pi["delta_C"]) == pytest.approx(1.0, abs=1e-9)
    assert float(at_pi["discord"]) <= 1e-4
    doc = json.loads((tmp_path / "sweep.json").read_text())
    assert doc["metadata"]["summary"]["max_discord_minus_delta_C"] <= 1e-6
    rho = density_from_json(doc["records"][1]["state"])
    assert rho.shape == (16, 16) and np.trace(rho).real == pytest.approx(1.0)


def test_sweep_full_mode_reports_both_values(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"register_dim": 2, "phi_points": 3}))
    assert main(["sweep", "--config", str(cfg), "--discord-mode", "full", "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "sweep.csv")
    assert "discord_fock_fixed" in rows[0] and "mode_gap" in rows[0]
    doc = json.loads((tmp_path / "sweep.json").read_text())
    assert doc["metadata"]["summary"]["mode_disagreement"] is False


def test_prep_outputs(tmp_path):
    assert run(tmp_path, "prep", "--runs", "2000", "--seed", "4") == 0
    doc = json.loads((tmp_path / "prep.json").read_text())
    assert doc["ideal_fidelity"] == pytest.approx(1.0, abs=1e-10)
    assert len(doc["leaf_probabilities"]) == 8
    assert sum(doc["leaf_probabilities"].values()) == pytest.approx(1.0, abs=1e-10)
    assert sum(doc["sampled_counts"].values()) == 2000
    assert doc["chi2_p_value"] > 1e-3
    _, rows = read_csv(tmp_path / "prep_branches.csv")
    assert len(rows) == 8


def test_prep_phase_model_flag(tmp_path):
    assert run(tmp_path, "prep", "--runs", "100", "--phase-model", "--format", "json") == 0
    assert json.loads((tmp_path / "prep.json").read_text())["ideal_fidelity"] < 0.99
    assert run(tmp_path, "prep", "--runs", "100", "--phase-model", "--compensate") == 0
    assert json.loads((tmp_path / "prep.json").read_text())["ideal_fidelity"] == pytest.approx(1.0)


def test_tomo_exact_mode(tmp_path):
    assert run(tmp_path, "tomo", "--shots", "0", "--phi", "1.0") == 0
    doc = json.loads((tmp_path / "tomo.json").read_text())
    assert doc["fidelity_vs_true"] >= 0.9999
    assert "bootstrap_std" not in doc
    assert doc["metadata"]["config"]["seed"] == 0
    assert len(doc["metadata"]["beta_grid"]) == 81


def test_tomo_shots_emit_error_bars(tmp_path):
    assert run(tmp_path, "tomo", "--shots", "3000", "--bootstrap", "3", "--seed", "2") == 0
    doc = json.loads((tmp_path / "tomo.json").read_text())
    assert doc["fidelity_vs_true"] >= 0.9
    assert set(doc["bootstrap_std"]) == {"delta_C", "discord"}
    _, rows = read_csv(tmp_path / "tomo_data.csv")
    assert len(rows) == 4 * 81


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"phi_points": 3, "seed": 9, "out": str(tmp_path / "elsewhere")}))
    assert main(["trace", "--config", str(cfg), "--phi-points", "4"]) == 0
    comments, rows = read_csv(tmp_path / "elsewhere" / "trace.csv")
    assert len(rows) == 4
    assert "# seed: 9" in comments


@pytest.mark.parametrize("payload", ['{"phi_points": 1}', '{"shots": -2}', '{"nonsense": 1}',
                                     '[1, 2]', '{"noise_params": {"T1": -3}}', "{not json"])
def test_config_errors_exit_2(tmp_path, payload, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(payload)
    assert main(["trace", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_flag_exits_2(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["sweep", "--discord-mode", "greedy"])
    assert info.value.code == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    cfg = tmp_path / "unstable.json"
    cfg.write_text(json.dumps({"noise": True, "noise_params": {"T1": 0.01, "dt": 0.5}}))
    assert main(["trace", "--config", str(cfg), "--phi-points", "2", "--out", str(tmp_path)]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "dqc1lab", "trace", "--phi-points", "2",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0
    assert (tmp_path / "trace.csv").read_bytes().endswith(b"\n")
    assert b"\r\n" not in (tmp_path / "trace.csv").read_bytes()


def test_no_noise_flag_beats_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"noise": True}))
    assert main(["trace", "--config", str(cfg), "--no-noise", "--phi-points", "2", "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "trace.csv")
    assert "re_noisy" not in rows[0]
