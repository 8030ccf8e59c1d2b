import json
import os

import pytest

from monospde.cli import main

from helpers import config_path


def variant(tmp_path, base, *replacements):
    text = open(config_path(base)).read()
    for old, new in replacements:
        assert old in text
        text = text.replace(old, new)
    p = tmp_path / f"{base}_variant.toml"
    p.write_text(text)
    return str(p)


def test_validate_passes_on_porous(capsys):
    assert main(["validate", "--config", config_path("porous_dirichlet")]) == 0
    out = capsys.readouterr().out
    for label in ("(A1:B) PASS", "(A1.3:coercivity) PASS", "(A2:L) PASS", "(H6:lower) PASS", "(H7) PASS",
                  "(A3/A4) PASS", "(A~) holds"):
        assert label in out


def test_validate_names_failing_summability(tmp_path, capsys):
    cfg = variant(tmp_path, "porous_dirichlet", ("mu_power = 2.0", "mu_power = 1.0"))
    assert main(["validate", "--config", cfg]) == 1
    out = capsys.readouterr().out
    assert "(H7) FAIL" in out


def test_validate_flags_arctan_on_wide_range(tmp_path, capsys):
    cfg = variant(tmp_path, "porous_dirichlet", ('nonlinearity = "tanh"', 'nonlinearity = "arctan"'),
                  ("[verify]", "[validation]\nstate_range = [-1e6, 1e6]\n\n[verify]"))
    assert main(["validate", "--config", cfg]) == 1
    assert "(H6:lower) FAIL" in capsys.readouterr().out


def test_robin_noise_blocks_pontryagin_request(tmp_path, capsys):
    cfg = variant(tmp_path, "porous_robin", ("pontryagin = false", "pontryagin = true"))
    assert main(["validate", "--config", cfg]) == 3
    assert "(A~)" in capsys.readouterr().err


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = variant(tmp_path, "lq", ("n_cells = 8", "n_cells = 2"))
    assert main(["validate", "--config", cfg]) == 2
    assert main(["validate", "--config", str(tmp_path / "missing.toml")]) == 2


def test_solve_is_reproducible(tmp_path, capsys):
    cfg = config_path("porous_dirichlet")
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert main(["solve", "--config", cfg, "--out", str(o), "--samples", "8"]) == 0
    for name in ("state.csv", "adjoint_p.csv", "paths.npz", "summary.json", "MANIFEST"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    manifest = (outs[0] / "MANIFEST").read_text()
    assert "config_hash:" in manifest and "state.csv sha256=" in manifest
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "c"), "--samples", "8", "--seed", "77"]) == 0
    assert (tmp_path / "c" / "state.csv").read_bytes() != (outs[0] / "state.csv").read_bytes()


def test_optimize_reports_stationarity(tmp_path, capsys):
    out = tmp_path / "opt"
    assert main(["optimize", "--config", config_path("lq"), "--out", str(out), "--samples", "16"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] and summary["stationarity_max"] <= 1e-6
    header = (out / "history.csv").read_text().splitlines()[0]
    assert header == "iter,cost,grad_norm,stationarity,step_length"
    assert os.path.exists(out / "control_boundary.csv")


@pytest.mark.slow
def test_verify_default_suites(tmp_path, capsys):
    out = tmp_path / "ver"
    assert main(["verify", "--config", config_path("lq"), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "FAIL" not in text and "[optimality] pontryagin: PASS" in text
    report = json.loads((out / "report_optimality.json").read_text())
    assert report["passed"] and report["schema_version"] == 1
