"""Command line interface: exit codes, outputs, determinism."""

import json
import os

import pytest

from dispersim import cli


def run_cli(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_rates_writes_outputs(tmp_path, capsys):
    out = str(tmp_path / "r")
    code, stdout, _ = run_cli(["rates", "--preset", "fig1", "--out", out], capsys)
    assert code == 0
    summary = json.loads(stdout)
    assert summary["gamma_at_phi_lo"]["11"] == pytest.approx(1296.0 / 1369.0)
    names = sorted(os.listdir(out))
    assert names == [
        "manifest.json", "phase_space.csv", "rates_vs_delta_r.csv",
        "rates_vs_phi.csv", "resolved.ini", "steady_rates.json",
    ]


def test_missing_config_file_is_io_error(tmp_path, capsys):
    code, _, err = run_cli(
        ["me", "--config", str(tmp_path / "absent.ini")], capsys
    )
    assert code == 4
    assert "error:" in err


def test_invalid_config_value_is_config_error(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[system]\neta = 3.0\n")
    code, _, err = run_cli(["me", "--config", str(path)], capsys)
    assert code == 2
    assert "eta" in err


def test_unknown_key_is_config_error(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[system]\nzeta = 3.0\n")
    code, _, _ = run_cli(["me", "--config", str(path)], capsys)
    assert code == 2


def test_bad_seed_is_config_error(capsys):
    code, _, err = run_cli(["rates", "--preset", "fig1", "--seed", "-1"], capsys)
    assert code == 2
    assert "seed" in err


def test_unknown_preset_rejected_by_parser(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["rates", "--preset", "fig9"])
    assert exc.value.code == 2


def test_quality_failure_exit_code(tmp_path, capsys):
    path = tmp_path / "starved.ini"
    path.write_text(
        "[system]\ng1 = -15.0\ng2 = 15.0\ndelta_qc1 = 150.0\ndelta_qc2 = 150.0\n"
        "[drive]\nshape = constant\neps = 0.5\n"
        "[oracle]\nfock_cutoff = 2\nt_final = 2.0\n"
    )
    out = str(tmp_path / "o")
    code, _, err = run_cli(["oracle-check", "--config", str(path), "--out", out], capsys)
    assert code == 3
    assert "oracle disagreement" in err
    # partial outputs are preserved for diagnosis
    assert os.path.exists(os.path.join(out, "summary.json"))


def test_unreachable_server_is_io_error(capsys):
    code, _, err = run_cli(
        ["rates", "--preset", "fig1", "--server", "http://127.0.0.1:9"], capsys
    )
    assert code == 4
    assert "server" in err


def test_trajectory_reruns_are_byte_identical(tmp_path, capsys):
    cfg = tmp_path / "short.ini"
    cfg.write_text("[run]\nt_final = 0.4\n")
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert run_cli(["trajectory", "--config", str(cfg), "--out", out1], capsys)[0] == 0
    assert run_cli(["trajectory", "--config", str(cfg), "--out", out2], capsys)[0] == 0
    for name in sorted(os.listdir(out1)):
        with open(os.path.join(out1, name), "rb") as f1, \
             open(os.path.join(out2, name), "rb") as f2:
            assert f1.read() == f2.read(), name


def test_resolved_config_echo_reproduces_run(tmp_path, capsys):
    cfg = tmp_path / "short.ini"
    cfg.write_text("[run]\nt_final = 0.4\nmaster_seed = 12\n")
    out1 = str(tmp_path / "a")
    assert run_cli(["trajectory", "--config", str(cfg), "--out", out1], capsys)[0] == 0
    out2 = str(tmp_path / "b")
    resolved = os.path.join(out1, "resolved.ini")
    assert run_cli(["trajectory", "--config", resolved, "--out", out2], capsys)[0] == 0
    for name in sorted(os.listdir(out1)):
        with open(os.path.join(out1, name), "rb") as f1, \
             open(os.path.join(out2, name), "rb") as f2:
            assert f1.read() == f2.read(), name


def test_seed_flag_changes_the_noise(tmp_path, capsys):
    cfg = tmp_path / "short.ini"
    cfg.write_text("[run]\nt_final = 0.4\n")
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    run_cli(["trajectory", "--config", str(cfg), "--out", out1, "--seed", "1"], capsys)
    run_cli(["trajectory", "--config", str(cfg), "--out", out2, "--seed", "2"], capsys)
    a = open(os.path.join(out1, "trajectory.bin"), "rb").read()
    b = open(os.path.join(out2, "trajectory.bin"), "rb").read()
    assert a != b


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
