import json
import subprocess
import sys

import pytest

from layerstokes.cli import RunConfig, build_parser, default_config, main


@pytest.fixture
def cfg_path(tmp_path):
    cfg = default_config()
    cfg["output_dir"] = str(tmp_path / "run")
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def _write(tmp_path, **changes):
    cfg = default_config()
    cfg.update(changes)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    return p


def test_solve_manufactured_single_mode(tmp_path, cfg_path, capsys):
    out = tmp_path / "o"
    assert main(["solve", "--config", str(cfg_path), "--kind", "single_mode_boundary",
                 "--out", str(out)]) == 0
    report = json.loads((out / "residual.json").read_text())
    assert report["solver"] == "boundary_only"
    assert max(report["residual"].values()) < 1e-8
    assert report["error_u"] < 1e-10
    assert json.loads((out / "config.json").read_text()) == json.loads(cfg_path.read_text())
    assert (out / "u.csv").exists() and (out / "theta.csv").exists()


def test_solve_from_field_files(tmp_path, cfg_path):
    data = tmp_path / "data"
    assert main(["manufactured", "--config", str(cfg_path), "--out", str(data)]) == 0
    out = tmp_path / "o"
    args = ["solve", "--config", str(cfg_path), "--out", str(out)]
    for name in "fgh":
        args += [f"--{name}", str(data / f"{name}.csv")]
    assert main(args) == 0
    assert json.loads((out / "residual.json").read_text())["solver"] == "full"


def test_output_dir_defaults_to_config(cfg_path, tmp_path):
    assert main(["manufactured", "--config", str(cfg_path)]) == 0
    assert (tmp_path / "run" / "h.csv").exists()


def test_off_sector_config(tmp_path, capsys):
    p = _write(tmp_path, lambda_re=-3.0, lambda_im=0.1)
    assert main(["solve", "--config", str(p), "--kind", "smooth_full"]) == 2
    assert "off-sector" in capsys.readouterr().err


@pytest.mark.parametrize("mutate,msg", [
    (lambda c: c.update(extra=1), "unknown config keys"),
    (lambda c: c.pop("mu"), "missing config keys"),
    (lambda c: c.update(n_tan=[15]), "even"),
    (lambda c: c.update(q=1.0), "q must"),
])
def test_invalid_config(tmp_path, capsys, mutate, msg):
    cfg = default_config()
    mutate(cfg)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert main(["solve", "--config", str(p), "--kind", "smooth_full"]) == 2
    assert msg in capsys.readouterr().err


def test_missing_files(tmp_path, cfg_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.json"), "--kind", "smooth_full"]) == 2
    assert main(["solve", "--config", str(cfg_path), "--h", str(tmp_path / "nope.csv")]) == 2
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["solve", "--config", str(p), "--kind", "smooth_full"]) == 2


def test_field_grid_mismatch(tmp_path, cfg_path, capsys):
    data = tmp_path / "data"
    main(["manufactured", "--config", str(cfg_path), "--out", str(data)])
    other = _write(tmp_path, n_z=33)
    assert main(["solve", "--config", str(other), "--h", str(data / "h.csv")]) == 2
    assert "does not match" in capsys.readouterr().err


@pytest.mark.parametrize("sub,extra", [
    ("degeneracy", []),
    ("fa-pos", ["--nl", "50", "--na", "20"]),
    ("scan-det", ["--nl", "10", "--na", "10", "--args", "3"]),
    ("scan-deriv", ["--nl", "6", "--na", "6", "--args", "3"]),
    ("bequiv", ["--nl", "10", "--na", "10"]),
    ("crosscheck", ["--samples", "500"]),
    ("rbound", ["--m", "2", "--trials", "5"]),
])
def test_verify_subcommands_pass(tmp_path, capsys, sub, extra):
    out = tmp_path / sub
    assert main(["verify", sub, "--out", str(out)] + extra) == 0
    assert "PASS" in capsys.readouterr().out
    assert any(out.glob("*.csv")) or any(out.glob("*.json"))


def test_verify_predicate_failure_reports_sample(tmp_path, capsys):
    # the A^10 law is a small-A statement; on [1, 10] the fitted slope is far from 10
    assert main(["verify", "degeneracy", "--amin", "1", "--amax", "10",
                 "--out", str(tmp_path)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_verify_rejects_bad_flags(tmp_path, capsys):
    assert main(["verify", "fa-pos", "--amin", "0", "--out", str(tmp_path)]) == 2
    assert main(["verify", "scan-det", "--nl", "0", "--out", str(tmp_path)]) == 2


def test_same_seed_gives_identical_csv(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["verify", "rbound", "--m", "2", "--trials", "4", "--seed", "5",
                     "--out", str(out)]) == 0
    assert (a / "rbound.csv").read_bytes() == (b / "rbound.csv").read_bytes()
    c = tmp_path / "c"
    main(["verify", "crosscheck", "--samples", "200", "--seed", "1", "--out", str(c)])
    d = tmp_path / "d"
    main(["verify", "crosscheck", "--samples", "200", "--seed", "1", "--out", str(d)])
    assert (c / "crosscheck.json").read_bytes() == (d / "crosscheck.json").read_bytes()


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("LAYERSTOKES_THREADS", "3")
    assert main(["verify", "scan-det", "--nl", "5", "--na", "5", "--args", "3",
                 "--out", str(tmp_path)]) == 0
    monkeypatch.setenv("LAYERSTOKES_THREADS", "many")
    assert main(["verify", "scan-det", "--out", str(tmp_path)]) == 2


def test_help_lists_defaults():
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    text = sub["verify"].format_help()
    for flag in ("--lmin", "--lmax", "--nl", "--amin", "--amax", "--na", "--args", "--threads",
                 "--seed", "--trials", "--samples"):
        assert flag in text
    assert "default" in text and "LAYERSTOKES_THREADS" in text
    assert "default" in sub["solve"].format_help()


def test_run_config_round_trip():
    cfg = RunConfig.from_dict(default_config())
    assert cfg.grid().n_z == 65 and cfg.parameter().lam == 1 + 2j


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "layerstokes", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "verify" in r.stdout
