import json
import os
import subprocess
import sys

import pytest

from lamsurf import cli, geometry, shooting

SMALL = ["--grid-count", "16", "--near-plane", "0", "--lo", "1.1", "--hi", "1.9", "--jobs", "1"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def snapshot(folder):
    return {name: open(os.path.join(folder, name), "rb").read() for name in sorted(os.listdir(folder))}


# ---------------------------------------------------------------------------
# usage errors
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    ["solve", "--n", "1", "--lambda", "-1"],
    ["solve", "--n", "2"],
    ["solve", "--n", "2", "--lambda", "-1", "--bogus"],
    ["trace", "--n", "2", "--lambda", "-1"],
    ["trace", "--n", "2", "--lambda", "-1", "--x0", "1.2", "--offset", "0.2"],
    ["verify", "--n", "2", "--lambda", "-0.5", "--epsilon", "0.7"],
    ["solve", "--n", "2", "--lambda", "-1", "--rel-tol", "-1"],
    ["mesh", "--n", "3", "--lambda", "-0.5"],
])
def test_usage_errors_exit_64(capsys, tmp_path, argv):
    code, _, err = run(capsys, *argv, "--out", str(tmp_path))
    assert code == cli.EXIT_USAGE
    assert err


def test_config_precedence_and_unknown_keys(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nn = 2\nlambda = -0.5\ngrid_count = 16\nrel_tol = 1e-9\n")
    args = cli.build_parser().parse_args(["scan", "--config", str(cfg), "--lambda", "-1",
                                          "--out", str(tmp_path)])
    rc = cli._resolve(args)
    assert rc.params.lam == -1.0          # flag beats config
    assert rc.grid_count == 16             # config beats default
    assert rc.integ.rel_tol == 1e-9
    assert rc.integ.max_step == 0.05       # default
    cfg.write_text("n = 2\nlamda = -1\n")
    with pytest.raises(cli.UsageError):
        cli.read_config(cfg)


def test_unknown_config_key_exits_64(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n = 2\nlambda = -1\nspeed = 11\n")
    code, _, err = run(capsys, "scan", "--config", str(cfg), "--out", str(tmp_path))
    assert code == cli.EXIT_USAGE and "speed" in err


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def test_trace(capsys, tmp_path):
    code, out, _ = run(capsys, "trace", "--n", "2", "--lambda", "-1", "--x0", "1.05",
                       "--out", str(tmp_path))
    assert code == cli.EXIT_OK
    doc = json.loads(out)
    assert doc["quadrant"] == "First" and doc["terminal"] == "TurningPoint"
    assert doc["x_star"] == pytest.approx(0.2335668833, abs=1e-8)
    assert sorted(os.listdir(tmp_path)) == ["trace.csv", "trace.json"]


def test_scan_without_sign_change_exits_2(capsys, tmp_path):
    code, out, _ = run(capsys, "scan", "--n", "2", "--lambda", "-1", "--lo", "1.5", "--hi", "1.9",
                       "--grid-count", "6", "--near-plane", "0", "--out", str(tmp_path))
    assert code == cli.EXIT_NO_ROOT
    assert json.loads(out)["brackets"] == []


def test_solve_writes_certified_profile(capsys, tmp_path):
    code, out, err = run(capsys, "solve", "--n", "2", "--lambda", "-1", *SMALL, "--out", str(tmp_path))
    assert code == cli.EXIT_OK
    assert "outside theorem range" in err
    summary = json.loads(out)
    assert summary["outside_theorem_range"] is True
    (root,) = summary["roots"]
    assert 1.29 <= root["x_hat"] <= 1.33
    assert root["certified"] and root["convex"] and root["simple"]
    assert root["max_residual"] <= 1e-8
    assert sorted(os.listdir(tmp_path)) == ["profile_0.csv", "profile_0.json", "scan.jsonl",
                                           "summary.json"]
    assert json.load(open(tmp_path / "summary.json")) == summary


def test_solve_reports_failed_certificate(capsys, tmp_path, monkeypatch):
    real = geometry.certify

    def sour(prof, cfg=None):
        cert = real(prof, cfg)
        cert.convex = False
        return cert

    monkeypatch.setattr(geometry, "certify", sour)
    code, _, _ = run(capsys, "solve", "--n", "2", "--lambda", "-1", *SMALL, "--out", str(tmp_path),
                     "--format", "json")
    assert code == cli.EXIT_CERT_FAILED
    assert sorted(os.listdir(tmp_path)) == ["profile_0.json", "scan.jsonl", "summary.json"]


def test_solve_without_root_exits_2(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "--n", "2", "--lambda", "-1", "--lo", "1.5", "--hi", "1.9",
                       "--grid-count", "6", "--near-plane", "0", "--out", str(tmp_path))
    assert code == cli.EXIT_NO_ROOT
    assert json.loads(out)["roots"] == []


def test_linearize(capsys, tmp_path):
    code, out, _ = run(capsys, "linearize", "--n", "2", "--lambda", "-0.8", "--fd-epsilon", "1e-5",
                       "--out", str(tmp_path))
    assert code == cli.EXIT_OK
    lines = out.splitlines()
    assert "w(pi/2) < 0: PASS" in lines and "w(sqrt(2n)) < 0: PASS" in lines
    assert not any(l.endswith("FAIL") for l in lines)
    devs = [float(l.split("=")[1]) for l in lines if "finite-difference" in l]
    assert len(devs) == 2 and max(devs) <= 1e-6
    assert sorted(os.listdir(tmp_path)) == ["linearization_plane.csv", "linearization_sphere.csv"]


def test_verify(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--n", "3", "--lambda", "-0.5", "--epsilon", "1e-3",
                       "--out", str(tmp_path))
    assert code == cli.EXIT_OK
    doc = json.loads(out)
    assert doc["lemma31_ok"] and doc["lemma32_ok"] and doc["lemma33_ok"]
    assert "reported only" in doc["prop31_note"]


def test_mesh_from_profile(capsys, tmp_path):
    run(capsys, "solve", "--n", "2", "--lambda", "-1", *SMALL, "--out", str(tmp_path))
    code, out, _ = run(capsys, "mesh", "--n", "2", "--lambda", "-1", "--profile",
                       str(tmp_path / "profile_0.json"), "--resolution", "12", "--out", str(tmp_path))
    assert code == cli.EXIT_OK
    doc = json.loads(out)
    assert doc["euler_characteristic"] == 2
    assert os.path.exists(tmp_path / "surface.obj")


# ---------------------------------------------------------------------------
# resume and determinism
# ---------------------------------------------------------------------------

def test_scan_resume_reuses_stored_shots(capsys, tmp_path, monkeypatch):
    argv = ["scan", "--n", "2", "--lambda", "-1", *SMALL, "--out", str(tmp_path)]
    run(capsys, *argv)
    store = tmp_path / "scan.jsonl"
    full = store.read_bytes()
    lines = full.decode().splitlines()
    store.write_text("\n".join(lines[:10]) + "\n")
    calls = []
    real = shooting._shoot_any
    monkeypatch.setattr(shooting, "_shoot_any", lambda a: calls.append(a) or real(a))
    code, _, _ = run(capsys, *argv, "--resume")
    assert code == cli.EXIT_OK
    assert len(calls) == 6
    assert store.read_bytes() == full


def test_solve_is_byte_deterministic(capsys, tmp_path):
    argv = ["solve", "--n", "2", "--lambda", "-1", *SMALL, "--out", str(tmp_path)]
    _, out1, _ = run(capsys, *argv)
    first = snapshot(tmp_path)
    _, out2, _ = run(capsys, *argv)
    assert snapshot(tmp_path) == first
    assert out1 == out2


def test_console_entry_point(tmp_path):
    cmd = [sys.executable, "-m", "lamsurf.cli", "trace", "--n", "2", "--lambda", "-1",
           "--offset", "0.31", "--out", str(tmp_path), "--format", "csv"]
    res = subprocess.run(cmd, capture_output=True, text=True, check=False)
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["quadrant"] == "Second"
    bad = subprocess.run(cmd[:3] + ["solve", "--n", "1", "--lambda", "0"], capture_output=True)
    assert bad.returncode == 64
