import json

from rwre_lil import cli


def test_estimate_and_lil(tmp_path, capsys):
    args = ["--preset", "drifted", "--replicas", "3", "--horizon", "3000", "--guard", "200",
            "--checkpoints", "6:11", "--u", "1,0", "--u", "0,1", "--bootstrap", "10",
            "--output-dir", str(tmp_path)]
    assert cli.main(["estimate", *args]) == 0
    est = json.loads((tmp_path / "estimates.json").read_text())
    assert est["replicas"] == 3
    assert cli.main(["lil", "--no-figures", *args]) == 0
    assert (tmp_path / "lil_envelope_u1.csv").exists()
    assert not (tmp_path / "lil_curves.png").exists()
    assert "v_hat" in capsys.readouterr().out


def test_config_file_with_overrides(tmp_path):
    cfg = {"preset": "perturbed", "ell": [1, 0], "u_list": [[1, 0]], "horizon": 2000,
           "replicas": 2, "guard": 100, "bootstrap": 0}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert cli.main(["estimate", "--config", str(path), "--replicas", "3", "--output-dir", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["replicas"] == 3
    assert man["config"]["model"]["variant"]["type"] == "EllipticPerturbation"


def test_config_error_exit_code(tmp_path, capsys):
    assert cli.main(["estimate", "--ell", "1,1", "--output-dir", str(tmp_path)]) == 1
    assert "unit vector" in capsys.readouterr().err
    missing = tmp_path / "nope.json"
    assert cli.main(["estimate", "--config", str(missing)]) == 1


def test_simulate_then_analyze(tmp_path, capsys):
    assert cli.main(["simulate", "--replicas", "1", "--horizon", "400", "--output-dir", str(tmp_path)]) == 0
    traj = tmp_path / "trajectory_000.csv"
    out = tmp_path / "regen.csv"
    assert cli.main(["analyze", str(traj), "--guard", "20", "-o", str(out)]) == 0
    assert out.read_text().startswith("k,tau_k,delta_tau,dx1,dx2,block_sup")


def test_analyze_parse_error(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text("step,x1,x2,proj\n0,0,0,0\n1,2,0,2\n")
    assert cli.main(["analyze", str(f)]) == 1
    assert "row 2" in capsys.readouterr().err


def test_verify_subset(capsys):
    assert cli.main(["verify", "--only", "2,9"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]  2" in out and "[PASS]  9" in out and "2/2" in out


def test_verify_failure_exit_code(monkeypatch, capsys):
    from rwre_lil import acceptance

    def always_fails():
        return acceptance.CriterionResult(99, "broken", False, "forced")

    monkeypatch.setattr(acceptance, "CRITERIA", {99: always_fails})
    assert cli.main(["verify"]) == 2
    assert "[FAIL] 99" in capsys.readouterr().out
