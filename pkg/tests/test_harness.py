import filecmp
import json

import numpy as np
import pytest

from rwre_lil.environment import preset
from rwre_lil.errors import ConfigError, NotUnitVector, ParseError
from rwre_lil.harness import (
    ExperimentConfig,
    analyze_file,
    config_from_json,
    replica_seeds,
    run_experiment,
    simulate_to_files,
)

E1, E2 = (1.0, 0.0), (0.0, 1.0)


def _cfg(tmp_path, **kw):
    base = dict(
        model=preset("mixture"), ell=E1, u_list=(E1, E2), horizon=2**12 + 200, replicas=6,
        guard=200, master_seed=5, checkpoints=(8, 12), output_dir=str(tmp_path), bootstrap=20,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_degenerate_run(tmp_path):
    cfg = _cfg(tmp_path, replicas=1, horizon=0)
    res = run_experiment(cfg, figures=False)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert res.replicas[0].n_regenerations == 0
    assert any("InsufficientRegenerations" in w for w in man["warnings"])
    assert res.summary is None
    assert (tmp_path / "estimates.json").exists()


def test_outputs_and_contents(tmp_path):
    res = run_experiment(_cfg(tmp_path))
    names = {p.name for p in tmp_path.iterdir()}
    assert {"estimates.json", "manifest.json", "lil_curve.csv", "lil_envelope.csv",
            "lil_curve_u1.csv", "lil_envelope_u1.csv", "lil_curves.png", "error_terms.png"} <= names
    est = json.loads((tmp_path / "estimates.json").read_text())
    assert est["n_blocks"] == res.summary.n_blocks > 0
    assert len(est["c_u_hat"]) == 2
    header = (tmp_path / "lil_curve.csv").read_text().splitlines()[0]
    assert header == "replica,n,statistic,term_main,term2,term3"
    rows = (tmp_path / "lil_curve.csv").read_text().splitlines()[1:]
    assert len(rows) == 6 * 5


def test_two_runs_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(_cfg(a))
    run_experiment(_cfg(b), workers=3)
    for p in a.iterdir():
        if p.name != "manifest.json":
            assert filecmp.cmp(p, b / p.name, shallow=False), p.name


def test_seeds_depend_only_on_index(tmp_path):
    cfg = _cfg(tmp_path)
    assert replica_seeds(cfg, 3) == replica_seeds(_cfg(tmp_path, replicas=50), 3)
    fixed = _cfg(tmp_path, fixed_env=True)
    assert replica_seeds(fixed, 0)[0] == replica_seeds(fixed, 4)[0]
    assert replica_seeds(fixed, 0)[1] != replica_seeds(fixed, 4)[1]


def test_block_cap(tmp_path):
    res = run_experiment(_cfg(tmp_path, max_blocks_per_replica=10), lil=False, write=False)
    assert res.summary.n_blocks == 6 * 10


def test_external_v(tmp_path):
    res = run_experiment(_cfg(tmp_path, v_external=(0.25, 0.0)), lil=False, write=False)
    assert res.summary.v_used == [0.25, 0.0]


@pytest.mark.parametrize(
    "kw",
    [dict(replicas=0), dict(horizon=-1), dict(ell=(1.0, 1.0)), dict(u_list=((1.0,),)),
     dict(checkpoints=(0, 3)), dict(gamma=1.5), dict(guard=-1)],
)
def test_invalid_config(tmp_path, kw):
    with pytest.raises(ConfigError):
        _cfg(tmp_path, **kw).validate()


def test_config_json_round_trip(tmp_path):
    cfg = _cfg(tmp_path)
    assert config_from_json(json.loads(json.dumps(cfg.to_json()))) == cfg
    pre = config_from_json({"preset": "drifted", "ell": [1, 0], "u_list": [[0, 1]], "horizon": 10})
    assert pre.model == preset("drifted")


def test_config_json_missing_field():
    with pytest.raises(ConfigError):
        config_from_json({"preset": "drifted", "horizon": 10})


def _write(path, proj_rows):
    path.write_text("step,x1,x2,proj\n" + "".join(f"{i},{x},{y},{x}\n" for i, (x, y) in enumerate(proj_rows)))
    return path


def test_analyze_hand_traced(tmp_path):
    xs = [0, 1, 0, 1, 2, 3, 4, 5]
    # move along e2 when the projection stays put (never happens here)
    f = _write(tmp_path / "t.csv", [(x, 0) for x in xs])
    rep = analyze_file(f, E1, 3)
    assert rep.times[0] == 4
    assert rep.to_csv().splitlines()[1].startswith("1,4,4,")


def test_analyze_empty(tmp_path):
    f = tmp_path / "empty.csv"
    f.write_text("")
    with pytest.raises(ParseError):
        analyze_file(f, E1, 3)


def test_analyze_non_unit_step(tmp_path):
    f = _write(tmp_path / "bad.csv", [(0, 0), (1, 0), (1, 1), (3, 1)])
    with pytest.raises(ParseError) as exc:
        analyze_file(f, E1, 0)
    assert exc.value.row == 4


def test_analyze_bad_ell(tmp_path):
    f = _write(tmp_path / "t.csv", [(0, 0), (1, 0)])
    with pytest.raises(NotUnitVector):
        analyze_file(f, (1.0, 1.0), 0)


def test_simulate_files_round_trip(tmp_path):
    cfg = _cfg(tmp_path, replicas=2, horizon=500)
    paths = simulate_to_files(cfg)
    assert [p.name for p in paths] == ["trajectory_000.csv", "trajectory_001.csv"]
    rep = analyze_file(paths[0], E1, 50)
    assert np.all(np.diff(rep.times) > 0)
