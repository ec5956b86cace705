import json
from pathlib import Path

import pytest

from stormpg.cli import main
from stormpg.optimizer import read_csv

FIXTURES = Path(__file__).parent / "fixtures"


def write_config(tmp_path, **kw):
    cfg = {
        "algorithm": "storm_s", "mdp_path": "bundled:benchmark", "T": 2, "B": 3, "lambda": 0.01,
        "mode": "practical", "practical": {"k": 2.0, "c": 0.5, "m": 7.0}, "seeds": [0],
    }
    cfg.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_minimal_run(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(write_config(tmp_path)), "--out", str(out)]) == 0
    cols = read_csv(out / "run_seed0.csv")
    assert len(cols["t"]) == 2
    header = (out / "run_seed0.csv").read_text().splitlines()[0].split(",")
    assert header[:10] == ["t", "eta", "beta", "J_exact", "L_lambda_exact", "grad_norm_exact",
                           "u_norm", "err_norm_exact", "max_var_w", "trajectories"]
    agg = json.loads((out / "aggregate.json").read_text())
    assert agg["rows"] == 2 and agg["total_trajectories"] == 6


def test_missing_mdp_path(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"T": 2}))
    assert main(["run", "--config", str(p)]) == 2
    assert "mdp_path" in capsys.readouterr().err


def test_bad_field_exit_code(tmp_path, capsys):
    assert main(["run", "--config", str(write_config(tmp_path, B=0)), "--out", str(tmp_path / "o")]) == 2
    assert "B" in capsys.readouterr().err


def test_relative_mdp_path_and_toml(tmp_path):
    (tmp_path / "m.json").write_text((Path(__file__).parents[1] / "src/stormpg/data/two_state.json").read_text())
    (tmp_path / "cfg.toml").write_text(
        'algorithm = "storm_f"\nmdp_path = "m.json"\nT = 3\nB = 2\nmode = "practical"\nseeds = [1, 2]\n'
        "[practical]\nk = 1.0\nc = 0.5\nm = 7.0\n"
    )
    out = tmp_path / "o"
    assert main(["run", "--config", str(tmp_path / "cfg.toml"), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["aggregate.json", "run_seed1.csv", "run_seed2.csv"]


def test_ten_seeds(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(write_config(tmp_path, seeds=list(range(10)))), "--out", str(out), "--workers", "3"]) == 0
    assert len(list(out.glob("run_seed*.csv"))) == 10
    agg = json.loads((out / "aggregate.json").read_text())
    assert len(agg["columns"]["J_exact"]["median"]) == 2


def test_verify_constants(tmp_path, capsys):
    assert main(["verify", "--suite", "constants", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "verify_constants_small.json").read_text())
    assert report and all(r["holds"] for r in report)
    assert {"check_name", "instance_id", "lhs", "rhs", "holds", "slack", "constituents"} <= set(report[0])


def test_verify_estimators():
    assert main(["verify", "--suite", "estimators"]) == 0


def test_verify_corrupted_mdp(capsys):
    assert main(["verify", "--suite", "estimators", "--mdp", str(FIXTURES / "corrupted_mdp.json")]) == 1
    assert "transition" in capsys.readouterr().err


def test_constants_command(capsys):
    assert main(["constants", "--gamma", "0.9", "--H", "5"]) == 0
    out = capsys.readouterr().out
    assert "L = 8100" in out
    assert main(["constants", "--gamma", "1.0"]) == 2


def test_bad_suite_name():
    with pytest.raises(SystemExit):
        main(["verify", "--suite", "nope"])


def test_verify_all_small(capsys):
    assert main(["verify", "--suite", "all", "--scale", "small"]) == 0
    assert "checks hold" in capsys.readouterr().out
