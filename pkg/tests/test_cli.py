import json
import subprocess
import sys

import numpy as np
import pytest

from ctmc_lumper.cli import main
from ctmc_lumper.coarse import CoarseGrainingMap
from ctmc_lumper.chain import StateSpace


@pytest.fixture
def files(tmp_path):
    gen = tmp_path / "gen.json"
    gen.write_text(json.dumps({"states": ["a", "b", "c", "d"],
                               "rates": [[-2, 1, 1, 0], [1, -1, 0, 0], [0, 0, -1, 1], [2, 0, 1, -3]]}))
    mu = tmp_path / "mu.json"
    mu.write_text(json.dumps({"states": ["a", "b", "c", "d"], "mass": [1, 0, 0, 0]}))
    xi = CoarseGrainingMap(StateSpace(("a", "b", "c", "d")), StateSpace(("u", "v")),
                           {"a": "u", "b": "u", "c": "v", "d": "v"})
    mp = tmp_path / "map.json"
    mp.write_text(json.dumps(xi.to_dict()))
    return tmp_path, gen, mu, mp


def test_stationary(files, capsys):
    _, gen, _, _ = files
    assert main(["stationary", str(gen)]) == 0
    out = json.loads(capsys.readouterr().out)
    m = np.array(out["mass"])
    A = np.array([[-2, 1, 1, 0], [1, -1, 0, 0], [0, 0, -1, 1], [2, 0, 1, -3]], dtype=float)
    assert np.allclose(A.T @ m, 0, atol=1e-12) and m.sum() == pytest.approx(1.0)


def test_effective(files, capsys):
    _, gen, _, mp = files
    assert main(["effective", str(gen), str(mp)]) == 0
    out = json.loads(capsys.readouterr().out)
    N = np.array(out["rates"])
    pi = np.array(out["stationary"])
    assert np.allclose(N.T @ pi, 0, atol=1e-10)


def test_solve_to_file(files):
    tmp, gen, mu, _ = files
    out = tmp / "traj.csv"
    assert main(["solve", str(gen), str(mu), "--T", "1", "--grid", "uniform", "--steps", "10",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,a,b,c,d" and len(lines) == 12


def test_config_errors(files, capsys):
    tmp, gen, mu, _ = files
    with pytest.raises(SystemExit) as exc:
        main(["solve", str(gen), str(mu)])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["study", "--e", "0.1"])
    assert exc.value.code == 2
    assert main(["study", "--eps", "0.01", "0.1"]) == 2
    assert main(["stationary", str(tmp / "missing.json")]) == 2
    bad = tmp / "bad.json"
    bad.write_text("{not json")
    assert main(["stationary", str(bad)]) == 2


def test_numerical_failure(tmp_path):
    gen = tmp_path / "red.json"
    gen.write_text(json.dumps({"states": ["a", "b", "c"], "rates": [[-1, 1, 0], [1, -1, 0], [0, 0, 0]]}))
    assert main(["stationary", str(gen)]) == 3


def test_study_and_verify(tmp_path, capsys):
    out = tmp_path / "study"
    rc = main(["study", "--scenario", "S1", "--n", "10", "--eps", "1", "0.1", "--T", "5",
               "--steps", "500", "--skip-cg-ode", "--strict", "--out", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "slope=" in text and text.count("verdict=ok") == 2
    assert main(["verify-bounds", str(out), "--strict"]) == 0
    p = next((out / "bounds").glob("*.json"))
    data = json.loads(p.read_text())
    data["lhs"][3] = 10.0
    p.write_text(json.dumps(data))
    assert main(["verify-bounds", str(out)]) == 0
    assert main(["verify-bounds", str(out), "--strict"]) == 4


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ctmc_lumper.cli", "study", "--eps", "1", "--T", "2",
                        "--steps", "100", "--skip-cg-ode"],
                       capture_output=True, text=True, env={"CTMC_LUMPER_THREADS": "1", "PATH": ""})
    assert r.returncode == 0, r.stderr
    assert "slope=undefined" in r.stdout
