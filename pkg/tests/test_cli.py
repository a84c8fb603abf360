import io
import json
import math

import numpy as np
import pytest

from fluid_exit.cli import dumps, main
from fluid_exit.model import model_to_dict
from fluid_exit.wh_factor import WienerHopfFactors, residual
from helpers import KILLED, V2, conservative_model, killed_model, switching_model

SQRT3 = math.sqrt(3.0)


@pytest.fixture
def models(tmp_path):
    out = {}
    for name, m in [("killed", killed_model()), ("conservative", conservative_model()),
                    ("switching", switching_model())]:
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(model_to_dict(m)))
        out[name] = str(p)
    bad = tmp_path / "zero.json"
    bad.write_text(json.dumps({"states": ["u", "d"], "velocities": [1, 0],
                               "generator": {"type": "constant", "matrix": KILLED.tolist()}}))
    out["zero"] = str(bad)
    return out


def run(*argv):
    buf = io.StringIO()
    code = main(list(argv), out=buf)
    text = buf.getvalue()
    return code, text


def run_json(*argv):
    code, text = run(*argv)
    return code, json.loads(text)


def test_validate(models, tmp_path):
    code, out = run_json("validate", "--model", models["killed"])
    assert code == 0 and out["killingFloor"] == 1.0 and out["plusStates"] == ["u"]
    code, out = run_json("validate", "--model", models["zero"])
    assert code == 2 and out["error"] == "ZeroVelocity" and "'d'" in out["message"]
    code, _ = run_json("validate", "--model", str(tmp_path / "missing.json"))
    assert code == 1


def test_factorize(models):
    code, out = run_json("factorize", "--model", models["killed"])
    assert code == 0 and out["Jplus"][0][0] == pytest.approx(0.2679491924311227, abs=1e-15)
    F = WienerHopfFactors.from_dict(out)
    assert abs(residual(F, KILLED, V2) - out["residualNorm"]) <= 1e-12
    code, out = run_json("factorize", "--model", models["conservative"])
    assert code == 0 and out["Jplus"][0][0] == pytest.approx(1.0, abs=1e-8)
    code, out = run_json("factorize", "--model", models["switching"])
    assert code == 2 and out["message"] == "analytic path requires constant schedule"
    code, out = run_json("factorize", "--model", models["conservative"], "--solver", "fixed_point")
    assert code == 3 and out["error"] == "NoConvergence"


def test_exit(models):
    code, out = run_json("exit", "--model", models["killed"], "--lminus", "0.5", "--lplus", "0",
                         "--decay", "0.5", "--time", "2", "--fplus", '{"u": 3}', "--state", "u")
    assert code == 0 and out["xiPlus"] == pytest.approx(3 * math.exp(-1.0), abs=1e-15)
    code, r = run_json("exit", "--model", models["killed"], "--lminus", "0.5", "--lplus", "0.5")
    code, n = run_json("exit", "--model", models["killed"], "--lminus", "0.5", "--lplus", "0.5",
                       "--method", "neumann")
    assert max(abs(a - b) for a, b in zip(r["joint"], n["joint"])) <= n["truncationBound"]
    code, out = run_json("exit", "--model", models["conservative"], "--lminus", "0.5", "--lplus", "0.5")
    assert code == 3
    code, out = run_json("exit", "--model", models["killed"], "--lminus", "0.5", "--lplus", "0.5",
                         "--fplus", "[1, 2]")
    assert code == 3


def test_exit_matches_simulate(models):
    _, exact = run_json("exit", "--model", models["killed"], "--lminus", "0.5", "--lplus", "0.5",
                        "--state", "u")
    code, est = run_json("simulate", "--model", models["killed"], "--lminus", "0.5", "--lplus", "0.5",
                         "--state", "u", "-N", "100000", "--seed", "11")
    assert code == 0 and abs(est["mean"] - exact["joint"]) <= 3 * est["stderr"]


def test_simulate(models, tmp_path):
    args = ("simulate", "--model", models["killed"], "--query", "up", "--lplus", "1",
            "--state", "u", "-N", "100000", "--seed", "5")
    code, a = run(*args)
    _, b = run(*args)
    assert code == 0 and a == b
    est = json.loads(a)
    assert abs(est["mean"] - math.exp(-SQRT3)) <= 3 * est["stderr"]
    code, out = run_json("simulate", "--model", models["killed"], "--query", "up", "--lplus", "1",
                         "--state", "u", "-N", "0")
    assert code == 3
    code, out = run_json("simulate", "--model", str(tmp_path / "none.json"), "--state", "u")
    assert code == 1


def test_simulate_csv_and_payload_file(models, tmp_path):
    payoff = tmp_path / "f.json"
    payoff.write_text("[2.0]")
    code, text = run("simulate", "--model", models["killed"], "--lminus", "0.5", "--lplus", "0.5",
                     "--fplus", f"@{payoff}", "--state", "u", "-N", "50", "--format", "csv")
    lines = text.strip().splitlines()
    assert code == 0 and lines[0] == "pathIndex,outcomeKind,exitTime,exitState,payoff"
    assert len(lines) == 51
    for line in lines[1:]:
        idx, kind, t, state, pay = line.split(",")
        if kind == "UpExit":
            assert state == "u" and float(pay) == 2.0 and float(t) >= 0.5
        elif kind == "DownExit":
            assert state == "d" and float(pay) == 1.0
        else:
            assert kind == "Neither" and t == "" and float(pay) == 0.0


def test_pre_exit(models):
    code, out = run_json("pre-exit", "--model", models["killed"], "--horizon", "2", "--lminus", "0.5",
                         "--lplus", "0.5", "--h", "[1, 0]", "--state", "u", "-N", "20000")
    assert code == 0
    assert out["exitByT"]["mean"] + out["noExitByT"] == pytest.approx(out["unconditional"], abs=1e-15)
    code, out = run_json("pre-exit", "--model", models["killed"], "--horizon", "0.5", "--lminus", "1",
                         "--lplus", "1", "--h", "[1, 1]", "--state", "u", "-N", "1000")
    assert out["exitByT"]["mean"] == 0.0
    code, _ = run_json("pre-exit", "--model", models["killed"], "--horizon", "0.5", "--time", "1",
                       "--lminus", "1", "--lplus", "1", "--state", "u")
    assert code == 3


def test_verify(models):
    code, text = run("verify", "--model", models["killed"], "-N", "20000")
    assert code == 0 and text.count("PASS") == 6
    code, text = run("verify", "--model", models["killed"], "-N", "2000", "--corrupt-factors")
    assert code == 4 and "FAIL" in text
    code, out = run_json("verify", "--model", models["switching"], "--decay", "0.5", "--lminus", "0.4",
                         "--lplus", "0.4", "-N", "20000", "--format", "json")
    assert code == 0 and out["passed"] and len(out["checks"]) == 2


def test_dumps_precision():
    x = 0.1 + 0.2
    assert float(dumps(x)) == x and dumps(x) == "0.30000000000000004"
    assert dumps(2.0) == "2.0" and dumps(np.float64(1e-20)) == "9.9999999999999995e-21"
    assert json.loads(dumps({"a": [1.5, None, True], "b": np.arange(2)})) == {"a": [1.5, None, True], "b": [0, 1]}
