import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from noisectl import __version__
from noisectl.cli import main
from noisectl.control import lambda_adaptive
from noisectl.sampler import read_samples_binary


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def files(tmp_path):
    def write(name, doc):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return str(p)
    return {
        "ou": write("ou.json", {"kind": "ou", "T": 3.0}),
        "linear": write("linear.json", {"kind": "linear", "T": 1.0}),
        "gauss": write("gauss.json", {"kind": "gaussian", "mean": [0.0, 0.0], "cov": [1.0, 1.0]}),
        "gmm": write("gmm.json", {"kind": "gmm", "weights": [0.5, 0.5], "means": [[-1.0], [1.0]], "nu": 0.5}),
        "tmp": tmp_path,
    }


def test_version():
    code, out, _ = run(["--version"])
    assert code == 0 and out.strip() == f"noisectl {__version__} (format 1)"


def test_usage_errors():
    assert run([])[0] == 64
    assert run(["schedule", "nope"])[0] == 64
    assert run(["lambda", "--K", "-1", "--n", "10"])[0] == 64
    assert run(["lambda", "--K", "1", "--n", "0"])[0] == 64
    assert run(["simulate", "--schedule", "x", "--target", "y", "--n", "3", "--jobs", "0"])[0] == 64


def test_lambda_matches_library():
    code, out, _ = run(["lambda", "--K", "37.323", "--n", "100"])
    doc = json.loads(out)
    assert code == 0
    assert doc["lambda"] == lambda_adaptive(37.323, 100, 1.0).lam
    assert doc["E"] == pytest.approx(doc["lambda"] / 2)


def test_schedule_show_formats(files):
    code, out, _ = run(["schedule", "show", "--config", files["ou"], "--grid", "4"])
    doc = json.loads(out)
    assert code == 0 and len(doc["rows"]) == 4 and doc["rows"][0]["snr"] is None
    assert doc["rows"][-1]["alpha"] == pytest.approx(math.exp(-3.0), rel=1e-12)
    code, out, _ = run(["schedule", "show", "--config", files["ou"], "--grid", "3", "--format", "csv"])
    lines = out.splitlines()
    assert lines[0] == "t,f,g,alpha,sigma2,snr" and len(lines) == 4
    assert run(["schedule", "show", "--config", files["ou"], "--grid", "1"])[0] == 2


def test_schedule_acs_and_infeasible():
    code, out, _ = run(["schedule", "acs", "--theta", "0.564", "--rho", "0.178", "--gamma", "1.997",
                        "--K", "37.323", "--n", "100", "--grid", "5"])
    assert code == 0
    doc = json.loads(out)
    assert doc["rows"][-1]["alpha"] == pytest.approx(math.exp(-doc["hparams"]["E"]), rel=1e-9)
    code, _, err = run(["schedule", "acs", "--theta", "-1", "--gamma", "0.1", "--K", "10", "--n", "10"])
    assert code == 2 and "theta>0" in err and "gamma>=2E/lambda" in err


def test_bad_documents(files):
    tmp = files["tmp"]
    (tmp / "bad.json").write_text("{not json")
    assert run(["schedule", "show", "--config", str(tmp / "bad.json")])[0] == 2
    assert run(["schedule", "show", "--config", str(tmp / "missing.json")])[0] == 2
    (tmp / "k.json").write_text(json.dumps({"kind": "zigzag"}))
    code, _, err = run(["schedule", "show", "--config", str(tmp / "k.json")])
    assert code == 2 and "schedule.kind" in err


def test_simulate_binary_and_exact_law(files):
    out_dir = files["tmp"] / "sim"
    code, out, _ = run(["simulate", "--schedule", files["ou"], "--target", files["gauss"], "--n", "20",
                        "--paths", "500", "--seed", "3", "--out", str(out_dir)])
    assert code == 0
    x = read_samples_binary(out_dir / "samples.bin")
    assert x.shape == (500, 2)
    law = json.loads((out_dir / "exact_law.json").read_text())
    assert len(law["mean"]) == 2
    # Same seed, csv format, different job count: identical samples.
    code, _, _ = run(["simulate", "--schedule", files["ou"], "--target", files["gauss"], "--n", "20",
                      "--paths", "500", "--seed", "3", "--out", str(out_dir), "--sample-format", "csv",
                      "--jobs", "3"])
    y = np.loadtxt(out_dir / "samples.csv", delimiter=",", skiprows=1)
    assert code == 0 and np.array_equal(x, y)


def test_simulate_exact_law_rejects_gmm(files):
    code, _, err = run(["simulate", "--schedule", files["linear"], "--target", files["gmm"], "--n", "5",
                        "--exact-law", "--out", str(files["tmp"] / "g")])
    assert code == 2 and "exact" in err
    assert not (files["tmp"] / "g").exists()


def test_output_dir_env(files, monkeypatch):
    monkeypatch.setenv("NOISECTL_OUTPUT_DIR", str(files["tmp"] / "envout"))
    code, _, _ = run(["simulate", "--schedule", files["linear"], "--target", files["gmm"], "--n", "5",
                      "--paths", "10"])
    assert code == 0 and (files["tmp"] / "envout" / "samples.bin").exists()


def test_experiment_writes_outputs(files):
    spec = files["tmp"] / "spec.json"
    spec.write_text(json.dumps({"kind": "u-curve", "grid": [0.5, 2.0, 8.0], "n": 30,
                                "target": {"kind": "gaussian", "mean": [0, 0], "cov": [0.01, 1]}}))
    code, out, _ = run(["experiment", "--spec", str(spec), "--out", str(files["tmp"] / "ex")])
    assert code in (0, 1)
    assert (files["tmp"] / "ex" / "u-curve.csv").read_text().startswith("E,")
    meta = json.loads((files["tmp"] / "ex" / "u-curve.json").read_text())
    assert "timing" in meta and len(meta["records"]) == 3
    assert ("FAIL" in out) == (code == 1)


def test_experiment_invalid_spec_writes_nothing(files):
    spec = files["tmp"] / "bad.json"
    spec.write_text(json.dumps({"kind": "u-curve", "target": {"kind": "gaussian"}}))
    code, _, err = run(["experiment", "--spec", str(spec), "--out", str(files["tmp"] / "none")])
    assert code == 2 and "target" in err and not (files["tmp"] / "none").exists()


def test_bounds_commands(files):
    code, out, _ = run(["bounds", "girsanov", "--schedule", files["ou"], "--target", files["gauss"], "--n", "50"])
    doc = json.loads(out)
    assert code == 0 and doc["total"] >= 0
    code, out, _ = run(["bounds", "thm1", "--schedule", files["ou"], "--target", files["gauss"], "--n", "50"])
    assert code == 0 and math.isfinite(json.loads(out)["total"])
    params = files["tmp"] / "p.json"
    params.write_text(json.dumps({"g_const": 2.0}))
    code, out, _ = run(["bounds", "legacy", "--kind", "vp-constant", "--params", str(params), "--J-star", "1",
                        "--d", "2", "--kappa", "1", "--h", "0.01"])
    assert code == 0 and json.loads(out)["total"] > 0


def test_check_suite(files):
    code, out, _ = run(["check", "--schedule", files["ou"], "--target", files["gauss"], "--grid", "10"])
    assert code == 0 and "margin" in out.splitlines()[0]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "noisectl", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
