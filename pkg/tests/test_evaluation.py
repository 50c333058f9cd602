import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisectl.errors import ValidationError
from noisectl.evaluation import (ExperimentResult, _csv_text, exact_sampling_kl, export, kl_gaussians, load_spec,
                                 run_experiment, spec_from_dict)
from noisectl.sampler import SamplerConfig, sample_paths
from noisectl.schedules import Constant, make_catalog, ou
from noisectl.targets import GaussianTarget
from conftest import random_spd

ANISO = {"kind": "gaussian", "mean": [0.0, 0.0], "cov": [0.01, 1.0]}


def test_kl_examples():
    assert kl_gaussians([0.0], [[1.0]], [0.0], [[1.0]]) == 0.0
    ab = kl_gaussians([0.0], [[1.0]], [0.0], [[2.0]])
    assert ab == pytest.approx(0.5 * (0.5 - 1 + math.log(2)), rel=1e-14)
    assert ab != pytest.approx(kl_gaussians([0.0], [[2.0]], [0.0], [[1.0]]))


@settings(max_examples=60)
@given(st.integers(1, 5), st.integers(0, 10_000))
def test_kl_nonnegative_and_matches_trace_formula(d, seed):
    rng = np.random.default_rng(seed)
    S1, S2 = random_spd(rng, d), random_spd(rng, d)
    m1, m2 = rng.standard_normal(d), rng.standard_normal(d)
    kl = kl_gaussians(m1, S1, m2, S2)
    inv = np.linalg.inv(S2)
    ref = 0.5 * (np.trace(inv @ S1) + (m2 - m1) @ inv @ (m2 - m1) - d
                 + np.linalg.slogdet(S2)[1] - np.linalg.slogdet(S1)[1])
    assert kl >= -1e-12
    assert kl == pytest.approx(ref, rel=1e-8, abs=1e-12)


def test_exact_sampling_kl_sanity(aniso):
    res = exact_sampling_kl(ou(3.0), aniso, 50)
    assert res["kl"] >= 0 and res["init_error"] > 0
    wild = exact_sampling_kl(make_catalog(Constant(1.0, 500.0)), aniso, 2)
    assert math.isfinite(wild["kl"]) and wild["kl"] > res["kl"]


def test_exact_kl_vs_histogram_estimate():
    """Reported cross-check: exact chain KL against a binned Monte Carlo estimate."""
    target = GaussianTarget([0.0], [0.25])
    sched = make_catalog(Constant(1.0, 2.0))
    n = 10
    exact = exact_sampling_kl(sched, target, n)["kl"]
    x = sample_paths(SamplerConfig(n, sched, target, paths=1_000_000, seed=5))[:, 0]
    edges = np.linspace(-3, 3, 201)
    counts, _ = np.histogram(x, edges)
    from scipy.stats import norm
    p = np.diff(norm.cdf(edges, scale=0.5))
    q = np.maximum(counts / x.size, 1e-12)
    est = float(np.sum(p * np.log(p / q)))
    print(f"exact {exact:.5f} histogram {est:.5f}")
    # Binning shrinks KL and finite samples inflate it by about bins/(2N); both are small here.
    assert abs(est - exact) <= 0.1 * exact + 200 / (2 * x.size) + 1e-3


def test_u_curve_single_point():
    res = run_experiment(spec_from_dict({"kind": "u-curve", "target": ANISO, "grid": [1.0]}))
    assert len(res.records) == 1 and res.assertions == []


def test_u_curve_records_in_grid_order():
    spec = spec_from_dict({"kind": "u-curve", "target": ANISO, "grid": {"log_space": [0.5, 5.0, 6]}, "n": 50})
    res = run_experiment(spec, jobs=3)
    assert [r["E"] for r in res.records] == spec.grid
    assert all(r["kl"] >= -1e-12 for r in res.records)


def test_n_scaling_needs_three_points():
    with pytest.raises(ValidationError, match="n"):
        spec_from_dict({"kind": "n-scaling", "target": ANISO, "n": [16, 32]})


def test_n_scaling_constant_comparison():
    spec = spec_from_dict({"kind": "n-scaling", "target": {"kind": "gaussian", "mean": [0] * 4, "cov": [1] * 4},
                           "options": {"compare_constant": 1.0}})
    res = run_experiment(spec)
    names = {a["name"]: a for a in res.assertions}
    assert names["constant_degrades"]["passed"]
    assert names["d_doubling_ratio"]["passed"]
    assert all("kl_constant" in r for r in res.records)


def test_bound_audit():
    docs = [{"schedule": {"kind": "ou", "T": 3.0}, "n": 50}, {"schedule": {"kind": "ou", "T": 3.0}, "n": 1},
            {"schedule": {"kind": "linear", "T": 1.0}, "n": 20}]
    spec = spec_from_dict({"kind": "bound-audit", "target": {"kind": "gaussian", "mean": [0, 0], "cov": [1, 1]},
                           "schedules": docs, "options": {"fisher_bound": False}})
    res = run_experiment(spec)
    assert res.passed and all(r["margin"] >= 0 for r in res.records)


def test_gmm_single_component_matches_propagation():
    from noisectl.sampler import propagate_gaussian
    doc = {"kind": "gmm", "weights": [1.0], "means": [[0.5]], "nu": 0.6}
    spec = spec_from_dict({"kind": "gmm-sanity", "target": doc, "n": 50, "paths": 20_000, "seed": 2})
    res = run_experiment(spec)
    rec = res.records[0]
    law = propagate_gaussian(SamplerConfig(50, make_catalog(__import__("noisectl.schedules").schedules.Linear()),
                                           GaussianTarget([0.5], [0.36])))
    assert abs(rec["mean"] - law.mean[0]) <= 3 * rec["mean_se"]
    assert abs(rec["var"] - law.cov[0, 0]) <= 3 * rec["var_se"]
    assert rec["weight"] == 1.0


def test_gmm_merged_modes_flagged():
    doc = {"kind": "gmm", "weights": [0.5, 0.5], "means": [[-0.1], [0.1]], "nu": 0.5}
    res = run_experiment(spec_from_dict({"kind": "gmm-sanity", "target": doc, "n": 20, "paths": 10_000}))
    assert res.metadata["multimodality_undetected"] is True
    assert {r["mode"] for r in res.records} == {0}


def test_export_formats(tmp_path):
    empty = ExperimentResult("u-curve", ["E", "kl"], [])
    export(empty, "csv", tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "E,kl\n"
    res = run_experiment(spec_from_dict({"kind": "u-curve", "target": ANISO, "n": 20}))
    assert len(res.records) == 20
    export(res, "csv", tmp_path / "r.csv")
    rows = list(csv.reader(io.StringIO((tmp_path / "r.csv").read_text())))
    assert all(len(r) == len(rows[0]) for r in rows) and len(rows) == 21
    assert float(rows[1][3]) == res.records[0]["kl"]
    export(res, "json", tmp_path / "r.json")
    text = (tmp_path / "r.json").read_text()
    assert text.endswith("\n")
    assert ExperimentResult.from_dict(json.loads(text)) == res
    with pytest.raises(ValidationError):
        export(res, "xml", tmp_path / "r.xml")
    with pytest.raises(OSError, match="nope"):
        export(res, "csv", tmp_path / "nope" / "r.csv")


def test_reproducible_csv_across_jobs():
    doc = {"kind": "gmm", "weights": [0.5, 0.5], "means": [[-2.0], [2.0]], "nu": 0.3}
    spec = spec_from_dict({"kind": "gmm-sanity", "target": doc, "n": 30, "paths": 40_000, "seed": 11})
    a = _csv_text(run_experiment(spec, jobs=1))
    b = _csv_text(run_experiment(spec, jobs=4))
    assert a == b


def test_spec_loading(tmp_path):
    (tmp_path / "s.toml").write_text('kind = "u-curve"\nn = 10\ngrid = [1.0, 2.0, 3.0]\n'
                                     '[target]\nkind = "gaussian"\nmean = [0.0]\ncov = [1.0]\n')
    spec = load_spec(tmp_path / "s.toml")
    assert spec.n == 10 and spec.grid == [1.0, 2.0, 3.0]
    bundled = load_spec("u-curve")
    assert bundled.n == 100 and len(bundled.grid) == 20 and bundled.grid[0] == 0.5
    assert bundled.grid[-1] == pytest.approx(50.0)
    assert load_spec("n-scaling").n == [16, 32, 64, 128, 256]


@pytest.mark.parametrize("doc,field", [
    ({"kind": "bogus", "target": ANISO}, "kind"),
    ({"kind": "u-curve"}, "target"),
    ({"kind": "u-curve", "target": ANISO, "extra": 1}, "extra"),
    ({"kind": "u-curve", "target": ANISO, "grid": [1, "a"]}, "grid"),
    ({"kind": "u-curve", "target": {"kind": "gaussian", "mean": [0], "cov": [-1]}}, "target.cov"),
    ({"kind": "u-curve", "target": ANISO, "seed": -1}, "seed"),
    ({"kind": "gmm-sanity", "target": ANISO}, "target.kind"),
    ({"kind": "bound-audit", "target": ANISO, "schedules": [{"schedule": {"kind": "x"}, "n": 2}]},
     "schedules[0].schedule.kind"),
])
def test_spec_validation_field_paths(doc, field):
    with pytest.raises(ValidationError) as info:
        spec_from_dict(doc)
    assert info.value.field == field
