"""Smoke test for the adaptive_rmst_py extension.

Run after `pip install -e crates/python --no-build-isolation`:
    python -m pytest python/smoke_test.py
"""

import json
import math
import pathlib

import pytest

import adaptive_rmst_py as ar

SCHEMAS = pathlib.Path(__file__).resolve().parents[1] / "schemas"


def toy():
    return ar.TrialDataset([0, 0, 1, 1], [1.0, 2.0, 1.5, 2.0], [True, False, True, False])


def test_toy_dataset():
    ds = toy()
    assert (ds.n, ds.n0, ds.n1, len(ds)) == (4, 2, 2, 4)
    assert ds.max_estimable_time == 2.0
    assert ds.to_csv().splitlines()[0] == "arm,time,event"


def test_toy_estimates():
    ds = toy()
    kappa, sigma2 = ar.kappa_hat(ds, 2.0)
    assert kappa == pytest.approx(0.25)
    assert sigma2 == pytest.approx(0.625)
    assert ar.criterion_value(ds, 2.0) == pytest.approx(0.1)
    times, surv = ar.km_curve(ds, 0)
    assert times == [1.0] and surv == [pytest.approx(0.5)]
    l, kappa, z, p = ar.fixed_rmst_test(ds)
    assert l == 2.0 and z == pytest.approx(0.632, abs=1e-3) and p == pytest.approx(0.527, abs=1e-3)


def test_defaults():
    assert ar.default_penalty(0.2, 4.2) == pytest.approx(0.002)
    assert f"{ar.default_penalty(3, 53, 'months', 'ct'):.2e}" == "8.89e-08"
    assert f"{ar.default_penalty(3, 53, 'months', 'dt'):.2e}" == "2.22e-07"
    assert ar.suggest_grid_size(300) == (5, 8)


def test_truth():
    assert len(ar.scenario_names()) == 9
    assert ar.true_kappa("ph", 4.2) == pytest.approx(0.29120, abs=1e-5)
    assert ar.true_kappa("null", 1.0) == 0.0
    l, _ = ar.true_optimum("null", c=0.002, l_tilde=2.2)
    assert l == pytest.approx(2.2, abs=1e-6)
    assert ar.true_variance("null", 1.0) > 0


def test_analysis_round_trip(tmp_path):
    ds = ar.generate_trial("tran", 400, 3)
    assert ds.n == 400
    path = tmp_path / "trial.csv"
    path.write_text(ds.to_csv())
    again = ar.TrialDataset.from_csv(str(path))
    assert again.to_csv() == ds.to_csv()

    lhat, kappa, sigma2, value = ar.select_l(ds, 0.2, 4.2, c=0.002, l_tilde=2.2)
    assert 0.2 <= lhat <= 4.2 and sigma2 > 0
    grid_l, *_ = ar.select_l_grid(ds, [0.5, 1.0, 1.5, 2.0], c=0.005, l_tilde=1.0)
    assert grid_l in (0.5, 1.0, 1.5, 2.0)

    for method in ("ct", "dt", "hulc"):
        result = json.loads(ar.analyze(ds, method=method, seed=5, boot=200))
        assert result["method"] == method
        lo, hi = result["ci_kappa_lower"], result["ci_kappa_upper"]
        assert result["reject"] == (not lo <= 0.0 <= hi)
    first = ar.analyze(ds, method="ct", seed=5, boot=200)
    assert first == ar.analyze(ds, method="ct", seed=5, boot=200)


def test_result_matches_schema():
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads((SCHEMAS / "result.json").read_text())
    result = json.loads(ar.analyze(ar.generate_trial("ph", 300, 1), method="dt"))
    jsonschema.validate(result, schema)


def test_comparators():
    ds = ar.generate_trial("ph", 300, 2)
    z, p = ar.weighted_logrank(ds)
    assert 0.0 <= p <= 1.0 and math.isfinite(z)
    zmax, pmax = ar.maxcombo(ds)
    assert zmax >= abs(z) - 1e-12 and 0.0 <= pmax <= 1.0


def test_study():
    report = json.loads(ar.run_study(["tran"], [300], ["ct", "logrank"], reps=3, boot=100, seed=4))
    assert [c["method"] for c in report["cells"]] == ["ct", "logrank"]


def test_errors():
    with pytest.raises(ValueError):
        ar.TrialDataset([0, 2], [1.0, 2.0], [True, True])
    with pytest.raises(ValueError):
        ar.generate_trial("foo", 100, 1)
    with pytest.raises(ValueError):
        ar.TrialDataset.from_csv("/nonexistent/trial.csv")
    with pytest.raises(ArithmeticError):
        ar.select_l(toy(), 10.0, 20.0)
