import csv
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from stocharma.cli import main
from stocharma.data import Collection, TimeSeries, read_collection, simulate, write_collection
from stocharma.evaluation import holdout_moments
from stocharma.model import ModelStructure, MultiModel, Parameters, SeriesModel, load_model


def _ar1_csv(path, T=600, seed=0, alpha=0.6):
    st = ModelStructure(p=1)
    truth = MultiModel({"y": SeriesModel(st, Parameters(zeta=0.3, alpha=[alpha], gamma=1.0, sigma=0.01))})
    write_collection(simulate(truth, T, seed), path)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fit_ar1(tmp_path, capsys):
    data = _ar1_csv(tmp_path / "d.csv")
    out = tmp_path / "m.json"
    trace = tmp_path / "t.csv"
    assert main(["fit", "--data", str(data), "--series", "y", "--p", "1", "--out-model", str(out),
                 "--trace", str(trace)]) == 0
    par = load_model(out)["y"].params
    assert abs(par.alpha[0] - 0.6) < 0.1
    assert _rows(trace)[0]["iteration"] == "0"
    assert "sARMA(1,0)" in capsys.readouterr().out


def test_sigma_zero_rejected(tmp_path, capsys):
    data = _ar1_csv(tmp_path / "d.csv", T=50)
    code = main(["fit", "--data", str(data), "--series", "y", "--out-model", str(tmp_path / "m.json"),
                 "--sigma", "0"])
    assert code == 1
    assert "sigma" in capsys.readouterr().err
    assert not (tmp_path / "m.json").exists()


def test_missing_file(tmp_path, capsys):
    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--series", "y", "--out-model", "m.json"]) == 1
    assert "error" in capsys.readouterr().err


def test_json_errors(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3\n")
    code = main(["--json-errors", "fill", "--data", str(path), "--out", str(tmp_path / "o.csv")])
    assert code == 1
    doc = json.loads(capsys.readouterr().err.strip())
    assert doc["error"] == "ParseError" and doc["row"] == 3


def test_unknown_series(tmp_path, capsys):
    data = _ar1_csv(tmp_path / "d.csv", T=50)
    assert main(["fit", "--data", str(data), "--series", "zz", "--out-model", str(tmp_path / "m.json")]) == 1
    assert "zz" in capsys.readouterr().err


def test_forecast_rows_and_consistency(tmp_path):
    data = _ar1_csv(tmp_path / "d.csv", T=200)
    model_path = tmp_path / "m.json"
    main(["fit", "--data", str(data), "--series", "y", "--p", "1", "--q", "1", "--holdout", "12",
          "--out-model", str(model_path)])
    out = tmp_path / "f.csv"
    assert main(["forecast", "--model", str(model_path), "--data", str(data), "--steps", "4",
                 "--end", "188", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 4 and [r["step"] for r in rows] == ["1", "2", "3", "4"]
    # step one equals the first holdout moment used when scoring, mapped back to the data scale
    model = load_model(model_path)
    tr = model.transforms["y"]
    raw = read_collection(data)["y"].values
    z = (raw - tr["mean"]) / tr["std"]
    _, m, v = holdout_moments(model["y"], z, 188)
    assert float(rows[0]["mean"]) == pytest.approx(m[0] * tr["std"] + tr["mean"], rel=1e-10)
    assert float(rows[0]["variance"]) == pytest.approx(v[0] * tr["std"] ** 2, rel=1e-10)


def test_forecast_d1_by_hand(tmp_path):
    # levels 0, 1, 3, 6, 10: differences 1, 2, 3, 4 -> standardized (-1.342, -0.447, 0.447, 1.342)
    levels = np.array([0.0, 1.0, 3.0, 6.0, 10.0])
    data = tmp_path / "d.csv"
    write_collection(Collection({"y": TimeSeries("y", levels)}), data)
    doc = {"version": 1, "series": {"y": {
        "structure": {"p": 1, "q": 0, "d": 1, "beta0_mode": "fixed_one", "cross_predictors": []},
        "parameters": {"zeta": 0.1, "beta0": 1.0, "beta": [], "alpha": [0.5], "eta": [], "gamma": 1.0,
                       "sigma": 0.01},
        "transform": {"mean": 5.0, "std": 2.0},
    }}}
    model = tmp_path / "m.json"
    model.write_text(json.dumps(doc))
    out = tmp_path / "f.csv"
    assert main(["forecast", "--model", str(model), "--data", str(data), "--steps", "2", "--out", str(out)]) == 0
    rows = _rows(out)
    # model scale: z = (x - 5)/2, last difference of z is (10 - 6)/2 = 2
    d1 = 0.1 + 0.5 * 2.0
    d2 = 0.1 + 0.5 * d1
    z_last = (10.0 - 5.0) / 2.0
    means = [z_last + d1, z_last + d1 + d2]
    v1 = 1.01
    v2 = 1.01 * (1 + 0.25)
    assert_allclose([float(r["mean"]) for r in rows], [m * 2 + 5 for m in means], rtol=1e-12)
    assert_allclose([float(r["variance"]) for r in rows], [4 * v1, 4 * (v1 + v2)], rtol=1e-12)


def test_search_log_and_determinism(tmp_path):
    data = tmp_path / "d.csv"
    y = np.random.default_rng(0).normal(size=150)
    write_collection(Collection({"y": TimeSeries("y", y)}), data)
    outs = []
    for i in range(2):
        log = tmp_path / f"log{i}.csv"
        model = tmp_path / f"m{i}.json"
        assert main(["search", "--data", str(data), "--series", "y", "--out-model", str(model),
                     "--log", str(log)]) == 0
        outs.append((log.read_text(), model.read_text()))
    assert outs[0] == outs[1]
    rows = _rows(tmp_path / "log0.csv")
    assert len(rows) == len({(r["p"], r["q"]) for r in rows})


def test_search_with_cross_candidates(tmp_path):
    a = ModelStructure(target="a")
    b = ModelStructure(cross_predictors=(("a", 1),), target="b")
    truth = MultiModel({
        "a": SeriesModel(a, Parameters(gamma=1.0)),
        "b": SeriesModel(b, Parameters(eta=[0.9], gamma=0.3)),
    })
    data = tmp_path / "d.csv"
    write_collection(simulate(truth, 150, 0), data)
    model = tmp_path / "m.json"
    assert main(["search", "--data", str(data), "--series", "b", "--xp-candidates", "all",
                 "--out-model", str(model), "--max-lag", "1"]) == 0
    mm = load_model(model)
    assert [str(c) for c in mm["b"].structure.cross_predictors] == ["a:1"]
    assert "a" in mm.transforms["b"]["sources"]
    out = tmp_path / "f.csv"
    assert main(["forecast", "--model", str(model), "--data", str(data), "--steps", "3", "--out", str(out)]) == 0
    assert len(_rows(out)) == 3


def test_simulate_and_fill(tmp_path):
    data = tmp_path / "s.csv"
    truth = tmp_path / "truth.json"
    assert main(["simulate", "--out", str(data), "--model-out", str(truth), "--n-series", "3", "--length", "40",
                 "--seed", "2", "--missing-rate", "0.3"]) == 0
    coll = read_collection(data)
    assert len(coll) == 3 and len(coll["s00"]) == 40
    assert any(np.isnan(coll[k].values[:28]).any() for k in coll)
    assert not any(np.isnan(coll[k].values[28:]).any() for k in coll)
    assert set(load_model(truth)) == set(coll.ids)
    filled = tmp_path / "f.csv"
    assert main(["fill", "--data", str(data), "--out", str(filled)]) == 0
    assert not any(np.isnan(v.values).any() for v in read_collection(filled).series.values())


def test_simulate_reproducible(tmp_path):
    for name in ("a.csv", "b.csv"):
        main(["simulate", "--out", str(tmp_path / name), "--n-series", "2", "--length", "30", "--seed", "9"])
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()


def test_eval(tmp_path, capsys):
    spec = {"collection": {"simulation": {"n_series": 2, "length": 60}}, "methods": ["sarma", "smoothed_arma"],
            "structure": {"mode": "fixed", "p": 1, "q": 0}, "comparisons": [["sarma", "smoothed_arma"]]}
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    out = tmp_path / "rep.json"
    assert main(["eval", "--spec", str(tmp_path / "spec.json"), "--out", str(out), "--seed", "3"]) == 0
    rep = json.loads(out.read_text())
    assert rep["seed"] == 3 and len(rep["scores"]) == 4
    assert "sarma > smoothed_arma" in capsys.readouterr().out


def test_eval_bad_spec(tmp_path, capsys):
    (tmp_path / "spec.json").write_text(json.dumps({"methods": ["x"]}))
    assert main(["--json-errors", "eval", "--spec", str(tmp_path / "spec.json"), "--out", "r.json"]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "SpecError"
