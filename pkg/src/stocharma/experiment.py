"""Declarative experiments: fit every method on every series and compare scores.

An experiment spec is a JSON object::

    {
      "seed": 0,
      "collection": {"path": "data.csv"} | {"simulation": {...}},
      "holdout_len": 12,
      "missing_rates": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
      "methods": ["arma", "smoothed_arma", "sarma", "sarma_star", "sarma_fill"],
      "structure": {"mode": "search", "max_lag": null, "candidate_lags": [1]},
      "d": 0,
      "sigma": 0.01,
      "em": {"max_iters": 2000, "accelerate": true},
      "comparisons": [{"a": "sarma", "b": "sarma_fill", "alpha": 0.05}],
      "series": ["s00", "s01"],
      "n_jobs": 1
    }

``collection.simulation`` takes the keys of
:class:`~stocharma.synthetic.SimulationConfig`. ``structure.mode`` is
``"search"`` (greedy search per method), ``"fixed"`` (``p`` and ``q``
given) or ``"true"`` (the generating structure of a simulated collection).

Methods
-------
arma, smoothed_arma
    Classic ARMA by conditional least squares, scored with variance
    ``gamma`` or ``gamma + sigma``. Complete data only (rate 0).
sarma, sarma_star
    EM on the incomplete training data, ``beta0`` fixed or free.
sarma_fill, sarma_star_fill
    EM on training data whose gaps were filled by interpolation.
sarma_xp, sarma_star_xp
    EM with cross predictors from the other series. Complete data only.

Missing values are drawn in the training region of the raw series; every
series is then standardized with training-region statistics and
differenced ``d`` times. Scores are sequential predictive scores on the
model scale over the last ``holdout_len`` positions.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Collection, TimeSeries, difference, fill_in, make_missing, read_collection, standardize
from .errors import SchemaError, SpecError, StocharmaError
from .estimation import EmConfig, cross_columns
from .evaluation import arma_predictive_score, sequential_predictive_score, sign_test
from .model import FIXED_ONE, FREE, ModelStructure
from .search import SearchConfig, fit_selected, search_pq, search_xp
from .synthetic import SimulationConfig, simulate_collection


@dataclass(frozen=True)
class Method:
    kind: str
    beta0_mode: str = FIXED_ONE
    data: str = "missing"
    xp: bool = False


METHODS = {
    "arma": Method("arma", data="complete"),
    "smoothed_arma": Method("smoothed_arma", data="complete"),
    "sarma": Method("sarma"),
    "sarma_star": Method("sarma", FREE),
    "sarma_fill": Method("sarma", data="filled"),
    "sarma_star_fill": Method("sarma", FREE, data="filled"),
    "sarma_xp": Method("sarma", data="complete", xp=True),
    "sarma_star_xp": Method("sarma", FREE, data="complete", xp=True),
}

STRUCTURE_MODES = ("search", "fixed", "true")


@dataclass
class ExperimentSpec:
    seed: int = 0
    collection: dict = field(default_factory=dict)
    holdout_len: int | None = None
    missing_rates: list = field(default_factory=lambda: [0.0])
    methods: list = field(default_factory=list)
    structure: dict = field(default_factory=lambda: {"mode": "search"})
    d: int = 0
    sigma: float = 0.01
    em: dict = field(default_factory=dict)
    comparisons: list = field(default_factory=list)
    series: list | None = None
    n_jobs: int = 1
    base_dir: str = "."


def _require(cond, message, path):
    if not cond:
        raise SpecError(message, path)


def parse_spec(doc, base_dir=".") -> ExperimentSpec:
    """Validate a spec document; errors carry the offending path."""
    _require(isinstance(doc, dict), "spec must be a JSON object", "")
    known = set(ExperimentSpec.__dataclass_fields__) - {"base_dir"}
    unknown = sorted(set(doc) - known)
    _require(not unknown, f"unknown keys {unknown}", "")
    spec = ExperimentSpec(base_dir=str(base_dir), **doc)

    _require(isinstance(spec.seed, int) and not isinstance(spec.seed, bool), "must be an integer", "seed")
    coll = spec.collection
    _require(isinstance(coll, dict) and len(coll) == 1 and set(coll) <= {"path", "simulation"},
             "give exactly one of 'path' or 'simulation'", "collection")
    if "path" in coll:
        _require(isinstance(coll["path"], str), "must be a string", "collection.path")
    else:
        try:
            SimulationConfig.from_dict(coll["simulation"], "collection.simulation")
        except SchemaError as exc:
            raise SpecError(str(exc), exc.field or "collection.simulation") from None
    if spec.holdout_len is not None:
        _require(isinstance(spec.holdout_len, int) and spec.holdout_len >= 1, "must be a positive integer",
                 "holdout_len")
    _require(isinstance(spec.missing_rates, list) and spec.missing_rates, "must be a nonempty list", "missing_rates")
    for i, r in enumerate(spec.missing_rates):
        _require(isinstance(r, (int, float)) and 0 <= r < 1, "rates must lie in [0, 1)", f"missing_rates[{i}]")
    _require(isinstance(spec.methods, list) and spec.methods, "must be a nonempty list", "methods")
    for i, m in enumerate(spec.methods):
        _require(m in METHODS, f"unknown method {m!r}; choose from {sorted(METHODS)}", f"methods[{i}]")
    _require(len(set(spec.methods)) == len(spec.methods), "duplicate methods", "methods")

    st = spec.structure
    _require(isinstance(st, dict), "must be an object", "structure")
    mode = st.get("mode", "search")
    _require(mode in STRUCTURE_MODES, f"mode must be one of {STRUCTURE_MODES}", "structure.mode")
    if mode == "fixed":
        for key in ("p", "q"):
            v = st.get(key)
            _require(isinstance(v, int) and v >= 0, "must be a nonnegative integer", f"structure.{key}")
        _require(not any(METHODS[m].xp for m in spec.methods),
                 "cross-predictor methods need mode 'search' or 'true'", "structure.mode")
    if mode == "true":
        _require("simulation" in coll, "mode 'true' needs a simulated collection", "structure.mode")
    max_lag = st.get("max_lag")
    _require(max_lag is None or (isinstance(max_lag, int) and max_lag >= 0), "must be null or >= 0",
             "structure.max_lag")
    lags = st.get("candidate_lags", [1])
    _require(isinstance(lags, list) and all(isinstance(v, int) and v >= 1 for v in lags),
             "must be a list of positive integers", "structure.candidate_lags")

    _require(isinstance(spec.d, int) and spec.d >= 0, "must be a nonnegative integer", "d")
    _require(isinstance(spec.sigma, (int, float)) and spec.sigma > 0,
             "must be positive (EM cannot move the coefficients when sigma is 0)", "sigma")
    _require(isinstance(spec.em, dict), "must be an object", "em")
    bad = sorted(set(spec.em) - set(EmConfig.__dataclass_fields__))
    _require(not bad, f"unknown keys {bad}", "em")
    try:
        _em_config(spec)
    except (TypeError, ValueError) as exc:
        raise SpecError(str(exc), "em") from None

    _require(isinstance(spec.comparisons, list), "must be a list", "comparisons")
    comps = []
    for i, c in enumerate(spec.comparisons):
        if isinstance(c, list):
            _require(len(c) == 2, "expected [a, b]", f"comparisons[{i}]")
            c = {"a": c[0], "b": c[1]}
        _require(isinstance(c, dict), "expected an object", f"comparisons[{i}]")
        for key in ("a", "b"):
            _require(c.get(key) in spec.methods, "must name a listed method", f"comparisons[{i}].{key}")
        alpha = c.get("alpha", 0.05)
        _require(isinstance(alpha, (int, float)) and 0 < alpha < 1, "must lie in (0, 1)", f"comparisons[{i}].alpha")
        comps.append({"a": c["a"], "b": c["b"], "alpha": float(alpha)})
    spec.comparisons = comps
    if spec.series is not None:
        _require(isinstance(spec.series, list) and all(isinstance(s, str) for s in spec.series),
                 "must be a list of ids", "series")
    _require(isinstance(spec.n_jobs, int) and spec.n_jobs >= 1, "must be a positive integer", "n_jobs")
    return spec


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON: {exc}", "") from None
    return parse_spec(doc, path.parent)


def _em_config(spec):
    doc = {"accelerate": True, "init": "css", **spec.em, "sigma": float(spec.sigma)}
    return EmConfig(**doc)


def _load_collection(spec: ExperimentSpec):
    coll = spec.collection
    truth = None
    if "path" in coll:
        path = Path(coll["path"])
        if not path.is_absolute():
            path = Path(spec.base_dir) / path
        holdout = 12 if spec.holdout_len is None else spec.holdout_len
        try:
            collection = read_collection(path, holdout)
        except OSError as exc:
            raise SpecError(f"cannot read collection: {exc}", "collection.path") from None
    else:
        cfg = SimulationConfig.from_dict(coll["simulation"])
        if spec.holdout_len is not None:
            cfg = SimulationConfig.from_dict({**cfg.to_dict(), "holdout_len": spec.holdout_len})
        collection, truth = simulate_collection(cfg)
    ids = collection.ids if spec.series is None else spec.series
    for i, key in enumerate(ids):
        _require(key in collection.series, f"unknown series {key!r}", f"series[{i}]")
    return collection, truth, ids


def _cell_seed(seed, rate_idx, series_idx):
    return int(np.random.SeedSequence([seed, rate_idx, series_idx]).generate_state(1)[0])


def _prepare(raw: TimeSeries, holdout, d, rate, seed, mode):
    """Training-standardized, differenced values for one data mode."""
    n_train = len(raw) - holdout
    s = raw
    if mode != "complete" and rate > 0:
        s = make_missing(raw, rate, seed, holdout)
        if mode == "filled":
            head = fill_in(TimeSeries(raw.id, s.values[:n_train])).values
            s = s.with_values(np.concatenate([head, s.values[n_train:]]))
    z = standardize(s, n_train)
    if d:
        z = difference(z, d)
    return z.values, n_train - d


@dataclass(frozen=True)
class _Cell:
    key: str
    rate_idx: int
    rate: float
    method: str
    values: np.ndarray
    n_train: int
    sources: dict
    structure_cfg: dict
    true_structure: ModelStructure | None
    search_cfg: SearchConfig


def _fit_and_score(cell: _Cell):
    m = METHODS[cell.method]
    cfg = cell.search_cfg
    mode = cell.structure_cfg.get("mode", "search")
    y = cell.values
    train = y[: cell.n_train]
    row = {"series": cell.key, "rate": cell.rate, "method": cell.method}
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            n_cand = 0
            if mode == "search":
                records = []
                if m.xp:
                    st = search_xp(cell.key, {cell.key: train, **{k: v[: cell.n_train] for k, v in cell.sources.items()}},
                                   cfg, log_records=records)
                else:
                    st = search_pq(train, cfg, records, target_id=cell.key)
                n_cand = len(records)
            elif mode == "fixed":
                st = ModelStructure(p=cell.structure_cfg["p"], q=cell.structure_cfg["q"], d=cfg.d,
                                    beta0_mode=m.beta0_mode, target=cell.key)
            else:
                t = cell.true_structure
                st = ModelStructure(p=t.p, q=t.q, d=cfg.d, beta0_mode=m.beta0_mode,
                                    cross_predictors=t.cross_predictors if m.xp else [], target=cell.key)
            model, _ = fit_selected(st, train, {k: v[: cell.n_train] for k, v in cell.sources.items()}, cfg)
            cross = cross_columns(st, cell.sources, y.size) if st.n_cross else None
            if m.kind == "sarma":
                score = sequential_predictive_score(model, y, cell.n_train, cross, cfg.em.initial_errors)
            else:
                sigma = cfg.em.sigma if m.kind == "smoothed_arma" else 0.0
                score = arma_predictive_score(model.params, y, cell.n_train, cross, sigma)
            row.update(score=float(score), p=st.p, q=st.q,
                       cross_predictors=" ".join(str(c) for c in st.cross_predictors), n_candidates=n_cand, error="")
        except (StocharmaError, ValueError, np.linalg.LinAlgError) as exc:
            row.update(score=math.nan, p=None, q=None, cross_predictors="", n_candidates=0,
                       error=f"{type(exc).__name__}: {exc}")
    notes = sorted({type(w.message).__name__ for w in caught})
    row["warnings"] = " ".join(notes)
    return row


def _cells(spec: ExperimentSpec, collection: Collection, truth, ids):
    holdout = collection.holdout_len
    em = _em_config(spec)
    st_cfg = dict(spec.structure)
    cells = []
    for ri, rate in enumerate(spec.missing_rates):
        complete_cache = {}
        for method in spec.methods:
            m = METHODS[method]
            if m.data == "complete" and rate > 0:
                continue
            search_cfg = SearchConfig(
                em=em, method=m.kind, beta0_mode=m.beta0_mode, d=spec.d,
                max_lag=st_cfg.get("max_lag"), candidate_lags=tuple(st_cfg.get("candidate_lags", [1])),
                seed=spec.seed,
            )
            for si, key in enumerate(ids):
                values, n_train = _prepare(collection[key], holdout, spec.d, rate, _cell_seed(spec.seed, ri, si),
                                           m.data)
                sources = {}
                if m.xp:
                    if not complete_cache:
                        for k in collection.ids:
                            complete_cache[k] = _prepare(collection[k], holdout, spec.d, 0.0, 0, "complete")[0]
                    sources = {k: v for k, v in complete_cache.items() if k != key}
                true_st = truth[key].structure if truth is not None else None
                cells.append(_Cell(key, ri, float(rate), method, values, n_train, sources, st_cfg, true_st,
                                   search_cfg))
    return cells


def run_experiment(spec, n_jobs=None):
    """Run an experiment and return its report.

    Parameters
    ----------
    spec : dict, ExperimentSpec or path
        Spec document, parsed spec, or path to a JSON spec file.
    n_jobs : int, optional
        Worker processes for independent cells; overrides ``spec.n_jobs``.

    Returns
    -------
    dict
        ``scores`` (one row per series, rate and method), ``averages``
        (mean score per rate and method over series with a finite score)
        and ``tests`` (sign test per comparison and rate).
    """
    if isinstance(spec, (str, Path)):
        spec = load_spec(spec)
    elif isinstance(spec, dict):
        spec = parse_spec(spec)
    collection, truth, ids = _load_collection(spec)
    cells = _cells(spec, collection, truth, ids)
    jobs = spec.n_jobs if n_jobs is None else n_jobs
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_fit_and_score, cells))
    else:
        rows = [_fit_and_score(c) for c in cells]

    averages = []
    for rate in spec.missing_rates:
        for method in spec.methods:
            vals = [r["score"] for r in rows if r["rate"] == rate and r["method"] == method]
            if not vals:
                continue
            finite = [v for v in vals if math.isfinite(v)]
            averages.append({
                "rate": float(rate), "method": method,
                "mean": float(np.mean(finite)) if finite else math.nan,
                "n": len(finite), "failed": len(vals) - len(finite),
            })
    tests = []
    for comp in spec.comparisons:
        for rate in spec.missing_rates:
            a = {r["series"]: r["score"] for r in rows if r["rate"] == rate and r["method"] == comp["a"]}
            b = {r["series"]: r["score"] for r in rows if r["rate"] == rate and r["method"] == comp["b"]}
            common = [k for k in ids if k in a and k in b]
            if not common:
                continue
            res = sign_test([a[k] for k in common], [b[k] for k in common], comp["alpha"])
            tests.append({"a": comp["a"], "b": comp["b"], "rate": float(rate), "alpha": comp["alpha"],
                          **res._asdict()})
    return {"seed": spec.seed, "n_series": len(ids), "holdout_len": collection.holdout_len,
            "scores": rows, "averages": averages, "tests": tests}


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _json_safe(float(obj))
    return obj


def write_report(report, path):
    """Write the report as JSON plus CSV tables next to it.

    ``path`` gets the full JSON report; ``<stem>_scores.csv``,
    ``<stem>_averages.csv`` and ``<stem>_tests.csv`` hold the tables.
    """
    path = Path(path)
    path.write_text(json.dumps(_json_safe(report), indent=2, sort_keys=True))
    tables = {"scores": report["scores"], "averages": report["averages"], "tests": report["tests"]}
    for name, rows in tables.items():
        out = path.with_name(f"{path.stem}_{name}.csv")
        with out.open("w", newline="") as fh:
            if not rows:
                continue
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return path


__all__ = ["METHODS", "ExperimentSpec", "load_spec", "parse_spec", "run_experiment",
           "write_report"]
