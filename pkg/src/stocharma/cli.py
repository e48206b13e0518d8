"""Command-line interface: ``stocharma <command> [options]``.

Commands
--------
simulate  draw a collection from a random stationary model
fill      fill missing values by linear interpolation/extrapolation
fit       fit one series by EM and write the model
forecast  multi-step forecasts on the original scale
search    greedy structure search, then refit on the full training data
eval      run an experiment spec and write the report

Exit status is 0 on success and 1 on any error. With ``--json-errors``
errors are written to stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    Collection,
    StandardizeRecord,
    TimeSeries,
    difference,
    fill_in,
    fill_initial,
    make_missing,
    read_collection,
    standardize,
    undifference_forecast,
    write_collection,
)
from .errors import StocharmaError
from .estimation import INIT_METHODS, EmConfig, cross_columns, fit_em
from .experiment import load_spec, run_experiment, write_report
from .forecast import multi_step
from .model import FIXED_ONE, FREE, CrossPredictor, ModelStructure, MultiModel, SeriesModel, load_model, save_model
from .search import SearchConfig, fit_selected, search_pq, search_xp
from .synthetic import SimulationConfig, load_simulation_config, simulate_collection

log = logging.getLogger("stocharma")


class CliError(StocharmaError):
    pass


# -- shared preprocessing ----------------------------------------------------

def _model_scale(series: TimeSeries, train_len, d):
    """Standardize on the training region, then difference ``d`` times."""
    z = standardize(series, train_len)
    if d:
        z = difference(z, d)
    return z


def _apply_record(series: TimeSeries, record: StandardizeRecord, d):
    z = series.with_values(record.apply(series.values), transform=record)
    if d:
        z = difference(z, d)
    return z


def _series(collection: Collection, key):
    if key not in collection.series:
        raise CliError(f"series {key!r} not found; available: {', '.join(collection.ids)}")
    return collection[key]


def _em_config(args, **overrides):
    doc = {
        "sigma": args.sigma,
        "max_iters": args.max_iters,
        "rel_tol": args.rel_tol,
        "initial_errors": args.initial_errors,
        "accelerate": args.accelerate,
        "init": args.init,
    }
    doc.update(overrides)
    try:
        return EmConfig(**doc)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _sources(collection, keys, train_len, d, exclude=None):
    """Model-scale source values and their standardization records."""
    out, records = {}, {}
    for key in keys:
        if key == exclude:
            continue
        z = _model_scale(_series(collection, key), train_len, d)
        out[key] = z.values
        records[key] = z.transform.to_dict()
    return out, records


def _transform_doc(z, source_records):
    doc = z.transform.to_dict()
    if source_records:
        doc["sources"] = source_records
    return doc


# -- commands ----------------------------------------------------------------

def cmd_simulate(args):
    if args.config:
        cfg = load_simulation_config(args.config)
        doc = cfg.to_dict()
    else:
        doc = SimulationConfig().to_dict()
    for key in ("n_series", "length", "holdout_len", "max_p", "max_q", "sigma", "cross_fraction",
                "contamination_rate"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    if args.seed is not None:
        doc["seed"] = args.seed
    cfg = SimulationConfig.from_dict(doc)
    collection, model = simulate_collection(cfg)
    if args.missing_rate:
        ss = np.random.SeedSequence([cfg.seed, 1])
        seeds = ss.generate_state(len(collection))
        collection = Collection(
            {k: make_missing(collection[k], args.missing_rate, int(s), cfg.holdout_len)
             for k, s in zip(collection.ids, seeds)},
            cfg.holdout_len,
        )
    write_collection(collection, args.out)
    if args.model_out:
        save_model(model, args.model_out)
    print(f"wrote {len(collection)} series of length {cfg.length} to {args.out}")


def cmd_fill(args):
    coll = read_collection(args.data)
    keys = args.series or coll.ids
    out = {}
    for key in coll.ids:
        s = coll[key]
        out[key] = fill_in(s) if key in keys and np.isnan(s.values).any() else s
    write_collection(Collection(out), args.out)
    print(f"wrote {args.out}")


def cmd_fit(args):
    coll = read_collection(args.data, args.holdout)
    target = _series(coll, args.series)
    n_train = coll.train_len(args.series)
    xps = [CrossPredictor.parse(x) for x in args.xp]
    st = ModelStructure(p=args.p, q=args.q, d=args.d, beta0_mode=args.beta0, cross_predictors=xps,
                        target=args.series)
    z = _model_scale(target, n_train, args.d)
    m = n_train - args.d
    y = fill_initial(z.values[:m], st.R)
    cross, records = None, {}
    if st.n_cross:
        sources, records = _sources(coll, sorted({x.source for x in xps}), n_train, args.d)
        cross = cross_columns(st, {k: v[:m] for k, v in sources.items()}, m)
        if np.isnan(cross).any():
            warnings.warn("missing cross predictor values filled by interpolation", stacklevel=1)
            cross = np.column_stack([fill_in(TimeSeries("_", c)).values for c in cross.T])
    params, trace = fit_em(st, y, cross, _em_config(args))
    model = MultiModel({args.series: SeriesModel(st, params)}, {args.series: _transform_doc(z, records)})
    save_model(model, args.out_model)
    if args.trace:
        trace.to_csv(args.trace)
    status = "converged" if trace.converged else "stopped at max_iters"
    print(f"{args.series}: {st.label()}, {status} after {trace.n_iter} iterations, "
          f"log-likelihood {trace.loglik[-1]:.6f}")


def forecast_series(model: MultiModel, coll: Collection, key, steps, end=None, initial_errors="zero"):
    """Forecast ``steps`` values after position ``end`` on the original scale."""
    st, par = model[key]
    tr = model.transforms.get(key)
    if tr is None:
        raise CliError(f"model for {key!r} has no standardization record")
    record = StandardizeRecord.from_dict(tr)
    raw = _series(coll, key)
    end = len(raw) if end is None else end
    level = raw.with_values(raw.values[:end])
    z = _apply_record(level, record, st.d)
    cross = None
    if st.n_cross:
        srcs = {}
        stored = tr.get("sources", {})
        for xp in st.cross_predictors:
            src_tr = stored.get(xp.source) or model.transforms.get(xp.source)
            if src_tr is None:
                raise CliError(f"model has no standardization record for source {xp.source!r}")
            s = _series(coll, xp.source)
            s = s.with_values(s.values[:end + steps])
            srcs[xp.source] = _apply_record(s, StandardizeRecord.from_dict(src_tr), st.d).values
        cross = cross_columns(st, srcs, len(z) + steps)
    gs = multi_step(SeriesModel(st, par), z.values, cross, steps, initial_errors)
    means = np.array([g.mu for g in gs])
    variances = np.array([g.var for g in gs])
    std_level = record.apply(level.values)
    means, variances = undifference_forecast(std_level, means, variances, st.d)
    return record.invert(means), variances * record.std**2


def cmd_forecast(args):
    model = load_model(args.model)
    coll = read_collection(args.data)
    keys = args.series or list(model)
    if args.steps < 1:
        raise CliError("--steps must be at least 1")
    rows = []
    for key in keys:
        if key not in model.per_series:
            raise CliError(f"model has no series {key!r}")
        means, variances = forecast_series(model, coll, key, args.steps, args.end)
        for k, (m, v) in enumerate(zip(means, variances), start=1):
            rows.append([key, k, repr(float(m)), repr(float(v))])
    with _open_out(args.out) as fh:
        w = csv.writer(fh)
        w.writerow(["series", "step", "mean", "variance"])
        w.writerows(rows)


class _open_out:
    def __init__(self, path):
        self.path = path

    def __enter__(self):
        if self.path in (None, "-"):
            self.fh = None
            return sys.stdout
        self.fh = open(self.path, "w", newline="")
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not None:
            self.fh.close()


def cmd_search(args):
    coll = read_collection(args.data, args.holdout)
    target = _series(coll, args.series)
    n_train = coll.train_len(args.series)
    z = _model_scale(target, n_train, args.d)
    m = n_train - args.d
    cfg = SearchConfig(
        em=_em_config(args),
        method=args.method,
        beta0_mode=args.beta0,
        d=args.d,
        max_lag=args.max_lag,
        candidate_lags=tuple(args.candidate_lags),
        seed=args.seed or 0,
    )
    records = []
    sources, src_records = {}, {}
    if args.xp_candidates:
        keys = coll.ids if args.xp_candidates == ["all"] else args.xp_candidates
        full, src_records = _sources(coll, keys, n_train, args.d, exclude=args.series)
        sources = {k: v[:m] for k, v in full.items()}
        st = search_xp(args.series, {args.series: z.values[:m], **sources}, cfg, log_records=records)
    else:
        st = search_pq(z.values[:m], cfg, records, target_id=args.series)
    model, _ = fit_selected(st, z.values[:m], sources, cfg)
    used = {x.source for x in st.cross_predictors}
    doc = _transform_doc(z, {k: v for k, v in src_records.items() if k in used})
    save_model(MultiModel({args.series: model}, {args.series: doc}), args.out_model)
    if args.log:
        with open(args.log, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "q", "cross_predictors", "score", "error"])
            for r in records:
                w.writerow(r.as_row())
    print(f"{args.series}: selected {st.label()} after {len(records)} candidates")


def cmd_eval(args):
    spec = load_spec(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    report = run_experiment(spec, n_jobs=args.jobs)
    write_report(report, args.out)
    for row in report["averages"]:
        print(f"rate={row['rate']:.2f} {row['method']:<16} mean={row['mean']:.4f} n={row['n']}")
    for t in report["tests"]:
        sig = "significant" if t["significant"] else "not significant"
        print(f"rate={t['rate']:.2f} {t['a']} > {t['b']}: {t['wins_a']}-{t['wins_b']} "
              f"(ties {t['ties']}), p={t['p_value']:.4g}, {sig}")


# -- parser ----------------------------------------------------------------

def _add_em_flags(p):
    p.add_argument("--sigma", type=float, default=0.01, help="fixed observation variance (> 0)")
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("--initial-errors", choices=["zero", "prior"], default="zero")
    p.add_argument("--init", choices=INIT_METHODS, default="css", help="EM starting point")
    p.add_argument("--no-accelerate", dest="accelerate", action="store_false",
                   help="plain EM steps without extrapolation")


def build_parser():
    parser = argparse.ArgumentParser(prog="stocharma", description="Stochastic ARMA modeling toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--json-errors", action="store_true", help="report errors as JSON on stderr")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a collection from a random stationary model")
    p.add_argument("--config", help="JSON simulation config")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--model-out", help="write the generating model as JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-series", type=int)
    p.add_argument("--length", type=int)
    p.add_argument("--holdout-len", type=int)
    p.add_argument("--max-p", type=int)
    p.add_argument("--max-q", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--cross-fraction", type=float)
    p.add_argument("--contamination-rate", type=float)
    p.add_argument("--missing-rate", type=float, default=0.0, help="delete training values at this rate")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fill", help="fill missing values by interpolation")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--series", nargs="*", help="only these series (default: all)")
    p.set_defaults(func=cmd_fill)

    p = sub.add_parser("fit", help="fit one series by EM")
    p.add_argument("--data", required=True)
    p.add_argument("--series", required=True)
    p.add_argument("--p", type=int, default=0)
    p.add_argument("--q", type=int, default=0)
    p.add_argument("--d", type=int, default=0)
    p.add_argument("--beta0", choices=["fixed", "free"], default="fixed")
    p.add_argument("--xp", nargs="*", default=[], metavar="SOURCE:LAG")
    p.add_argument("--holdout", type=int, default=0, help="trailing positions excluded from training")
    p.add_argument("--out-model", required=True)
    p.add_argument("--trace", help="CSV of the log-likelihood per iteration")
    p.add_argument("--seed", type=int)
    _add_em_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="multi-step forecasts on the original scale")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--series", nargs="*")
    p.add_argument("--end", type=int, help="forecast from this position (default: end of data)")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("search", help="greedy structure search and refit")
    p.add_argument("--data", required=True)
    p.add_argument("--series", required=True)
    p.add_argument("--method", choices=["sarma", "arma", "smoothed_arma"], default="sarma")
    p.add_argument("--beta0", choices=["fixed", "free"], default="fixed")
    p.add_argument("--d", type=int, default=0)
    p.add_argument("--xp-candidates", nargs="*", help="source ids, or 'all'")
    p.add_argument("--candidate-lags", type=int, nargs="+", default=[1])
    p.add_argument("--max-lag", type=int)
    p.add_argument("--holdout", type=int, default=0)
    p.add_argument("--out-model", required=True)
    p.add_argument("--log", help="CSV with every evaluated candidate and its score")
    p.add_argument("--seed", type=int)
    _add_em_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="run an experiment spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True, help="report JSON; CSV tables are written next to it")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.set_defaults(func=cmd_eval)
    return parser


def _report_error(args, exc):
    if getattr(args, "json_errors", False):
        doc = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("row", "column", "field", "path", "series", "source", "lag", "time"):
            value = getattr(exc, attr, None)
            if value is not None:
                doc[attr] = value
        print(json.dumps(doc), file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "beta0", None) in ("fixed", "free"):
        args.beta0 = FIXED_ONE if args.beta0 == "fixed" else FREE
    if getattr(args, "sigma", None) is not None and args.command != "simulate" and not args.sigma > 0:
        _report_error(args, CliError(
            "--sigma must be positive: with sigma = 0 EM cannot move the regression "
            "coefficients away from their starting values"))
        return 1
    try:
        args.func(args)
    except (StocharmaError, OSError, ValueError, KeyError) as exc:
        _report_error(args, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
