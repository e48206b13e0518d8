"""Greedy structure search over ``(p, q)`` and cross-predictor sets.

Candidates are fitted on the structural training part of the training data
(all but its last ``validation_len`` positions) and compared by their
sequential predictive score on the remaining structural validation part.
A candidate replaces the incumbent only when its key
``(score, -(p + q), -q)`` is strictly larger, so ties go to the smaller
model and equal scores never keep the search moving.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import TimeSeries, fill_in, fill_initial
from .errors import CrossFillWarning, StocharmaError, TooShort
from .estimation import EmConfig, cross_columns, fit_em
from .evaluation import arma_predictive_score, fit_classic_arma, sequential_predictive_score
from .model import FIXED_ONE, CrossPredictor, ModelStructure, SeriesModel

log = logging.getLogger(__name__)

VALIDATION_LEN = 12
METHODS = ("sarma", "arma", "smoothed_arma")


@dataclass(frozen=True)
class SearchConfig:
    """Options shared by the search routines.

    Attributes
    ----------
    method : {"sarma", "arma", "smoothed_arma"}
        How candidates are fitted and scored: EM for the stochastic
        models, conditional least squares for the classic baselines.
    beta0_mode : str
        Mode of every candidate structure.
    max_lag : int, optional
        Cap on ``p`` and ``q``; unrestricted by default.
    candidate_lags : tuple of int
        Lags tried for every cross-predictor source.
    """

    em: EmConfig = field(default_factory=lambda: EmConfig(accelerate=True, init="css"))
    method: str = "sarma"
    beta0_mode: str = FIXED_ONE
    d: int = 0
    validation_len: int = VALIDATION_LEN
    max_lag: int | None = None
    candidate_lags: tuple = (1,)
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.max_lag is not None and self.max_lag < 0:
            raise ValueError("max_lag must be nonnegative")


@dataclass(frozen=True)
class SearchRecord:
    p: int
    q: int
    cross_predictors: tuple
    score: float
    error: str = ""

    def as_row(self):
        xp = " ".join(str(c) for c in self.cross_predictors)
        return [self.p, self.q, xp, repr(self.score), self.error]


def split_structural(train):
    """Split training values into structural training and validation parts."""
    values = train.values if isinstance(train, TimeSeries) else np.asarray(train, dtype=float)
    if values.size <= VALIDATION_LEN:
        raise TooShort(f"{values.size} training values leave nothing for structural training")
    return values[:-VALIDATION_LEN], values[-VALIDATION_LEN:]


def _better(a, b):
    """Strict comparison of ``(score, p, q, n_xp)`` tuples; ties prefer smaller models."""
    sa, pa, qa, *_ = a
    sb, pb, qb, *_ = b
    return (sa, -(pa + qa), -qa) > (sb, -(pb + qb), -qb)


class _Evaluator:
    """Fits and scores candidate structures on one target series, memoized."""

    def __init__(self, target_id, values, sources, config: SearchConfig, records):
        self.target_id = target_id
        self.values = np.asarray(values, dtype=float)
        self.sources = sources
        self.config = config
        self.records = records
        self.split = self.values.size - config.validation_len
        if self.split < 1:
            raise TooShort(f"{self.values.size} training values leave nothing for structural training")
        self.cache = {}

    def structure(self, p, q, xps=()):
        return ModelStructure(p=p, q=q, d=self.config.d, beta0_mode=self.config.beta0_mode,
                              cross_predictors=list(xps), target=self.target_id)

    def __call__(self, p, q, xps=()):
        key = (p, q, tuple(xps))
        if key not in self.cache:
            error = ""
            try:
                score = self._score(self.structure(p, q, xps))
            except (StocharmaError, ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
                score, error = -math.inf, f"{type(exc).__name__}: {exc}"
            if not math.isfinite(score):
                score = -math.inf
            self.cache[key] = score
            self.records.append(SearchRecord(p, q, tuple(xps), score, error))
            log.debug("%s p=%d q=%d xp=%s score=%.6f", self.target_id, p, q, list(map(str, xps)), score)
        return self.cache[key]

    def _score(self, st: ModelStructure):
        cfg = self.config
        y = self.values
        cross = cross_columns(st, self.sources, y.size) if st.n_cross else None
        if cfg.method == "sarma":
            ys = fill_initial(y[: self.split], st.R)
            cs = None if cross is None else cross[: self.split]
            params, _ = fit_em(st, ys, cs, cfg.em)
            return sequential_predictive_score(SeriesModel(st, params), y, self.split, cross, cfg.em.initial_errors)
        ys = y[: self.split]
        cs = None if cross is None else cross[: self.split]
        params = fit_classic_arma(ys, st, cs, seed=cfg.seed)
        sigma = cfg.em.sigma if cfg.method == "smoothed_arma" else 0.0
        return arma_predictive_score(params, y, self.split, cross, sigma)


def _q_loop(evaluate, p, q0, max_lag):
    """Best ``(score, p, q, extra)`` at level ``p`` starting from ``q0``.

    ``evaluate(p, q)`` returns ``(score, extra)``. Tries ``q + 1`` upward
    while the score improves; if the first upward step fails, walks
    downward instead. No ``q`` is visited twice.
    """
    score, extra = evaluate(p, q0)
    best = (score, p, q0, extra)
    visited = {q0}
    moved_up = False
    while max_lag is None or best[2] + 1 <= max_lag:
        nq = best[2] + 1
        if nq in visited:
            break
        visited.add(nq)
        s, x = evaluate(p, nq)
        if _better((s, p, nq), best):
            best, moved_up = (s, p, nq, x), True
        else:
            break
    if not moved_up:
        while best[2] - 1 >= 0 and best[2] - 1 not in visited:
            nq = best[2] - 1
            visited.add(nq)
            s, x = evaluate(p, nq)
            if _better((s, p, nq), best):
                best = (s, p, nq, x)
            else:
                break
    return best


def _p_loop(evaluate, max_lag):
    best = None
    q = 0
    p = 0
    while max_lag is None or p <= max_lag:
        level = _q_loop(evaluate, p, q, max_lag)
        if best is not None and not _better(level, best):
            break
        best = level
        q = level[2]
        if not math.isfinite(best[0]):
            break
        p += 1
    return best


def _values(series):
    return series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)


def search_pq(series, config: SearchConfig = SearchConfig(), log_records: list | None = None,
              target_id="series") -> ModelStructure:
    """Greedy ``(p, q)`` search on training values already on the model scale.

    Parameters
    ----------
    series : TimeSeries or array_like
        Training part only; the last ``config.validation_len`` positions
        serve as structural validation.
    log_records : list, optional
        Receives one :class:`SearchRecord` per evaluated candidate.
    """
    records = [] if log_records is None else log_records
    ev = _Evaluator(target_id, _values(series), {}, config, records)
    best = _p_loop(lambda p, q: (ev(p, q), ()), config.max_lag)
    return ev.structure(best[1], best[2])


def _source_columns(target_id, collection, length, fill):
    """Training-region source values for every other series in ``collection``."""
    out = {}
    for key in collection:
        if key == target_id:
            continue
        v = _values(collection[key])[:length]
        if np.isnan(v).any():
            if not fill:
                continue
            if np.count_nonzero(~np.isnan(v)) < 2:
                continue
            warnings.warn(f"missing values of source {key!r} filled by interpolation", CrossFillWarning, stacklevel=3)
            v = fill_in(TimeSeries(key, v)).values
        out[key] = v
    return out


def rank_cross_predictors(target_id, collection, candidate_lags=None, config: SearchConfig = SearchConfig(),
                          train_len=None, log_records: list | None = None):
    """Rank ``(source, lag)`` pairs by the score of a ``p = q = 0`` model using only that pair.

    Ties are ordered by source id, then lag. Sources that do not cover the
    structural training region are skipped with a warning.
    """
    lags = tuple(config.candidate_lags if candidate_lags is None else candidate_lags)
    values = _values(collection[target_id])
    n = values.size if train_len is None else train_len
    values = values[:n]
    sources = _source_columns(target_id, collection, n, config.em.fill_cross)
    records = [] if log_records is None else log_records
    ev = _Evaluator(target_id, values, sources, config, records)
    scored = []
    for key in sorted(sources):
        if sources[key].size < n:
            warnings.warn(f"source {key!r} is shorter than the target; skipped", UserWarning, stacklevel=2)
            continue
        for lag in sorted(lags):
            if lag < 1:
                continue
            xp = CrossPredictor(key, lag)
            scored.append((ev(0, 0, (xp,)), key, lag))
    scored.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [CrossPredictor(k, lag) for s, k, lag in scored if s > -math.inf]


def _xp_inner(ev, p, q, start, ranked):
    """Add in rank order while the score improves; if the first add fails, delete in reverse rank order."""
    rank = {c: i for i, c in enumerate(ranked)}
    order = lambda xs: tuple(sorted(xs, key=rank.__getitem__))  # noqa: E731
    cur = order(start)
    cur_s = ev(p, q, cur)
    added = False
    for c in ranked:
        if c in cur:
            continue
        cand = order(cur + (c,))
        s = ev(p, q, cand)
        if s > cur_s:
            cur, cur_s, added = cand, s, True
        else:
            break
    if not added:
        while cur:
            cand = cur[:-1]
            s = ev(p, q, cand)
            if s > cur_s:
                cur, cur_s = cand, s
            else:
                break
    return cur_s, cur


def search_xp(target_id, collection, config: SearchConfig = SearchConfig(), train_len=None,
              log_records: list | None = None, ranked=None) -> ModelStructure:
    """Greedy search over ``p``, ``q`` and the cross-predictor set of one series.

    Every ``(p, q)`` evaluation runs the add/delete loop starting from the
    set returned by the previous evaluation; the first starts empty.
    """
    records = [] if log_records is None else log_records
    values = _values(collection[target_id])
    n = values.size if train_len is None else train_len
    if ranked is None:
        ranked = rank_cross_predictors(target_id, collection, None, config, n, records)
    ranked = list(ranked)
    sources = _source_columns(target_id, collection, n, config.em.fill_cross)
    unknown = {c.source for c in ranked} - set(sources)
    if unknown:
        raise ValueError(f"ranked sources without usable values: {sorted(unknown)}")
    ev = _Evaluator(target_id, values[:n], sources, config, records)
    carried = ()

    def evaluate(p, q):
        nonlocal carried
        s, carried = _xp_inner(ev, p, q, carried, ranked)
        return s, carried

    best = _p_loop(evaluate, config.max_lag)
    return ev.structure(best[1], best[2], best[3])


def fit_selected(structure: ModelStructure, values, sources=None, config: SearchConfig = SearchConfig()):
    """Refit a selected structure on the full training values."""
    y = np.asarray(values, dtype=float)
    cross = cross_columns(structure, sources or {}, y.size) if structure.n_cross else None
    if config.method == "sarma":
        params, trace = fit_em(structure, fill_initial(y, structure.R), cross, config.em)
        return SeriesModel(structure, params), trace
    return SeriesModel(structure, fit_classic_arma(y, structure, cross, seed=config.seed)), None
