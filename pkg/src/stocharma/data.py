"""Time-series containers and the preprocessing applied before modeling.

Missing observations are stored as ``NaN`` throughout the package.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConstantSeries, MissingBase, ParseError, TooShort


@dataclass(frozen=True)
class StandardizeRecord:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be positive")

    def apply(self, values):
        return (np.asarray(values, dtype=float) - self.mean) / self.std

    def invert(self, values):
        return np.asarray(values, dtype=float) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean, "std": self.std}

    @classmethod
    def from_dict(cls, doc):
        return cls(float(doc["mean"]), float(doc["std"]))


@dataclass
class TimeSeries:
    """An equispaced series; ``values[i]`` is the observation at time ``i + 1``."""

    id: str
    values: np.ndarray
    transform: StandardizeRecord | None = None
    diff_order: int = 0

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float).reshape(-1)
        if self.values.size < 1:
            raise TooShort(f"series {self.id!r} is empty")

    def __len__(self):
        return self.values.size

    @property
    def missing(self):
        return np.isnan(self.values)

    @property
    def n_observed(self):
        return int(np.count_nonzero(~self.missing))

    def with_values(self, values, **changes):
        return replace(self, values=np.array(values, dtype=float), **changes)


@dataclass
class Collection:
    series: dict[str, TimeSeries] = field(default_factory=dict)
    holdout_len: int = 0

    def __post_init__(self):
        for key, s in self.series.items():
            if key != s.id:
                raise ValueError(f"key {key!r} does not match series id {s.id!r}")
            if self.holdout_len >= len(s):
                raise TooShort(
                    f"holdout_len {self.holdout_len} not shorter than series {key!r}"
                )

    def __getitem__(self, key):
        return self.series[key]

    def __iter__(self):
        return iter(self.series)

    def __len__(self):
        return len(self.series)

    @property
    def ids(self):
        return list(self.series)

    def train_len(self, key):
        return len(self.series[key]) - self.holdout_len


def standardize(series: TimeSeries, train_len: int | None = None) -> TimeSeries:
    """Shift and scale to zero mean and unit (population) standard deviation.

    Statistics are computed over the observed entries of the first
    ``train_len`` positions (all positions by default) and applied to the
    whole series, so a holdout region never informs the transform.
    """
    region = series.values if train_len is None else series.values[:train_len]
    obs = region[~np.isnan(region)]
    if obs.size < 2:
        raise TooShort(f"series {series.id!r} needs at least 2 observed values")
    mean = float(obs.mean())
    std = float(obs.std())
    if std == 0.0 or np.all(obs == obs[0]):
        raise ConstantSeries(f"series {series.id!r} is constant")
    record = StandardizeRecord(mean, std)
    return series.with_values(record.apply(series.values), transform=record)


def unstandardize(series: TimeSeries) -> TimeSeries:
    if series.transform is None:
        return series
    return series.with_values(series.transform.invert(series.values), transform=None)


def difference(series: TimeSeries, d: int) -> TimeSeries:
    if d < 0:
        raise ValueError("d must be nonnegative")
    if len(series) <= d:
        raise TooShort(f"series {series.id!r} of length {len(series)} cannot be differenced {d} times")
    # NaN arithmetic propagates missingness through every pass
    values = np.diff(series.values, n=d) if d else series.values.copy()
    return series.with_values(values, diff_order=series.diff_order + d)


def undifference_forecast(base_history, means, variances, d):
    """Map forecasts of the ``d``-times differenced series back to levels.

    Parameters
    ----------
    base_history : array_like
        The undifferenced series the forecasts continue; its last ``d``
        values must be observed.
    means, variances : array_like
        Marginal forecasts for steps ``1..h`` on the differenced scale.
    d : int
        Number of differencing passes to invert.

    Returns
    -------
    means, variances : ndarray
        Level forecasts. Increments are treated as independent, so each
        level variance is ``sum_i w_ki**2 * variances[i]`` where ``w`` is
        the linear map from increments to levels.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if d == 0:
        return means.copy(), variances.copy()
    base = np.asarray(base_history, dtype=float)
    if base.size < d or np.isnan(base[-d:]).any():
        raise MissingBase(f"the last {d} values of the base history must be observed")
    h = means.size
    # last value of each differencing level: level k holds diff^k of the base
    tails = [np.diff(base[-d:], n=k)[-1] for k in range(d)]
    weights = np.eye(h)
    out_mean = means.copy()
    for k in reversed(range(d)):
        out_mean = tails[k] + np.cumsum(out_mean)
        weights = np.cumsum(weights, axis=0)
    out_var = (weights**2) @ variances
    return out_mean, out_var


def make_missing(series: TimeSeries, rate: float, seed: int, holdout_len: int = 0) -> TimeSeries:
    """Delete training-region observations independently with probability ``rate``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    n_train = len(series) - holdout_len
    mask = rng.random(n_train) < rate
    values = series.values.copy()
    values[:n_train][mask] = np.nan
    return series.with_values(values)


def fill_in(series: TimeSeries) -> TimeSeries:
    """Linear interpolation inside gaps, linear extrapolation at the ends."""
    values = series.values
    obs = np.flatnonzero(~np.isnan(values))
    if obs.size < 2:
        raise TooShort(f"series {series.id!r} needs at least 2 observed values to fill")
    if obs.size == values.size:
        return series.with_values(values.copy())
    idx = np.arange(values.size, dtype=float)
    filled = np.interp(idx, obs, values[obs])
    i0, i1 = obs[0], obs[1]
    lead = idx < i0
    filled[lead] = values[i0] + (idx[lead] - i0) * (values[i1] - values[i0]) / (i1 - i0)
    j0, j1 = obs[-2], obs[-1]
    trail = idx > j1
    filled[trail] = values[j1] + (idx[trail] - j1) * (values[j1] - values[j0]) / (j1 - j0)
    return series.with_values(filled)


def fill_initial(values, R):
    """Fill missing entries among the first ``R`` positions by :func:`fill_in`."""
    values = np.array(values, dtype=float)
    if R == 0 or not np.isnan(values[:R]).any():
        return values
    filled = fill_in(TimeSeries("_", values)).values
    values[:R] = filled[:R]
    return values


def simulate(model, T: int, seed: int, noise_scale=None) -> "Collection":
    """Draw a collection from a :class:`~stocharma.model.MultiModel`.

    Pre-sample terms (indices below 1) are zero and there is no burn-in.

    Parameters
    ----------
    noise_scale : dict, optional
        Series id to a length-``T`` array multiplying the standard
        deviation of both noise terms at each time (used to contaminate
        selected points).
    """
    from .model import topological_order

    order = topological_order(model)
    members = model.per_series
    max_r = max((m.structure.R for m in members.values()), default=0)
    if T <= max_r:
        raise TooShort(f"T={T} must exceed the largest conditioning horizon {max_r}")
    ss = np.random.SeedSequence(seed)
    E, V = {}, {}
    for key, child in zip(sorted(members), ss.spawn(len(members))):
        rng = np.random.default_rng(child)
        par = members[key].params
        E[key] = rng.normal(0.0, 1.0, T) * math.sqrt(par.gamma)
        V[key] = rng.normal(0.0, 1.0, T) * math.sqrt(par.sigma)
        if noise_scale is not None and key in noise_scale:
            scale = np.asarray(noise_scale[key], dtype=float)
            E[key] = E[key] * scale
            V[key] = V[key] * scale
    Y = {k: np.zeros(T) for k in members}
    for t in range(T):
        for key in order:
            st, par = members[key]
            e = E[key]
            mu = par.zeta + par.beta0 * e[t]
            for j in range(1, min(st.q, t) + 1):
                mu += par.beta[j - 1] * e[t - j]
            for i in range(1, min(st.p, t) + 1):
                mu += par.alpha[i - 1] * Y[key][t - i]
            for k, xp in enumerate(st.cross_predictors):
                if t - xp.lag >= 0:
                    mu += par.eta[k] * Y[xp.source][t - xp.lag]
            Y[key][t] = mu + V[key][t]
    return Collection({k: TimeSeries(k, Y[k]) for k in members})


def read_collection(path, holdout_len: int = 0) -> Collection:
    """Read the CSV collection format (header of ids, empty cell = missing)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", row=1)
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header) or any(not h for h in header):
        raise ParseError("series ids must be unique and nonempty", row=1)
    cols = [[] for _ in header]
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", row=r)
        for c, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                cols[c].append(np.nan)
                continue
            try:
                cols[c].append(float(cell))
            except ValueError:
                raise ParseError(f"not a number: {cell!r}", row=r, column=c + 1) from None
    if not cols[0]:
        raise ParseError("no data rows", row=2)
    return Collection({h: TimeSeries(h, v) for h, v in zip(header, cols)}, holdout_len)


def write_collection(collection: Collection, path):
    ids = collection.ids
    length = max(len(collection[k]) for k in ids)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ids)
        for t in range(length):
            row = []
            for k in ids:
                v = collection[k].values
                row.append("" if t >= v.size or np.isnan(v[t]) else repr(float(v[t])))
            writer.writerow(row)


def write_transforms(collection: Collection, path):
    doc = {
        "version": 1,
        "series": {
            k: {
                "transform": None if s.transform is None else s.transform.to_dict(),
                "diff_order": s.diff_order,
            }
            for k, s in collection.series.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def read_transforms(path):
    doc = json.loads(Path(path).read_text())
    return {
        k: (None if v["transform"] is None else StandardizeRecord.from_dict(v["transform"]), int(v["diff_order"]))
        for k, v in doc["series"].items()
    }
