"""Model structures, parameters, and the JSON model-file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import CyclicCrossPredictors, SchemaError

FIXED_ONE = "fixed_one"
FREE = "free"
BETA0_MODES = (FIXED_ONE, FREE)
DEFAULT_SIGMA = 0.01
SCHEMA_VERSION = 1


class CrossPredictor(NamedTuple):
    source: str
    lag: int

    def __str__(self):
        return f"{self.source}:{self.lag}"

    @classmethod
    def parse(cls, text):
        source, _, lag = text.rpartition(":")
        if not source:
            raise ValueError(f"cross predictor must look like 'source:lag', got {text!r}")
        return cls(source, int(lag))


@dataclass(frozen=True)
class ModelStructure:
    """Lag orders, differencing order, beta0 mode and cross predictors.

    Cross predictors at lag 0 are contemporaneous covariates and are only
    allowed from other series.
    """

    p: int = 0
    q: int = 0
    d: int = 0
    beta0_mode: str = FIXED_ONE
    cross_predictors: tuple[CrossPredictor, ...] = ()
    target: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self,
            "cross_predictors",
            tuple(CrossPredictor(str(c[0]), int(c[1])) for c in self.cross_predictors),
        )
        if min(self.p, self.q, self.d) < 0:
            raise ValueError("p, q and d must be nonnegative")
        if self.beta0_mode not in BETA0_MODES:
            raise ValueError(f"beta0_mode must be one of {BETA0_MODES}")
        seen = set()
        for xp in self.cross_predictors:
            if xp.lag < 0:
                raise ValueError(f"cross predictor {xp} has a negative lag")
            if xp.lag == 0 and xp.source == self.target:
                raise ValueError("a series cannot predict itself at lag 0")
            if xp in seen:
                raise ValueError(f"duplicate cross predictor {xp}")
            seen.add(xp)

    @property
    def R(self):
        return max(self.p, self.q)

    @property
    def free_beta0(self):
        return self.beta0_mode == FREE

    @property
    def n_cross(self):
        return len(self.cross_predictors)

    def replace(self, **changes):
        kw = dict(
            p=self.p, q=self.q, d=self.d, beta0_mode=self.beta0_mode,
            cross_predictors=self.cross_predictors, target=self.target,
        )
        kw.update(changes)
        return ModelStructure(**kw)

    def label(self):
        star = "*" if self.free_beta0 else ""
        xp = "".join(f"+{c}" for c in self.cross_predictors)
        return f"sARMA{star}({self.p},{self.q}){xp}"


def _vector(values):
    arr = np.array(values, dtype=float).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Parameters:
    """``zeta + beta0*E_t + beta.E_{t-1..t-q} + alpha.Y_{t-1..t-p} + eta.C_t``
    with error variance ``gamma`` and observation variance ``sigma``."""

    zeta: float = 0.0
    beta0: float = 1.0
    beta: np.ndarray = field(default_factory=lambda: _vector([]))
    alpha: np.ndarray = field(default_factory=lambda: _vector([]))
    eta: np.ndarray = field(default_factory=lambda: _vector([]))
    gamma: float = 1.0
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        for name in ("beta", "alpha", "eta"):
            object.__setattr__(self, name, _vector(getattr(self, name)))
        for name in ("zeta", "beta0", "gamma", "sigma"):
            object.__setattr__(self, name, float(getattr(self, name)))
        # gamma = 0 is allowed for degenerate simulations only
        if not self.gamma >= 0:
            raise ValueError("gamma must be nonnegative")
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")

    def __eq__(self, other):
        if not isinstance(other, Parameters):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    @property
    def p(self):
        return self.alpha.size

    @property
    def q(self):
        return self.beta.size

    def phi(self, free_beta0=False):
        """The regression vector ``(beta0?, beta, alpha, eta)``."""
        head = [self.beta0] if free_beta0 else []
        return np.concatenate([head, self.beta, self.alpha, self.eta])

    def replace(self, **changes):
        kw = self.to_dict()
        kw.update(changes)
        return Parameters(**kw)

    def to_dict(self):
        return {
            "zeta": self.zeta,
            "beta0": self.beta0,
            "beta": self.beta.tolist(),
            "alpha": self.alpha.tolist(),
            "eta": self.eta.tolist(),
            "gamma": self.gamma,
            "sigma": self.sigma,
        }

    def matches(self, structure: ModelStructure):
        return (
            self.p == structure.p
            and self.q == structure.q
            and self.eta.size == structure.n_cross
            and (structure.free_beta0 or self.beta0 == 1.0)
        )


def check_parameters(structure: ModelStructure, params: Parameters):
    if params.p != structure.p:
        raise SchemaError(f"expected {structure.p} entries, found {params.p}", "alpha")
    if params.q != structure.q:
        raise SchemaError(f"expected {structure.q} entries, found {params.q}", "beta")
    if params.eta.size != structure.n_cross:
        raise SchemaError(f"expected {structure.n_cross} entries, found {params.eta.size}", "eta")
    if not structure.free_beta0 and params.beta0 != 1.0:
        raise SchemaError("must be 1 when beta0_mode is fixed_one", "beta0")


class SeriesModel(NamedTuple):
    structure: ModelStructure
    params: Parameters


@dataclass
class MultiModel:
    per_series: dict[str, SeriesModel] = field(default_factory=dict)
    transforms: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.per_series[key]

    def __iter__(self):
        return iter(self.per_series)

    def __len__(self):
        return len(self.per_series)

    def validate(self, collection_ids=()):
        known = set(self.per_series) | set(collection_ids)
        for key, (st, par) in self.per_series.items():
            check_parameters(st, par)
            for xp in st.cross_predictors:
                if xp.source not in known:
                    raise SchemaError(f"unknown cross-predictor source {xp.source!r}", key)
                if xp.source == key and xp.lag == 0:
                    raise SchemaError("self reference at lag 0", key)


def topological_order(model: MultiModel):
    """Order series so every lag-0 cross predictor is generated first."""
    keys = sorted(model.per_series)
    deps = {
        k: {xp.source for xp in model[k].structure.cross_predictors if xp.lag == 0 and xp.source in model.per_series}
        for k in keys
    }
    order, done = [], set()
    while len(order) < len(keys):
        ready = [k for k in keys if k not in done and deps[k] <= done]
        if not ready:
            raise CyclicCrossPredictors(
                "contemporaneous cross predictors form a cycle among "
                + ", ".join(k for k in keys if k not in done)
            )
        for k in ready:
            order.append(k)
            done.add(k)
    return order


def init_parameters(structure: ModelStructure, data, sigma: float = DEFAULT_SIGMA) -> Parameters:
    """Starting point for EM: zero coefficients, ``gamma`` = data variance."""
    obs = np.asarray(data, dtype=float)
    obs = obs[~np.isnan(obs)]
    gamma = float(obs.var()) if obs.size >= 2 else 1.0
    if not gamma > 0:
        gamma = 1.0
    return Parameters(
        zeta=0.0,
        beta0=1.0,
        beta=np.zeros(structure.q),
        alpha=np.zeros(structure.p),
        eta=np.zeros(structure.n_cross),
        gamma=gamma,
        sigma=sigma,
    )


# -- serialization ---------------------------------------------------------

def structure_to_dict(st: ModelStructure):
    return {
        "p": st.p,
        "q": st.q,
        "d": st.d,
        "beta0_mode": st.beta0_mode,
        "cross_predictors": [{"source": c.source, "lag": c.lag} for c in st.cross_predictors],
    }


def _get(doc, key, path, kind=None):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError("missing field", f"{path}.{key}" if path else key)
    value = doc[key]
    if kind is not None and (not isinstance(value, kind) or isinstance(value, bool)):
        raise SchemaError(f"expected {getattr(kind, '__name__', kind)}", f"{path}.{key}")
    return value


def structure_from_dict(doc, path="structure", target=None):
    try:
        xps = tuple(
            CrossPredictor(_get(c, "source", f"{path}.cross_predictors[{i}]", str),
                           _get(c, "lag", f"{path}.cross_predictors[{i}]", int))
            for i, c in enumerate(doc.get("cross_predictors", []))
        )
        return ModelStructure(
            p=_get(doc, "p", path, int),
            q=_get(doc, "q", path, int),
            d=int(doc.get("d", 0)),
            beta0_mode=_get(doc, "beta0_mode", path, str),
            cross_predictors=xps,
            target=target,
        )
    except SchemaError:
        raise
    except (ValueError, TypeError, AttributeError) as exc:
        raise SchemaError(str(exc), path) from None


def params_from_dict(doc, structure: ModelStructure, path="parameters"):
    num = (int, float)
    vals = {}
    for key in ("zeta", "beta0", "gamma", "sigma"):
        vals[key] = float(_get(doc, key, path, num))
    for key, size in (("beta", structure.q), ("alpha", structure.p), ("eta", structure.n_cross)):
        vec = _get(doc, key, path, list)
        if len(vec) != size:
            raise SchemaError(f"expected {size} entries, found {len(vec)}", f"{path}.{key}")
        if not all(isinstance(v, num) and not isinstance(v, bool) for v in vec):
            raise SchemaError("entries must be numbers", f"{path}.{key}")
        vals[key] = vec
    if not structure.free_beta0:
        vals["beta0"] = 1.0
    try:
        return Parameters(**vals)
    except ValueError as exc:
        raise SchemaError(str(exc), path) from None


def serialize(model) -> dict:
    """Model document for a :class:`MultiModel` or a single :class:`SeriesModel`."""
    if isinstance(model, SeriesModel):
        key = model.structure.target or "series"
        model = MultiModel({key: model})
    series = {}
    for key, (st, par) in model.per_series.items():
        entry = {"structure": structure_to_dict(st), "parameters": par.to_dict()}
        tr = model.transforms.get(key)
        if tr is not None:
            entry["transform"] = tr
        series[key] = entry
    return {"version": SCHEMA_VERSION, "series": series}


def deserialize(doc) -> MultiModel:
    if not isinstance(doc, dict):
        raise SchemaError("model document must be an object")
    version = _get(doc, "version", "", int)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported version {version}", "version")
    entries = _get(doc, "series", "", dict)
    per, transforms = {}, {}
    for key, entry in entries.items():
        path = f"series.{key}"
        st = structure_from_dict(_get(entry, "structure", path, dict), f"{path}.structure", target=key)
        par = params_from_dict(_get(entry, "parameters", path, dict), st, f"{path}.parameters")
        per[key] = SeriesModel(st, par)
        if entry.get("transform") is not None:
            transforms[key] = entry["transform"]
    model = MultiModel(per, transforms)
    for key, (st, _) in per.items():
        for xp in st.cross_predictors:
            if xp.source == key and xp.lag == 0:
                raise SchemaError("self reference at lag 0", f"series.{key}.structure.cross_predictors")
    return model


def save_model(model, path):
    Path(path).write_text(json.dumps(serialize(model), indent=2))


def load_model(path) -> MultiModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    return deserialize(doc)
