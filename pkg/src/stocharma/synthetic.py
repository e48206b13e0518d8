"""Random stationary multi-series models and simulated collections.

A simulation config is a JSON object; every key is optional::

    {
      "n_series": 30, "length": 143, "holdout_len": 12, "seed": 0,
      "max_p": 2, "max_q": 2, "beta0_mode": "fixed_one",
      "gamma": [0.5, 1.5], "zeta": 0.5, "sigma": 0.01,
      "reflection": 0.7,
      "cross_fraction": 0.0, "cross_lags": [1], "cross_strength": [0.3, 0.6],
      "contamination_rate": 0.0, "contamination_scale": 3.0
    }

AR and MA polynomials are built from reflection coefficients drawn in
``(-reflection, reflection)``, which makes every series stationary and
invertible. Cross predictors only point from lower to higher series index,
so the joint system stays stationary. Contamination scales the noise of
randomly chosen holdout points.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import Collection, simulate
from .errors import SchemaError
from .model import FIXED_ONE, FREE, CrossPredictor, ModelStructure, MultiModel, Parameters, SeriesModel


@dataclass(frozen=True)
class SimulationConfig:
    n_series: int = 30
    length: int = 143
    holdout_len: int = 12
    seed: int = 0
    max_p: int = 2
    max_q: int = 2
    beta0_mode: str = FIXED_ONE
    gamma: tuple = (0.5, 1.5)
    zeta: float = 0.5
    sigma: float = 0.01
    reflection: float = 0.7
    cross_fraction: float = 0.0
    cross_lags: tuple = (1,)
    cross_strength: tuple = (0.3, 0.6)
    contamination_rate: float = 0.0
    contamination_scale: float = 3.0

    def __post_init__(self):
        if self.n_series < 1 or self.length < 2:
            raise SchemaError("need at least one series of length 2", "n_series")
        if not 0 <= self.holdout_len < self.length:
            raise SchemaError("holdout_len must be shorter than length", "holdout_len")
        if not 0 <= self.reflection < 1:
            raise SchemaError("reflection must lie in [0, 1)", "reflection")
        if self.beta0_mode not in (FIXED_ONE, FREE):
            raise SchemaError("unknown beta0 mode", "beta0_mode")
        for name in ("cross_fraction", "contamination_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise SchemaError(f"{name} must lie in [0, 1]", name)

    @classmethod
    def from_dict(cls, doc, path="simulation"):
        if not isinstance(doc, dict):
            raise SchemaError("simulation config must be an object", path)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise SchemaError(f"unknown keys {sorted(unknown)}", path)
        vals = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        try:
            return cls(**vals)
        except TypeError as exc:
            raise SchemaError(str(exc), path) from None

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def load_simulation_config(path) -> SimulationConfig:
    return SimulationConfig.from_dict(json.loads(Path(path).read_text()))


def from_reflection(r):
    """Coefficients ``phi`` with ``1 - sum phi_j z^j`` free of roots in the unit disk.

    Durbin-Levinson recursion from partial autocorrelations ``|r_k| < 1``.
    """
    phi = np.zeros(0)
    for k, rk in enumerate(r):
        phi = np.append(phi - rk * phi[::-1], rk) if k else np.array([rk])
    return phi


def series_ids(n):
    width = max(2, len(str(n - 1)))
    return [f"s{i:0{width}d}" for i in range(n)]


def random_multimodel(config: SimulationConfig, rng=None) -> MultiModel:
    rng = np.random.default_rng(config.seed) if rng is None else rng
    ids = series_ids(config.n_series)
    per = {}
    for i, key in enumerate(ids):
        p = int(rng.integers(0, config.max_p + 1))
        q = int(rng.integers(0, config.max_q + 1))
        alpha = from_reflection(rng.uniform(-config.reflection, config.reflection, p))
        beta = -from_reflection(rng.uniform(-config.reflection, config.reflection, q))
        cross, eta = [], []
        if i > 0 and rng.random() < config.cross_fraction:
            src = ids[int(rng.integers(0, i))]
            lag = int(rng.choice(config.cross_lags))
            cross.append(CrossPredictor(src, lag))
            eta.append(float(rng.choice([-1, 1]) * rng.uniform(*config.cross_strength)))
        beta0 = 1.0 if config.beta0_mode == FIXED_ONE else float(rng.uniform(0.5, 1.5))
        st = ModelStructure(p=p, q=q, beta0_mode=config.beta0_mode, cross_predictors=cross, target=key)
        par = Parameters(
            zeta=float(rng.uniform(-config.zeta, config.zeta)),
            beta0=beta0,
            beta=beta,
            alpha=alpha,
            eta=eta,
            gamma=float(rng.uniform(*config.gamma)),
            sigma=config.sigma,
        )
        per[key] = SeriesModel(st, par)
    return MultiModel(per)


def simulate_collection(config: SimulationConfig):
    """Draw a model and a collection from it.

    Returns
    -------
    collection : Collection
        Series with ``config.holdout_len`` holdout positions.
    model : MultiModel
        The generating model.
    """
    ss = np.random.SeedSequence(config.seed)
    model_seq, data_seq, noise_seq = ss.spawn(3)
    model = random_multimodel(config, np.random.default_rng(model_seq))
    scale = None
    if config.contamination_rate > 0 and config.holdout_len:
        rng = np.random.default_rng(noise_seq)
        scale = {}
        for key in model:
            s = np.ones(config.length)
            hit = rng.random(config.holdout_len) < config.contamination_rate
            s[config.length - config.holdout_len:][hit] = config.contamination_scale
            scale[key] = s
    data_seed = int(data_seq.generate_state(1)[0])
    coll = simulate(model, config.length, data_seed, noise_scale=scale)
    return Collection(coll.series, config.holdout_len), model
