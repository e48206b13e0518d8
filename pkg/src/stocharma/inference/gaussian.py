from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class Gaussian:
    """Joint normal over labelled variables such as ``"E@12"`` or ``"Y@13"``."""

    vars: list
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.vars = list(self.vars)
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        n = len(self.vars)
        if self.mean.shape != (n,) or self.cov.shape != (n, n):
            raise ValueError("mean/cov dimensions do not match vars")

    @classmethod
    def scalar(cls, label, mean, var):
        return cls([label], [mean], [[var]])

    def __len__(self):
        return len(self.vars)

    @property
    def var(self):
        if len(self.vars) != 1:
            raise ValueError("var is only defined for a scalar Gaussian")
        return float(self.cov[0, 0])

    @property
    def mu(self):
        if len(self.vars) != 1:
            raise ValueError("mu is only defined for a scalar Gaussian")
        return float(self.mean[0])

    def index(self, label):
        return self.vars.index(label)

    def marginal(self, labels):
        idx = [self.index(v) for v in labels]
        return Gaussian(labels, self.mean[idx], self.cov[np.ix_(idx, idx)])

    def logpdf(self, x):
        """Log density of a scalar Gaussian at ``x``."""
        v = self.var
        r = float(x) - self.mu
        return -0.5 * (math.log(2.0 * math.pi * v) + r * r / v)

    def is_psd(self, rtol=1e-10):
        if not np.allclose(self.cov, self.cov.T, rtol=0, atol=rtol * max(1.0, np.abs(self.cov).max(initial=0))):
            return False
        if self.cov.size == 0:
            return True
        lam = np.linalg.eigvalsh(self.cov)
        return lam[0] >= -rtol * max(np.abs(lam).max(), 1e-300)
