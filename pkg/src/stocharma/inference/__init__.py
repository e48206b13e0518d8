"""Exact Gaussian inference for sARMA-family series."""

from .chain import (
    CliqueChain,
    SuffStats,
    build_chain,
    clique_marginals,
    cross_offsets,
    last_clique_marginal,
    log_likelihood,
    make_chain,
    posterior_moments,
    predictive_moments,
)
from .dense import dense_oracle, dense_posterior
from .gaussian import Gaussian

__all__ = [
    "CliqueChain",
    "Gaussian",
    "SuffStats",
    "build_chain",
    "clique_marginals",
    "cross_offsets",
    "dense_oracle",
    "dense_posterior",
    "last_clique_marginal",
    "log_likelihood",
    "make_chain",
    "posterior_moments",
    "predictive_moments",
]
