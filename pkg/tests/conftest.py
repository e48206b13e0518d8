import numpy as np
import pytest

from stocharma.model import FIXED_ONE, FREE, ModelStructure, Parameters


def random_params(rng, structure, sigma=None, gamma=None):
    """Moderate random coefficients; not necessarily stationary."""
    return Parameters(
        zeta=rng.normal(0.0, 0.5),
        beta0=1.0 if not structure.free_beta0 else rng.uniform(0.5, 1.5),
        beta=rng.uniform(-0.6, 0.6, structure.q),
        alpha=rng.uniform(-0.6, 0.6, structure.p) / max(structure.p, 1),
        eta=rng.normal(0.0, 0.5, structure.n_cross),
        gamma=rng.uniform(0.3, 2.0) if gamma is None else gamma,
        sigma=rng.uniform(0.01, 0.5) if sigma is None else sigma,
    )


def random_instance(rng, max_pq=3, max_cliques=30, missing=(0.0, 0.6), n_cross=None):
    """A random (structure, params, y, cross) with ``T - R <= max_cliques``."""
    p, q = rng.integers(0, max_pq + 1, size=2)
    mode = FREE if rng.random() < 0.5 else FIXED_ONE
    k = int(rng.integers(0, 3)) if n_cross is None else n_cross
    xps = tuple(("src", lag) for lag in range(1, k + 1))
    st = ModelStructure(p=int(p), q=int(q), beta0_mode=mode, cross_predictors=xps)
    par = random_params(rng, st)
    T = st.R + int(rng.integers(1, max_cliques + 1))
    y = rng.normal(size=T)
    rate = rng.uniform(*missing)
    hole = rng.random(T) < rate
    hole[: st.R] = False
    y[hole] = np.nan
    cross = rng.normal(size=(T, k)) if k else None
    return st, par, y, cross


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
