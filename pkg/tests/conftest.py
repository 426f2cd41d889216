"""Shared fixtures: the golden universes used across the suite."""

import numpy as np
import pytest

from riskbudget import AssetUniverse, Budgets, RiskParams


def mirror(tri):
    """Square symmetric matrix from lower-triangular rows."""
    n = len(tri)
    mat = np.zeros((n, n))
    for i, row in enumerate(tri):
        mat[i, : i + 1] = row
    return mat + np.tril(mat, -1).T


@pytest.fixture(scope="session")
def four_asset():
    corr = np.full((4, 4), 0.5)
    np.fill_diagonal(corr, 1.0)
    corr[2, 3] = corr[3, 2] = 0.75
    return AssetUniverse(vol=np.array([0.10, 0.15, 0.20, 0.30]), corr=corr)


@pytest.fixture(scope="session")
def five_asset():
    corr = mirror([
        [1.0],
        [0.1, 1.0],
        [0.4, 0.7, 1.0],
        [0.5, 0.4, 0.8, 1.0],
        [0.5, 0.4, 0.05, 0.1, 1.0],
    ])
    return AssetUniverse(vol=np.array([0.15, 0.20, 0.25, 0.30, 0.10]), corr=corr)


@pytest.fixture(scope="session")
def five_asset_current():
    return np.array([0.25, 0.25, 0.10, 0.10, 0.30])


@pytest.fixture(scope="session")
def eight_asset():
    corr = mirror([
        [100],
        [80, 100],
        [60, 40, 100],
        [-20, -20, 50, 100],
        [-10, -20, 30, 60, 100],
        [-20, -10, 20, 60, 90, 100],
        [-20, -20, 20, 50, 70, 60, 100],
        [-20, -20, 30, 60, 70, 70, 70, 100],
    ]) / 100.0
    vol = np.array([5, 5, 7, 10, 15, 15, 15, 18]) / 100.0
    return AssetUniverse(vol=vol, corr=corr)


@pytest.fixture(scope="session")
def seven_asset():
    corr = mirror([
        [1.0],
        [0.75, 1.0],
        [0.73, 0.75, 1.0],
        [0.70, 0.70, 0.75, 1.0],
        [0.65, 0.68, 0.69, 0.75, 1.0],
        [0.62, 0.65, 0.63, 0.67, 0.70, 1.0],
        [0.60, 0.60, 0.65, 0.68, 0.75, 0.80, 1.0],
    ])
    vol = np.array([15, 16, 17, 18, 19, 20, 21]) / 100.0
    return AssetUniverse(vol=vol, corr=corr)


@pytest.fixture(scope="session")
def seven_asset_cw():
    return np.array([0.34, 0.25, 0.20, 0.15, 0.03, 0.02, 0.01])


@pytest.fixture(scope="session")
def params():
    return RiskParams(c=1.0)


def random_universe(rng, n, mu_scale=0.0):
    """Random PSD universe via a correlation matrix with factor structure."""
    beta = rng.uniform(-0.7, 0.9, size=n)
    corr = np.outer(beta, beta)
    np.fill_diagonal(corr, 1.0)
    vol = rng.uniform(0.05, 0.35, size=n)
    mu = None
    if mu_scale > 0:
        mu = rng.uniform(0.0, mu_scale, size=n)
    return AssetUniverse(vol=vol, corr=corr, mu=mu)


def random_budgets(rng, n):
    b = rng.uniform(0.5, 2.0, size=n)
    return Budgets(b / b.sum())


def pct(x):
    """Fractions -> percent, for readable assertions against printed tables."""
    return np.asarray(x) * 100.0
