"""Domain types for risk budgeting: asset universe, budgets, and the
standard-deviation-based risk measure with its Euler decomposition.

The risk measure is R(x) = -x'(mu - r) + c * sqrt(x' Sigma x).  With mu = r
and c = 1 it reduces to the portfolio volatility.  All quantities are
fractions per year (10% volatility is 0.10).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Smallest admissible eigenvalue of a correlation matrix.  Inputs below the
# tolerance are rejected, never repaired: silent repair would change the
# solutions golden tests pin down.
PSD_EIG_TOL = -1e-10

# Max abs difference allowed between a covariance given directly and the one
# derived from (vol, corr) when both are supplied.
COV_MATCH_TOL = 1e-12

BUDGET_SUM_TOL = 1e-12
SMALL_BUDGET = 1e-6


class ValidationError(ValueError):
    """Input data violates a structural requirement."""


class DegeneratePortfolioError(ValueError):
    """Operation undefined because the portfolio has zero volatility."""


def _vector(v, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def _matrix(m, name: str) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class AssetUniverse:
    """Volatilities, correlations and expected returns for n assets.

    Args:
        vol: per-asset volatilities sigma_i, strictly positive.
        corr: n x n correlation matrix; symmetric, unit diagonal, entries in
            [-1, 1], positive semi-definite within ``PSD_EIG_TOL``.
        mu: expected returns; defaults to the risk-free rate (pure volatility
            risk measure).
        r: risk-free rate.
    """

    vol: np.ndarray
    corr: np.ndarray
    mu: np.ndarray | None = None
    r: float = 0.0

    def __post_init__(self):
        vol = _vector(self.vol, "vol")
        corr = _matrix(self.corr, "corr")
        n = vol.size
        if corr.shape != (n, n):
            raise ValidationError(
                f"corr shape {corr.shape} does not match {n} volatilities"
            )
        if np.any(vol <= 0):
            bad = int(np.argmin(vol))
            raise ValidationError(f"vol must be strictly positive (vol[{bad}] = {vol[bad]})")
        if not np.allclose(corr, corr.T, atol=1e-12, rtol=0.0):
            raise ValidationError("corr must be symmetric")
        if np.any(np.abs(np.diag(corr) - 1.0) > 1e-12):
            raise ValidationError("corr must have a unit diagonal")
        if np.any(np.abs(corr) > 1.0 + 1e-12):
            raise ValidationError("corr entries must lie in [-1, 1]")
        eigmin = float(np.linalg.eigvalsh(corr).min())
        if eigmin < PSD_EIG_TOL:
            raise ValidationError(
                f"corr is not positive semi-definite: smallest eigenvalue {eigmin:.3e}"
            )
        mu = self.mu
        if mu is not None:
            mu = _vector(mu, "mu")
            if mu.size != n:
                raise ValidationError(f"mu has {mu.size} entries for {n} assets")
            mu.setflags(write=False)
        vol.setflags(write=False)
        corr.setflags(write=False)
        object.__setattr__(self, "vol", vol)
        object.__setattr__(self, "corr", corr)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "r", float(self.r))

    @property
    def n(self) -> int:
        return self.vol.size

    @property
    def excess(self) -> np.ndarray:
        """mu - r as a vector; zero when mu was omitted."""
        if self.mu is None:
            return np.zeros(self.n)
        return self.mu - self.r

    @classmethod
    def from_covariance(cls, cov, mu=None, r: float = 0.0) -> "AssetUniverse":
        """Build a universe from a raw covariance matrix."""
        cov = _matrix(cov, "cov")
        d = np.diag(cov)
        if np.any(d <= 0):
            raise ValidationError("cov must have strictly positive diagonal")
        vol = np.sqrt(d)
        corr = cov / np.outer(vol, vol)
        # kill roundoff on the diagonal before validation
        np.fill_diagonal(corr, 1.0)
        corr = 0.5 * (corr + corr.T)
        return cls(vol=vol, corr=corr, mu=mu, r=r)

    @classmethod
    def checked(cls, vol, corr, cov, mu=None, r: float = 0.0) -> "AssetUniverse":
        """Build from (vol, corr) and cross-check against a covariance input."""
        uni = cls(vol=vol, corr=corr, mu=mu, r=r)
        cov = _matrix(cov, "cov")
        diff = float(np.abs(covariance(uni) - cov).max())
        if diff > COV_MATCH_TOL:
            raise ValidationError(
                f"covariance input disagrees with vol/corr by {diff:.3e} "
                f"(tolerance {COV_MATCH_TOL:.0e})"
            )
        return uni


@dataclass(frozen=True)
class RiskParams:
    """Trade-off scalar c of the risk measure R(x) = -x'(mu-r) + c*sigma(x)."""

    c: float = 1.0

    def __post_init__(self):
        if self.c < 0:
            raise ValidationError(f"c must be non-negative, got {self.c}")
        object.__setattr__(self, "c", float(self.c))


@dataclass(frozen=True)
class Budgets:
    """Risk budgets b_i: strictly positive fractions summing to one."""

    b: np.ndarray

    def __post_init__(self):
        b = _vector(self.b, "budgets")
        if np.any(b <= 0):
            bad = int(np.argmin(b))
            raise ValidationError(f"budgets must be strictly positive (b[{bad}] = {b[bad]})")
        if abs(b.sum() - 1.0) > BUDGET_SUM_TOL:
            raise ValidationError(f"budgets must sum to 1, got {b.sum()!r}")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @classmethod
    def equal(cls, n: int) -> "Budgets":
        return cls(np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.b.size

    def tiny_entries(self) -> np.ndarray:
        """Indices of budgets at or below ``SMALL_BUDGET`` (allowed, flagged)."""
        return np.nonzero(self.b <= SMALL_BUDGET)[0]


@dataclass(frozen=True)
class RiskDecomposition:
    """Per-asset risk breakdown: marginal risks, absolute and relative
    contributions, total risk and volatility.

    Satisfies the Euler identity sum(rc) == risk.
    """

    mr: np.ndarray
    rc: np.ndarray
    rc_rel: np.ndarray
    risk: float
    vol: float


def covariance(universe: AssetUniverse) -> np.ndarray:
    """Covariance matrix Sigma with Sigma_ij = rho_ij * sigma_i * sigma_j."""
    return universe.corr * np.outer(universe.vol, universe.vol)


def portfolio_vol(x, universe: AssetUniverse) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(max(x @ covariance(universe) @ x, 0.0)))


def risk_measure(x, universe: AssetUniverse, params: RiskParams) -> float:
    """R(x) = -x'(mu - r) + c * sqrt(x' Sigma x).  R(0) = 0."""
    x = np.asarray(x, dtype=float)
    return float(-(x @ universe.excess) + params.c * portfolio_vol(x, universe))


def decompose(x, universe: AssetUniverse, params: RiskParams) -> RiskDecomposition:
    """Euler decomposition of R at x.

    mr_i = -(mu_i - r) + c * (Sigma x)_i / sigma(x), rc_i = x_i * mr_i, and
    sum(rc) = R(x) because R is positively homogeneous of degree one.

    Raises:
        DegeneratePortfolioError: if sigma(x) = 0.
    """
    x = np.asarray(x, dtype=float)
    sigma = covariance(universe)
    sx = sigma @ x
    vol = float(np.sqrt(max(x @ sx, 0.0)))
    if vol <= 0.0:
        raise DegeneratePortfolioError("portfolio volatility is zero")
    mr = -universe.excess + params.c * sx / vol
    rc = x * mr
    risk = float(rc.sum())
    if risk != 0.0:
        rc_rel = rc / risk
    else:
        rc_rel = np.full_like(rc, np.nan)
    return RiskDecomposition(mr=mr, rc=rc, rc_rel=rc_rel, risk=risk, vol=vol)


def sharpe_ratio(x, universe: AssetUniverse) -> float:
    x = np.asarray(x, dtype=float)
    vol = portfolio_vol(x, universe)
    if vol <= 0.0:
        return -np.inf
    return float(x @ universe.excess) / vol


def estimate_max_sharpe(
    universe: AssetUniverse,
    starts: int = 32,
    seed: int = 1,
    max_iter: int = 2000,
    tol: float = 1e-12,
) -> float:
    """Estimate SR+ = max(sup SR(x), 0) over the box [0, 1]^n, x != 0.

    Multi-start projected gradient ascent on the Sharpe ratio.  Advisory
    only: the value feeds the existence warning c > SR+, never a hard
    failure.  Returns 0 when mu = r.
    """
    pi = universe.excess
    if np.all(pi == 0.0):
        return 0.0
    n = universe.n
    sigma = covariance(universe)
    rng = np.random.default_rng(seed)

    seeds = [np.full(n, 0.5)]
    seeds += [np.eye(n)[i] for i in range(min(n, max(starts - 1, 0)))]
    while len(seeds) < starts:
        seeds.append(rng.dirichlet(np.ones(n)))

    def sr(x):
        v = float(np.sqrt(max(x @ sigma @ x, 0.0)))
        if v <= 0.0:
            return -np.inf
        return float(x @ pi) / v

    best = 0.0
    for x in seeds:
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        if not np.any(x > 0):
            continue
        val = sr(x)
        if not np.isfinite(val):
            continue
        step = 1.0
        for _ in range(max_iter):
            sx = sigma @ x
            v = float(np.sqrt(max(x @ sx, 0.0)))
            if v <= 0.0:
                break
            grad = pi / v - (float(x @ pi) / v**3) * sx
            moved = False
            while step > 1e-16:
                cand = np.clip(x + step * grad, 0.0, 1.0)
                if np.any(cand > 0):
                    cand_val = sr(cand)
                    if cand_val > val + 1e-16:
                        x, val = cand, cand_val
                        moved = True
                        break
                step *= 0.5
            if not moved:
                break
            step = min(step * 2.0, 1e6)
            if np.linalg.norm(step * grad, np.inf) < tol:
                break
        best = max(best, val)
    return best
