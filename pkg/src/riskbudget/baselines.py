"""Comparison portfolios for the budgeted solver.

Two constructions that practitioners reach for first:

* a least-squares formulation that minimizes the spread of the per-asset
  risk-contribution-to-budget ratios directly on the simplex.  It is not
  convex, so it is solved by multi-start projected gradient descent and
  returned as the best local minimum found; and
* a naive two-step construction that pins the assets violating their
  bounds at those bounds and re-solves the unconstrained budgeting
  problem on the remaining sub-universe.

Both serve as foils: the least-squares portfolio can lose risk-budget
optimality under constraints (its volatility is not even monotone in a
tightening bound), and the naive portfolio breaks the equal-ratio
property for the assets it pinned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constraints as cons
from . import solvers
from .model import (
    AssetUniverse,
    Budgets,
    RiskDecomposition,
    RiskParams,
    ValidationError,
    covariance,
    decompose,
)
from .prox import dykstra, max_level, project_capped_simplex

# A least-squares run "matches" the budgets when the residual is this small
# relative to the squared risk of the returned portfolio.
LS_MATCH_RTOL = 1e-10

_PGD_STEP_FLOOR = 1e-16


@dataclass(frozen=True)
class LeastSquaresResult:
    """Best local minimum over all starts of the ratio-spread objective."""

    x: np.ndarray
    objective: float
    decomposition: RiskDecomposition
    matched: bool       # objective <= LS_MATCH_RTOL * R(x)^2
    starts: int


@dataclass(frozen=True)
class NaiveResult:
    """Pin-and-resolve portfolio with both views of its risk."""

    x: np.ndarray
    decomposition: RiskDecomposition        # full universe
    sub_decomposition: RiskDecomposition    # free assets only, scaled mass
    pinned: tuple                           # (asset index, weight) pairs
    free_mass: float


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = 1}."""
    v = np.asarray(v, dtype=float)
    return np.maximum(v - max_level(v, 1.0), 0.0)


def _ratio_objective(ctx, x):
    """h(x) = sum_i (RC_i/b_i - mean)^2 and its gradient.

    The level theta is eliminated analytically: at the optimum it is the
    mean ratio, and the centering also kills the mean-column term of the
    gradient (the centered residuals sum to zero).
    """
    sx = ctx.cov @ x
    var = float(x @ sx)
    if var <= 0.0:
        return math.inf, np.zeros_like(x)
    sig = math.sqrt(var)
    mr = -ctx.pi + ctx.c * sx / sig
    ratios = x * mr / ctx.b
    e = ratios - ratios.mean()
    h = float(e @ e)
    jac = np.diag(mr) + ctx.c * (x[:, None] * (ctx.cov / sig - np.outer(sx, sx) / (var * sig)))
    grad = 2.0 * (e / ctx.b) @ jac
    return h, grad


def _pgd(ctx, project, x0, max_iter, tol):
    """Monotone projected gradient descent with doubling/halving step."""
    x = project(np.asarray(x0, dtype=float))
    h, g = _ratio_objective(ctx, x)
    t = 1.0
    for _ in range(max_iter):
        cand = None
        while t > _PGD_STEP_FLOOR:
            trial = project(x - t * g)
            h_trial, g_trial = _ratio_objective(ctx, trial)
            if h_trial < h:
                cand = (trial, h_trial, g_trial)
                break
            t *= 0.5
        if cand is None:
            break  # no descent at floating-point step sizes: local minimum
        moved = float(np.linalg.norm(cand[0] - x))
        x, h, g = cand
        t *= 2.0
        if moved <= tol:
            break
    return x, h


def _start_portfolios(universe, budgets, starts, seed, current=None):
    seeds = []
    rp = budgets.b / universe.vol
    seeds.append(rp / rp.sum())
    seeds.append(np.full(universe.n, 1.0 / universe.n))
    if current is not None:
        w = np.asarray(current, dtype=float)
        seeds.append(w / w.sum())
    rng = np.random.default_rng(seed)
    while len(seeds) < starts:
        seeds.append(rng.dirichlet(np.ones(universe.n)))
    return seeds[:starts]


def least_squares_rb(universe: AssetUniverse, params: RiskParams, budgets: Budgets,
                     constraint_set: cons.ConstraintSet | None = None,
                     starts: int = 16, seed: int = 7, max_iter: int = 2000,
                     tol: float = 1e-12, current=None) -> LeastSquaresResult:
    """Minimize the spread of RC_i/b_i over the simplex intersected with
    the constraint set.

    Unlike the barrier solver, this formulation carries sum(x) = 1 and
    x >= 0 explicitly, so the projection always includes the simplex; the
    caller passes only the extra constraints.  The problem is not convex:
    ``starts`` seeds (budget-over-volatility, equal weights, the current
    portfolio when given, then Dirichlet draws from a fixed generator) are
    polished independently and the lowest objective wins.
    """
    cs = constraint_set or cons.ConstraintSet()
    if cs.atoms and cs.n != universe.n:
        raise ValidationError(
            f"constraints are {cs.n}-dimensional, universe has {universe.n} assets"
        )
    if starts < 1:
        raise ValidationError("starts must be >= 1")
    ctx = solvers._Ctx(universe, params, budgets)

    # The simplex and any box atoms share one exact projection; only the
    # coupled atoms need Dykstra cycles on top.
    box = cs.merged_box()
    if box is None:
        lo, hi = np.zeros(universe.n), np.full(universe.n, np.inf)
    else:
        lo, hi = np.maximum(box.lo, 0.0), box.hi

    def base(v):
        return project_capped_simplex(v, lo, hi)

    coupled = []
    for atom in cs.atoms:
        if isinstance(atom, cons.Box):
            continue
        if isinstance(atom, cons.LinearIneq):
            coupled.extend(atom.row_projectors())
        else:
            coupled.append(atom.projector())
    if coupled:
        ps = [base] + coupled

        def project(v):
            return dykstra(v, ps)
    else:
        project = base

    best_x, best_h = None, math.inf
    for x0 in _start_portfolios(universe, budgets, starts, seed, current):
        x, h = _pgd(ctx, project, x0, max_iter, tol)
        if h < best_h:
            best_x, best_h = x, h
    dec = decompose(best_x, universe, params)
    matched = best_h <= LS_MATCH_RTOL * dec.risk ** 2
    return LeastSquaresResult(x=best_x, objective=best_h, decomposition=dec,
                              matched=matched, starts=starts)


def naive_two_step(universe: AssetUniverse, params: RiskParams, budgets: Budgets,
                   pinned=None, options: solvers.SolverOptions | None = None) -> NaiveResult:
    """Pin the given assets, re-solve the budgeting problem on the rest.

    ``pinned`` maps asset index to fixed weight.  The free assets get the
    remaining mass, allocated by an unconstrained budgeted solve on the
    sub-universe with renormalized budgets.  The full-universe
    decomposition of the assembled portfolio shows what the shortcut
    costs: the pinned assets' risk shares drift off their budgets, and
    the free assets' shares are equalized only within the sub-universe.
    """
    pinned = dict(pinned or {})
    n = universe.n
    for i, w in pinned.items():
        if not 0 <= i < n:
            raise ValidationError(f"pinned asset {i} outside universe of size {n}")
        if w < 0:
            raise ValidationError(f"pinned weight {w} at asset {i} is negative")
    free = np.array(sorted(set(range(n)) - set(pinned)), dtype=int)
    mass = 1.0 - sum(pinned.values())
    if free.size == 0:
        raise ValidationError("every asset is pinned, nothing left to solve")
    if mass <= 0:
        raise ValidationError(f"pinned weights consume the whole portfolio (free mass {mass:.6g})")

    cov = covariance(universe)
    sub_cov = cov[np.ix_(free, free)]
    sub_mu = universe.mu[free] if universe.mu is not None else None
    sub_universe = AssetUniverse.from_covariance(sub_cov, mu=sub_mu, r=universe.r)
    sub_b = budgets.b[free]
    sub_budgets = Budgets(sub_b / sub_b.sum())

    report = solvers.solve(sub_universe, params, sub_budgets, options=options)
    y = report.x * mass

    x = np.zeros(n)
    x[free] = y
    for i, w in pinned.items():
        x[i] = w

    return NaiveResult(
        x=x,
        decomposition=decompose(x, universe, params),
        sub_decomposition=decompose(y, sub_universe, params),
        pinned=tuple(sorted(pinned.items())),
        free_mass=mass,
    )


def derive_pins(universe: AssetUniverse, params: RiskParams, budgets: Budgets,
                box: cons.Box, options: solvers.SolverOptions | None = None) -> dict:
    """Assets whose unconstrained budgeted weight violates the box, pinned
    at the violated bound (the first step of the naive construction)."""
    report = solvers.solve(universe, params, budgets, options=options)
    pins: dict[int, float] = {}
    for i, w in enumerate(report.x):
        if w < box.lo[i]:
            pins[i] = float(box.lo[i])
        elif w > box.hi[i]:
            pins[i] = float(box.hi[i])
    return pins
