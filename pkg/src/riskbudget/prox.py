"""Proximal operators and Euclidean projections onto simple convex sets,
plus Dykstra's alternating-correction algorithm for intersections.

A projector here is any callable v -> P(v) returning the Euclidean
projection onto one convex set; closures built from the functions below
satisfy that contract.  All operators are pure functions.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Projector = Callable[[np.ndarray], np.ndarray]

DYKSTRA_KMAX = 10000
# The textbook loop stops on exact equality of consecutive sweep iterates,
# which never triggers in floating point; this is the practical stall level.
DYKSTRA_STALL = 1e-12
DYKSTRA_TOL = 1e-10


class DykstraNonConvergence(RuntimeError):
    """Dykstra failed to reach the requested residual.

    Carries the last iterate and the per-set residuals so callers can
    diagnose empty or badly conditioned intersections.
    """

    def __init__(self, message: str, x: np.ndarray, residuals: np.ndarray, iterations: int):
        super().__init__(message)
        self.x = x
        self.residuals = residuals
        self.iterations = iterations


def prox_log_barrier(v, lam: float, b, phi: float) -> np.ndarray:
    """Prox of -(lam/phi) * sum(b_i ln z_i): positive root of
    phi z^2 - phi v z - lam b = 0, elementwise.

    Args:
        v: point being proximated.
        lam: barrier weight, > 0.
        b: per-coordinate budgets, > 0 (array-like).
        phi: penalty parameter, > 0.
    """
    if lam <= 0 or phi <= 0:
        raise ValueError("prox_log_barrier requires lam > 0 and phi > 0")
    v = np.asarray(v, dtype=float)
    b = np.broadcast_to(np.asarray(b, dtype=float), v.shape)
    if np.any(b <= 0):
        raise ValueError("prox_log_barrier requires positive budgets")
    return (phi * v + np.sqrt(phi * phi * v * v + 4.0 * phi * lam * b)) / (2.0 * phi)


def project_box(v, lo, hi) -> np.ndarray:
    """Componentwise truncation onto {lo <= x <= hi}."""
    v = np.asarray(v, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), v.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), v.shape)
    if np.any(lo > hi):
        bad = int(np.argmax(lo - hi))
        raise ValueError(f"invalid box: lo[{bad}] = {lo[bad]} > hi[{bad}] = {hi[bad]}")
    return np.minimum(np.maximum(v, lo), hi)


def project_halfspace(v, c, d: float) -> np.ndarray:
    """Projection onto {x : c'x <= d}: v - (c'v - d)_+ c / ||c||^2."""
    v = np.asarray(v, dtype=float)
    c = np.asarray(c, dtype=float)
    nrm2 = float(c @ c)
    if nrm2 <= 0.0:
        raise ValueError("half-space normal must be nonzero")
    excess = float(c @ v) - d
    if excess <= 0.0:
        return v.copy()
    return v - (excess / nrm2) * c


def project_affine(v, A, B) -> np.ndarray:
    """Projection onto {x : Ax = B} for full-row-rank A: v - pinv(A)(Av - B).

    The correction uses an SVD-backed least-squares solve (rank revealing);
    rank-deficient systems are rejected.
    """
    v = np.asarray(v, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_1d(np.asarray(B, dtype=float))
    if A.shape[0] != B.size:
        raise ValueError(f"A has {A.shape[0]} rows but B has {B.size} entries")
    resid = A @ v - B
    corr, _, rank, _ = np.linalg.lstsq(A, resid, rcond=None)
    if rank < A.shape[0]:
        raise ValueError(
            f"affine system is rank deficient (rank {rank} < {A.shape[0]} rows)"
        )
    return v - corr


def max_level(v, lam: float) -> float:
    """The level s* with sum((v_i - s*)_+) = lam, solved exactly by sorting.

    The sum is continuous, piecewise linear and decreasing in s, so the root
    is unique for lam > 0; for lam = 0 the smallest root max(v) is returned.
    When even s = min(v) leaves the sum below lam, the closed form
    s* = (sum(v) - lam)/n applies.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    ws = np.sort(v)[::-1]
    csum = np.cumsum(ws)
    ks = np.arange(1, n + 1)
    cand = (csum - lam) / ks
    # the k-term expression is valid while the level stays above the next
    # sorted value; take the first k where that holds
    for k in range(1, n):
        if cand[k - 1] >= ws[k]:
            return float(cand[k - 1])
    return float(cand[n - 1])


def prox_max(v, lam: float) -> np.ndarray:
    """Prox of lam * max(x): min(v, s*) with sum((v_i - s*)_+) = lam."""
    if lam < 0:
        raise ValueError("prox_max requires lam >= 0")
    v = np.asarray(v, dtype=float)
    return np.minimum(v, max_level(v, lam))


def prox_l1(v, lam: float) -> np.ndarray:
    """Soft thresholding: (|v| - lam)_+ * sign(v)."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def prox_l2(v, lam: float) -> np.ndarray:
    """Block soft thresholding: (1 - lam / max(lam, ||v||_2)) v.

    Shrinks the norm by lam and vanishes once ||v|| <= lam.
    """
    v = np.asarray(v, dtype=float)
    nrm = float(np.linalg.norm(v))
    if nrm <= lam:
        return np.zeros_like(v)
    return (1.0 - lam / nrm) * v


def prox_linf(v, lam: float) -> np.ndarray:
    """Prox of lam * ||x||_inf via the max-function prox on |v|.

    The level is floored at zero: once lam >= ||v||_1 the prox is the zero
    vector (the norm, unlike the plain max, is bounded below by zero).
    """
    v = np.asarray(v, dtype=float)
    s = max(max_level(np.abs(v), lam), 0.0)
    return np.sign(v) * np.minimum(np.abs(v), s)


def project_l1_ball(v, center, radius: float) -> np.ndarray:
    """Projection onto {x : ||x - center||_1 <= radius}.

    Uses the Moreau decomposition against the inf-norm prox after
    translating by the center; points already inside are returned as is,
    otherwise the output lands exactly on the sphere.
    """
    if radius < 0:
        raise ValueError("l1 ball radius must be >= 0")
    v = np.asarray(v, dtype=float)
    center = np.broadcast_to(np.asarray(center, dtype=float), v.shape)
    w = v - center
    if np.abs(w).sum() <= radius:
        return v.copy()
    s = max_level(np.abs(w), radius)  # > 0 here since ||w||_1 > radius
    return center + np.sign(w) * np.maximum(np.abs(w) - s, 0.0)


def project_l2_ball(v, center, radius: float) -> np.ndarray:
    """Projection onto {x : ||x - center||_2 <= radius}."""
    if radius < 0:
        raise ValueError("l2 ball radius must be >= 0")
    v = np.asarray(v, dtype=float)
    center = np.broadcast_to(np.asarray(center, dtype=float), v.shape)
    w = v - center
    nrm = float(np.linalg.norm(w))
    if nrm <= radius:
        return v.copy()
    return center + (radius / nrm) * w


def project_capped_simplex(v, lo, hi, total: float = 1.0) -> np.ndarray:
    """Projection onto {x : lo <= x <= hi, sum(x) = total}.

    The projection is clip(v - tau, lo, hi) for the scalar tau making the
    sum hit the target; the sum is a non-increasing piecewise-linear
    function of tau, so tau is found exactly by walking its breakpoints.
    """
    v = np.asarray(v, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), v.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), v.shape)
    if np.any(lo > hi):
        raise ValueError("capped simplex needs lo <= hi")
    if lo.sum() > total or hi.sum() < total:
        raise ValueError(
            f"capped simplex {{sum(x) = {total}}} is empty for these bounds "
            f"(sum lo = {lo.sum():.6g}, sum hi = {hi.sum():.6g})"
        )

    def gap(tau):
        return float(np.clip(v - tau, lo, hi).sum()) - total

    # Infinite bounds contribute no breakpoint; beyond the finite breakpoints
    # the gap is linear with slope -(number of coordinates still unclipped),
    # which is the count of infinite bounds on that side.
    points = np.unique(np.concatenate([v - hi, v - lo]))
    points = points[np.isfinite(points)]
    if points.size == 0:
        tau = (v.sum() - total) / v.size
        return v - tau
    gaps = np.array([gap(t) for t in points])
    k = int(np.searchsorted(-gaps, 0.0, side="left"))  # first gap <= 0
    if k >= points.size:
        free = int(np.isinf(lo).sum())
        tau = points[-1] + (gaps[-1] / free if free else 0.0)
    elif gaps[k] == 0.0:
        tau = points[k]
    elif k == 0:
        free = int(np.isinf(hi).sum())
        tau = points[0] + (gaps[0] / free if free else 0.0)
    else:
        g0, g1 = gaps[k - 1], gaps[k]
        tau = points[k - 1] + (points[k] - points[k - 1]) * g0 / (g0 - g1)
    return np.clip(v - tau, lo, hi)


def dykstra(
    v,
    projectors: Sequence[Projector],
    k_max: int = DYKSTRA_KMAX,
    tol: float = DYKSTRA_TOL,
) -> np.ndarray:
    """Projection of v onto the intersection of convex sets.

    Sweeps the projectors in order, each with its own correction variable;
    plain alternating projection would converge to a point of the
    intersection but not to the projection of v, the corrections make it
    Dykstra's algorithm.  Stops once a sweep moves the iterate by at most
    ``DYKSTRA_STALL`` (inf-norm) and every set's residual ||x - P_j(x)|| is
    within tol.

    Raises:
        DykstraNonConvergence: k_max exhausted without meeting the residual
            tolerance (an empty intersection shows up this way).
    """
    x = np.asarray(v, dtype=float).copy()
    if len(projectors) == 0:
        return x
    if len(projectors) == 1:
        return projectors[0](x)
    corrections = [np.zeros_like(x) for _ in projectors]
    for k in range(1, k_max + 1):
        x_start = x.copy()
        for j, proj in enumerate(projectors):
            shifted = x + corrections[j]
            x = proj(shifted)
            corrections[j] = shifted - x
        if float(np.abs(x - x_start).max()) <= DYKSTRA_STALL:
            residuals = np.array([float(np.linalg.norm(x - p(x))) for p in projectors])
            if float(residuals.max()) <= tol:
                return x
            # stalled but not feasible yet: keep sweeping, the hard stop is
            # k_max (empty intersections never stall, their corrections grow)
    residuals = np.array([float(np.linalg.norm(x - p(x))) for p in projectors])
    if float(residuals.max()) <= tol:
        return x
    raise DykstraNonConvergence(
        f"no convergence in {k_max} sweeps, max residual {residuals.max():.3e}",
        x=x, residuals=residuals, iterations=k_max,
    )
