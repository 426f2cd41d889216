"""Dense active-set solver for strictly convex quadratic programs

    minimize    0.5 x'Hx + q'x
    subject to  A x = b,  C x <= d,  lo <= x <= hi

with H symmetric positive definite.  Sized for desk-scale problems: every
iteration solves one KKT system from scratch.  A feasible starting point is
found with a phase-1 LP (scipy's HiGHS) when the caller cannot supply one;
warm starts reuse the previous solution and working set, which is what the
penalized quadratic subproblems inside ADMM need.

Also provides the projection special case (H = I, q = -v), used as the
brute-force oracle that alternating-projection results are checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

FEAS_TOL = 1e-9
MULT_TOL = 1e-10
RATIO_TOL = 1e-12


class QPError(RuntimeError):
    pass


class QPInfeasible(QPError):
    pass


@dataclass
class QPResult:
    x: np.ndarray
    mult_eq: np.ndarray
    mult_ineq: np.ndarray  # one per stacked inequality row, >= 0
    active: list = field(default_factory=list)
    iterations: int = 0


def _stack_inequalities(n, C_ub, d_ub, lo, hi):
    """Fold box bounds into the inequality stack G x <= h (finite rows only)."""
    rows, rhs = [], []
    if C_ub is not None:
        C_ub = np.atleast_2d(np.asarray(C_ub, dtype=float))
        d_ub = np.atleast_1d(np.asarray(d_ub, dtype=float))
        rows.append(C_ub)
        rhs.append(d_ub)
    if hi is not None:
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
        keep = np.isfinite(hi)
        if keep.any():
            rows.append(np.eye(n)[keep])
            rhs.append(hi[keep])
    if lo is not None:
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
        keep = np.isfinite(lo)
        if keep.any():
            rows.append(-np.eye(n)[keep])
            rhs.append(-lo[keep])
    if rows:
        return np.vstack(rows), np.concatenate(rhs)
    return np.zeros((0, n)), np.zeros(0)


def _phase1(n, A, b, G, h):
    """Feasible point via a zero-objective LP."""
    res = linprog(
        c=np.zeros(n),
        A_ub=G if G.shape[0] else None,
        b_ub=h if G.shape[0] else None,
        A_eq=A if A.shape[0] else None,
        b_eq=b if A.shape[0] else None,
        bounds=[(None, None)] * n,
        method="highs",
    )
    if not res.success:
        raise QPInfeasible(f"constraint set is infeasible ({res.message})")
    return np.asarray(res.x, dtype=float)


def _kkt_solve(H, q, A_rows, b_rows):
    """Optimum of the equality-constrained QP min 0.5 x'Hx + q'x, A_rows x = b_rows."""
    n = H.shape[0]
    m = A_rows.shape[0]
    if m == 0:
        return np.linalg.solve(H, -q), np.zeros(0)
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = A_rows.T
    K[n:, :n] = A_rows
    rhs = np.concatenate([-q, b_rows])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        # dependent active rows: x stays unique, multipliers become the
        # minimum-norm representative, fine for drop decisions
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def solve_qp(
    H,
    q,
    A_eq=None,
    b_eq=None,
    C_ub=None,
    d_ub=None,
    lo=None,
    hi=None,
    x0=None,
    active0=None,
    max_iter: int = 500,
) -> QPResult:
    """Primal active-set method.  See module docstring for the problem form.

    Args:
        x0: optional warm-start point; dropped if not feasible.
        active0: optional warm-start working set (indices into the stacked
            inequality rows of a previous call with the same constraints).
    """
    H = np.asarray(H, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    A = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))
    G, h = _stack_inequalities(n, C_ub, d_ub, lo, hi)

    x = None
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        eq_ok = A.shape[0] == 0 or np.abs(A @ x0 - b).max() <= FEAS_TOL
        in_ok = G.shape[0] == 0 or (G @ x0 - h).max() <= FEAS_TOL
        if eq_ok and in_ok:
            x = x0.copy()
    if x is None:
        if G.shape[0] == 0 and A.shape[0] == 0:
            return QPResult(x=np.linalg.solve(H, -q), mult_eq=np.zeros(0),
                            mult_ineq=np.zeros(0))
        x = _phase1(n, A, b, G, h)

    if active0:
        work = [i for i in active0 if i < G.shape[0] and abs(G[i] @ x - h[i]) <= FEAS_TOL]
    else:
        work = [] if G.shape[0] == 0 else list(np.nonzero(np.abs(G @ x - h) <= FEAS_TOL)[0])

    for it in range(1, max_iter + 1):
        rows = np.vstack([A, G[work]]) if work else A
        rhs = np.concatenate([b, h[work]]) if work else b
        x_hat, mult = _kkt_solve(H, q, rows, rhs)
        p = x_hat - x
        if float(np.abs(p).max(initial=0.0)) <= 1e-11:
            ineq_mult = mult[A.shape[0]:]
            if ineq_mult.size == 0 or ineq_mult.min() >= -MULT_TOL:
                full = np.zeros(G.shape[0])
                for slot, row in enumerate(work):
                    full[row] = max(ineq_mult[slot], 0.0)
                return QPResult(x=x_hat, mult_eq=mult[:A.shape[0]],
                                mult_ineq=full, active=list(work), iterations=it)
            work.pop(int(np.argmin(ineq_mult)))
            continue
        # ratio test over inequality rows not in the working set
        alpha, blocker = 1.0, -1
        if G.shape[0]:
            outside = np.setdiff1d(np.arange(G.shape[0]), work, assume_unique=False)
            gp = G[outside] @ p
            slack = h[outside] - G[outside] @ x
            for idx, gpi, si in zip(outside, gp, slack):
                if gpi > RATIO_TOL:
                    ratio = max(si, 0.0) / gpi
                    if ratio < alpha - 1e-14:
                        alpha, blocker = ratio, int(idx)
        x = x + alpha * p
        if blocker >= 0:
            work.append(blocker)
    raise QPError(f"active-set loop did not terminate in {max_iter} iterations")


def project_qp(v, A_eq=None, b_eq=None, C_ub=None, d_ub=None, lo=None, hi=None) -> np.ndarray:
    """Euclidean projection of v onto {Ax=b, Cx<=d, lo<=x<=hi}: the H=I case."""
    v = np.asarray(v, dtype=float)
    res = solve_qp(np.eye(v.size), -v, A_eq=A_eq, b_eq=b_eq,
                   C_ub=C_ub, d_ub=d_ub, lo=lo, hi=hi)
    return res.x
