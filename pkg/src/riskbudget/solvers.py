"""Risk budgeting solver stack.

The budgeted portfolio is found in two nested stages: an inner solver
minimizes the barrier Lagrangian

    L(x; lam) = R(x) - lam * sum_i b_i ln x_i        over x in Omega, x > 0

for a fixed multiplier lam, and an outer bisection adjusts lam until the
inner solution's weights sum to one.  The sum of weights is increasing in
lam, which is what makes bisection valid.

Inner solvers: cyclical coordinate descent (closed-form coordinate root,
with optional per-coordinate clamping when the constraints are a pure box),
damped Newton, and three operator-splitting variants for coupled
constraints (Newton, CCD or QP x-update).  Without constraints the problem
is solved once at lam = 1 and rescaled; the multiplier of the rescaled
solution is R(x) itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import constraints as cons
from . import prox, qp
from .model import (
    AssetUniverse,
    Budgets,
    DegeneratePortfolioError,
    RiskDecomposition,
    RiskParams,
    ValidationError,
    covariance,
    decompose,
    estimate_max_sharpe,
    risk_measure,
)

ALGOS = ("auto", "ccd", "admm-newton", "admm-ccd", "admm-qp")
START_POLICIES = ("rp", "ew", "cw")

# How far the solver lets an equivalent-encoding Lagrangian spread go before
# flagging the comparison as scaling-sensitive.
ENCODING_SPREAD_TOL = 1e-6

_BRACKET_EXPANSIONS = 10
_OUTER_MAX_ITER = 200

# The bisection can only certify |sum(x) - 1| <= eps_lambda if the inner
# solutions carry less noise than that, so the facade pushes the inner
# stopping tolerances this far below the outer target.
_INNER_SAFETY = 1e-2


class ConvergenceError(RuntimeError):
    """An iterative stage ran out of iterations or left its invariants."""

    def __init__(self, message: str, stage: str = "", iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.stage = stage
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class SolverOptions:
    """Tuning knobs shared by all solve paths.

    ``eps`` stops the inner solvers (squared sweep displacement for CCD and
    Newton, ||x - z|| for the splitting variants), ``eps_lambda`` stops the
    outer bisection on |sum(x) - 1|, and ``eps_inner`` stops the coordinate
    sweeps nested inside an ADMM x-update.
    """

    algo: str = "auto"
    eps: float = 1e-8
    eps_lambda: float = 1e-8
    eps_inner: float = 1e-8
    phi0: float = 1.0
    adaptive: bool = True
    mu_adapt: float = 1e6
    tau_up: float = 2.0
    tau_down: float = 2.0
    k_max: int = 20000
    m_a: float = 0.5
    m_b: float = 2.0
    accelerated: bool = True
    start: str = "rp"
    start_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValidationError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        for name in ("eps", "eps_lambda", "eps_inner", "phi0"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0")
        if not (self.m_a <= 1.0 <= self.m_b):
            raise ValidationError("bracket multipliers need m_a <= 1 <= m_b")
        if self.start not in START_POLICIES:
            raise ValidationError(f"start must be one of {START_POLICIES}, got {self.start!r}")
        if self.k_max < 1:
            raise ValidationError("k_max must be >= 1")


@dataclass(frozen=True)
class SolveReport:
    """Solution weights plus everything needed to audit them."""

    x: np.ndarray
    lam: float
    decomposition: RiskDecomposition
    lagrangian: float
    kkt: tuple[np.ndarray, np.ndarray] | None = None  # (lower, upper) multipliers
    iterations: dict = field(default_factory=dict)
    warnings: tuple = ()
    constraint_set: cons.ConstraintSet = cons.ConstraintSet()
    algo: str = "ccd"

    @property
    def vol(self) -> float:
        return self.decomposition.vol

    @property
    def risk(self) -> float:
        return self.decomposition.risk


@dataclass(frozen=True)
class SelectionResult:
    """Ranking of solve reports for the same budgets under different
    constraint encodings (or starts): lowest Lagrangian wins."""

    order: tuple            # report indices, best first
    best_index: int
    lagrangians: tuple
    spread: float           # max - min Lagrangian

    @property
    def scaling_sensitive(self) -> bool:
        return self.spread > ENCODING_SPREAD_TOL


class _Ctx:
    """Precomputed problem arrays shared by the inner solvers."""

    __slots__ = ("cov", "diag", "pi", "c", "b", "n")

    def __init__(self, universe: AssetUniverse, params: RiskParams, budgets: Budgets):
        if budgets.n != universe.n:
            raise ValidationError(
                f"budgets have {budgets.n} entries for {universe.n} assets"
            )
        self.cov = np.ascontiguousarray(covariance(universe))
        self.diag = np.ascontiguousarray(np.diag(self.cov))
        self.pi = universe.excess
        self.c = params.c
        self.b = budgets.b
        self.n = universe.n

    def objective(self, x, lam: float, phi: float = 0.0, v=None) -> float:
        sx = self.cov @ x
        val = -float(x @ self.pi) + self.c * math.sqrt(max(float(x @ sx), 0.0))
        val -= lam * float(self.b @ np.log(x))
        if phi > 0.0:
            val += 0.5 * phi * float(np.dot(x - v, x - v))
        return val

    def gradient(self, x, lam: float, phi: float = 0.0, v=None) -> np.ndarray:
        sx = self.cov @ x
        sig = math.sqrt(max(float(x @ sx), 0.0))
        g = -self.pi + self.c * sx / sig - lam * self.b / x
        if phi > 0.0:
            g = g + phi * (x - v)
        return g

    def hessian(self, x, lam: float, phi: float = 0.0) -> np.ndarray:
        sx = self.cov @ x
        var = max(float(x @ sx), 0.0)
        sig = math.sqrt(var)
        H = self.c * (self.cov / sig - np.outer(sx, sx) / (var * sig))
        H[np.diag_indices_from(H)] += lam * self.b / (x * x) + phi
        return H


# ---------------------------------------------------------------------------
# coordinate descent


def _ccd(ctx: _Ctx, lam: float, x0, lo=None, hi=None, eps: float = 1e-8,
         k_max: int = 20000, phi: float = 0.0, v=None, stage: str = "ccd"):
    """Cyclic closed-form coordinate updates on the barrier Lagrangian.

    With phi > 0 the quadratic penalty (phi/2)||x - v||^2 joins the
    objective (the x-update of the splitting solver).  With lo/hi the
    coordinate root is clamped into [lo_i, hi_i] after each update.
    Stops when the squared displacement of a full sweep is <= eps.

    Returns (x, sweeps).
    """
    cov, diag, pi, c, b, n = ctx.cov, ctx.diag, ctx.pi, ctx.c, ctx.b, ctx.n
    x = np.array(x0, dtype=float)
    s = cov @ x
    var = float(x @ s)
    clamped = lo is not None
    # overflow is detected via the isfinite check below, not left to numpy
    with np.errstate(over="ignore", invalid="ignore"):
        for sweep in range(1, k_max + 1):
            moved = 0.0
            for i in range(n):
                if not math.isfinite(var):
                    raise ConvergenceError(
                        "coordinate descent diverged: the iterates overflowed, "
                        "so the objective appears unbounded below",
                        stage=stage, iterations=sweep,
                    )
                sig = math.sqrt(var) if var > 0.0 else 0.0
                if sig <= 0.0:
                    raise DegeneratePortfolioError(
                        "portfolio volatility collapsed to zero during coordinate descent"
                    )
                alpha = c * diag[i]
                beta = c * (s[i] - x[i] * diag[i]) - pi[i] * sig
                gamma = -lam * b[i] * sig
                if phi > 0.0:
                    alpha += phi * sig
                    beta -= phi * v[i] * sig
                root = (-beta + math.sqrt(beta * beta - 4.0 * alpha * gamma)) / (2.0 * alpha)
                if clamped:
                    root = min(max(root, lo[i]), hi[i])
                d = root - x[i]
                if d != 0.0:
                    var += 2.0 * d * s[i] + d * d * diag[i]
                    s += d * cov[i]
                    x[i] = root
                    moved += d * d
            if moved <= eps:
                return x, sweep
            if sweep % 64 == 0:
                # refresh the running products, incremental updates drift
                s = cov @ x
                var = float(x @ s)
    raise ConvergenceError(
        f"coordinate descent did not converge in {k_max} sweeps "
        f"(last sweep displacement {moved:.3e})",
        stage=stage, iterations=k_max, residual=moved,
    )


def ccd_unconstrained(universe, params, budgets, lam: float, x_init=None,
                      eps: float = 1e-8, k_max: int = 20000) -> np.ndarray:
    """Barrier minimizer for fixed lam with no weight constraints (not rescaled)."""
    ctx = _Ctx(universe, params, budgets)
    x0 = default_start("rp", universe, budgets) if x_init is None else np.asarray(x_init, float)
    if np.any(x0 <= 0):
        raise ValidationError("coordinate descent needs a strictly positive start")
    x, _ = _ccd(ctx, lam, x0, eps=eps, k_max=k_max)
    return x


def ccd_separable(universe, params, budgets, lam: float, box: cons.Box,
                  x_init=None, eps: float = 1e-8, k_max: int = 20000) -> np.ndarray:
    """Barrier minimizer over a box: coordinate root then clamp."""
    lo, hi = _barrier_box(box)
    ctx = _Ctx(universe, params, budgets)
    x0 = default_start("rp", universe, budgets) if x_init is None else np.asarray(x_init, float)
    x0 = np.minimum(np.maximum(x0, np.maximum(lo, 1e-12)), hi)
    x, _ = _ccd(ctx, lam, x0, lo=lo, hi=hi, eps=eps, k_max=k_max, stage="ccd-separable")
    return x


def _barrier_box(box: cons.Box):
    """Box bounds adjusted for the barrier domain x > 0."""
    lo = np.maximum(box.lo, 0.0)
    hi = box.hi
    if np.any(hi <= 0):
        bad = int(np.argmax(hi <= 0))
        raise ValidationError(
            f"upper bound {hi[bad]} at asset {bad} pins the weight at or below "
            "zero, outside the logarithmic barrier's domain"
        )
    return lo, hi


# ---------------------------------------------------------------------------
# Newton


def _newton(ctx: _Ctx, lam: float, x0, phi: float = 0.0, v=None,
            eps: float = 1e-8, k_max: int = 20000, stage: str = "newton"):
    """Damped Newton on the (possibly penalized) barrier Lagrangian.

    Full step first, halved until the iterate stays positive and the
    objective decreases.  Singular Hessians fall back to a gradient step.
    Stops when the squared accepted step is <= eps.
    """
    x = np.array(x0, dtype=float)
    if np.any(x <= 0):
        raise ValidationError("Newton needs a strictly positive start")
    fx = ctx.objective(x, lam, phi, v)
    for it in range(1, k_max + 1):
        g = ctx.gradient(x, lam, phi, v)
        H = ctx.hessian(x, lam, phi)
        try:
            d = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            d = -g
        if float(g @ d) >= 0.0:  # not a descent direction, fall back
            d = -g
        t = 1.0
        accepted = False
        while t > 1e-14:
            cand = x + t * d
            if np.all(cand > 0.0):
                f_cand = ctx.objective(cand, lam, phi, v)
                if f_cand < fx:
                    x, fx = cand, f_cand
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            return x, it  # no descent left at floating-point resolution
        if float(np.dot(t * d, t * d)) <= eps:
            return x, it
    raise ConvergenceError(
        f"Newton did not converge in {k_max} iterations", stage=stage, iterations=k_max
    )


def newton_unconstrained(universe, params, budgets, lam: float, x_init=None,
                         eps: float = 1e-8, k_max: int = 20000) -> np.ndarray:
    """Newton counterpart of ccd_unconstrained (same minimizer, not rescaled)."""
    ctx = _Ctx(universe, params, budgets)
    x0 = default_start("rp", universe, budgets) if x_init is None else np.asarray(x_init, float)
    x, _ = _newton(ctx, lam, x0, eps=eps, k_max=k_max)
    return x


# ---------------------------------------------------------------------------
# operator splitting


def adaptive_penalty(r_norm: float, s_norm: float, phi: float, u,
                     mu: float = 1e6, tau_up: float = 2.0, tau_down: float = 2.0):
    """Residual-balancing penalty update, applied after the dual update.

    Keeps the squared primal residual ||r||^2 = ||x - z||^2 and squared dual
    residual ||s||^2 = ||phi*(z - z_prev)||^2 within a factor mu of each
    other; the dual variable is rescaled so that phi*u stays invariant.
    """
    r2, s2 = r_norm * r_norm, s_norm * s_norm
    if r2 > mu * s2:
        return phi * tau_up, u / tau_up
    if s2 > mu * r2:
        return phi / tau_down, u * tau_down
    return phi, u


def _admm(ctx: _Ctx, lam: float, cs: cons.ConstraintSet, x0, opts: SolverOptions,
          x_update: str):
    """Splitting solver for min R(x) - lam*sum(b ln x) s.t. x in Omega.

    x_update "newton"/"ccd": the barrier stays in the smooth block and the
    z-update projects onto Omega.  x_update "qp": the constrained block is
    the variance quadratic (volatility risk measure only) and the z-update
    is the barrier prox; lam is then on the variance scale, see
    :func:`solve` for the conversion.

    Returns (x, iterations).
    """
    x = np.array(x0, dtype=float)
    z = x.copy()
    u = np.zeros_like(x)
    phi = opts.phi0
    eps = opts.eps

    if x_update == "qp":
        A, B, C, D, lo, hi = cs.linear_parts()
        H_base = ctx.cov
        qp_active = None
    else:
        projector = lambda w: cons.project(cs, w)  # noqa: E731

    for k in range(1, opts.k_max + 1):
        if x_update == "qp":
            res = qp.solve_qp(H_base + phi * np.eye(ctx.n), -phi * (z - u),
                              A_eq=A, b_eq=B, C_ub=C, d_ub=D, lo=lo, hi=hi,
                              x0=x, active0=qp_active)
            x, qp_active = res.x, res.active
            z_prev = z
            z = prox.prox_log_barrier(x + u, lam, ctx.b, phi)
        else:
            v = z - u
            if x_update == "newton":
                x, _ = _newton(ctx, lam, x, phi=phi, v=v, eps=opts.eps_inner,
                               k_max=opts.k_max, stage="admm-x")
            else:
                x, _ = _ccd(ctx, lam, x, eps=opts.eps_inner, k_max=opts.k_max,
                            phi=phi, v=v, stage="admm-x")
            z_prev = z
            z = projector(x + u) if cs.atoms else x.copy()
        u = u + x - z
        r_norm = float(np.linalg.norm(x - z))
        s_norm = phi * float(np.linalg.norm(z - z_prev))
        # both blocks must have settled: the primal residual alone is blind
        # to progress when the projection is (near-)identity
        if r_norm <= eps and s_norm <= eps:
            return x, k
        if opts.adaptive:
            phi, u = adaptive_penalty(r_norm, s_norm, phi, u,
                                      mu=opts.mu_adapt, tau_up=opts.tau_up,
                                      tau_down=opts.tau_down)
    raise ConvergenceError(
        f"splitting solver did not converge in {opts.k_max} iterations "
        f"(primal residual {r_norm:.3e})",
        stage=f"admm-{x_update}", iterations=opts.k_max, residual=r_norm,
    )


def admm(universe, params, budgets, lam: float, constraint_set, x_init=None,
         split: str = "barrier-in-f", x_update: str = "newton",
         options: SolverOptions | None = None) -> np.ndarray:
    """One splitting solve at fixed lam (library-level access; the facade
    :func:`solve` adds the outer loop and the variance-scale conversion)."""
    opts = options or SolverOptions()
    ctx = _Ctx(universe, params, budgets)
    if split not in ("barrier-in-f", "barrier-in-g"):
        raise ValidationError(f"unknown split {split!r}")
    if split == "barrier-in-g":
        if x_update != "qp":
            raise ValidationError("the barrier-in-g split uses the qp x-update")
        if np.any(ctx.pi != 0.0):
            raise ValidationError(
                "the quadratic x-update requires the pure volatility risk "
                "measure (expected returns equal to the risk-free rate)"
            )
        upd = "qp"
    else:
        if x_update not in ("newton", "ccd"):
            raise ValidationError("barrier-in-f x-update must be newton or ccd")
        upd = x_update
    x0 = default_start(opts.start, universe, budgets, opts.start_weights) \
        if x_init is None else np.asarray(x_init, float)
    x, _ = _admm(ctx, lam, constraint_set, x0, opts, upd)
    return x


# ---------------------------------------------------------------------------
# outer loop


def bisection(solve_inner, a: float, b: float, eps_lambda: float = 1e-8,
              accelerated: bool = True, x0=None):
    """Find lam with sum(x*(lam)) = 1 by bisection on [a, b].

    ``solve_inner(lam, x_start)`` returns the inner minimizer.  The weight
    sum is increasing in lam: a deficit moves the lower end up.  If the
    bracket does not straddle the root it is expanded (upper end doubled or
    lower end halved, up to 10 times each).  Accelerated mode warm-starts
    every inner solve from the previous solution.

    Returns (lam, x, outer_iterations).
    """
    if not a < b:
        raise ValidationError(f"need a < b, got [{a}, {b}]")

    start = x0
    def run(lam, warm):
        nonlocal start
        x = solve_inner(lam, warm)
        if accelerated:
            start = x
        return x

    xa = run(a, start)
    fa = float(np.sum(xa)) - 1.0
    if abs(fa) <= eps_lambda:
        return a, xa, 1
    xb = run(b, start)
    fb = float(np.sum(xb)) - 1.0
    if abs(fb) <= eps_lambda:
        return b, xb, 2
    outer = 2
    for _ in range(2 * _BRACKET_EXPANSIONS):
        if fa > 0.0:  # even the smallest multiplier oversizes the portfolio
            a *= 0.5
            xa = run(a, start)
            fa = float(np.sum(xa)) - 1.0
            outer += 1
        elif fb < 0.0:
            b *= 2.0
            xb = run(b, start)
            fb = float(np.sum(xb)) - 1.0
            outer += 1
        else:
            break
    if fa > 0.0 or fb < 0.0:
        raise ConvergenceError(
            f"bisection bracket [{a:.6g}, {b:.6g}] does not straddle a "
            f"unit-sum solution (endpoint sums {1 + fa:.6g}, {1 + fb:.6g})",
            stage="bisection", iterations=outer,
        )
    for _ in range(_OUTER_MAX_ITER):
        lam = 0.5 * (a + b)
        x = run(lam, start)
        gap = float(np.sum(x)) - 1.0
        outer += 1
        if abs(gap) <= eps_lambda:
            return lam, x, outer
        if gap < 0.0:
            a = lam
        else:
            b = lam
    raise ConvergenceError(
        f"bisection did not reach |sum(x) - 1| <= {eps_lambda:g} in "
        f"{_OUTER_MAX_ITER} iterations (last gap {gap:.3e})",
        stage="bisection", iterations=outer, residual=abs(gap),
    )


def kkt_multipliers(x, lam: float, budgets: Budgets, decomposition: RiskDecomposition):
    """Bound multipliers recovered from the risk contributions.

    lower_i = max((RC_i - lam*b_i)/x_i, 0): a positive value means the lower
    bound props the weight up and the asset carries excess risk share;
    upper_i mirrors it.  At interior assets RC_i = lam*b_i and both vanish.
    """
    x = np.asarray(x, dtype=float)
    rc = decomposition.rc
    lower = np.maximum((rc - lam * budgets.b) / x, 0.0)
    upper = np.maximum((lam * budgets.b - rc) / x, 0.0)
    return lower, upper


def default_start(policy: str, universe: AssetUniverse, budgets: Budgets,
                  weights=None) -> np.ndarray:
    """Starting portfolio: naive risk parity (budget over volatility),
    equal weights, or the supplied current weights."""
    if policy == "rp":
        raw = budgets.b / universe.vol
        return raw / raw.sum()
    if policy == "ew":
        return np.full(universe.n, 1.0 / universe.n)
    if policy == "cw":
        if weights is None:
            raise ValidationError("start policy 'cw' needs explicit weights")
        w = np.asarray(weights, dtype=float)
        if w.size != universe.n or np.any(w <= 0):
            raise ValidationError("'cw' start weights must be strictly positive, one per asset")
        return w / w.sum()
    raise ValidationError(f"unknown start policy {policy!r}")


def coordinate_prox_update(universe, params, budgets, lam: float, x, i: int,
                           eta: float, lo: float = -np.inf, hi: float = np.inf) -> float:
    """Alternative per-coordinate rule: project the gradient step.

    Returns P_[lo_i, hi_i](x_i - eta * g_i) with g_i the barrier
    Lagrangian's partial derivative.  Fixed points coincide with the
    closed-form coordinate root inside its clamp; the closed form is the
    default because it needs no stepsize.
    """
    if eta <= 0:
        raise ValidationError("eta must be > 0")
    ctx = _Ctx(universe, params, budgets)
    x = np.asarray(x, dtype=float)
    g = ctx.gradient(x, lam)
    stepped = x[i] - eta * g[i]
    return float(min(max(stepped, lo), hi))


# ---------------------------------------------------------------------------
# facade


def solve(universe: AssetUniverse, params: RiskParams, budgets: Budgets,
          constraint_set: cons.ConstraintSet | None = None,
          options: SolverOptions | None = None) -> SolveReport:
    """Compute the constrained risk budgeting portfolio.

    Routing: no constraints -> one coordinate-descent solve plus rescaling;
    pure box -> clamped coordinate descent inside the bisection; anything
    coupled -> operator splitting inside the bisection.  The report carries
    the multiplier, decomposition, Lagrangian value, bound multipliers when
    the constraints are a box, and any advisory warnings.
    """
    opts = options or SolverOptions()
    cs = constraint_set or cons.ConstraintSet()
    if cs.atoms and cs.n != universe.n:
        raise ValidationError(f"constraints are {cs.n}-dimensional, universe has {universe.n} assets")
    ctx = _Ctx(universe, params, budgets)
    warnings: list[str] = []

    existence_note = ""
    if np.any(ctx.pi != 0.0):
        sr_plus = estimate_max_sharpe(universe)
        if params.c <= sr_plus:
            existence_note = (
                f"existence/uniqueness not guaranteed: c = {params.c:.6g} does not "
                f"exceed the estimated maximum Sharpe ratio {sr_plus:.6g}"
            )
            warnings.append(existence_note)
    tiny = budgets.tiny_entries()
    if tiny.size:
        warnings.append(
            f"budgets below {1e-6:g} at assets {tiny.tolist()}: solutions become "
            "numerically fragile as budgets approach zero"
        )

    x_start = default_start(opts.start, universe, budgets, opts.start_weights)
    iterations: dict[str, int] = {}

    # Stopping tolerances for the solves nested inside the bisection.  The
    # sweep-displacement test of CCD is quadratic in the distance moved and
    # the ADMM residuals are linear in it, hence the different powers.
    ccd_eps = min(opts.eps, (_INNER_SAFETY * opts.eps_lambda) ** 2)
    admm_eps = min(opts.eps, _INNER_SAFETY * opts.eps_lambda)

    # Unconstrained budgeted portfolio: solve once at lam = 1 and rescale.
    # Its risk value seeds the bisection bracket for the constrained paths.
    # When c does not dominate the maximum Sharpe ratio this problem has no
    # minimizer, so a diverging solve is reported with that diagnosis.
    try:
        x_raw, sweeps = _ccd(ctx, 1.0, x_start, eps=ccd_eps, k_max=opts.k_max,
                             stage="unconstrained")
    except ConvergenceError as err:
        if existence_note:
            raise ConvergenceError(
                f"{err} ({existence_note})", stage="unconstrained"
            ) from err
        raise
    iterations["unconstrained_sweeps"] = sweeps
    x_rb = x_raw / x_raw.sum()
    lam_rb = risk_measure(x_rb, universe, params)
    if not lam_rb > 0.0:  # also catches nan from a diverged inner solve
        detail = f" ({existence_note})" if existence_note else ""
        raise ValidationError(
            "risk measure is non-positive at the unconstrained solution; "
            f"the trade-off parameter c is too small for this universe{detail}"
        )

    algo = opts.algo
    if algo == "auto":
        algo = "ccd" if cs.separable else "admm-newton"
    if algo == "ccd" and not cs.separable:
        raise ValidationError(
            "coordinate descent handles only separable (box) constraints; "
            "pick one of the admm variants for coupled constraints"
        )

    if not cs.atoms and algo == "ccd":
        x_star, lam_star = x_rb, lam_rb
        inner_used = "ccd"
    else:
        inner_calls = {"count": 0, "iters": 0}
        lam_scale = 1.0

        if algo == "ccd":
            lo, hi = _barrier_box(cs.merged_box())
            floor = np.maximum(lo, 1e-12)

            def solve_inner(lam, warm):
                w = np.minimum(np.maximum(warm, floor), hi)
                x, its = _ccd(ctx, lam, w, lo=lo, hi=hi, eps=ccd_eps,
                              k_max=opts.k_max, stage="ccd-separable")
                inner_calls["count"] += 1
                inner_calls["iters"] += its
                return x
        else:
            upd = {"admm-newton": "newton", "admm-ccd": "ccd", "admm-qp": "qp"}[algo]
            if upd == "qp":
                if np.any(ctx.pi != 0.0):
                    raise ValidationError(
                        "admm-qp requires the pure volatility risk measure "
                        "(expected returns equal to the risk-free rate)"
                    )
                if cs.has_l1_ball():
                    warnings.append(
                        "admm-qp cannot host an l1-ball constraint in its "
                        "quadratic block; fell back to the newton x-update"
                    )
                    upd = "newton"
                else:
                    # the quadratic block minimizes the variance, whose
                    # multiplier lives on a different scale: lam_B =
                    # sigma(x) * lam / c at the solution
                    lam_scale = decompose(x_rb, universe, params).vol / params.c

            admm_opts = replace(
                opts, eps=admm_eps,
                eps_inner=min(opts.eps_inner, (_INNER_SAFETY * admm_eps) ** 2),
            )

            def solve_inner(lam, warm):
                x, its = _admm(ctx, lam, cs, warm, admm_opts, upd)
                inner_calls["count"] += 1
                inner_calls["iters"] += its
                return x

        a = opts.m_a * lam_rb * lam_scale
        b = opts.m_b * lam_rb * lam_scale
        lam_star, x_star, outer = bisection(
            solve_inner, a, b, eps_lambda=opts.eps_lambda,
            accelerated=opts.accelerated, x0=x_start,
        )
        if lam_scale != 1.0:
            sig_star = math.sqrt(max(float(x_star @ ctx.cov @ x_star), 0.0))
            lam_star = params.c * lam_star / sig_star
        iterations["outer"] = outer
        iterations["inner_solves"] = inner_calls["count"]
        iterations["inner_iterations"] = inner_calls["iters"]
        inner_used = algo

    dec = decompose(x_star, universe, params)
    gap = abs(float(np.sum(x_star)) - 1.0)
    if gap > 10.0 * opts.eps_lambda:
        raise ConvergenceError(
            f"solution weights sum to 1 {gap:+.3e}", stage="facade", residual=gap
        )
    if cs.atoms:
        membership = cons.contains(cs, x_star, tol=1e-6)
        if not membership.ok:
            raise ConvergenceError(
                f"solution violates the constraints: residuals {membership.residuals}",
                stage="facade", residual=max(membership.residuals),
            )

    kkt = None
    if cs.atoms and cs.separable:
        kkt = kkt_multipliers(x_star, lam_star, budgets, dec)

    lagrangian = dec.risk - lam_star * float(budgets.b @ np.log(np.maximum(x_star, 1e-300)))
    return SolveReport(
        x=x_star, lam=lam_star, decomposition=dec, lagrangian=lagrangian,
        kkt=kkt, iterations=iterations, warnings=tuple(warnings),
        constraint_set=cs, algo=inner_used,
    )


def select_best(reports) -> SelectionResult:
    """Rank solves of the same problem by Lagrangian value, lowest first.

    Equivalent constraint encodings can genuinely disagree (the constraint
    set interacts with the risk measure's scale invariance), and the lowest
    Lagrangian identifies the candidate global solution.
    """
    reports = list(reports)
    if not reports:
        raise ValidationError("select_best needs at least one report")
    lags = tuple(r.lagrangian for r in reports)
    order = tuple(int(i) for i in np.argsort(lags, kind="stable"))
    return SelectionResult(
        order=order,
        best_index=order[0],
        lagrangians=lags,
        spread=float(max(lags) - min(lags)),
    )
