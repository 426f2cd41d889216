"""Problem files and result documents.

Problems are JSON with percent units throughout, matching how allocation
tables are printed: volatilities and weights as ``15`` for 15%, budgets
summing to 100, linear-constraint right-hand sides in percent.  All
numbers are converted to fractions on parse and back to percent on emit,
so a file can be round-tripped losslessly.  Unknown keys anywhere in the
document are rejected: a typo should fail loudly, not silently default.

A correlation matrix may be given either as fractions (unit diagonal) or
in percent (diagonal of 100); the diagonal disambiguates.  Lower-triangular
input is accepted and mirrored.  A covariance matrix is in percent squared
(an asset with 15% volatility has 225 on the diagonal).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .constraints import AffineEq, Box, ConstraintSet, L1Ball, LinearIneq
from .model import AssetUniverse, Budgets, RiskParams, ValidationError
from .solvers import SolveReport, SolverOptions

_PROBLEM_KEYS = {"assets", "correlation", "covariance", "risk", "budgets",
                 "constraints", "options", "current"}
_ASSET_KEYS = {"names", "vol", "mu"}
_RISK_KEYS = {"c", "r"}
_BOX_KEYS = {"type", "lower", "upper"}
_LINEAR_KEYS = {"type", "rows"}
_ROW_KEYS = {"coeffs", "op", "rhs"}
_TURNOVER_KEYS = {"type", "center", "tau"}
_OPTION_KEYS = {f.name for f in fields(SolverOptions)}


class ProblemFormatError(ValueError):
    """A problem document that does not follow the schema."""


@dataclass(frozen=True)
class Problem:
    """Parsed problem: model inputs plus presentation metadata."""

    universe: AssetUniverse
    params: RiskParams
    budgets: Budgets
    constraint_set: ConstraintSet
    options: SolverOptions
    names: tuple
    current: np.ndarray | None = None   # reference portfolio (fractions)

    @property
    def n(self) -> int:
        return self.universe.n


def _reject_unknown(mapping, allowed, where):
    unknown = set(mapping) - allowed
    if unknown:
        raise ProblemFormatError(
            f"unknown key(s) {sorted(unknown)} in {where}; allowed: {sorted(allowed)}"
        )


def _vector(value, n, where, scale=0.01):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (n,):
        raise ProblemFormatError(f"{where} must be a flat list of {n} numbers")
    return arr * scale


def _mirror_lower_triangle(rows, where):
    """Square matrix from either full rows or lower-triangular rows."""
    if not isinstance(rows, list) or not rows:
        raise ProblemFormatError(f"{where} must be a non-empty list of rows")
    n = len(rows)
    mat = np.zeros((n, n))
    for i, row in enumerate(rows):
        row = np.asarray(row, dtype=float)
        if row.shape == (n,):
            mat[i] = row
        elif row.shape == (i + 1,):
            mat[i, : i + 1] = row
        else:
            raise ProblemFormatError(
                f"row {i + 1} of {where} has {row.size} entries; expected "
                f"{n} (full) or {i + 1} (lower triangle)"
            )
    lower = np.tril(mat, -1)
    upper = np.triu(mat, 1)
    if not upper.any():
        mat = mat + lower.T
    elif not np.allclose(lower, upper.T, atol=1e-12):
        raise ProblemFormatError(f"{where} is neither symmetric nor lower-triangular")
    return mat


def _parse_correlation(rows):
    corr = _mirror_lower_triangle(rows, "correlation")
    diag = np.diag(corr)
    if np.allclose(diag, 100.0):
        corr = corr / 100.0
    elif not np.allclose(diag, 1.0):
        raise ProblemFormatError(
            "correlation diagonal must be all 1 (fractions) or all 100 (percent)"
        )
    return corr


def _parse_box(spec, n):
    _reject_unknown(spec, _BOX_KEYS, "box constraint")

    def side(key, default):
        value = spec.get(key)
        if value is None:
            return np.full(n, default)
        if isinstance(value, (int, float)):
            return np.full(n, float(value) / 100.0)
        out = np.asarray(value, dtype=float) / 100.0
        bad = [i for i, v in enumerate(spec[key]) if v is None]
        if bad:
            out = out.copy()
            out[bad] = default
        if out.shape != (n,):
            raise ProblemFormatError(f"box {key} must be a scalar or a list of {n} entries")
        return out

    raw_lo = spec.get("lower")
    raw_hi = spec.get("upper")
    if isinstance(raw_lo, list):
        raw_lo = [(-math.inf if v is None else v) for v in raw_lo]
        spec = {**spec, "lower": raw_lo}
    if isinstance(raw_hi, list):
        raw_hi = [(math.inf if v is None else v) for v in raw_hi]
        spec = {**spec, "upper": raw_hi}
    lo = side("lower", -math.inf)
    hi = side("upper", math.inf)
    return Box(lo=lo, hi=hi)


def _parse_linear(spec, n):
    _reject_unknown(spec, _LINEAR_KEYS, "linear constraint")
    rows = spec.get("rows")
    if not isinstance(rows, list) or not rows:
        raise ProblemFormatError("linear constraint needs a non-empty 'rows' list")
    eq_rows, ineq_rows = [], []
    for k, row in enumerate(rows):
        _reject_unknown(row, _ROW_KEYS, f"linear row {k + 1}")
        try:
            coeffs = np.asarray(row["coeffs"], dtype=float)
            op = row["op"]
            rhs = float(row["rhs"]) / 100.0
        except KeyError as missing:
            raise ProblemFormatError(f"linear row {k + 1} is missing {missing}") from None
        if coeffs.shape != (n,):
            raise ProblemFormatError(f"linear row {k + 1} needs {n} coefficients")
        if op == "=":
            eq_rows.append((coeffs, rhs))
        elif op in ("<=", ">="):
            ineq_rows.append((coeffs, op, rhs))
        else:
            raise ProblemFormatError(f"linear row {k + 1}: op must be '=', '<=' or '>='")
    atoms = []
    if eq_rows:
        A = np.vstack([c for c, _ in eq_rows])
        B = np.array([r for _, r in eq_rows])
        atoms.append(AffineEq(A=A, B=B))
    if ineq_rows:
        atoms.append(LinearIneq.from_rows(ineq_rows))
    return atoms


def _parse_turnover(spec, n):
    _reject_unknown(spec, _TURNOVER_KEYS, "turnover constraint")
    if "tau" not in spec:
        raise ProblemFormatError("turnover constraint needs 'tau'")
    center = spec.get("center")
    if center is None:
        raise ProblemFormatError(
            "turnover constraint needs 'center' (or set the top-level 'current')"
        )
    return L1Ball(center=_vector(center, n, "turnover center"),
                  radius=float(spec["tau"]) / 100.0)


def parse_problem(doc: dict) -> Problem:
    """Build a Problem from a decoded JSON document (percent units)."""
    if not isinstance(doc, dict):
        raise ProblemFormatError("problem document must be a JSON object")
    _reject_unknown(doc, _PROBLEM_KEYS, "problem")

    assets = doc.get("assets")
    if not isinstance(assets, dict):
        raise ProblemFormatError("'assets' must be an object with at least 'vol'")
    _reject_unknown(assets, _ASSET_KEYS, "assets")
    if "vol" not in assets:
        raise ProblemFormatError("'assets' needs a 'vol' list")
    vol_pct = np.asarray(assets["vol"], dtype=float)
    if vol_pct.ndim != 1 or vol_pct.size == 0:
        raise ProblemFormatError("'assets.vol' must be a non-empty flat list")
    n = vol_pct.size
    vol = vol_pct / 100.0

    names = assets.get("names")
    if names is None:
        names = tuple(str(i + 1) for i in range(n))
    else:
        if len(names) != n or not all(isinstance(s, str) for s in names):
            raise ProblemFormatError(f"'assets.names' must be {n} strings")
        names = tuple(names)

    risk = doc.get("risk", {})
    _reject_unknown(risk, _RISK_KEYS, "risk")
    params = RiskParams(c=float(risk.get("c", 1.0)))
    r = float(risk.get("r", 0.0)) / 100.0

    mu = assets.get("mu")
    mu = None if mu is None else _vector(mu, n, "assets.mu")

    if ("correlation" in doc) == ("covariance" in doc):
        raise ProblemFormatError("give exactly one of 'correlation' or 'covariance'")
    if "correlation" in doc:
        corr = _parse_correlation(doc["correlation"])
        if corr.shape != (n, n):
            raise ProblemFormatError(f"correlation is {corr.shape[0]}x{corr.shape[1]}, expected {n}x{n}")
        universe = AssetUniverse(vol=vol, corr=corr, mu=mu, r=r)
    else:
        cov = _mirror_lower_triangle(doc["covariance"], "covariance") / 1e4
        if cov.shape != (n, n):
            raise ProblemFormatError(f"covariance is {cov.shape[0]}x{cov.shape[1]}, expected {n}x{n}")
        universe = AssetUniverse.from_covariance(cov, mu=mu, r=r)
        if not np.allclose(universe.vol, vol, rtol=1e-6):
            raise ProblemFormatError("'assets.vol' disagrees with the covariance diagonal")

    budgets_spec = doc.get("budgets", "equal")
    if budgets_spec == "equal":
        budgets = Budgets.equal(n)
    else:
        budgets = Budgets(_vector(budgets_spec, n, "budgets"))

    current = doc.get("current")
    current = None if current is None else _vector(current, n, "current")

    atoms = []
    for k, spec in enumerate(doc.get("constraints", [])):
        if not isinstance(spec, dict) or "type" not in spec:
            raise ProblemFormatError(f"constraint {k + 1} must be an object with a 'type'")
        kind = spec["type"]
        if kind == "box":
            atoms.append(_parse_box(spec, n))
        elif kind == "linear":
            atoms.extend(_parse_linear(spec, n))
        elif kind == "turnover":
            if "center" not in spec and current is not None:
                spec = {**spec, "center": (current * 100.0).tolist()}
            atoms.append(_parse_turnover(spec, n))
        else:
            raise ProblemFormatError(
                f"constraint {k + 1}: unknown type {kind!r} (box, linear, turnover)"
            )

    opts_spec = dict(doc.get("options", {}))
    _reject_unknown(opts_spec, _OPTION_KEYS, "options")
    if "start_weights" in opts_spec and opts_spec["start_weights"] is not None:
        opts_spec["start_weights"] = _vector(opts_spec["start_weights"], n, "options.start_weights")
    options = SolverOptions(**opts_spec)

    return Problem(universe=universe, params=params, budgets=budgets,
                   constraint_set=ConstraintSet(tuple(atoms)), options=options,
                   names=names, current=current)


def load_problem(path) -> Problem:
    """Parse a problem file; '-' reads standard input."""
    import sys

    if path == "-":
        text = sys.stdin.read()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ProblemFormatError(f"not valid JSON: {err}") from None
    return parse_problem(doc)


def _pct(x):
    if isinstance(x, np.ndarray):
        return [round(float(v) * 100.0, 12) for v in x]
    return round(float(x) * 100.0, 12)


def emit_problem(problem: Problem) -> dict:
    """Canonical percent-unit document; parse(emit(p)) == p."""
    u = problem.universe
    doc: dict = {
        "assets": {"names": list(problem.names), "vol": _pct(u.vol)},
        "correlation": [[round(float(v), 12) for v in row] for row in u.corr],
        "risk": {"c": problem.params.c, "r": _pct(u.r)},
        "budgets": _pct(problem.budgets.b),
    }
    if u.mu is not None:
        doc["assets"]["mu"] = _pct(u.mu)
    if problem.current is not None:
        doc["current"] = _pct(problem.current)

    constraints = []
    for atom in problem.constraint_set.atoms:
        if isinstance(atom, Box):
            lo = [None if v == -math.inf else round(float(v) * 100.0, 12) for v in atom.lo]
            hi = [None if v == math.inf else round(float(v) * 100.0, 12) for v in atom.hi]
            constraints.append({"type": "box", "lower": lo, "upper": hi})
        elif isinstance(atom, AffineEq):
            rows = [{"coeffs": [float(c) for c in row], "op": "=", "rhs": _pct(rhs)}
                    for row, rhs in zip(atom.A, atom.B)]
            constraints.append({"type": "linear", "rows": rows})
        elif isinstance(atom, LinearIneq):
            if atom.original:
                rows = [{"coeffs": [float(c) for c in coeffs], "op": op, "rhs": _pct(rhs)}
                        for coeffs, op, rhs in atom.original]
            else:
                rows = [{"coeffs": [float(c) for c in row], "op": "<=", "rhs": _pct(rhs)}
                        for row, rhs in zip(atom.C, atom.D)]
            constraints.append({"type": "linear", "rows": rows})
        elif isinstance(atom, L1Ball):
            constraints.append({"type": "turnover", "center": _pct(atom.center),
                                "tau": _pct(atom.radius)})
        else:  # pragma: no cover - the parser cannot produce other atoms
            raise ValidationError(f"cannot emit constraint atom {type(atom).__name__}")
    if constraints:
        doc["constraints"] = constraints

    opts = problem.options
    defaults = SolverOptions()
    changed = {}
    for f in fields(SolverOptions):
        value = getattr(opts, f.name)
        base = getattr(defaults, f.name)
        if f.name == "start_weights":
            if value is not None:
                changed[f.name] = _pct(value)
            continue
        if value != base:
            changed[f.name] = value
    if changed:
        doc["options"] = changed
    return doc


def save_problem(problem: Problem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(emit_problem(problem), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# results


def result_document(report: SolveReport, names, current=None) -> dict:
    """Machine-readable mirror of a solve report (percent units)."""
    dec = report.decomposition
    doc = {
        "assets": list(names),
        "weights": _pct(report.x),
        "lambda": _pct(report.lam),
        "risk": _pct(dec.risk),
        "vol": _pct(dec.vol),
        "lagrangian": _pct(report.lagrangian),
        "mr": _pct(dec.mr),
        "rc": _pct(dec.rc),
        "rc_rel": _pct(dec.rc_rel),
        "kkt": None,
        "algo": report.algo,
        "iterations": dict(report.iterations),
        "warnings": list(report.warnings),
    }
    if report.kkt is not None:
        lower, upper = report.kkt
        doc["kkt"] = {"lower": _pct(lower), "upper": _pct(upper)}
    if current is not None:
        doc["turnover"] = _pct(float(np.abs(report.x - current).sum()))
    return doc


def format_table(report: SolveReport, names, current=None) -> str:
    """Fixed-width breakdown table; one row per asset, then the totals.

    Columns are the weight, marginal risk, risk contribution, and the
    contribution as a share of total risk, all in percent.
    """
    dec = report.decomposition
    width = max([len("Asset")] + [len(str(s)) for s in names])
    has_kkt = report.kkt is not None and (np.any(report.kkt[0] > 1e-8)
                                          or np.any(report.kkt[1] > 1e-8))
    head = f"{'Asset':<{width}}  {'x_i':>8}  {'MR_i':>8}  {'RC_i':>8}  {'RC_i*':>8}"
    if has_kkt:
        head += f"  {'lam_i-':>8}  {'lam_i+':>8}"
    lines = [head]
    for i, name in enumerate(names):
        row = (f"{str(name):<{width}}  {report.x[i] * 100:>8.2f}  {dec.mr[i] * 100:>8.2f}"
               f"  {dec.rc[i] * 100:>8.2f}  {dec.rc_rel[i] * 100:>8.2f}")
        if has_kkt:
            lower, upper = report.kkt
            row += f"  {lower[i] * 100:>8.2f}  {upper[i] * 100:>8.2f}"
        lines.append(row)
    lines.append(f"{'sigma(x)':<{width}}  {dec.vol * 100:>8.2f}")
    if abs(report.risk - dec.vol) > 1e-9 * max(1.0, abs(dec.vol)):
        lines.append(f"{'R(x)':<{width}}  {report.risk * 100:>8.2f}")
    lines.append(f"{'lambda':<{width}}  {report.lam * 100:>8.2f}")
    if current is not None:
        turn = float(np.abs(report.x - current).sum())
        lines.append(f"{'turnover':<{width}}  {turn * 100:>8.2f}")
    for warning in report.warnings:
        lines.append(f"note: {warning}")
    return "\n".join(lines) + "\n"
