"""Command-line interface.

Four subcommands: ``solve`` a problem file, ``sweep`` one constraint
parameter along a grid, ``compare`` alternative encodings of the same
constraint, and ``bench`` the solver configurations on synthetic data.
Exit codes: 0 success, 1 bad input, 2 solver non-convergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time

import numpy as np

from .baselines import derive_pins, least_squares_rb, naive_two_step
from .constraints import Box, ConstraintSet, L1Ball, LinearIneq
from .io import (Problem, ProblemFormatError, format_table, load_problem,
                 result_document)
from .model import AssetUniverse, Budgets, RiskParams, ValidationError, decompose
from .prox import DykstraNonConvergence
from .solvers import ALGOS, START_POLICIES, ConvergenceError, SolverOptions, \
    select_best, solve

_ENCODING_KEYS = {"groups"}
_GROUP_KEYS = {"name", "rows"}
_ENC_ROW_KEYS = {"coeffs", "op", "rhs", "label"}


class _Parser(argparse.ArgumentParser):
    """argparse reserves exit code 2; here that means non-convergence, so
    usage mistakes exit 1 like every other input error."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _write_out(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _options_with_overrides(problem: Problem, args) -> SolverOptions:
    changes = {}
    if getattr(args, "algo", None):
        changes["algo"] = args.algo
    if getattr(args, "lambda_tol", None) is not None:
        changes["eps_lambda"] = args.lambda_tol
    if getattr(args, "eps", None) is not None:
        changes["eps"] = args.eps
    if getattr(args, "phi", None) is not None:
        changes["phi0"] = args.phi
    if getattr(args, "no_adaptive", False):
        changes["adaptive"] = False
    if getattr(args, "start", None):
        changes["start"] = args.start
    opts = dataclasses.replace(problem.options, **changes)
    if opts.start == "cw" and opts.start_weights is None:
        if problem.current is None:
            raise ProblemFormatError(
                "start policy 'cw' needs the problem's 'current' portfolio"
            )
        opts = dataclasses.replace(opts, start_weights=problem.current)
    return opts


def _json_dumps(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    opts = _options_with_overrides(problem, args)
    report = solve(problem.universe, problem.params, problem.budgets,
                   problem.constraint_set, opts)
    if args.json:
        text = _json_dumps(result_document(report, problem.names, problem.current))
    else:
        text = format_table(report, problem.names, problem.current)
    _write_out(text, args.output)
    return 0


# ---------------------------------------------------------------------------
# sweep


def _parse_grid(spec: str) -> np.ndarray:
    """Percent grid: 'start:stop:count' or a comma-separated list."""
    try:
        if ":" in spec:
            parts = spec.split(":")
            if len(parts) != 3:
                raise ValueError
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            if count < 2:
                raise ValueError
            return np.linspace(start, stop, count)
        values = np.array([float(t) for t in spec.split(",") if t.strip() != ""])
        if values.size == 0:
            raise ValueError
        return values
    except ValueError:
        raise ProblemFormatError(
            f"bad grid {spec!r}: use 'start:stop:count' or 'v1,v2,...' (percent)"
        ) from None


def _asset_index(problem: Problem, token: str) -> int:
    if token in problem.names:
        return problem.names.index(token)
    try:
        k = int(token)
    except ValueError:
        raise ProblemFormatError(
            f"unknown asset {token!r}; names: {', '.join(problem.names)}"
        ) from None
    if not 1 <= k <= problem.n:
        raise ProblemFormatError(f"asset index {k} out of range 1..{problem.n}")
    return k - 1


def _sweep_constraints(problem: Problem, param: str):
    """Returns (label, function grid-fraction -> ConstraintSet)."""
    atoms = problem.constraint_set.atoms
    if param == "turnover":
        ball = next((a for a in atoms if isinstance(a, L1Ball)), None)
        if ball is None:
            if problem.current is None:
                raise ProblemFormatError(
                    "sweep over turnover needs a turnover constraint or 'current'"
                )
            ball = L1Ball(center=problem.current, radius=1.0)
        rest = tuple(a for a in atoms if not isinstance(a, L1Ball))

        def build(g: float) -> ConstraintSet:
            return ConstraintSet(rest + (L1Ball(center=ball.center, radius=g),))

        return "tau", build

    if param.startswith("lower-bound:"):
        i = _asset_index(problem, param.split(":", 1)[1])
        boxes = [a for a in atoms if isinstance(a, Box)]
        rest = tuple(a for a in atoms if not isinstance(a, Box))
        if boxes:
            merged = problem.constraint_set.merged_box()
            base_lo, base_hi = merged.lo.copy(), merged.hi.copy()
        else:
            base_lo = np.full(problem.n, -math.inf)
            base_hi = np.full(problem.n, math.inf)

        def build(g: float) -> ConstraintSet:
            lo = base_lo.copy()
            lo[i] = max(lo[i], g)
            return ConstraintSet(rest + (Box(lo=lo, hi=base_hi),))

        return f"lower_bound_{problem.names[i]}", build

    raise ProblemFormatError(
        f"unknown sweep parameter {param!r}: use 'lower-bound:ASSET' or 'turnover'"
    )


def _plot_series(path, xs, series, xlabel, ylabel, title) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for label, ys in series.items():
        ax.plot(xs, ys, marker="o", markersize=3, linewidth=1.2, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def cmd_sweep(args) -> int:
    problem = load_problem(args.problem)
    opts = _options_with_overrides(problem, args)
    grid_pct = _parse_grid(args.grid)
    label, build = _sweep_constraints(problem, args.param)
    is_turnover = label == "tau"
    center = None
    if is_turnover:
        center = build(1.0).atoms[-1].center

    header = [label, "vol", "lagrangian", "lambda"]
    header += [f"x_{name}" for name in problem.names]
    if is_turnover:
        header.append("realized")
    if args.with_ls:
        header.append("ls_vol")
        header += [f"ls_x_{name}" for name in problem.names]
    rows = []
    vols, ls_vols = [], []
    prev = None
    for g_pct in grid_pct:
        cs = build(float(g_pct) / 100.0)
        point_opts = opts if prev is None else dataclasses.replace(
            opts, start="cw", start_weights=prev)
        report = solve(problem.universe, problem.params, problem.budgets,
                       cs, point_opts)
        prev = report.x
        row = [g_pct, report.vol * 100.0, report.lagrangian * 100.0,
               report.lam * 100.0]
        row += list(report.x * 100.0)
        if is_turnover:
            row.append(float(np.abs(report.x - center).sum()) * 100.0)
        vols.append(report.vol * 100.0)
        if args.with_ls:
            ls = least_squares_rb(problem.universe, problem.params,
                                  problem.budgets, cs)
            row.append(ls.decomposition.vol * 100.0)
            row += list(ls.x * 100.0)
            ls_vols.append(ls.decomposition.vol * 100.0)
        rows.append(row)

    delim = args.delimiter
    lines = [delim.join(header)]
    for row in rows:
        lines.append(delim.join(f"{v:.6f}" if isinstance(v, float) else str(v)
                                for v in row))
    _write_out("\n".join(lines) + "\n", args.output)

    if args.plot:
        series = {"log-barrier": vols}
        if args.with_ls:
            series["least-squares"] = ls_vols
        _plot_series(args.plot, list(grid_pct), series,
                     f"{label} (%)", "volatility (%)", f"sweep over {label}")
    return 0


# ---------------------------------------------------------------------------
# compare


def _row_label(coeffs, op, rhs_pct, names) -> str:
    terms = []
    for c, name in zip(coeffs, names):
        if c == 0:
            continue
        if c == 1:
            terms.append(f"+{name}" if terms else str(name))
        elif c == -1:
            terms.append(f"-{name}")
        else:
            terms.append(f"{'+' if c > 0 and terms else ''}{c:g}*{name}")
    return f"{''.join(terms)} {op} {rhs_pct:g}"


def _complement_row(coeffs, op, rhs):
    """On the simplex, c'x >= d (0/1 coefficients) equals (1-c)'x <= 1-d."""
    coeffs = np.asarray(coeffs, dtype=float)
    if not np.all(np.isin(coeffs, (0.0, 1.0))):
        return None
    flipped = {"<=": ">=", ">=": "<="}[op]
    return 1.0 - coeffs, flipped, 1.0 - rhs


def _load_encodings(path, n) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ProblemFormatError(f"encodings file is not valid JSON: {err}") from None
    if not isinstance(doc, dict):
        raise ProblemFormatError("encodings file must be a JSON object")
    unknown = set(doc) - _ENCODING_KEYS
    if unknown:
        raise ProblemFormatError(f"unknown key(s) {sorted(unknown)} in encodings file")
    groups = doc.get("groups")
    if not isinstance(groups, list) or not groups:
        raise ProblemFormatError("encodings file needs a non-empty 'groups' list")
    out = []
    for gi, group in enumerate(groups):
        unknown = set(group) - _GROUP_KEYS
        if unknown:
            raise ProblemFormatError(f"unknown key(s) {sorted(unknown)} in group {gi + 1}")
        rows = group.get("rows")
        if not isinstance(rows, list) or not rows:
            raise ProblemFormatError(f"group {gi + 1} needs at least one encoding")
        parsed = []
        for ri, row in enumerate(rows):
            unknown = set(row) - _ENC_ROW_KEYS
            if unknown:
                raise ProblemFormatError(
                    f"unknown key(s) {sorted(unknown)} in group {gi + 1} row {ri + 1}")
            try:
                coeffs = np.asarray(row["coeffs"], dtype=float)
                op = row["op"]
                rhs = float(row["rhs"]) / 100.0
            except KeyError as missing:
                raise ProblemFormatError(
                    f"group {gi + 1} row {ri + 1} is missing {missing}") from None
            if coeffs.shape != (n,):
                raise ProblemFormatError(
                    f"group {gi + 1} row {ri + 1} needs {n} coefficients")
            if op not in ("<=", ">="):
                raise ProblemFormatError(
                    f"group {gi + 1} row {ri + 1}: op must be '<=' or '>='")
            parsed.append((coeffs, op, rhs, row.get("label")))
        out.append((group.get("name", f"group {gi + 1}"), parsed))
    return out


def _resolve_groups(problem: Problem, args) -> list:
    """Groups of (label, constraint set) columns to solve and compare."""
    base = tuple(a for a in problem.constraint_set.atoms
                 if not isinstance(a, LinearIneq))

    def with_row(coeffs, op, rhs):
        return ConstraintSet(base + (LinearIneq.from_rows([(coeffs, op, rhs)]),))

    if args.encodings:
        groups = []
        for name, rows in _load_encodings(args.encodings, problem.n):
            cols = [(label or _row_label(coeffs, op, rhs * 100.0, problem.names),
                     with_row(coeffs, op, rhs))
                    for coeffs, op, rhs, label in rows]
            groups.append((name, cols))
        return groups

    ineq_rows = []
    for atom in problem.constraint_set.atoms:
        if isinstance(atom, LinearIneq):
            ineq_rows.extend(atom.original)
    if not ineq_rows:
        # No alternative encodings to derive: compare the portfolio as
        # declared against whatever baselines were requested.
        label = "constrained" if problem.constraint_set.atoms else "unconstrained"
        return [("portfolios", [(label, problem.constraint_set)])]
    groups = []
    for gi, (coeffs, op, rhs) in enumerate(ineq_rows):
        coeffs = np.asarray(coeffs, dtype=float)
        cols = [(_row_label(coeffs, op, rhs * 100.0, problem.names),
                 with_row(coeffs, op, rhs))]
        comp = _complement_row(coeffs, op, rhs)
        if comp is not None:
            cols.append((_row_label(comp[0], comp[1], comp[2] * 100.0, problem.names),
                         with_row(*comp)))
        groups.append((f"group {gi + 1}", cols))
    return groups


def _baseline_columns(problem: Problem, cs: ConstraintSet, args) -> list:
    """(label, weights, vol, objective-or-None) for requested baselines."""
    extras = []
    if args.with_ls:
        ls = least_squares_rb(problem.universe, problem.params, problem.budgets, cs)
        extras.append(("least-squares", ls.x, ls.decomposition.vol, ls.objective))
    if args.with_naive:
        boxes = [a for a in cs.atoms if isinstance(a, Box)]
        if not boxes:
            raise ProblemFormatError("--with-naive needs box constraints")
        pins = derive_pins(problem.universe, problem.params, problem.budgets,
                           cs.merged_box())
        nv = naive_two_step(problem.universe, problem.params, problem.budgets,
                            pinned=pins)
        extras.append(("naive", nv.x, nv.decomposition.vol, None))
    return extras


def cmd_compare(args) -> int:
    problem = load_problem(args.problem)
    opts = _options_with_overrides(problem, args)
    groups = _resolve_groups(problem, args)

    out_groups = []
    for name, cols in groups:
        labels = [label for label, _ in cols]
        reports = [solve(problem.universe, problem.params, problem.budgets,
                         cs, opts) for _, cs in cols]
        sel = select_best(reports)
        extras = _baseline_columns(problem, cols[0][1], args)
        out_groups.append((name, labels, reports, sel, extras))

    if args.json:
        doc = {"groups": []}
        for name, labels, reports, sel, extras in out_groups:
            doc["groups"].append({
                "name": name,
                "encodings": [
                    {"label": lab,
                     "best": i == sel.best_index,
                     **result_document(rep, problem.names)}
                    for i, (lab, rep) in enumerate(zip(labels, reports))
                ],
                "baselines": [
                    {"label": lab, "weights": [round(float(v) * 100, 12) for v in x],
                     "vol": round(vol * 100, 12),
                     "objective": obj if obj is None else float(obj)}
                    for lab, x, vol, obj in extras
                ],
                "lagrangian_spread": sel.spread * 100.0,
                "scaling_sensitive": sel.scaling_sensitive,
            })
        _write_out(_json_dumps(doc), args.output)
    else:
        # One column per portfolio, weights as rows: the layout of the
        # allocation tables this package replicates.
        lines = []
        name_w = max([len("Asset"), len("sigma(x)")] +
                     [len(str(s)) for s in problem.names])
        for name, labels, reports, sel, extras in out_groups:
            col_labels = list(labels) + [lab for lab, *_ in extras]
            col_w = [max(len(lab), 8) for lab in col_labels]
            lines.append(f"{name}:")
            head = f"  {'Asset':<{name_w}}"
            for lab, w in zip(col_labels, col_w):
                head += f"  {lab:>{w}}"
            lines.append(head)
            weight_cols = [rep.x for rep in reports] + [x for _, x, *_ in extras]
            for i, asset in enumerate(problem.names):
                row = f"  {str(asset):<{name_w}}"
                for x, w in zip(weight_cols, col_w):
                    row += f"  {x[i] * 100:>{w}.2f}"
                lines.append(row)
            sig = f"  {'sigma(x)':<{name_w}}"
            for value, w in zip([r.vol for r in reports] +
                                [vol for *_, vol, _ in extras], col_w):
                sig += f"  {value * 100:>{w}.2f}"
            lines.append(sig)
            lag = f"  {'L':<{name_w}}"
            for k, w in enumerate(col_w):
                if k < len(reports):
                    lag += f"  {reports[k].lagrangian * 100:>{w}.2f}"
                else:
                    lag += f"  {'-':>{w}}"
            lines.append(lag)
            best = f"  {'best':<{name_w}}"
            for k, w in enumerate(col_w):
                best += f"  {'*' if k == sel.best_index else '':>{w}}"
            lines.append(best)
            if sel.scaling_sensitive:
                lines.append(
                    "  note: the encodings select different portfolios; the"
                    " starred column attains the lowest Lagrangian (global"
                    " minimum)."
                )
            lines.append("")
        _write_out("\n".join(lines), args.output)

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        pos, ticks, tick_pos = 0, [], []
        for name, labels, reports, sel, _ in out_groups:
            for i, (lab, rep) in enumerate(zip(labels, reports)):
                color = "tab:green" if i == sel.best_index else "tab:gray"
                ax.bar(pos, rep.lagrangian * 100.0, color=color)
                ticks.append(lab)
                tick_pos.append(pos)
                pos += 1
            pos += 1
        ax.set_xticks(tick_pos, ticks, rotation=20, ha="right", fontsize=8)
        ax.set_ylabel("Lagrangian (%)")
        ax.set_title("constraint encodings (green = group best)")
        fig.tight_layout()
        fig.savefig(args.plot, dpi=150)
        plt.close(fig)
    return 0


# ---------------------------------------------------------------------------
# bench


def synthetic_problem(n: int, seed: int):
    """One-factor universe with a loose box; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    beta = rng.uniform(0.3, 0.9, size=n)
    corr = np.outer(beta, beta)
    np.fill_diagonal(corr, 1.0)
    vol = rng.uniform(0.10, 0.30, size=n)
    universe = AssetUniverse(vol=vol, corr=corr)
    budgets = Budgets.equal(n)
    cs = ConstraintSet((Box(lo=np.full(n, 0.2 / n), hi=np.full(n, 3.0 / n)),))
    return universe, budgets, cs


_TIERS = (
    ("plain", {"adaptive": False, "accelerated": False}),
    ("warm", {"adaptive": False, "accelerated": True}),
    ("adaptive+warm", {"adaptive": True, "accelerated": True}),
)


def run_benchmark(sizes, algos, seed: int = 11, eps: float = 1e-6) -> list:
    """Times each algorithm under the three bisection configurations.

    Returns one record per (size, algo) with absolute seconds per tier.
    """
    records = []
    for n in sizes:
        universe, budgets, cs = synthetic_problem(n, seed)
        params = RiskParams(c=1.0)
        for algo in algos:
            record = {"n": n, "algo": algo, "seconds": {}, "outer": {}}
            for tier, flags in _TIERS:
                opts = SolverOptions(algo=algo, eps=eps, eps_lambda=eps,
                                     eps_inner=eps, **flags)
                t0 = time.perf_counter()
                report = solve(universe, params, budgets, cs, opts)
                record["seconds"][tier] = time.perf_counter() - t0
                record["outer"][tier] = report.iterations.get("outer", 0)
            records.append(record)
    return records


def cmd_bench(args) -> int:
    sizes = [int(t) for t in args.sizes.split(",") if t.strip()]
    algos = [t.strip() for t in args.algos.split(",") if t.strip()]
    for algo in algos:
        if algo not in ALGOS or algo == "auto":
            raise ProblemFormatError(
                f"unknown algorithm {algo!r}; choose from "
                f"{', '.join(a for a in ALGOS if a != 'auto')}"
            )
    records = run_benchmark(sizes, algos, seed=args.seed, eps=args.eps)

    tier_names = [t for t, _ in _TIERS]
    width = max(len(a) for a in algos + ["algo"])
    lines = ["Relative solve times (1.00 = fastest cell per size); absolute "
             "seconds in brackets.", "Times are machine-dependent.", ""]
    for n in sizes:
        rows = [r for r in records if r["n"] == n]
        fastest = min(min(r["seconds"].values()) for r in rows)
        lines.append(f"n = {n}:")
        head = f"  {'algo':<{width}}"
        for t in tier_names:
            head += f"  {t:>22}"
        lines.append(head)
        for r in rows:
            line = f"  {r['algo']:<{width}}"
            for t in tier_names:
                s = r["seconds"][t]
                line += f"  {s / fastest:>8.2f}x [{s:>8.4f}s]"
            lines.append(line)
        lines.append("")
    _write_out("\n".join(lines), args.output)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="riskbudget",
                     description="Risk budgeting portfolios under weight constraints.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("problem", help="problem file (JSON); '-' reads stdin")
        p.add_argument("--algo", choices=[a for a in ALGOS], default=None,
                       help="override the solver algorithm")
        p.add_argument("--lambda-tol", type=float, default=None, metavar="TOL",
                       help="normalization tolerance of the outer bisection")
        p.add_argument("--eps", type=float, default=None, metavar="TOL",
                       help="inner solver tolerance")
        p.add_argument("--phi", type=float, default=None, metavar="PHI",
                       help="initial splitting penalty")
        p.add_argument("--no-adaptive", action="store_true",
                       help="freeze the splitting penalty")
        p.add_argument("--start", choices=list(START_POLICIES), default=None,
                       help="starting portfolio policy")
        p.add_argument("-o", "--output", default=None, metavar="FILE",
                       help="write the report here instead of stdout")

    p_solve = sub.add_parser("solve", help="solve one problem file")
    common(p_solve)
    fmt = p_solve.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", help="machine-readable output")
    fmt.add_argument("--table", dest="json", action="store_false",
                     help="human-readable table (default)")
    p_solve.set_defaults(func=cmd_solve, json=False)

    p_sweep = sub.add_parser("sweep", help="re-solve along a constraint grid")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True, metavar="PARAM",
                         help="'lower-bound:ASSET' or 'turnover'")
    p_sweep.add_argument("--grid", required=True, metavar="GRID",
                         help="percent grid: 'start:stop:count' or 'v1,v2,...'")
    p_sweep.add_argument("--with-ls", action="store_true",
                         help="add the least-squares portfolio per grid point")
    p_sweep.add_argument("--delimiter", default=",", metavar="CHAR")
    p_sweep.add_argument("--plot", default=None, metavar="FILE",
                         help="render the volatility curve(s) to this file")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare",
                           help="compare equivalent encodings of a constraint")
    common(p_cmp)
    p_cmp.add_argument("--encodings", default=None, metavar="FILE",
                       help="JSON file with groups of alternative rows")
    p_cmp.add_argument("--with-ls", action="store_true",
                       help="add the least-squares portfolio per group")
    p_cmp.add_argument("--with-naive", action="store_true",
                       help="add the naive two-step portfolio (box problems)")
    p_cmp.add_argument("--json", action="store_true", help="machine-readable output")
    p_cmp.add_argument("--plot", default=None, metavar="FILE",
                       help="render the per-encoding Lagrangians to this file")
    p_cmp.set_defaults(func=cmd_compare)

    p_bench = sub.add_parser("bench", help="time solver configurations")
    p_bench.add_argument("--sizes", default="50,100", metavar="N1,N2,...")
    p_bench.add_argument("--algos", default="ccd,admm-ccd,admm-newton,admm-qp",
                         metavar="A1,A2,...")
    p_bench.add_argument("--seed", type=int, default=11)
    p_bench.add_argument("--eps", type=float, default=1e-6)
    p_bench.add_argument("-o", "--output", default=None, metavar="FILE")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConvergenceError, DykstraNonConvergence) as err:
        print(f"riskbudget: did not converge: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as err:
        # ProblemFormatError and ValidationError are ValueErrors; so are
        # malformed numbers and empty feasible sets surfaced by the solvers.
        print(f"riskbudget: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
