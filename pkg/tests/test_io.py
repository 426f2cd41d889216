"""Problem-file parsing, canonical emission, result documents, tables."""

import json
import math
from importlib import resources

import jsonschema
import numpy as np
import pytest

from riskbudget import (
    AffineEq,
    Box,
    Budgets,
    ConstraintSet,
    L1Ball,
    LinearIneq,
    ProblemFormatError,
    SolverOptions,
    emit_problem,
    format_table,
    load_problem,
    parse_problem,
    result_document,
    save_problem,
    solve,
)

BUNDLED = [
    "four-asset-erc.json",
    "four-asset-budgets.json",
    "four-asset-cap30.json",
    "four-asset-cap30-budgets.json",
    "four-asset-skewed-budgets.json",
    "five-asset-erc.json",
    "five-asset-bounds.json",
    "eight-asset-floor.json",
    "eight-asset-two-floors.json",
    "eight-asset-turnover.json",
    "seven-asset-smallcap-pins.json",
    "one-asset.json",
]


def bundled_doc(name):
    text = resources.files("riskbudget.problems").joinpath(name).read_text()
    return json.loads(text)


def minimal_doc(**extra):
    doc = {
        "assets": {"vol": [10.0, 20.0]},
        "correlation": [[1.0, 0.5], [0.5, 1.0]],
    }
    doc.update(extra)
    return doc


class TestParseBasics:
    def test_percent_conversion_and_defaults(self):
        p = parse_problem(minimal_doc())
        assert p.universe.vol == pytest.approx([0.10, 0.20])
        assert p.names == ("1", "2")
        assert p.budgets.b == pytest.approx([0.5, 0.5])
        assert p.params.c == 1.0
        assert p.universe.r == 0.0
        assert p.current is None
        assert p.constraint_set.atoms == ()
        assert p.options == SolverOptions()
        assert p.n == 2

    def test_named_assets_and_risk_block(self):
        doc = minimal_doc(risk={"c": 2.0, "r": 1.5})
        doc["assets"]["names"] = ["Bond", "Stock"]
        doc["assets"]["mu"] = [3.0, 8.0]
        p = parse_problem(doc)
        assert p.names == ("Bond", "Stock")
        assert p.params.c == 2.0
        assert p.universe.r == pytest.approx(0.015)
        assert p.universe.mu == pytest.approx([0.03, 0.08])

    def test_lower_triangle_mirrored(self):
        doc = minimal_doc(correlation=[[1.0], [0.5, 1.0]])
        p = parse_problem(doc)
        assert p.universe.corr == pytest.approx(
            np.array([[1.0, 0.5], [0.5, 1.0]]))

    def test_percent_correlation_diagonal_100(self):
        doc = minimal_doc(correlation=[[100], [50, 100]])
        p = parse_problem(doc)
        assert p.universe.corr == pytest.approx(
            np.array([[1.0, 0.5], [0.5, 1.0]]))

    def test_mixed_diagonal_rejected(self):
        doc = minimal_doc(correlation=[[1.0], [0.5, 100.0]])
        with pytest.raises(ProblemFormatError, match="diagonal"):
            parse_problem(doc)

    def test_covariance_percent_squared(self):
        doc = {
            "assets": {"vol": [10.0, 20.0]},
            "covariance": [[100.0], [100.0, 400.0]],  # corr 0.5
        }
        p = parse_problem(doc)
        assert p.universe.vol == pytest.approx([0.10, 0.20])
        assert p.universe.corr[0, 1] == pytest.approx(0.5)

    def test_vol_covariance_mismatch_rejected(self):
        doc = {
            "assets": {"vol": [10.0, 25.0]},
            "covariance": [[100.0], [100.0, 400.0]],
        }
        with pytest.raises(ProblemFormatError, match="disagrees"):
            parse_problem(doc)

    def test_exactly_one_matrix_required(self):
        doc = minimal_doc(covariance=[[100.0], [100.0, 400.0]])
        with pytest.raises(ProblemFormatError, match="exactly one"):
            parse_problem(doc)
        with pytest.raises(ProblemFormatError, match="exactly one"):
            parse_problem({"assets": {"vol": [10.0]}})

    def test_budget_vector_percent(self):
        p = parse_problem(minimal_doc(budgets=[30.0, 70.0]))
        assert p.budgets.b == pytest.approx([0.3, 0.7])

    def test_asymmetric_full_matrix_rejected(self):
        doc = minimal_doc(correlation=[[1.0, 0.4], [0.5, 1.0]])
        with pytest.raises(ProblemFormatError, match="symmetric"):
            parse_problem(doc)

    def test_not_an_object(self):
        with pytest.raises(ProblemFormatError, match="object"):
            parse_problem([1, 2, 3])


class TestUnknownKeys:
    def test_top_level(self):
        with pytest.raises(ProblemFormatError, match="sigma"):
            parse_problem(minimal_doc(sigma=[1.0]))

    def test_assets_block(self):
        doc = minimal_doc()
        doc["assets"]["volatility"] = [10.0, 20.0]
        with pytest.raises(ProblemFormatError, match="volatility"):
            parse_problem(doc)

    def test_risk_block(self):
        with pytest.raises(ProblemFormatError, match="gamma"):
            parse_problem(minimal_doc(risk={"c": 1.0, "gamma": 2.0}))

    def test_box_block(self):
        doc = minimal_doc(constraints=[{"type": "box", "max": 30.0}])
        with pytest.raises(ProblemFormatError, match="max"):
            parse_problem(doc)

    def test_linear_row(self):
        doc = minimal_doc(constraints=[{
            "type": "linear",
            "rows": [{"coeffs": [1, 0], "op": "<=", "rhs": 50, "name": "cap"}],
        }])
        with pytest.raises(ProblemFormatError, match="name"):
            parse_problem(doc)

    def test_turnover_block(self):
        doc = minimal_doc(constraints=[{
            "type": "turnover", "tau": 30.0, "center": [50, 50], "budget": 1,
        }])
        with pytest.raises(ProblemFormatError, match="budget"):
            parse_problem(doc)

    def test_options_block(self):
        with pytest.raises(ProblemFormatError, match="tolerance"):
            parse_problem(minimal_doc(options={"tolerance": 1e-6}))


class TestConstraintParsing:
    def test_scalar_box_broadcast(self):
        doc = minimal_doc(constraints=[{"type": "box", "lower": 5.0,
                                        "upper": 60.0}])
        p = parse_problem(doc)
        box = p.constraint_set.atoms[0]
        assert box.lo == pytest.approx([0.05, 0.05])
        assert box.hi == pytest.approx([0.60, 0.60])

    def test_null_sides_are_unbounded(self):
        doc = minimal_doc(constraints=[{"type": "box", "upper": 40.0}])
        box = parse_problem(doc).constraint_set.atoms[0]
        assert np.all(box.lo == -math.inf)
        assert box.hi == pytest.approx([0.40, 0.40])

    def test_null_entries_in_lists(self):
        doc = minimal_doc(constraints=[{
            "type": "box", "lower": [20.0, None], "upper": [None, 35.0],
        }])
        box = parse_problem(doc).constraint_set.atoms[0]
        assert box.lo[0] == pytest.approx(0.20)
        assert box.lo[1] == -math.inf
        assert box.hi[0] == math.inf
        assert box.hi[1] == pytest.approx(0.35)

    def test_linear_ops(self):
        doc = minimal_doc(constraints=[{
            "type": "linear",
            "rows": [
                {"coeffs": [1, -1], "op": "=", "rhs": 0},
                {"coeffs": [1, 0], "op": "<=", "rhs": 60},
                {"coeffs": [0, 1], "op": ">=", "rhs": 10},
            ],
        }])
        cs = parse_problem(doc).constraint_set
        eq = [a for a in cs.atoms if isinstance(a, AffineEq)]
        ineq = [a for a in cs.atoms if isinstance(a, LinearIneq)]
        assert len(eq) == 1 and len(ineq) == 1
        assert eq[0].A == pytest.approx(np.array([[1.0, -1.0]]))
        assert eq[0].B == pytest.approx([0.0])
        assert ineq[0].C == pytest.approx(np.array([[1.0, 0.0], [0.0, -1.0]]))
        assert ineq[0].D == pytest.approx([0.60, -0.10])

    def test_bad_op_rejected(self):
        doc = minimal_doc(constraints=[{
            "type": "linear", "rows": [{"coeffs": [1, 0], "op": "<", "rhs": 50}],
        }])
        with pytest.raises(ProblemFormatError, match="op"):
            parse_problem(doc)

    def test_turnover_explicit_center(self):
        doc = minimal_doc(constraints=[{
            "type": "turnover", "center": [60.0, 40.0], "tau": 25.0,
        }])
        ball = parse_problem(doc).constraint_set.atoms[0]
        assert isinstance(ball, L1Ball)
        assert ball.center == pytest.approx([0.60, 0.40])
        assert ball.radius == pytest.approx(0.25)

    def test_turnover_center_defaults_to_current(self):
        doc = minimal_doc(current=[55.0, 45.0],
                          constraints=[{"type": "turnover", "tau": 10.0}])
        p = parse_problem(doc)
        ball = p.constraint_set.atoms[0]
        assert ball.center == pytest.approx([0.55, 0.45])
        assert p.current == pytest.approx([0.55, 0.45])

    def test_turnover_without_center_or_current(self):
        doc = minimal_doc(constraints=[{"type": "turnover", "tau": 10.0}])
        with pytest.raises(ProblemFormatError, match="center"):
            parse_problem(doc)

    def test_unknown_constraint_type(self):
        doc = minimal_doc(constraints=[{"type": "cardinality", "k": 1}])
        with pytest.raises(ProblemFormatError, match="cardinality"):
            parse_problem(doc)

    def test_options_parsed(self):
        doc = minimal_doc(options={"algo": "admm-newton", "eps_lambda": 1e-6,
                                   "start": "ew"})
        opts = parse_problem(doc).options
        assert opts.algo == "admm-newton"
        assert opts.eps_lambda == 1e-6
        assert opts.start == "ew"


class TestRoundTrip:
    @pytest.mark.parametrize("name", BUNDLED)
    def test_bundled_problem_round_trips(self, name):
        doc = bundled_doc(name)
        problem = parse_problem(doc)
        emitted = emit_problem(problem)
        again = parse_problem(json.loads(json.dumps(emitted)))
        assert emit_problem(again) == emitted

    @pytest.mark.parametrize("name", BUNDLED)
    def test_bundled_problem_values_survive(self, name):
        problem = parse_problem(bundled_doc(name))
        again = parse_problem(emit_problem(problem))
        assert again.names == problem.names
        assert again.universe.vol == pytest.approx(problem.universe.vol,
                                                   abs=1e-12)
        assert again.universe.corr == pytest.approx(problem.universe.corr,
                                                    abs=1e-12)
        assert again.budgets.b == pytest.approx(problem.budgets.b, abs=1e-12)
        assert again.options == problem.options
        assert len(again.constraint_set.atoms) == len(problem.constraint_set.atoms)
        if problem.current is not None:
            assert again.current == pytest.approx(problem.current, abs=1e-12)

    def test_save_and_load(self, tmp_path):
        problem = parse_problem(bundled_doc("five-asset-bounds.json"))
        out = tmp_path / "copy.json"
        save_problem(problem, out)
        again = load_problem(str(out))
        assert emit_problem(again) == emit_problem(problem)

    def test_non_default_options_survive(self):
        doc = minimal_doc(options={"algo": "admm-ccd", "phi0": 2.5,
                                   "adaptive": False})
        emitted = emit_problem(parse_problem(doc))
        assert emitted["options"] == {"algo": "admm-ccd", "phi0": 2.5,
                                      "adaptive": False}

    def test_default_options_omitted(self):
        emitted = emit_problem(parse_problem(minimal_doc()))
        assert "options" not in emitted
        assert "constraints" not in emitted


class TestLoadProblem:
    def test_bad_json_reports_position(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"assets": {"vol": [10, 20]},\n  "correlation": [[1, }')
        with pytest.raises(ProblemFormatError, match="line 2"):
            load_problem(str(bad))

    def test_missing_file_is_oserror(self, tmp_path):
        with pytest.raises(OSError):
            load_problem(str(tmp_path / "absent.json"))


@pytest.fixture(scope="module")
def schema():
    text = resources.files("riskbudget.schemas").joinpath(
        "result.schema.json").read_text()
    return json.loads(text)


class TestResultDocument:

    def test_unconstrained_document_validates(self, schema):
        problem = parse_problem(bundled_doc("five-asset-erc.json"))
        rep = solve(problem.universe, problem.params, problem.budgets,
                    problem.constraint_set, problem.options)
        doc = result_document(rep, problem.names, current=problem.current)
        jsonschema.validate(doc, schema)
        assert doc["kkt"] is None
        assert doc["algo"] == "ccd"
        assert "turnover" in doc  # the file carries a current portfolio
        json.dumps(doc)  # serializable

    def test_box_document_validates_with_kkt(self, schema):
        problem = parse_problem(bundled_doc("five-asset-bounds.json"))
        rep = solve(problem.universe, problem.params, problem.budgets,
                    problem.constraint_set, problem.options)
        doc = result_document(rep, problem.names)
        jsonschema.validate(doc, schema)
        assert set(doc["kkt"]) == {"lower", "upper"}
        assert len(doc["kkt"]["lower"]) == problem.n
        assert "turnover" not in doc

    def test_weights_and_totals_in_percent(self, schema):
        problem = parse_problem(bundled_doc("four-asset-erc.json"))
        rep = solve(problem.universe, problem.params, problem.budgets)
        doc = result_document(rep, problem.names)
        jsonschema.validate(doc, schema)
        assert doc["weights"] == pytest.approx(
            [41.01, 27.34, 18.99, 12.66], abs=0.005)
        assert sum(doc["weights"]) == pytest.approx(100.0, abs=1e-6)
        assert doc["vol"] == pytest.approx(12.78, abs=0.005)
        assert doc["lambda"] == pytest.approx(doc["risk"], abs=1e-9)


class TestFormatTable:
    def test_golden_table_bytes(self, tmp_path):
        problem = parse_problem(bundled_doc("four-asset-erc.json"))
        rep = solve(problem.universe, problem.params, problem.budgets)
        text = format_table(rep, problem.names)
        lines = text.splitlines()
        assert lines[0].split() == ["Asset", "x_i", "MR_i", "RC_i", "RC_i*"]
        assert lines[1].split() == ["A1", "41.01", "7.79", "3.19", "25.00"]
        assert lines[-2].split() == ["sigma(x)", "12.78"]
        assert lines[-1].split() == ["lambda", "12.78"]

    def test_rendering_is_deterministic(self):
        problem = parse_problem(bundled_doc("five-asset-bounds.json"))
        texts = []
        for _ in range(2):
            rep = solve(problem.universe, problem.params, problem.budgets,
                        problem.constraint_set, problem.options)
            texts.append(format_table(rep, problem.names,
                                      current=problem.current))
        assert texts[0] == texts[1]

    def test_kkt_columns_appear_when_bounds_bind(self):
        problem = parse_problem(bundled_doc("five-asset-bounds.json"))
        rep = solve(problem.universe, problem.params, problem.budgets,
                    problem.constraint_set, problem.options)
        text = format_table(rep, problem.names, current=problem.current)
        assert "lam_i-" in text and "lam_i+" in text
        assert "turnover" in text

    def test_risk_line_only_when_it_differs_from_vol(self):
        doc = minimal_doc()
        doc["assets"]["mu"] = [5.0, 9.0]
        doc["risk"] = {"c": 3.0}
        problem = parse_problem(doc)
        rep = solve(problem.universe, problem.params, problem.budgets)
        text = format_table(rep, problem.names)
        assert "R(x)" in text
        plain = parse_problem(minimal_doc())
        rep2 = solve(plain.universe, plain.params, plain.budgets)
        assert "R(x)" not in format_table(rep2, plain.names)

    def test_warnings_render_as_notes(self):
        problem = parse_problem(minimal_doc(budgets=[1e-5, 100.0 - 1e-5]))
        rep = solve(problem.universe, problem.params, problem.budgets)
        text = format_table(rep, problem.names)
        assert "note: " in text
