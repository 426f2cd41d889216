"""Structured weight-constraint sets: box, affine equality, linear
inequality and l1-ball atoms, combined by intersection.

The full-universe budget constraint (weights summing to one) is never part
of a set here: the solver enforces it through its outer multiplier loop, and
the constructors reject attempts to encode it as an atom.

Inequalities are canonicalized to row form c'x <= d; the original encoding
(including >= rows) is kept verbatim because equivalent encodings of the
same region are NOT interchangeable for the solver (see
``solvers.select_best``) and reports must echo what the user wrote.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np

from . import prox
from .model import ValidationError

MEMBERSHIP_TOL = 1e-8


class Classification(enum.Enum):
    SEPARABLE = "separable"
    COUPLED = "coupled"


def _freeze(arr):
    arr = np.asarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Box:
    """Componentwise bounds lo <= x <= hi (use +-inf for one-sided)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape:
            raise ValidationError("box lo and hi must have the same shape")
        if np.any(lo > hi):
            bad = int(np.argmax(lo - hi))
            raise ValidationError(f"box is empty at coordinate {bad}: lo {lo[bad]} > hi {hi[bad]}")
        object.__setattr__(self, "lo", _freeze(lo))
        object.__setattr__(self, "hi", _freeze(hi))

    @property
    def n(self):
        return self.lo.size

    def projector(self):
        return partial(prox.project_box, lo=self.lo, hi=self.hi)

    def residual(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.maximum(np.maximum(self.lo - x, x - self.hi), 0.0).max(initial=0.0))


@dataclass(frozen=True)
class AffineEq:
    """Rows of A x = B."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_1d(np.asarray(self.B, dtype=float))
        if A.shape[0] != B.size:
            raise ValidationError(f"A has {A.shape[0]} rows but B has {B.size} entries")
        _reject_degenerate_rows(A, "equality")
        _reject_sum_to_one(A, "equality")
        object.__setattr__(self, "A", _freeze(A))
        object.__setattr__(self, "B", _freeze(B))

    @property
    def n(self):
        return self.A.shape[1]

    def projector(self):
        return partial(prox.project_affine, A=self.A, B=self.B)

    def residual(self, x) -> float:
        return float(np.abs(self.A @ np.asarray(x, dtype=float) - self.B).max(initial=0.0))


@dataclass(frozen=True)
class LinearIneq:
    """Rows of C x <= D (canonical form).

    ``original`` preserves what was declared, as (coeffs, op, rhs) triples
    with op in {"<=", ">="}; it defaults to the canonical rows.
    """

    C: np.ndarray
    D: np.ndarray
    original: tuple = ()

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_1d(np.asarray(self.D, dtype=float))
        if C.shape[0] != D.size:
            raise ValidationError(f"C has {C.shape[0]} rows but D has {D.size} entries")
        _reject_degenerate_rows(C, "inequality")
        object.__setattr__(self, "C", _freeze(C))
        object.__setattr__(self, "D", _freeze(D))
        if not self.original:
            orig = tuple((tuple(row), "<=", float(d)) for row, d in zip(C, D))
            object.__setattr__(self, "original", orig)

    @classmethod
    def from_rows(cls, rows: Sequence[tuple]) -> "LinearIneq":
        """Build from (coeffs, op, rhs) triples, flipping >= rows to <=."""
        C, D, orig = [], [], []
        for coeffs, op, rhs in rows:
            coeffs = np.asarray(coeffs, dtype=float)
            if op == "<=":
                C.append(coeffs)
                D.append(float(rhs))
            elif op == ">=":
                C.append(-coeffs)
                D.append(-float(rhs))
            else:
                raise ValidationError(f"inequality op must be <= or >=, got {op!r}")
            orig.append((tuple(coeffs), op, float(rhs)))
        return cls(np.vstack(C), np.asarray(D), original=tuple(orig))

    @property
    def n(self):
        return self.C.shape[1]

    def row_projectors(self):
        return [partial(prox.project_halfspace, c=row, d=float(d))
                for row, d in zip(self.C, self.D)]

    def residual(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.maximum(self.C @ x - self.D, 0.0).max(initial=0.0))


@dataclass(frozen=True)
class L1Ball:
    """Turnover-style ball ||x - center||_1 <= radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.radius < 0:
            raise ValidationError(f"l1 ball radius must be >= 0, got {self.radius}")
        object.__setattr__(self, "center", _freeze(center))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n(self):
        return self.center.size

    def projector(self):
        return partial(prox.project_l1_ball, center=self.center, radius=self.radius)

    def residual(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(max(np.abs(x - self.center).sum() - self.radius, 0.0))


Atom = Box | AffineEq | LinearIneq | L1Ball


def _reject_degenerate_rows(M, kind):
    norms = np.abs(M).max(axis=1, initial=0.0)
    if np.any(norms == 0.0):
        bad = int(np.argmin(norms))
        raise ValidationError(f"{kind} row {bad} has all-zero coefficients")


def _reject_sum_to_one(A, kind):
    # A row with identical nonzero coefficients pins the full-universe sum,
    # which belongs to the outer multiplier loop, not to the constraint set.
    for i, row in enumerate(A):
        if row[0] != 0.0 and np.all(np.abs(row - row[0]) <= 1e-12 * max(1.0, abs(row[0]))):
            raise ValidationError(
                f"{kind} row {i} constrains the sum of all weights; the budget "
                "normalization is enforced by the solver's outer multiplier loop "
                "and must not appear as a constraint atom"
            )


@dataclass(frozen=True)
class ConstraintSet:
    """Intersection of atoms, projected in declaration order."""

    atoms: tuple = ()

    def __post_init__(self):
        atoms = tuple(self.atoms)
        dims = {a.n for a in atoms}
        if len(dims) > 1:
            raise ValidationError(f"atoms disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "atoms", atoms)

    @property
    def n(self):
        return self.atoms[0].n if self.atoms else None

    @property
    def separable(self) -> bool:
        return all(isinstance(a, Box) for a in self.atoms)

    def merged_box(self) -> Box | None:
        """All Box atoms merged into one; None when the set has no boxes."""
        boxes = [a for a in self.atoms if isinstance(a, Box)]
        if not boxes:
            return None
        lo = np.max([b.lo for b in boxes], axis=0)
        hi = np.min([b.hi for b in boxes], axis=0)
        return Box(lo, hi)

    def has_l1_ball(self) -> bool:
        return any(isinstance(a, L1Ball) for a in self.atoms)

    def linear_parts(self):
        """Stacked (A, B, C, D, lo, hi) of the linear atoms.

        Raises if an atom has no linear description (l1 ball).
        """
        if self.has_l1_ball():
            raise ValidationError("l1-ball atom has no linear description")
        A = [a.A for a in self.atoms if isinstance(a, AffineEq)]
        B = [a.B for a in self.atoms if isinstance(a, AffineEq)]
        C = [a.C for a in self.atoms if isinstance(a, LinearIneq)]
        D = [a.D for a in self.atoms if isinstance(a, LinearIneq)]
        box = self.merged_box()
        return (
            np.vstack(A) if A else None,
            np.concatenate(B) if B else None,
            np.vstack(C) if C else None,
            np.concatenate(D) if D else None,
            box.lo if box is not None else None,
            box.hi if box is not None else None,
        )

    def projectors(self):
        """Flat projector list: one per atom, inequality atoms one per row."""
        ps = []
        for atom in self.atoms:
            if isinstance(atom, LinearIneq):
                ps.extend(atom.row_projectors())
            else:
                ps.append(atom.projector())
        return ps


@dataclass(frozen=True)
class ContainsReport:
    ok: bool
    residuals: tuple  # one float per atom, same order as the set

    def __bool__(self):
        return self.ok


def classify(cs: ConstraintSet) -> Classification:
    """Separable (pure box, or empty) routes to per-coordinate clamping;
    anything else needs the operator-splitting solver."""
    return Classification.SEPARABLE if cs.separable else Classification.COUPLED


def project(cs: ConstraintSet, v, block_qp: bool = False, **dykstra_opts) -> np.ndarray:
    """Projection onto the intersection of the atoms.

    Single-set cases use the closed form; intersections cycle the atom
    projectors in declaration order with Dykstra corrections.  Multi-row
    inequality atoms are split into half-space rows by default;
    ``block_qp=True`` keeps each such atom whole behind one exact
    quadratic-program projection instead.
    """
    v = np.asarray(v, dtype=float)
    if not cs.atoms:
        return v.copy()
    if block_qp:
        from . import qp

        ps = []
        for atom in cs.atoms:
            if isinstance(atom, LinearIneq) and atom.C.shape[0] > 1:
                ps.append(partial(qp.project_qp, C_ub=atom.C, d_ub=atom.D))
            elif isinstance(atom, LinearIneq):
                ps.extend(atom.row_projectors())
            else:
                ps.append(atom.projector())
    else:
        ps = cs.projectors()
    if len(ps) == 1:
        return ps[0](v)
    return prox.dykstra(v, ps, **dykstra_opts)


def contains(cs: ConstraintSet, x, tol: float = MEMBERSHIP_TOL) -> ContainsReport:
    """Membership within tol, with one residual per atom for diagnostics."""
    residuals = tuple(atom.residual(x) for atom in cs.atoms)
    ok = all(r <= tol for r in residuals)
    return ContainsReport(ok=ok, residuals=residuals)
