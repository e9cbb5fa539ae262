"""Minimal-distance modification of a signal value so a corrected valuation holds."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
import logging
import math
from typing import Mapping, Sequence

import numpy as np

from stlenforce.core.config import settings
from stlenforce.core.errors import StlEnforceError
from stlenforce.core.numbers import format_rational
from stlenforce.services.encoder import Valuation
from stlenforce.services.stl import AffineExpr, Comparison, Predicate, make_predicate
from stlenforce.services.transducer import OutputSymbol


_LOGGER = logging.getLogger(__name__)

_FLOAT_TOL = 1e-9


class ModificationError(StlEnforceError):
    pass


class InfeasibleModification(ModificationError):
    def __init__(self, message: str, user_message: str | None = None) -> None:
        super().__init__(
            message, user_message or "No signal value satisfies the corrected predicates (contradictory constraints)."
        )


@dataclass(frozen=True)
class LinearConstraint:
    """``a . y >= bound``, or ``a . y == bound`` when ``equality``."""

    coefficients: tuple[tuple[str, Fraction], ...]
    bound: Fraction
    equality: bool = False

    def lhs(self, point: Mapping[str, Fraction]) -> Fraction:
        return sum((coef * point[name] for name, coef in self.coefficients), Fraction(0))

    def holds(self, point: Mapping[str, Fraction]) -> bool:
        value = self.lhs(point)
        return value == self.bound if self.equality else value >= self.bound

    def restricted(self, fixed: Mapping[str, Fraction], free: frozenset[str] | set[str]) -> LinearConstraint:
        """Fold the variables outside ``free`` into the bound."""
        bound = self.bound
        kept = []
        for name, coef in self.coefficients:
            if name in free:
                kept.append((name, coef))
            else:
                bound -= coef * fixed[name]
        return LinearConstraint(tuple(kept), bound, self.equality)

    def __str__(self) -> str:
        terms = " + ".join(f"{format_rational(c)}*{n}" for n, c in self.coefficients) or "0"
        return f"{terms} {'==' if self.equality else '>='} {format_rational(self.bound)}"


def _scaled(expr: AffineExpr, sign: int) -> tuple[tuple[str, Fraction], ...]:
    return tuple((name, sign * coef) for name, coef in expr.coefficients)


def literal_constraints(
    p: Predicate, truth: bool, eps: Fraction, margin: Fraction | None = None
) -> tuple[LinearConstraint, ...]:
    """Alternatives (any one suffices) that make ``p`` evaluate to ``truth``.

    ``margin`` replaces ``eps`` for strict sides; only ``!=`` yields two alternatives.
    """
    gap = eps if margin is None else margin
    c = p.expr.constant
    if p.op is Comparison.GE:
        if truth:
            return (LinearConstraint(_scaled(p.expr, 1), -c),)
        return (LinearConstraint(_scaled(p.expr, -1), c + gap),)
    if p.op is Comparison.GT:
        if truth:
            return (LinearConstraint(_scaled(p.expr, 1), gap - c),)
        return (LinearConstraint(_scaled(p.expr, -1), c),)
    if truth:
        return (LinearConstraint(_scaled(p.expr, 1), -c, equality=True),)
    return (
        LinearConstraint(_scaled(p.expr, 1), gap - c),
        LinearConstraint(_scaled(p.expr, -1), c + gap),
    )


@dataclass(frozen=True)
class ModificationRequest:
    point: Mapping[str, Fraction]
    action: Valuation
    output: OutputSymbol
    predicates: tuple[Predicate, ...]

    def __post_init__(self) -> None:
        if self.output.is_top:
            raise ModificationError("Top outputs need no modification")
        known = {p.id for p in self.predicates}
        missing = self.output.fix - known
        if missing:
            raise ModificationError(f"fix-set names unknown predicates: {sorted(missing)}")

    @property
    def corrected(self) -> Valuation:
        return self.action.flipped(self.output.fix)


@dataclass(frozen=True)
class ModificationResult:
    point: dict[str, Fraction]
    deltas: dict[str, Fraction] = field(default_factory=dict)
    distance_squared: Fraction = Fraction(0)

    @property
    def distance(self) -> float:
        return math.sqrt(self.distance_squared)

    @property
    def changed(self) -> bool:
        return bool(self.deltas)


# ---------------------------------------------------------------------------
# Exact linear algebra


def _solve_exact(matrix: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction] | None:
    """Gauss-Jordan elimination over Fractions; None when singular."""
    n = len(matrix)
    rows = [list(row) + [value] for row, value in zip(matrix, rhs)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if rows[r][col] != 0), None)
        if pivot is None:
            return None
        rows[col], rows[pivot] = rows[pivot], rows[col]
        lead = rows[col][col]
        rows[col] = [value / lead for value in rows[col]]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                factor = rows[r][col]
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[col])]
    return [row[n] for row in rows]


def _project_onto(
    center: list[Fraction], rows: list[list[Fraction]], bounds: list[Fraction]
) -> tuple[list[Fraction], list[Fraction]] | None:
    """Closest point to ``center`` with every row active; returns (point, multipliers)."""
    if not rows:
        return list(center), []
    gram = [[sum((a * b for a, b in zip(r1, r2)), Fraction(0)) for r2 in rows] for r1 in rows]
    residual = [b - sum((a * x for a, x in zip(row, center)), Fraction(0)) for row, b in zip(rows, bounds)]
    lam = _solve_exact(gram, residual)
    if lam is None:
        return None
    point = [x + sum((l * row[i] for l, row in zip(lam, rows)), Fraction(0)) for i, x in enumerate(center)]
    return point, lam


def _is_kkt(
    working: Sequence[int],
    constraints: Sequence[LinearConstraint],
    names: Sequence[str],
    point: list[Fraction],
    multipliers: list[Fraction],
) -> bool:
    values = dict(zip(names, point))
    if not all(c.holds(values) for c in constraints):
        return False
    return all(lam >= 0 for index, lam in zip(working, multipliers) if not constraints[index].equality)


def _float_working_set(
    center: list[Fraction], dense: list[list[Fraction]], constraints: Sequence[LinearConstraint], max_iter: int
) -> list[int] | None:
    """Active-set guess in floating point: add the worst violation, drop negative multipliers."""
    x = np.array([float(v) for v in center])
    A = np.array([[float(v) for v in row] for row in dense]).reshape(len(dense), len(center))
    b = np.array([float(c.bound) for c in constraints])
    working = [i for i, c in enumerate(constraints) if c.equality]
    n = len(center)
    for _ in range(max_iter):
        A_w = A[working] if working else np.zeros((0, n))
        k = len(working)
        kkt = np.block([[np.eye(n), -A_w.T], [A_w, np.zeros((k, k))]])
        rhs = np.concatenate([x, b[working] if working else np.zeros(0)])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return None
        y, lam = sol[:n], sol[n:]
        negative = [
            (value, pos) for pos, value in enumerate(lam) if not constraints[working[pos]].equality and value < -_FLOAT_TOL
        ]
        if negative:
            working.pop(min(negative)[1])
            continue
        violations = b - A @ y
        for i, c in enumerate(constraints):
            if c.equality or i in working:
                violations[i] = 0.0
        worst = int(np.argmax(violations)) if len(violations) else 0
        if not len(violations) or violations[worst] <= _FLOAT_TOL:
            return working
        working.append(worst)
    return None


def solve_qp(
    center: Mapping[str, Fraction],
    constraints: Sequence[LinearConstraint],
    max_iter: int | None = None,
) -> dict[str, Fraction]:
    """Exact Euclidean projection of ``center`` onto the polyhedron of ``constraints``."""
    names = sorted(set(center) | {name for c in constraints for name, _ in c.coefficients})
    missing = [name for name in names if name not in center]
    if missing:
        raise ModificationError(f"constraint variables {missing} have no current value")
    start = dict(center)
    if all(c.holds(start) for c in constraints):
        return start
    x = [Fraction(center[name]) for name in names]
    dense = []
    for c in constraints:
        row = dict(c.coefficients)
        dense.append([Fraction(row.get(name, 0)) for name in names])
    for c, row in zip(constraints, dense):
        if not any(row) and not c.holds(start):
            raise InfeasibleModification(f"constant constraint {c} cannot be met")

    guess = _float_working_set(x, dense, constraints, max_iter or settings.qp_max_iter)
    if guess is not None:
        solved = _project_onto(x, [dense[i] for i in guess], [constraints[i].bound for i in guess])
        if solved is not None and _is_kkt(guess, constraints, names, *solved):
            return dict(zip(names, solved[0]))
        _LOGGER.debug("Float working set %s failed exact KKT check; enumerating", guess)

    equalities = [i for i, c in enumerate(constraints) if c.equality]
    inequalities = [i for i, c in enumerate(constraints) if not c.equality]
    for size in range(0, min(len(inequalities), len(names)) + 1):
        for subset in combinations(inequalities, size):
            working = equalities + list(subset)
            solved = _project_onto(x, [dense[i] for i in working], [constraints[i].bound for i in working])
            if solved is not None and _is_kkt(working, constraints, names, *solved):
                return dict(zip(names, solved[0]))
    raise InfeasibleModification(f"no point satisfies {[str(c) for c in constraints]}")


def project_halfspace(
    point: Mapping[str, Fraction], expr: AffineExpr, op: Comparison, truth: bool, eps: Fraction
) -> dict[str, Fraction]:
    """Closed-form projection onto a single predicate constraint."""
    if not expr.coefficients:
        raise ModificationError("cannot project onto a constraint with a zero coefficient vector")
    p = make_predicate("_", expr, op)
    best: dict[str, Fraction] | None = None
    best_distance: Fraction | None = None
    for constraint in literal_constraints(p, truth, eps):
        y = dict(point)
        if not constraint.holds(y):
            norm = sum((coef * coef for _, coef in constraint.coefficients), Fraction(0))
            step = (constraint.bound - constraint.lhs(y)) / norm
            for name, coef in constraint.coefficients:
                y[name] = point[name] + step * coef
        distance = sum(((y[name] - point[name]) ** 2 for name, _ in constraint.coefficients), Fraction(0))
        if best_distance is None or distance < best_distance:
            best, best_distance = y, distance
    return best


# ---------------------------------------------------------------------------
# Modify


class _Components:
    def __init__(self, names: set[str]) -> None:
        self.parent = {name: name for name in names}

    def find(self, name: str) -> str:
        while self.parent[name] != name:
            self.parent[name] = self.parent[self.parent[name]]
            name = self.parent[name]
        return name

    def join(self, names: set[str] | frozenset[str]) -> None:
        names = sorted(names)
        for other in names[1:]:
            self.parent[self.find(other)] = self.find(names[0])

    def groups(self) -> list[frozenset[str]]:
        result: dict[str, set[str]] = {}
        for name in self.parent:
            result.setdefault(self.find(name), set()).add(name)
        return [frozenset(group) for _, group in sorted(result.items())]


def _preserve_margin(p: Predicate, point: Mapping[str, Fraction], truth: bool, eps: Fraction) -> Fraction:
    """Keep already-true strict literals feasible at the current point."""
    mu = p.expr.evaluate(point)
    if p.op is Comparison.GT and truth and mu > 0:
        return min(eps, mu)
    if not truth and ((p.op is Comparison.GE and mu < 0) or (p.op is Comparison.EQ and mu != 0)):
        return min(eps, abs(mu))
    return eps


def modify(req: ModificationRequest, eps: Fraction | None = None) -> ModificationResult:
    eps = settings.eps if eps is None else Fraction(eps)
    if eps <= 0:
        raise ModificationError("eps must be positive")
    point = {name: Fraction(value) for name, value in req.point.items()}
    by_id = {p.id: p for p in req.predicates}
    corrected = req.corrected
    fixing = [by_id[pid] for pid in sorted(req.output.fix)]
    free: set[str] = set().union(*(p.support for p in fixing))
    preserved = [p for p in req.predicates if p.id not in req.output.fix and p.support & free]

    components = _Components(free)
    for p in fixing:
        components.join(p.support)
    for p in preserved:
        components.join(p.support & free)

    new_point = dict(point)
    for group in components.groups():
        choices: list[tuple[LinearConstraint, ...]] = []
        for p in fixing:
            if p.support & group:
                choices.append(literal_constraints(p, corrected[p.id], eps))
        for p in preserved:
            if p.support & group:
                margin = _preserve_margin(p, point, corrected[p.id], eps)
                choices.append(literal_constraints(p, corrected[p.id], eps, margin))
        center = {name: point[name] for name in group}
        best: dict[str, Fraction] | None = None
        best_distance: Fraction | None = None
        for combo in product(*choices):
            try:
                y = solve_qp(center, [c.restricted(point, group) for c in combo])
            except InfeasibleModification:
                continue
            distance = sum(((y[n] - center[n]) ** 2 for n in group), Fraction(0))
            if best_distance is None or distance < best_distance:
                best, best_distance = y, distance
        if best is None:
            _LOGGER.warning("Infeasible modification over %s at %s", sorted(group), req.action)
            raise InfeasibleModification(f"constraints over {sorted(group)} are contradictory for {corrected}")
        new_point.update(best)

    for p in fixing + preserved:
        if p.holds(new_point) != corrected[p.id]:
            raise ModificationError(f"modified point does not give {p.id} the value {corrected[p.id]}")
    deltas = {name: new_point[name] - point[name] for name in sorted(free) if new_point[name] != point[name]}
    result = ModificationResult(new_point, deltas, sum((d * d for d in deltas.values()), Fraction(0)))
    _LOGGER.info("Modified %s by distance %.6g to fix %s", sorted(deltas), result.distance, sorted(req.output.fix))
    return result
