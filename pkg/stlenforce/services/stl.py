"""Non-nested STL formulas over affine predicates: types, parser, printer, analyses."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
import logging
from typing import Callable, Iterator, Mapping, Union

import pyparsing as pp

from stlenforce.core.errors import StlEnforceError
from stlenforce.core.numbers import format_rational, parse_rational


_LOGGER = logging.getLogger(__name__)


class FormulaError(StlEnforceError):
    pass


class FormulaSyntaxError(FormulaError):
    def __init__(self, message: str, position: int | None = None) -> None:
        detail = message if position is None else f"{message} (at position {position})"
        super().__init__(detail, user_message=f"Invalid property: {detail}")
        self.position = position


class NestedTemporalError(FormulaSyntaxError):
    pass


class IntervalError(FormulaSyntaxError):
    pass


class NonAffineError(FormulaSyntaxError):
    pass


class MissingVariableError(FormulaError):
    pass


class Comparison(str, Enum):
    GE = ">="
    GT = ">"
    LE = "<="
    LT = "<"
    EQ = "=="


@dataclass(frozen=True)
class AffineExpr:
    """sum(coef * var) + constant, coefficients sorted by variable name."""

    coefficients: tuple[tuple[str, Fraction], ...]
    constant: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        cleaned = tuple(sorted((name, Fraction(coef)) for name, coef in self.coefficients if coef != 0))
        object.__setattr__(self, "coefficients", cleaned)
        object.__setattr__(self, "constant", Fraction(self.constant))
        names = [name for name, _ in cleaned]
        if len(set(names)) != len(names):
            raise FormulaError(f"duplicate variable in affine expression: {names}")
        if not cleaned:
            raise FormulaError("affine expression needs at least one nonzero coefficient")

    @classmethod
    def of(cls, coefficients: Mapping[str, Fraction | int | str], constant: Fraction | int | str = 0) -> AffineExpr:
        return cls(
            tuple((name, parse_rational(coef)) for name, coef in coefficients.items()),
            parse_rational(constant),
        )

    @property
    def support(self) -> frozenset[str]:
        return frozenset(name for name, _ in self.coefficients)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.coefficients)

    def coefficient(self, name: str) -> Fraction:
        for var, coef in self.coefficients:
            if var == name:
                return coef
        return Fraction(0)

    @property
    def norm_squared(self) -> Fraction:
        return sum((coef * coef for _, coef in self.coefficients), Fraction(0))

    def evaluate(self, point: Mapping[str, Fraction]) -> Fraction:
        total = self.constant
        for name, coef in self.coefficients:
            try:
                total += coef * point[name]
            except KeyError:
                raise MissingVariableError(
                    f"point has no value for variable {name!r}",
                    user_message=f"Signal is missing variable {name!r}.",
                ) from None
        return total

    def negated(self) -> AffineExpr:
        return AffineExpr(tuple((name, -coef) for name, coef in self.coefficients), -self.constant)

    def shifted(self, amount: Fraction) -> AffineExpr:
        return AffineExpr(self.coefficients, self.constant + amount)

    def __str__(self) -> str:
        parts: list[str] = []
        for index, (name, coef) in enumerate(self.coefficients):
            sign = "-" if coef < 0 else "+"
            magnitude = abs(coef)
            body = name if magnitude == 1 else f"{format_rational(magnitude)}*{name}"
            if index == 0:
                parts.append(f"-{body}" if sign == "-" else body)
            else:
                parts.append(f"{sign} {body}")
        if self.constant:
            sign = "-" if self.constant < 0 else "+"
            parts.append(f"{sign} {format_rational(abs(self.constant))}")
        return " ".join(parts)


@dataclass(frozen=True)
class Predicate:
    """mu(x) op 0 with op in {GE, GT, EQ} after normalization."""

    id: str
    expr: AffineExpr
    op: Comparison

    def __post_init__(self) -> None:
        if self.op not in (Comparison.GE, Comparison.GT, Comparison.EQ):
            raise FormulaError(f"predicate {self.id!r} is not normalized: {self.op.value}")

    @property
    def support(self) -> frozenset[str]:
        return self.expr.support

    @property
    def key(self) -> tuple[AffineExpr, Comparison]:
        return (self.expr, self.op)

    def holds(self, point: Mapping[str, Fraction]) -> bool:
        value = self.expr.evaluate(point)
        if self.op is Comparison.GE:
            return value >= 0
        if self.op is Comparison.GT:
            return value > 0
        return value == 0

    def __str__(self) -> str:
        return f"{self.expr} {self.op.value} 0"


def make_predicate(pid: str, lhs: AffineExpr, op: Comparison, rhs: Fraction | int = 0) -> Predicate:
    """Normalize ``lhs op rhs``: LE/LT flip to GE/GT of the negation, EQ gets a positive leading coefficient."""
    expr = lhs.shifted(-Fraction(rhs))
    if op in (Comparison.LE, Comparison.LT):
        expr = expr.negated()
        op = Comparison.GE if op is Comparison.LE else Comparison.GT
    elif op is Comparison.EQ and expr.coefficients[0][1] < 0:
        expr = expr.negated()
    return Predicate(pid, expr, op)


def eval_predicate(p: Predicate, point: Mapping[str, Fraction]) -> bool:
    return p.holds(point)


@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", Fraction(self.lo))
        object.__setattr__(self, "hi", Fraction(self.hi))
        if self.lo < 0:
            raise IntervalError(f"interval lower bound {format_rational(self.lo)} is negative")
        if self.lo > self.hi:
            raise IntervalError(
                f"interval lo > hi: [{format_rational(self.lo)},{format_rational(self.hi)}]"
            )

    @property
    def punctual(self) -> bool:
        return self.lo == self.hi

    def __str__(self) -> str:
        return f"[{format_rational(self.lo)},{format_rational(self.hi)}]"


@dataclass(frozen=True)
class TrueFormula:
    pass


@dataclass(frozen=True)
class Lit:
    predicate: Predicate
    polarity: bool = True

    def holds(self, point: Mapping[str, Fraction]) -> bool:
        return self.predicate.holds(point) == self.polarity


@dataclass(frozen=True)
class And:
    left: "StlFormula"
    right: "StlFormula"


@dataclass(frozen=True)
class Or:
    left: "StlFormula"
    right: "StlFormula"


@dataclass(frozen=True)
class Until:
    left: "StlFormula"
    interval: Interval
    right: "StlFormula"


@dataclass(frozen=True)
class Release:
    left: "StlFormula"
    interval: Interval
    right: "StlFormula"


StlFormula = Union[TrueFormula, Lit, And, Or, Until, Release]
Temporal = Union[Until, Release]
TRUE = TrueFormula()


def is_temporal(phi: StlFormula) -> bool:
    return isinstance(phi, (Until, Release))


def contains_temporal(phi: StlFormula) -> bool:
    if is_temporal(phi):
        return True
    if isinstance(phi, (And, Or)):
        return contains_temporal(phi.left) or contains_temporal(phi.right)
    return False


def walk(phi: StlFormula) -> Iterator[StlFormula]:
    """Pre-order, left to right."""
    yield phi
    if isinstance(phi, (And, Or, Until, Release)):
        yield from walk(phi.left)
        yield from walk(phi.right)


def temporal_terms(phi: StlFormula) -> list[Temporal]:
    return [node for node in walk(phi) if is_temporal(node)]


def predicates(phi: StlFormula) -> tuple[Predicate, ...]:
    seen: dict[tuple[AffineExpr, Comparison], Predicate] = {}
    for node in walk(phi):
        if isinstance(node, Lit) and node.predicate.key not in seen:
            seen[node.predicate.key] = node.predicate
    return tuple(seen.values())


def relevant_points(phi: StlFormula) -> tuple[Fraction, ...]:
    return tuple(sorted(_relevant_points(phi)))


def _relevant_points(phi: StlFormula) -> set[Fraction]:
    if isinstance(phi, TrueFormula):
        return set()
    if isinstance(phi, Lit):
        return {Fraction(0)}
    if isinstance(phi, (And, Or)):
        return _relevant_points(phi.left) | _relevant_points(phi.right)
    return {phi.interval.lo, phi.interval.hi} | _relevant_points(phi.left) | _relevant_points(phi.right)


def horizon(phi: StlFormula) -> Fraction:
    points = relevant_points(phi)
    return points[-1] if points else Fraction(0)


@dataclass(frozen=True)
class ZeroSet:
    """The hyperplane mu_p(x) = 0; single-variable predicates also expose the threshold."""

    expr: AffineExpr
    variable: str | None = None
    threshold: Fraction | None = None

    def __str__(self) -> str:
        if self.variable is not None:
            return f"{self.variable} = {format_rational(self.threshold)}"
        return f"{self.expr} = 0"


def variable_valuations(phi: StlFormula) -> dict[Predicate, ZeroSet]:
    result: dict[Predicate, ZeroSet] = {}
    for p in predicates(phi):
        if len(p.expr.coefficients) == 1:
            name, coef = p.expr.coefficients[0]
            result[p] = ZeroSet(p.expr, name, -p.expr.constant / coef)
        else:
            result[p] = ZeroSet(p.expr)
    return result


def eval_lit(phi: StlFormula, point: Mapping[str, Fraction]) -> bool:
    """Truth of a predicate-level formula at one point."""
    if isinstance(phi, TrueFormula):
        return True
    if isinstance(phi, Lit):
        return phi.holds(point)
    if isinstance(phi, And):
        return eval_lit(phi.left, point) and eval_lit(phi.right, point)
    if isinstance(phi, Or):
        return eval_lit(phi.left, point) or eval_lit(phi.right, point)
    raise FormulaError("temporal operator where a predicate-level formula was expected")


def negate(phi: StlFormula) -> StlFormula:
    if isinstance(phi, Lit):
        return Lit(phi.predicate, not phi.polarity)
    if isinstance(phi, And):
        return Or(negate(phi.left), negate(phi.right))
    if isinstance(phi, Or):
        return And(negate(phi.left), negate(phi.right))
    if isinstance(phi, TrueFormula):
        raise FormulaError("true cannot be negated (no false constant in the grammar)")
    raise FormulaError("only predicate-level formulas can be negated")


# ---------------------------------------------------------------------------
# Printer


def format_formula(phi: StlFormula) -> str:
    if isinstance(phi, TrueFormula):
        return "true"
    if not contains_temporal(phi):
        raise FormulaError("top level must combine temporal terms")
    return _format_top(phi)


def _format_top(phi: StlFormula) -> str:
    if isinstance(phi, TrueFormula):
        return "(true)"
    if is_temporal(phi):
        op = "U" if isinstance(phi, Until) else "R"
        return f"({_format_lit(phi.left)}) {op}{phi.interval} ({_format_lit(phi.right)})"
    if isinstance(phi, (And, Or)):
        word = "and" if isinstance(phi, And) else "or"
        left = _format_top(phi.left)
        if isinstance(phi.left, (And, Or)) and type(phi.left) is not type(phi):
            left = f"({left})"
        right = _format_top(phi.right)
        if isinstance(phi.right, (And, Or)):
            right = f"({right})"
        return f"{left} {word} {right}"
    raise FormulaError("a bare predicate cannot appear at the top level")


def _format_lit(phi: StlFormula) -> str:
    if isinstance(phi, TrueFormula):
        return "true"
    if isinstance(phi, Lit):
        atom = str(phi.predicate)
        return atom if phi.polarity else f"!({atom})"
    if isinstance(phi, (And, Or)):
        symbol = "&&" if isinstance(phi, And) else "||"
        return f"{_wrap_lit(phi.left)} {symbol} {_wrap_lit(phi.right)}"
    raise NestedTemporalError("nested temporal operator")


def _wrap_lit(phi: StlFormula) -> str:
    text = _format_lit(phi)
    return f"({text})" if isinstance(phi, (And, Or)) else text


# ---------------------------------------------------------------------------
# Parser


@dataclass(frozen=True)
class _Monomial:
    coef: Fraction
    powers: tuple[tuple[str, int], ...] = field(default_factory=tuple)

    @property
    def degree(self) -> int:
        return sum(power for _, power in self.powers)


def _to_rational(s: str, loc: int, toks: pp.ParseResults) -> Fraction:
    try:
        return parse_rational(toks[0])
    except ValueError as exc:
        raise pp.ParseException(s, loc, str(exc)) from exc


def _signed_rational(toks: pp.ParseResults) -> Fraction:
    value = toks[-1]
    return -value if len(toks) == 2 and toks[0] == "-" else value


def _factor(toks: pp.ParseResults) -> _Monomial:
    if isinstance(toks[0], Fraction):
        return _Monomial(toks[0])
    power = int(toks[1]) if len(toks) > 1 else 1
    if power == 0:
        return _Monomial(Fraction(1))
    return _Monomial(Fraction(1), ((toks[0], power),))


def _product(s: str, loc: int, toks: pp.ParseResults) -> _Monomial:
    coef = Fraction(1)
    powers: dict[str, int] = {}
    for mono in toks:
        coef *= mono.coef
        for name, power in mono.powers:
            powers[name] = powers.get(name, 0) + power
    result = _Monomial(coef, tuple(sorted(powers.items())))
    if result.degree > 1:
        raise NonAffineError("non-affine term (product of variables or power above 1)", loc)
    return result


@dataclass
class _Affine:
    coefficients: dict[str, Fraction]
    constant: Fraction


def _affine_sum(toks: pp.ParseResults) -> _Affine:
    coefficients: dict[str, Fraction] = {}
    constant = Fraction(0)
    sign = 1
    for tok in toks:
        if isinstance(tok, str):
            sign = -1 if tok == "-" else 1
            continue
        value = tok.coef * sign
        if tok.powers:
            name = tok.powers[0][0]
            coefficients[name] = coefficients.get(name, Fraction(0)) + value
        else:
            constant += value
        sign = 1
    return _Affine(coefficients, constant)


def _atom(s: str, loc: int, toks: pp.ParseResults) -> Lit:
    affine, op, rhs = toks[0], Comparison(toks[1]), toks[2]
    coefficients = {name: coef for name, coef in affine.coefficients.items() if coef != 0}
    if not coefficients:
        raise FormulaSyntaxError("predicate mentions no variable", loc)
    lhs = AffineExpr(tuple(coefficients.items()), affine.constant)
    return Lit(make_predicate("", lhs, op, rhs))


def _negation(s: str, loc: int, toks: pp.ParseResults) -> StlFormula:
    group = list(toks[0])
    operand = group[-1]
    count = len(group) - 1
    if isinstance(operand, TrueFormula) and count % 2:
        raise FormulaSyntaxError("true cannot be negated", loc)
    for _ in range(count):
        operand = negate(operand)
    return operand


def _fold(node_type: type) -> Callable[[pp.ParseResults], StlFormula]:
    def action(toks: pp.ParseResults) -> StlFormula:
        items = list(toks[0])
        result = items[0]
        for operand in items[2::2]:
            result = node_type(result, operand)
        return result

    return action


def _interval(s: str, loc: int, toks: pp.ParseResults) -> Interval:
    lo, hi = toks
    if lo < 0:
        raise IntervalError(f"interval lower bound {format_rational(lo)} is negative", loc)
    if lo > hi:
        raise IntervalError(f"interval lo > hi: [{format_rational(lo)},{format_rational(hi)}]", loc)
    return Interval(lo, hi)


def _temporal(s: str, loc: int, toks: pp.ParseResults) -> Temporal:
    if toks[0] == "F":
        left, op, interval, right = TRUE, "U", toks[1], toks[2]
    else:
        left, op, interval, right = toks
    for operand in (left, right):
        if contains_temporal(operand):
            raise NestedTemporalError("nested temporal operator", loc)
    return Until(left, interval, right) if op == "U" else Release(left, interval, right)


def _top_level(toks: pp.ParseResults) -> StlFormula:
    result = toks[0]
    for index in range(1, len(toks), 2):
        node_type = And if toks[index] in ("and", "&") else Or
        result = node_type(result, toks[index + 1])
    return result


def _build_grammar() -> pp.ParserElement:
    keyword = pp.MatchFirst(pp.Keyword(word) for word in ("U", "R", "F", "and", "or", "true"))
    true_kw = pp.Keyword("true").set_parse_action(lambda: TRUE)
    ident = ~keyword + pp.Word(pp.alphas + "_", pp.alphanums + "_")
    number = pp.Regex(r"\d+/\d+|\d+(?:\.\d+)?|\.\d+").set_parse_action(_to_rational)
    signed = (pp.Opt(pp.one_of("+ -")) + number).set_parse_action(_signed_rational)

    factor = (number | ident + pp.Opt(pp.Suppress("^") + pp.Word(pp.nums))).set_parse_action(_factor)
    product = (factor + pp.ZeroOrMore(pp.Suppress("*") + factor)).set_parse_action(_product)
    affine = pp.Group(pp.Opt(pp.one_of("+ -")) + product + pp.ZeroOrMore(pp.one_of("+ -") + product))
    affine.set_parse_action(lambda toks: _affine_sum(toks[0]))
    comparison = pp.one_of("<= >= == < >")
    atom = (affine + comparison + signed).set_parse_action(_atom)

    lit = pp.infix_notation(
        atom | true_kw,
        [
            (pp.Literal("!"), 1, pp.OpAssoc.RIGHT, _negation),
            (pp.Literal("&&"), 2, pp.OpAssoc.LEFT, _fold(And)),
            (pp.Literal("||"), 2, pp.OpAssoc.LEFT, _fold(Or)),
        ],
    )

    formula = pp.Forward()
    lpar, rpar = pp.Suppress("("), pp.Suppress(")")
    operand = lpar + ((formula + pp.FollowedBy(")")) | lit) + rpar
    interval = pp.Suppress("[") + signed + pp.Suppress(",") + signed + pp.Suppress("]")
    interval.set_parse_action(_interval)
    temporal = (
        (operand + pp.one_of("U R") + interval + operand) | (pp.Keyword("F") + interval + operand)
    ).set_parse_action(_temporal)
    term = temporal | lpar + formula + rpar
    and_op = pp.Keyword("and") | pp.Regex(r"&(?!&)")
    or_op = pp.Keyword("or") | pp.Regex(r"\|(?!\|)")
    formula <<= true_kw | (
        term + pp.Opt(pp.OneOrMore(and_op + term) | pp.OneOrMore(or_op + term))
    ).set_parse_action(_top_level)
    return formula


_GRAMMAR = _build_grammar()


def parse_formula(text: str) -> StlFormula:
    try:
        result = _GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseBaseException as exc:
        raise FormulaSyntaxError(f"syntax error: {exc.msg}", exc.loc) from exc
    phi = _assign_ids(result[0])
    _LOGGER.debug("Parsed %r into %d predicates", text, len(predicates(phi)))
    return phi


def _assign_ids(phi: StlFormula) -> StlFormula:
    ids: dict[tuple[AffineExpr, Comparison], str] = {}

    def visit(node: StlFormula) -> StlFormula:
        if isinstance(node, Lit):
            pid = ids.setdefault(node.predicate.key, f"p{len(ids) + 1}")
            return Lit(replace(node.predicate, id=pid), node.polarity)
        if isinstance(node, (And, Or)):
            return type(node)(visit(node.left), visit(node.right))
        if isinstance(node, (Until, Release)):
            return type(node)(visit(node.left), node.interval, visit(node.right))
        return node

    return visit(phi)
