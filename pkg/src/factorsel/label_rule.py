"""Threshold expressions and the diagnostic LabelRule.

Expressions compare named columns with constants and combine comparisons
with ``and``, ``or`` and ``not``, e.g. ``braak >= 4 and cerad >= 2``. They are
parsed with pyparsing into a small tree of predicate objects that can be
evaluated over every row of a table at once.

We don't call pp.ParserElement.enablePackrat(): expressions are short.
"""

import json
import operator
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Protocol

import numpy as np
import numpy.typing as npt
import pyparsing as pp
from pyparsing import common

from factorsel.errors import SchemaError

BoolArray = npt.NDArray[np.bool_]
Literal = float | str

_OPERATORS: dict[str, Callable[[object, object], object]] = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}

# Flipped so that ``4 <= braak`` means ``braak >= 4``.
_FLIPPED = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}

_BARE_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*\Z")
_KEYWORDS = {"and", "or", "not"}


class ColumnSource(Protocol):
    """Anything that can supply whole columns for expression evaluation."""

    def column(self, name: str) -> npt.NDArray[np.generic]:
        """Return the values of a column, one entry per row."""
        ...

    def encode_literal(self, name: str, literal: Literal) -> Literal:
        """Translate a literal into the representation used by a column."""
        ...

    @property
    def n_rows(self) -> int:
        """Number of rows."""
        ...


class Predicate:
    """A boolean expression over table columns."""

    def evaluate(self, table: ColumnSource) -> BoolArray:
        """Return one truth value per row."""
        raise NotImplementedError

    def columns(self) -> set[str]:
        """Return the names of the columns the expression references."""
        raise NotImplementedError


@dataclass(frozen=True)
class Comparison(Predicate):
    """``column op constant``."""

    column_name: str
    op: str
    constant: Literal

    def evaluate(self, table: ColumnSource) -> BoolArray:
        """Compare every row of the column with the constant.

        Missing numeric cells (NaN) compare false under every operator except
        ``!=``.
        """
        values = table.column(self.column_name)
        constant = table.encode_literal(self.column_name, self.constant)
        result = _OPERATORS[self.op](values, constant)
        return np.asarray(result, dtype=bool).reshape(table.n_rows)

    def columns(self) -> set[str]:
        """Return the compared column."""
        return {self.column_name}

    def __str__(self) -> str:
        """Return the expression in source form."""
        if isinstance(self.constant, str):
            constant = json.dumps(self.constant)
        else:
            constant = f"{self.constant:g}"
            if float(constant) != self.constant:
                constant = repr(self.constant)
        name = self.column_name
        if not _BARE_NAME.match(name) or name.lower() in _KEYWORDS:
            name = f"`{name}`"
        return f"{name} {self.op} {constant}"


@dataclass(frozen=True)
class Not(Predicate):
    """Negation."""

    operand: Predicate

    def evaluate(self, table: ColumnSource) -> BoolArray:
        """Negate the operand row by row."""
        return ~self.operand.evaluate(table)

    def columns(self) -> set[str]:
        """Return the operand's columns."""
        return self.operand.columns()

    def __str__(self) -> str:
        """Return the expression in source form."""
        return f"not ({self.operand})"


@dataclass(frozen=True)
class Conjunction(Predicate):
    """``and`` (all operands) or ``or`` (any operand)."""

    kind: str
    operands: tuple[Predicate, ...]

    def evaluate(self, table: ColumnSource) -> BoolArray:
        """Combine the operands row by row."""
        results = [operand.evaluate(table) for operand in self.operands]
        if self.kind == "and":
            return np.logical_and.reduce(results)
        return np.logical_or.reduce(results)

    def columns(self) -> set[str]:
        """Return the union of the operands' columns."""
        names: set[str] = set()
        for operand in self.operands:
            names |= operand.columns()
        return names

    def __str__(self) -> str:
        """Return the expression in source form."""
        return f" {self.kind} ".join(f"({operand})" for operand in self.operands)


def _make_comparison(tokens: pp.ParseResults) -> Comparison:
    """Build a Comparison from ``operand op operand`` tokens."""
    left, op, right = tokens[0], tokens[1], tokens[2]
    if isinstance(left, _Identifier) and not isinstance(right, _Identifier):
        return Comparison(left.name, op, right)
    if isinstance(right, _Identifier) and not isinstance(left, _Identifier):
        return Comparison(right.name, _FLIPPED[op], left)
    raise pp.ParseException("", 0, "a comparison needs one column and one constant")


@dataclass(frozen=True)
class _Identifier:
    name: str


def _make_not(tokens: pp.ParseResults) -> Not:
    return Not(tokens[0][1])


def _make_and(tokens: pp.ParseResults) -> Conjunction:
    return Conjunction("and", tuple(tokens[0][0::2]))


def _make_or(tokens: pp.ParseResults) -> Conjunction:
    return Conjunction("or", tuple(tokens[0][0::2]))


def _build_parser() -> pp.ParserElement:
    """Build the pyparsing grammar for predicate expressions."""
    and_kw = pp.CaselessKeyword("and")
    or_kw = pp.CaselessKeyword("or")
    not_kw = pp.CaselessKeyword("not")
    keyword = and_kw | or_kw | not_kw

    bare_name = ~keyword + pp.Word(pp.alphas + "_", pp.alphanums + "_.")
    quoted_name = pp.QuotedString("`")
    identifier = (bare_name | quoted_name).set_parse_action(
        lambda t: _Identifier(str(t[0]))
    )
    number = common.fnumber.copy().set_parse_action(lambda t: float(t[0]))
    string = pp.QuotedString('"', esc_char="\\") | pp.QuotedString("'", esc_char="\\")
    operand = number | string | identifier
    comparison_op = pp.one_of("<= >= == != < >")
    comparison = (operand + comparison_op + operand).set_parse_action(
        _make_comparison
    )

    return pp.infix_notation(
        comparison,
        [
            (not_kw, 1, pp.OpAssoc.RIGHT, _make_not),
            (and_kw, 2, pp.OpAssoc.LEFT, _make_and),
            (or_kw, 2, pp.OpAssoc.LEFT, _make_or),
        ],
    )


_PARSER = _build_parser()


def parse_expression(text: str) -> Predicate:
    """Parse a predicate expression.

    Args:
        text: e.g. ``"braak >= 4 and cerad >= 2"``

    Raises:
        pyparsing.ParseException: text is not a valid expression

    Returns:
        The parsed predicate

    """
    result = _PARSER.parse_string(text, parse_all=True)
    predicate = result[0]
    if not isinstance(predicate, Predicate):
        raise pp.ParseException(text, 0, "expected a comparison")
    return predicate


def check_columns(predicate: Predicate, available: set[str] | list[str]) -> None:
    """Raise SchemaError if the predicate references an unknown column."""
    missing = sorted(predicate.columns() - set(available))
    if missing:
        raise SchemaError(f"expression references unknown columns: {missing}")


@dataclass(frozen=True)
class LabelRule:
    """Diagnostic rule that decides AD and LATE status for each subject.

    The shipped default thresholds are placeholders for the cohort-specific
    criteria; replace them in the run config.

    Attributes:
        ad_predicate: true for subjects with AD pathology
        late_predicate: true for subjects with LATE pathology
        identifier: optional name of a shipped rule

    """

    ad_predicate: Predicate
    late_predicate: Predicate
    identifier: str | None = field(default=None, compare=False)

    def __str__(self) -> str:
        """Return a concise representation."""
        if self.identifier:
            return f'LabelRule.named("{self.identifier}")'
        return f"LabelRule(ad={self.ad_predicate}, late={self.late_predicate})"

    def columns(self) -> set[str]:
        """Return every diagnostic column used by either predicate."""
        return self.ad_predicate.columns() | self.late_predicate.columns()

    @classmethod
    def from_expressions(
        cls, ad: str, late: str, identifier: str | None = None
    ) -> "LabelRule":
        """Create an instance from two expression strings."""
        return cls(parse_expression(ad), parse_expression(late), identifier)

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "LabelRule":
        """Create an instance from ``{"ad": "...", "late": "..."}``.

        Raises:
            ValueError: a key is missing or not a string
            pyparsing.ParseException: an expression is malformed

        """
        ad = data.get("ad")
        late = data.get("late")
        if not isinstance(ad, str) or not isinstance(late, str):
            raise ValueError("LabelRule data must include string 'ad' and 'late'")
        identifier = data.get("identifier")
        return cls.from_expressions(
            ad, late, identifier if isinstance(identifier, str) else None
        )

    @classmethod
    def from_file(cls, file_path: str, identifier: str | None = None) -> "LabelRule":
        """Create an instance from a JSON file."""
        with open(file_path, "r", encoding="utf-8") as f:
            data = json.load(f)
        rule = cls.from_dict(data)
        if identifier is not None:
            rule = cls(rule.ad_predicate, rule.late_predicate, identifier)
        return rule

    @classmethod
    def named(cls, identifier: str) -> "LabelRule":
        """Load a rule shipped in the package data directory.

        Args:
            identifier: Available values:

                - "braak-cerad-tdp": AD from Braak and CERAD scores, LATE from
                  TDP-43 stage

        Raises:
            FileNotFoundError: no rule with that identifier

        """
        path = resources.files("factorsel").joinpath(
            "data", "label_rules", f"{identifier}.json"
        )
        if path.is_file():
            return cls.from_file(str(path), identifier)
        raise FileNotFoundError(f"Unknown label rule identifier: {identifier}")
