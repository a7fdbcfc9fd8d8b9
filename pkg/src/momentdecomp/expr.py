"""Parameter expressions: tokenizer, recursive-descent parser, evaluator, printer.

Grammar (left-associative binary operators, unary minus binds tightest)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | primary
    primary := NUMBER | NAME | ("min" | "max") "(" expr "," expr ")" | "(" expr ")"

Numbers are unsigned decimal literals with optional exponent; a leading minus
is always parsed as :class:`Neg`.
"""

from __future__ import annotations

import math
import re
from collections.abc import Collection, Mapping
from dataclasses import dataclass
from typing import Union

from .errors import DivisionByZero, ModelSyntaxError, NonFiniteResult, UnknownVariableReference

FUNCTIONS = {"min": min, "max": max}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: Expr


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple[Expr, ...]


Expr = Union[Num, Var, Neg, BinOp, Call]


# -- tokenizer -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "op" or "end"
    text: str
    line: int
    column: int


def tokenize(text: str, where: str | None = None) -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ModelSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, where)
        kind = m.lastgroup
        if kind == "ws":
            for i, ch in enumerate(m.group(), start=pos):
                if ch == "\n":
                    line, line_start = line + 1, i + 1
        else:
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("end", "", line, pos - line_start + 1))
    return tokens


# -- parser --------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, where: str | None):
        self.where = where
        self.tokens = tokenize(text, where)
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def error(self, message: str, tok: Token | None = None) -> ModelSyntaxError:
        tok = tok or self.tok
        return ModelSyntaxError(message, tok.line, tok.column, self.where)

    def describe(self, tok: Token) -> str:
        return "end of expression" if tok.kind == "end" else repr(tok.text)

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            raise self.error(f"expected {text!r}, found {self.describe(self.tok)}")

    def parse(self) -> Expr:
        if self.tok.kind == "end":
            raise self.error("empty expression")
        node = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.describe(self.tok)} after expression")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.pos += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.pos += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.accept("-"):
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            value = float(tok.text)
            if not math.isfinite(value):
                raise self.error(f"numeric literal {tok.text!r} is out of range")
            self.pos += 1
            return Num(value)
        if tok.kind == "name":
            self.pos += 1
            if tok.text in FUNCTIONS:
                if not (self.tok.kind == "op" and self.tok.text == "("):
                    raise self.error(f"function {tok.text!r} must be called with two arguments")
                self.pos += 1
                first = self.expr()
                self.expect(",")
                second = self.expr()
                self.expect(")")
                return Call(tok.text, (first, second))
            if self.tok.kind == "op" and self.tok.text == "(":
                raise self.error(f"unknown function {tok.text!r}", tok)
            return Var(tok.text)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        raise self.error(f"unexpected {self.describe(tok)}")


def free_vars(node: Expr) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return free_vars(node.operand)
    if isinstance(node, BinOp):
        return free_vars(node.left) | free_vars(node.right)
    return set().union(*(free_vars(a) for a in node.args))


def parse_expr(text: str, scope: Collection[str] | None = None, where: str | None = None) -> Expr:
    """Parse ``text`` into an AST.

    If ``scope`` is given, every referenced variable must be in it; otherwise
    :class:`UnknownVariableReference` is raised.
    """
    node = _Parser(text, where).parse()
    if scope is not None:
        missing = sorted(free_vars(node) - set(scope))
        if missing:
            loc = f"{where}: " if where else ""
            raise UnknownVariableReference(
                f"{loc}{text!r} references {', '.join(missing)}, "
                f"which is not defined before this point (available: {', '.join(scope) or 'none'})"
            )
    return node


# -- evaluation ------------------------------------------------------------------


def evaluate(node: Expr, env: Mapping[str, float]) -> float:
    """Evaluate ``node`` with variables bound by ``env``."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return float(env[node.name])
        except KeyError:
            raise UnknownVariableReference(f"variable {node.name!r} is not bound") from None
    if isinstance(node, Neg):
        return -evaluate(node.operand, env)
    if isinstance(node, Call):
        result = FUNCTIONS[node.func](*(evaluate(a, env) for a in node.args))
    else:
        left = evaluate(node.left, env)
        right = evaluate(node.right, env)
        if node.op == "+":
            result = left + right
        elif node.op == "-":
            result = left - right
        elif node.op == "*":
            result = left * right
        else:
            if right == 0.0:
                raise DivisionByZero(f"division by zero in {unparse(node)!r}")
            result = left / right
    if not math.isfinite(result):
        raise NonFiniteResult(f"{unparse(node)!r} evaluated to {result}")
    return result


# -- printing ----------------------------------------------------------------------

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def _precedence(node: Expr) -> int:
    if isinstance(node, BinOp):
        return _PRECEDENCE[node.op]
    if isinstance(node, Neg):
        return 3
    return 4


def unparse(node: Expr) -> str:
    """Render ``node`` with the minimal parentheses that re-parse to the same AST.

    Negative literals never come out of the parser; if one is constructed by
    hand it prints parenthesized and re-parses as ``Neg(Num(...))``.
    """
    if isinstance(node, Num):
        # a negative literal prints as an already-parenthesized atom
        text = repr(node.value)
        return f"({text})" if math.copysign(1.0, node.value) < 0 else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = unparse(node.operand)
        if _precedence(node.operand) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(unparse(a) for a in node.args)})"
    prec = _PRECEDENCE[node.op]
    left = unparse(node.left)
    if _precedence(node.left) < prec:
        left = f"({left})"
    right = unparse(node.right)
    if _precedence(node.right) <= prec:
        right = f"({right})"
    return f"{left} {node.op} {right}"
