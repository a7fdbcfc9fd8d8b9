"""Golden parameter-expression corpus shared by the unit and acceptance suites.

Each valid entry is ``(text, scope, ast)``; each invalid entry is
``(text, scope, error class)``. ASTs are written out by hand from the grammar.
"""

from momentdecomp.errors import ModelSyntaxError, UnknownVariableReference
from momentdecomp.expr import BinOp, Call, Neg, Num, Var

X1 = ("x1",)
X12 = ("x1", "x2")


def add(a, b):
    return BinOp("+", a, b)


def sub(a, b):
    return BinOp("-", a, b)


def mul(a, b):
    return BinOp("*", a, b)


def div(a, b):
    return BinOp("/", a, b)


x1, x2 = Var("x1"), Var("x2")

VALID = [
    ("0.5", (), Num(0.5)),
    ("3", (), Num(3.0)),
    (".25", (), Num(0.25)),
    ("1e-3", (), Num(0.001)),
    ("2.5E+2", (), Num(250.0)),
    ("x1", X1, x1),
    ("0.25 + 0.5*x1", X1, add(Num(0.25), mul(Num(0.5), x1))),
    ("1 - x1", X1, sub(Num(1.0), x1)),
    ("1 - 2 - 3", (), sub(sub(Num(1.0), Num(2.0)), Num(3.0))),
    ("8 / 4 / 2", (), div(div(Num(8.0), Num(4.0)), Num(2.0))),
    ("1 + 2 * 3", (), add(Num(1.0), mul(Num(2.0), Num(3.0)))),
    ("(1 + 2) * 3", (), mul(add(Num(1.0), Num(2.0)), Num(3.0))),
    ("2 * 3 + 4 * x1", X1, add(mul(Num(2.0), Num(3.0)), mul(Num(4.0), x1))),
    ("x1 - x2 / 2", X12, sub(x1, div(x2, Num(2.0)))),
    ("-x1", X1, Neg(x1)),
    ("--x1", X1, Neg(Neg(x1))),
    ("-2 * x1", X1, mul(Neg(Num(2.0)), x1)),
    ("2 * -x1", X1, mul(Num(2.0), Neg(x1))),
    ("1 - -x1", X1, sub(Num(1.0), Neg(x1))),
    ("-(1 + x1)", X1, Neg(add(Num(1.0), x1))),
    ("-x1 * x2", X12, mul(Neg(x1), x2)),
    ("((x1))", X1, x1),
    ("min(1, 0.25 + 0.5*x1)", X1, Call("min", (Num(1.0), add(Num(0.25), mul(Num(0.5), x1))))),
    ("max(0.05, min(0.95, x1))", X1, Call("max", (Num(0.05), Call("min", (Num(0.95), x1))))),
    ("min(x1, x2) * 2", X12, mul(Call("min", (x1, x2)), Num(2.0))),
    ("  x1\n  + 1 ", X1, add(x1, Num(1.0))),
    ("x1*x2+x2", X12, add(mul(x1, x2), x2)),
    ("1 / (1 + x1)", X1, div(Num(1.0), add(Num(1.0), x1))),
]

INVALID = [
    ("", (), ModelSyntaxError),
    ("   ", (), ModelSyntaxError),
    ("1 +", (), ModelSyntaxError),
    ("* 2", (), ModelSyntaxError),
    ("(1 + 2", (), ModelSyntaxError),
    ("1 + 2)", (), ModelSyntaxError),
    ("1 2", (), ModelSyntaxError),
    ("x1 ^ 2", X1, ModelSyntaxError),
    ("min(1)", (), ModelSyntaxError),
    ("min(1, 2, 3)", (), ModelSyntaxError),
    ("min 1", (), ModelSyntaxError),
    ("exp(1)", (), ModelSyntaxError),
    ("1e999", (), ModelSyntaxError),
    ("+1", (), ModelSyntaxError),
    ("0.5 * x2", X1, UnknownVariableReference),
    ("x1 + x2", X1, UnknownVariableReference),
    ("y", X12, UnknownVariableReference),
    ("x1", (), UnknownVariableReference),
]
