"""
Filename: ast.py
Description:
    Expression trees for time-dependent matrix entries and nonlinearity
    components. Nodes are immutable pydantic models; structural equality is
    field equality, which is what the parser round-trip relies on.

License: Apache 2.0
"""
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict

UNARY_FUNCTIONS = ("sin", "cos", "exp", "tanh", "abs")
BINARY_FUNCTIONS = ("min", "max")
ARITY = {**{f: 1 for f in UNARY_FUNCTIONS}, **{f: 2 for f in BINARY_FUNCTIONS}}


class _Node(BaseModel):
    model_config = ConfigDict(frozen=True)


class Num(_Node):
    node: Literal["num"] = "num"
    value: float


class Var(_Node):
    node: Literal["var"] = "var"
    name: str


class Neg(_Node):
    node: Literal["neg"] = "neg"
    operand: "Expr"


class BinOp(_Node):
    node: Literal["bin"] = "bin"
    op: Literal["+", "-", "*", "/", "^"]
    left: "Expr"
    right: "Expr"


class Call(_Node):
    node: Literal["call"] = "call"
    func: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Neg, BinOp, Call]

for _model in (Neg, BinOp, Call):
    _model.model_rebuild()


def to_source(e: Expr) -> str:
    """Fully parenthesised source text; parsing it yields the same tree."""
    match e:
        case Num(value=v):
            return repr(float(v))
        case Var(name=n):
            return n
        case Neg(operand=o):
            return f"(-{to_source(o)})"
        case BinOp(op=op, left=l, right=r):
            return f"({to_source(l)}{op}{to_source(r)})"
        case Call(func=f, args=args):
            return f"{f}({', '.join(to_source(a) for a in args)})"
    raise TypeError(f"not an expression node: {e!r}")


def free_variables(e: Expr) -> frozenset[str]:
    match e:
        case Num():
            return frozenset()
        case Var(name=n):
            return frozenset({n})
        case Neg(operand=o):
            return free_variables(o)
        case BinOp(left=l, right=r):
            return free_variables(l) | free_variables(r)
        case Call(args=args):
            out: frozenset[str] = frozenset()
            for a in args:
                out = out | free_variables(a)
            return out
    raise TypeError(f"not an expression node: {e!r}")


def is_constant(e: Expr) -> bool:
    return not free_variables(e)
