"""
Filename: evaluate.py
Description:
    Vectorized evaluation of expression trees. Variables may be bound to
    floats or numpy arrays; results broadcast like numpy arithmetic.

License: Apache 2.0
"""
from typing import Mapping, Union

import numpy as np

from ..engine.error import ExprEvalError
from .ast import BinOp, Call, Expr, Neg, Num, Var, to_source

Value = Union[float, np.ndarray]

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
}


def _finite(node: Expr, value: Value) -> Value:
    if not np.all(np.isfinite(value)):
        raise ExprEvalError("non-finite result", to_source(node))
    return value


def _eval(e: Expr, env: Mapping[str, Value]) -> Value:
    match e:
        case Num(value=v):
            return v
        case Var(name=n):
            if n not in env:
                raise ExprEvalError(f"unbound variable '{n}'", n)
            return env[n]
        case Neg(operand=o):
            return -_eval(o, env)
        case BinOp(op=op, left=l, right=r):
            a, b = _eval(l, env), _eval(r, env)
            match op:
                case "+":
                    out = a + b
                case "-":
                    out = a - b
                case "*":
                    out = a * b
                case "/":
                    if np.any(np.asarray(b) == 0):
                        raise ExprEvalError("division by zero", to_source(e))
                    out = a / b
                case "^":
                    out = np.power(np.asarray(a, dtype=float), b)
            return _finite(e, out)
        case Call(func=f, args=args):
            return _finite(e, _FUNCTIONS[f](*(_eval(a, env) for a in args)))
    raise TypeError(f"not an expression node: {e!r}")


def evaluate(e: Expr, env: Mapping[str, Value]) -> Value:
    """
    Evaluate an expression.

    :param e: expression tree
    :param env: binding of every free variable to a float or an array
    :return: float when all bindings are scalars, otherwise a broadcast array
    :raises ExprEvalError: division by zero, non-finite value or unbound
        variable, carrying the offending subexpression
    """
    with np.errstate(all="ignore"):
        out = _eval(e, env)
    if np.ndim(out) == 0:
        return float(out)
    return np.asarray(out, dtype=float)
