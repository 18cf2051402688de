from .ast import BinOp, Call, Expr, Neg, Num, Var, free_variables, is_constant, to_source
from .bounds import bound_abs, bound_matrix_norm, lipschitz_estimate
from .evaluate import evaluate
from .parser import parse

__all__ = [
    "BinOp", "Call", "Expr", "Neg", "Num", "Var",
    "bound_abs", "bound_matrix_norm", "evaluate", "free_variables",
    "is_constant", "lipschitz_estimate", "parse", "to_source",
]
