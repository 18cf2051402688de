"""
Filename: parser.py
Description:
    Recursive-descent parser of the expression language.

        expr   := term (('+' | '-') term)*
        term   := factor (('*' | '/') factor)*
        factor := '-' factor | atom ('^' factor)?
        atom   := number | ident | func '(' expr (',' expr)* ')' | '(' expr ')'

    '^' is right-associative and binds tighter than '*'. A leading minus
    negates the whole power, so (-a)^b needs parentheses.

License: Apache 2.0
"""
import math
import re
from typing import NamedTuple

from ..engine.error import ExprArityError, ExprNameError, ExprSyntaxError
from .ast import ARITY, BinOp, Call, Expr, Neg, Num, Var

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)
_VARIABLE = re.compile(r"t|[xy][1-9]\d*")
_CONSTANTS = {"pi": math.pi}


class _Token(NamedTuple):
    kind: str
    text: str
    offset: int


def _tokenize(src: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            rest = src[pos:]
            if rest.strip() == "":
                break
            bad = pos + (len(rest) - len(rest.lstrip()))
            raise ExprSyntaxError(f"unexpected character {src[bad]!r}", len(src[:bad].encode()))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(_Token(kind, m.group(kind), len(src[:start].encode())))
        pos = m.end()
    tokens.append(_Token("end", "", len(src.encode())))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.tokens = _tokenize(src)
        self.i = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        if self.cur.text != text or self.cur.kind != "op":
            found = self.cur.text or "end of input"
            raise ExprSyntaxError(f"expected '{text}', found '{found}'", self.cur.offset)
        return self.take()

    def parse(self) -> Expr:
        e = self.expr()
        if self.cur.kind != "end":
            raise ExprSyntaxError(f"unexpected '{self.cur.text}'", self.cur.offset)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.cur.kind == "op" and self.cur.text in "+-":
            op = self.take().text
            left = BinOp(op=op, left=left, right=self.term())
        return left

    def term(self) -> Expr:
        left = self.factor()
        while self.cur.kind == "op" and self.cur.text in "*/":
            op = self.take().text
            left = BinOp(op=op, left=left, right=self.factor())
        return left

    def factor(self) -> Expr:
        if self.cur.kind == "op" and self.cur.text == "-":
            self.take()
            return Neg(operand=self.factor())
        base = self.atom()
        if self.cur.kind == "op" and self.cur.text == "^":
            self.take()
            return BinOp(op="^", left=base, right=self.factor())
        return base

    def atom(self) -> Expr:
        tok = self.cur
        match tok.kind:
            case "num":
                self.take()
                return Num(value=float(tok.text))
            case "ident":
                self.take()
                if self.cur.kind == "op" and self.cur.text == "(":
                    return self.call(tok)
                if tok.text in ARITY:
                    raise ExprSyntaxError(f"function '{tok.text}' needs an argument list", tok.offset)
                if tok.text in _CONSTANTS:
                    return Num(value=_CONSTANTS[tok.text])
                if _VARIABLE.fullmatch(tok.text):
                    return Var(name=tok.text)
                raise ExprNameError(tok.text, tok.offset)
            case "op" if tok.text == "(":
                self.take()
                inner = self.expr()
                self.expect(")")
                return inner
        found = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected '{found}'", tok.offset)

    def call(self, name: _Token) -> Expr:
        if name.text not in ARITY:
            raise ExprNameError(name.text, name.offset, kind="function")
        self.expect("(")
        args = [self.expr()]
        while self.cur.kind == "op" and self.cur.text == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        if len(args) != ARITY[name.text]:
            raise ExprArityError(name.text, ARITY[name.text], len(args), name.offset)
        return Call(func=name.text, args=tuple(args))


def parse(src: str) -> Expr:
    """
    Parse expression source text.

    :param src: expression text
    :return: expression tree
    :raises ExprSyntaxError: malformed text, with the byte offset of the problem
    :raises ExprNameError: unknown identifier or function
    :raises ExprArityError: wrong number of function arguments
    """
    return _Parser(src).parse()
