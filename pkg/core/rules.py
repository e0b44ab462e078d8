"""Parameter-sequence rules: d(n) and lambda(n) written as small expressions in n.

Grammar (public contract): + - * / ^ (also × and −), unary minus, parentheses,
numeric literals, the variable n and the functions log, sqrt, loglog. A function
may be applied without parentheses to a single atom, so `log n` is `log(n)`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from lark import Lark, Transformer, v_args
from lark.exceptions import LarkError

from core.choice import SystemParams
from utils.config import RULE_PRESETS

GRAMMAR = r"""
?start: sum

?sum: product
    | sum "+" product   -> add
    | sum ("-" | "−") product   -> sub

?product: unary
    | product ("*" | "×") unary   -> mul
    | product "/" unary   -> div

?unary: power
    | ("-" | "−") unary   -> neg

?power: atom
    | atom "^" unary   -> pow

?atom: NUMBER   -> number
    | "n"   -> var
    | FUNC atom   -> call
    | "(" sum ")"

FUNC: "loglog" | "log" | "sqrt"

%import common.NUMBER
%import common.WS
%ignore WS
"""

_PARSER = Lark(GRAMMAR, parser="lalr")

_FUNCTIONS = {
    "log": math.log,
    "sqrt": math.sqrt,
    "loglog": lambda x: math.log(math.log(x)),
}


@v_args(inline=True)
class _Evaluate(Transformer):
    def __init__(self, n: float):
        super().__init__()
        self.n = n

    def number(self, token):
        return float(token)

    def var(self):
        return self.n

    def call(self, name, value):
        try:
            return _FUNCTIONS[str(name)](value)
        except ValueError as e:
            raise ValueError(f"{name}({value}) is undefined") from e

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def mul(self, a, b):
        return a * b

    def div(self, a, b):
        if b == 0:
            raise ValueError("division by zero in rule expression")
        return a / b

    def neg(self, a):
        return -a

    def pow(self, a, b):
        return a ** b


class Expression:
    """A parsed expression in the variable n."""

    def __init__(self, text: str):
        self.text = text.strip()
        try:
            self.tree = _PARSER.parse(self.text)
        except LarkError as e:
            raise ValueError(f"cannot parse rule expression {text!r}: {e}") from e

    def __call__(self, n: float) -> float:
        try:
            value = _Evaluate(float(n)).transform(self.tree)
        except LarkError as e:
            # lark wraps errors raised inside transformer callbacks
            cause = getattr(e, "orig_exc", e)
            raise ValueError(f"cannot evaluate {self.text!r} at n={n}: {cause}") from e
        if isinstance(value, complex) or not math.isfinite(value):
            raise ValueError(f"{self.text!r} is not a finite real at n={n}")
        return float(value)

    def __repr__(self):
        return f"Expression({self.text!r})"


@dataclass(frozen=True)
class ParameterRule:
    """d = <expr(n)>, lambda = <expr(n)>."""

    d_expr: str
    lam_expr: str

    def __post_init__(self):
        Expression(self.d_expr)
        Expression(self.lam_expr)

    @classmethod
    def parse(cls, text: str) -> "ParameterRule":
        """Read `d = ...` and `lambda = ...` assignments, one per line or separated by ';'."""
        found = {}
        for part in text.replace(";", "\n").splitlines():
            if not part.strip():
                continue
            key, sep, expr = part.partition("=")
            if not sep:
                raise ValueError(f"expected 'key = expression', got {part!r}")
            key = key.strip().lower()
            if key in ("lam", "λ"):
                key = "lambda"
            if key not in ("d", "lambda"):
                raise ValueError(f"unknown rule key {key!r}")
            found[key] = expr.strip()
        missing = {"d", "lambda"} - found.keys()
        if missing:
            raise ValueError(f"rule is missing {sorted(missing)}")
        return cls(found["d"], found["lambda"])

    @classmethod
    def preset(cls, name: str) -> "ParameterRule":
        if name not in RULE_PRESETS:
            raise ValueError(f"unknown rule preset {name!r}; known: {sorted(RULE_PRESETS)}")
        return cls(*RULE_PRESETS[name])

    @classmethod
    def constant(cls, d: int, lam: float) -> "ParameterRule":
        return cls(str(int(d)), repr(float(lam)))

    def d_at(self, n: int) -> int:
        """d(n) rounded to the nearest integer and kept in [1, n]."""
        raw = Expression(self.d_expr)(n)
        return int(min(max(round(raw), 1), n))

    def lam_at(self, n: int) -> float:
        return Expression(self.lam_expr)(n)

    def params_at(self, n: int) -> SystemParams:
        return SystemParams(n=n, d=self.d_at(n), lam=self.lam_at(n))
