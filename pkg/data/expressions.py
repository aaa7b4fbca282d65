"""
Operator-builder expressions used in scenario files.

Grammar:
    expr    := call | NAME | STRING | scalar
    call    := NAME "(" [expr ("," expr)*] ")"
    scalar  := ["+" | "-"] NUMBER [("+" | "-") NUMBER]     e.g. 2, -0.5, 0.5+1i, 2i

A trailing `i` marks an imaginary part. Bare names refer to earlier
operators or to scalar params. Every error carries the column of the
offending token, offset by the expression's position in the file.
"""

import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from errors import DecoqError, ScenarioError
from operators.algebra import (
    as_matrix,
    boson_annihilate,
    fock,
    identity,
    interior_projector,
    ket,
    ket_bra,
    number_operator,
    pauli_string,
    tensor,
)
from operators.harmonic import HarmonicOperator, as_harmonic

TOKEN_SPEC = [
    ("NUMBER", r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?i?"),
    ("STRING", r"\"[^\"]*\"|'[^']*'"),
    ("NAME", r"[A-Za-z_][A-Za-z_0-9]*"),
    ("LPAREN", r"\("),
    ("RPAREN", r"\)"),
    ("COMMA", r","),
    ("SIGN", r"[+-]"),
    ("SPACE", r"\s+"),
    ("BAD", r"."),
]
TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in TOKEN_SPEC))

Value = Union[complex, str, np.ndarray, HarmonicOperator]


# ── Tokens and syntax tree ────────────────────────────────────────────────────

@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


@dataclass(frozen=True)
class Number:
    value: complex
    pos: int


@dataclass(frozen=True)
class Text:
    value: str
    pos: int


@dataclass(frozen=True)
class Ref:
    name: str
    pos: int


@dataclass(frozen=True)
class Call:
    name: str
    args: Tuple[object, ...]
    pos: int


class _Parser:
    def __init__(self, source: str, line: Optional[int], column: int, key: Optional[str]):
        self.source = source
        self.line = line
        self.column = column
        self.key = key
        self.tokens = self._tokenize()
        self.i = 0

    def error(self, message: str, pos: int) -> ScenarioError:
        return ScenarioError(message, self.line, self.column + pos + 1, self.key)

    def _tokenize(self) -> List[Token]:
        tokens = []
        for match in TOKEN_RE.finditer(self.source):
            kind = match.lastgroup
            if kind == "SPACE":
                continue
            if kind == "BAD":
                raise self.error(f"unexpected character {match.group()!r}", match.start())
            tokens.append(Token(kind, match.group(), match.start()))
        tokens.append(Token("END", "", len(self.source)))
        return tokens

    @property
    def current(self) -> Token:
        return self.tokens[self.i]

    def take(self, kind: str) -> Token:
        tok = self.current
        if tok.kind != kind:
            found = "end of expression" if tok.kind == "END" else repr(tok.text)
            raise self.error(f"expected {kind.lower()}, found {found}", tok.pos)
        self.i += 1
        return tok

    def parse(self):
        if self.current.kind == "END":
            raise self.error("empty expression", 0)
        node = self.expr()
        if self.current.kind != "END":
            raise self.error(f"unexpected {self.current.text!r} after expression", self.current.pos)
        return node

    def expr(self):
        tok = self.current
        if tok.kind == "NAME":
            self.i += 1
            if self.current.kind == "LPAREN":
                return self.call(tok)
            return Ref(tok.text, tok.pos)
        if tok.kind == "STRING":
            self.i += 1
            return Text(tok.text[1:-1], tok.pos)
        if tok.kind in ("NUMBER", "SIGN"):
            return self.scalar()
        found = "end of expression" if tok.kind == "END" else repr(tok.text)
        raise self.error(f"expected an operand, found {found}", tok.pos)

    def call(self, name: Token) -> Call:
        self.take("LPAREN")
        args = []
        if self.current.kind != "RPAREN":
            args.append(self.expr())
            while self.current.kind == "COMMA":
                self.i += 1
                args.append(self.expr())
        self.take("RPAREN")
        return Call(name.text, tuple(args), name.pos)

    def _signed_number(self) -> complex:
        sign = 1
        if self.current.kind == "SIGN":
            sign = -1 if self.take("SIGN").text == "-" else 1
        text = self.take("NUMBER").text
        if text.endswith("i"):
            return sign * 1j * float(text[:-1])
        return complex(sign * float(text))

    def scalar(self) -> Number:
        pos = self.current.pos
        value = self._signed_number()
        nxt = self.tokens[self.i + 1] if self.current.kind == "SIGN" else None
        if nxt is not None and nxt.kind == "NUMBER" and nxt.text.endswith("i") and value.imag == 0:
            value += self._signed_number()
        return Number(value, pos)


def parse_expression(source: str, line: Optional[int] = None, column: int = 0,
                     key: Optional[str] = None):
    """Parse one builder expression into its syntax tree."""
    return _Parser(str(source), line, column, key).parse()


def format_complex(value: complex) -> str:
    """Inverse of the scalar literal syntax."""
    value = complex(value)
    re_part, im_part = value.real, value.imag
    if im_part == 0:
        return repr(re_part)
    if re_part == 0:
        return f"{im_part!r}i"
    sign = "+" if im_part >= 0 else "-"
    return f"{re_part!r}{sign}{abs(im_part)!r}i"


# ── Evaluation ────────────────────────────────────────────────────────────────

def _is_operator(value) -> bool:
    return isinstance(value, HarmonicOperator) or (isinstance(value, np.ndarray) and value.ndim == 2)


def _add(a, b):
    if isinstance(a, HarmonicOperator) or isinstance(b, HarmonicOperator):
        return as_harmonic(a) + as_harmonic(b)
    return a + b


class Evaluator:
    """Evaluates syntax trees against named params and previously built operators."""

    def __init__(self, params: Optional[Mapping[str, float]] = None,
                 operators: Optional[Mapping[str, Value]] = None,
                 line: Optional[int] = None, column: int = 0, key: Optional[str] = None):
        self.params = dict(params or {})
        self.operators = dict(operators or {})
        self.line = line
        self.column = column
        self.key = key
        self.functions: Dict[str, Tuple[Callable, Optional[int]]] = {
            "pauli": (self._pauli, 1),
            "boson_a": (lambda d: boson_annihilate(self._int(d)), 1),
            "number": (lambda d: number_operator(self._int(d)), 1),
            "identity": (lambda d: identity(self._int(d)), 1),
            "interior": (lambda d: interior_projector(self._int(d)), 1),
            "ket": (lambda bits: ket(self._str(bits)), 1),
            "ketbra": (lambda i, j: ket_bra(self._str(i), self._str(j)), 2),
            "fock": (lambda d, n: fock(self._int(d), self._int(n)), 2),
            "dag": (self._dag, 1),
            "scale": (self._scale, 2),
            "harmonic": (self._harmonic, 2),
            "tensor": (self._tensor, None),
            "sum": (self._sum, None),
            "prod": (self._prod, None),
        }

    def error(self, message: str, pos: int) -> ScenarioError:
        return ScenarioError(message, self.line, self.column + pos + 1, self.key)

    # ── argument coercion ──

    def _int(self, value) -> int:
        if not isinstance(value, complex) or value.imag != 0 or value.real != int(value.real):
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value.real)

    def _str(self, value) -> str:
        if not isinstance(value, str):
            raise ValueError(f"expected a string, got {type(value).__name__}")
        return value

    def _op(self, value):
        if not (_is_operator(value) or (isinstance(value, np.ndarray) and value.ndim == 1)):
            raise ValueError(f"expected an operator, got {type(value).__name__}")
        return value

    # ── builders ──

    def _pauli(self, word):
        return pauli_string(self._str(word))

    def _dag(self, A):
        A = self._op(A)
        if isinstance(A, HarmonicOperator):
            return A.dag()
        return A.conj().T

    def _scale(self, c, A):
        if not isinstance(c, complex):
            raise ValueError("scale expects a scalar first")
        return c * self._op(A)

    def _harmonic(self, freq, A):
        if not isinstance(freq, complex) or freq.imag != 0:
            raise ValueError("harmonic expects a real frequency")
        A = self._op(A)
        if isinstance(A, HarmonicOperator):
            raise ValueError("harmonic expects a constant operator")
        return HarmonicOperator.rotating(freq.real, as_matrix(A))

    def _tensor(self, *args):
        if len(args) < 1:
            raise ValueError("tensor needs at least one factor")
        ops = [self._op(a) for a in args]
        if all(isinstance(a, np.ndarray) and a.ndim == 1 for a in ops):
            out = ops[0]
            for a in ops[1:]:
                out = np.kron(out, a)
            return out
        if any(isinstance(a, HarmonicOperator) for a in ops):
            raise ValueError("tensor takes constant operators only")
        return tensor(*ops)

    def _sum(self, *args):
        if len(args) < 1:
            raise ValueError("sum needs at least one term")
        out = self._op(args[0])
        for a in args[1:]:
            out = _add(out, self._op(a))
        return out

    def _prod(self, *args):
        if len(args) < 1:
            raise ValueError("prod needs at least one factor")
        ops = [self._op(a) for a in args]
        if any(isinstance(a, HarmonicOperator) for a in ops):
            raise ValueError("prod takes constant operators only")
        out = ops[0]
        for a in ops[1:]:
            out = out @ a
        return out

    # ── tree walk ──

    def evaluate(self, node) -> Value:
        if isinstance(node, Number):
            return node.value
        if isinstance(node, Text):
            return node.value
        if isinstance(node, Ref):
            if node.name in self.operators:
                return self.operators[node.name]
            if node.name in self.params:
                return complex(self.params[node.name])
            raise self.error(f"undefined name {node.name!r}", node.pos)
        if node.name not in self.functions:
            raise self.error(f"unknown function {node.name!r}", node.pos)
        fn, arity = self.functions[node.name]
        if arity is not None and len(node.args) != arity:
            raise self.error(f"{node.name} takes {arity} argument(s), got {len(node.args)}", node.pos)
        args = [self.evaluate(arg) for arg in node.args]
        try:
            return fn(*args)
        except (ValueError, DecoqError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise self.error(f"{node.name}: {exc}", node.pos) from exc


def evaluate_expression(source: str, params: Optional[Mapping[str, float]] = None,
                        operators: Optional[Mapping[str, Value]] = None,
                        line: Optional[int] = None, column: int = 0,
                        key: Optional[str] = None) -> Value:
    """Parse and evaluate one builder expression."""
    tree = parse_expression(source, line, column, key)
    return Evaluator(params, operators, line, column, key).evaluate(tree)
