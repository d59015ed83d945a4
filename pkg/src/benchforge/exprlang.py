"""Vectorized math expression language for candidate objective functions.

Programs are single expressions over the coordinate vector ``x``. A program
is evaluated on a batch of points at once: vectors have shape ``(m, n)`` and
per-sample scalars shape ``(m, 1)``, so every value depends only on its own
sample row.

Grammar (informal)::

    expr     := 'let' NAME '=' additive ';' expr | additive
    additive := mult (('+' | '-') mult)*
    mult     := unary (('*' | '/') unary)*
    unary    := '-' unary | power
    power    := atom ('^' unary)?
    atom     := NUMBER | 'pi' | 'e' | 'x' | 'x' '[' INT ']'
              | 'x' '[' INT? ':' INT? ']' | NAME | '(' expr ')'
              | UNARY '(' expr ')' | ('min2' | 'max2') '(' expr ',' expr ')'
              | REDUCE '(' expr ')' | 'roll' '(' expr ',' INT ')'
              | 'where' '(' additive CMP additive ',' expr ',' expr ')'

The evaluator is total: domain faults are clamped rather than raised, and
validity is decided by probing (see :func:`validate`).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.stats import qmc

UNARY_OPS = ("sin", "cos", "tan", "tanh", "exp", "log", "abs", "sqrt", "sign", "floor", "neg")
BINARY_FUNCS = ("min2", "max2")
REDUCTIONS = ("sum", "mean", "prod", "max", "min")
COMPARISONS = ("<", "<=", ">", ">=", "==", "!=")
NAMED_CONSTANTS = {"pi": np.pi, "e": np.e}
RESERVED = frozenset(
    ("x", "let", "where", "roll", *UNARY_OPS, *BINARY_FUNCS, *REDUCTIONS, *NAMED_CONSTANTS)
)

EPS = 1e-12
CONSTANT_TOL = 1e-10


class ParseError(ValueError):
    """Syntax error at a byte offset, with the set of tokens that would have been accepted."""

    def __init__(self, message: str, offset: int, expected: frozenset[str] = frozenset()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f" (expected one of: {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class ShapeError(ValueError):
    """The expression is ill-typed for the given dimension."""


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise ValueError(f"constants must be finite and non-negative, got {self.value!r}")


@dataclass(frozen=True)
class Named:
    name: str  # "pi" or "e"


@dataclass(frozen=True)
class Coord:
    """The whole coordinate vector ``x``."""


@dataclass(frozen=True)
class Index:
    index: int


@dataclass(frozen=True)
class Slice:
    start: int | None
    stop: int | None


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / ^ min2 max2
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Reduce:
    op: str
    arg: "Expr"


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Where:
    cond: Compare
    then: "Expr"
    other: "Expr"


@dataclass(frozen=True)
class Roll:
    arg: "Expr"
    shift: int


@dataclass(frozen=True)
class Let:
    name: str
    value: "Expr"
    body: "Expr"


Expr = Union[Const, Named, Coord, Index, Slice, Ref, Unary, Binary, Reduce, Where, Roll, Let]


def children(node) -> tuple:
    """Direct sub-expressions of ``node`` in source order."""
    if isinstance(node, (Unary, Reduce)):
        return (node.arg,)
    if isinstance(node, Roll):
        return (node.arg,)
    if isinstance(node, (Binary, Compare)):
        return (node.left, node.right)
    if isinstance(node, Where):
        return (node.cond, node.then, node.other)
    if isinstance(node, Let):
        return (node.value, node.body)
    return ()


def iter_nodes(node):
    """Pre-order traversal."""
    yield node
    for child in children(node):
        yield from iter_nodes(child)


@dataclass(frozen=True)
class Program:
    """A parsed program. ``dim`` is the declared dimension, if known."""

    root: Expr
    source: str
    canonical_source: str
    dim: int | None = field(default=None)

    def with_dim(self, dim: int) -> "Program":
        check_shape(self.root, dim)
        return Program(self.root, self.source, self.canonical_source, dim)

    def __call__(self, points) -> np.ndarray:
        return evaluate(self, points)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op><=|>=|==|!=|[-+*/^()\[\]:,;<>=]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, name, op, end
    text: str
    offset: int


def _tokenize(source: str) -> list[_Tok]:
    tokens = []
    pos = 0
    n = len(source)
    while True:
        while pos < n and source[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(_Tok(kind, m.group(kind), start))
        pos = m.end()
    tokens.append(_Tok("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0
        self.scope: list[str] = []

    @property
    def tok(self) -> _Tok:
        return self.tokens[self.pos]

    def advance(self) -> _Tok:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str, expected=()) -> ParseError:
        tok = self.tok
        got = "end of input" if tok.kind == "end" else repr(tok.text)
        return ParseError(f"{message}, got {got}", tok.offset, frozenset(expected))

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text or self.tok.kind == "end":
            raise self.fail(f"expected {text!r}", {text})
        return self.advance()

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.pos += 1
            return True
        return False

    def parse_program(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "end":
            raise self.fail("unexpected trailing input", {"end of input", "+", "-", "*", "/", "^"})
        return node

    def expr(self) -> Expr:
        if self.tok.kind == "name" and self.tok.text == "let":
            self.advance()
            name_tok = self.tok
            if name_tok.kind != "name":
                raise self.fail("expected binding name", {"identifier"})
            if name_tok.text in RESERVED:
                raise ParseError(f"cannot bind reserved name {name_tok.text!r}", name_tok.offset)
            self.advance()
            self.expect("=")
            value = self.additive()
            self.expect(";")
            self.scope.append(name_tok.text)
            try:
                body = self.expr()
            finally:
                self.scope.pop()
            return Let(name_tok.text, value, body)
        return self.additive()

    def additive(self) -> Expr:
        node = self.mult()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.advance().text
            node = Binary(op, node, self.mult())
        return node

    def mult(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.advance().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.accept("-"):
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("^"):
            return Binary("^", base, self.unary())
        return base

    def integer(self) -> int:
        negative = self.accept("-")
        tok = self.tok
        if tok.kind != "num" or not tok.text.isdigit():
            raise self.fail("expected integer", {"integer"})
        self.advance()
        return -int(tok.text) if negative else int(tok.text)

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            value = float(tok.text)
            if not np.isfinite(value):
                raise ParseError(f"numeric literal {tok.text!r} overflows", tok.offset)
            return Const(value)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind != "name":
            raise self.fail("expected expression", {"number", "identifier", "(", "-"})

        name = tok.text
        self.advance()
        if name == "x":
            return self.coordinate()
        if name in NAMED_CONSTANTS:
            return Named(name)
        if name in UNARY_OPS:
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Unary(name, arg)
        if name in REDUCTIONS:
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Reduce(name, arg)
        if name in BINARY_FUNCS:
            self.expect("(")
            left = self.expr()
            self.expect(",")
            right = self.expr()
            self.expect(")")
            return Binary(name, left, right)
        if name == "roll":
            self.expect("(")
            arg = self.expr()
            self.expect(",")
            shift = self.integer()
            self.expect(")")
            return Roll(arg, shift)
        if name == "where":
            self.expect("(")
            left = self.additive()
            if not (self.tok.kind == "op" and self.tok.text in COMPARISONS):
                raise self.fail("expected comparison operator", set(COMPARISONS))
            op = self.advance().text
            right = self.additive()
            self.expect(",")
            then = self.expr()
            self.expect(",")
            other = self.expr()
            self.expect(")")
            return Where(Compare(op, left, right), then, other)
        if name == "let":
            raise ParseError("'let' binding must be parenthesized here", tok.offset)
        if name in self.scope:
            return Ref(name)
        raise ParseError(f"unknown identifier {name!r}", tok.offset, frozenset(("x", "pi", "e", *self.scope)))

    def coordinate(self) -> Expr:
        if not self.accept("["):
            return Coord()
        start = stop = None
        if not (self.tok.kind == "op" and self.tok.text == ":"):
            start = self.integer()
            if self.accept("]"):
                return Index(start)
        self.expect(":")
        if not (self.tok.kind == "op" and self.tok.text == "]"):
            stop = self.integer()
        self.expect("]")
        return Slice(start, stop)


def parse(source: str, dim: int | None = None) -> Program:
    """Parse ``source`` into a :class:`Program`.

    Raises:
        ParseError: on any syntax error or unknown identifier.
        ShapeError: if ``dim`` is given and the tree is ill-typed for it.
    """
    root = _Parser(source).parse_program()
    program = Program(root, source, to_source(root))
    return program.with_dim(dim) if dim is not None else program


# ---------------------------------------------------------------------------
# Canonical printing
# ---------------------------------------------------------------------------

_PREC_LET, _PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = range(6)


def _prec(node) -> int:
    if isinstance(node, Let):
        return _PREC_LET
    if isinstance(node, Binary):
        return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "^": _PREC_POW}.get(
            node.op, _PREC_ATOM
        )
    if isinstance(node, Unary) and node.op == "neg":
        return _PREC_UNARY
    return _PREC_ATOM


def format_number(value: float) -> str:
    return format(value, ".17g")


def _show(node, min_prec: int) -> str:
    text = _print(node)
    return f"({text})" if _prec(node) < min_prec else text


def _print(node) -> str:
    if isinstance(node, Const):
        return format_number(node.value)
    if isinstance(node, Named):
        return node.name
    if isinstance(node, Coord):
        return "x"
    if isinstance(node, Index):
        return f"x[{node.index}]"
    if isinstance(node, Slice):
        start = "" if node.start is None else str(node.start)
        stop = "" if node.stop is None else str(node.stop)
        return f"x[{start}:{stop}]"
    if isinstance(node, Ref):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            return "-" + _show(node.arg, _PREC_UNARY)
        return f"{node.op}({_print(node.arg)})"
    if isinstance(node, Reduce):
        return f"{node.op}({_print(node.arg)})"
    if isinstance(node, Binary):
        op = node.op
        if op in BINARY_FUNCS:
            return f"{op}({_print(node.left)}, {_print(node.right)})"
        if op == "^":
            return f"{_show(node.left, _PREC_ATOM)}^{_show(node.right, _PREC_UNARY)}"
        level = _prec(node)
        return f"{_show(node.left, level)} {op} {_show(node.right, level + 1)}"
    if isinstance(node, Compare):
        return f"{_show(node.left, _PREC_ADD)} {node.op} {_show(node.right, _PREC_ADD)}"
    if isinstance(node, Where):
        return f"where({_print(node.cond)}, {_print(node.then)}, {_print(node.other)})"
    if isinstance(node, Roll):
        return f"roll({_print(node.arg)}, {node.shift})"
    if isinstance(node, Let):
        return f"let {node.name} = {_show(node.value, _PREC_ADD)}; {_print(node.body)}"
    raise TypeError(f"not an expression node: {node!r}")


def to_source(node) -> str:
    """Canonical text of an expression tree."""
    return _print(node)


def print_canonical(program: Program) -> str:
    return to_source(program.root)


# ---------------------------------------------------------------------------
# Shape checking
# ---------------------------------------------------------------------------

SCALAR = 0  # shape tag for per-sample scalars; vectors are tagged by length >= 1


def _resolve_index(i: int, d: int) -> int:
    j = i + d if i < 0 else i
    if not 0 <= j < d:
        raise ShapeError(f"coordinate index {i} out of range for dimension {d}")
    return j


def _slice_length(node: Slice, d: int) -> int:
    n = len(range(d)[node.start:node.stop])
    if n == 0:
        raise ShapeError(f"empty slice {_print(node)} for dimension {d}")
    return n


def _broadcast(a: int, b: int, what: str) -> int:
    if a == SCALAR:
        return b
    if b == SCALAR or a == b:
        return a
    raise ShapeError(f"{what}: vector lengths {a} and {b} differ")


def _shape(node, d: int, env: dict[str, int]) -> int:
    if isinstance(node, (Const, Named)):
        return SCALAR
    if isinstance(node, Coord):
        return d
    if isinstance(node, Index):
        _resolve_index(node.index, d)
        return SCALAR
    if isinstance(node, Slice):
        return _slice_length(node, d)
    if isinstance(node, Ref):
        return env[node.name]
    if isinstance(node, Unary):
        return _shape(node.arg, d, env)
    if isinstance(node, Reduce):
        if _shape(node.arg, d, env) == SCALAR:
            raise ShapeError(f"{node.op}() needs a vector argument")
        return SCALAR
    if isinstance(node, (Binary, Compare)):
        return _broadcast(_shape(node.left, d, env), _shape(node.right, d, env), node.op)
    if isinstance(node, Where):
        s = _shape(node.cond, d, env)
        s = _broadcast(s, _shape(node.then, d, env), "where")
        return _broadcast(s, _shape(node.other, d, env), "where")
    if isinstance(node, Roll):
        s = _shape(node.arg, d, env)
        if s == SCALAR:
            raise ShapeError("roll() needs a vector argument")
        return s
    if isinstance(node, Let):
        inner = dict(env)
        inner[node.name] = _shape(node.value, d, env)
        return _shape(node.body, d, inner)
    raise TypeError(f"not an expression node: {node!r}")


def shape_of(node, d: int, env: dict[str, int] | None = None) -> int:
    """Shape tag of ``node`` at dimension ``d``: 0 for scalar, else vector length."""
    return _shape(node, d, env or {})


def check_shape(root, d: int) -> None:
    """Raise :class:`ShapeError` unless ``root`` yields one scalar per sample at dimension ``d``."""
    if d < 1:
        raise ShapeError(f"dimension must be positive, got {d}")
    if _shape(root, d, {}) != SCALAR:
        raise ShapeError("program returns a vector per sample; wrap it in a reduction such as sum()")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _safe_div(a, b):
    b = np.asarray(b, dtype=float)
    tiny = np.where(b >= 0, EPS, -EPS)
    return a / np.where(np.abs(b) < EPS, tiny, b)


def _safe_pow(a, p):
    a = np.asarray(a, dtype=float)
    p = np.asarray(p, dtype=float)
    fractional = p != np.floor(p)
    direct = a**p
    if not np.any(fractional & (a < 0)):
        return direct
    return np.where((a < 0) & fractional, np.sign(a) * np.abs(a) ** p, direct)


_UNARY_IMPL = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "tanh": np.tanh,
    "exp": np.exp,
    "log": lambda a: np.log(np.maximum(a, EPS)),
    "abs": np.abs,
    "sqrt": lambda a: np.sign(a) * np.sqrt(np.abs(a)),
    "sign": np.sign,
    "floor": np.floor,
    "neg": np.negative,
}

_BINARY_IMPL = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": _safe_div,
    "^": _safe_pow,
    "min2": np.minimum,
    "max2": np.maximum,
}

_REDUCE_IMPL = {
    "sum": np.sum,
    "mean": np.mean,
    "prod": np.prod,
    "max": np.max,
    "min": np.min,
}

_COMPARE_IMPL = {
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
    "==": np.equal,
    "!=": np.not_equal,
}


def _eval(node, X: np.ndarray, env: dict):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Named):
        return NAMED_CONSTANTS[node.name]
    if isinstance(node, Coord):
        return X
    if isinstance(node, Index):
        j = node.index
        return X[:, j : j + 1] if j != -1 else X[:, -1:]
    if isinstance(node, Slice):
        return X[:, node.start : node.stop]
    if isinstance(node, Ref):
        return env[node.name]
    if isinstance(node, Unary):
        return _UNARY_IMPL[node.op](_eval(node.arg, X, env))
    if isinstance(node, Binary):
        return _BINARY_IMPL[node.op](_eval(node.left, X, env), _eval(node.right, X, env))
    if isinstance(node, Reduce):
        # contiguous input keeps the per-row reduction order independent of batch size
        arg = np.ascontiguousarray(_eval(node.arg, X, env))
        return _REDUCE_IMPL[node.op](arg, axis=1, keepdims=True)
    if isinstance(node, Compare):
        return _COMPARE_IMPL[node.op](_eval(node.left, X, env), _eval(node.right, X, env))
    if isinstance(node, Where):
        return np.where(_eval(node.cond, X, env), _eval(node.then, X, env), _eval(node.other, X, env))
    if isinstance(node, Roll):
        return np.roll(_eval(node.arg, X, env), node.shift, axis=1)
    if isinstance(node, Let):
        inner = dict(env)
        inner[node.name] = _eval(node.value, X, env)
        return _eval(node.body, X, inner)
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(program: Program | Expr, points) -> np.ndarray:
    """Evaluate on a batch of points, shape ``(m, d)``; returns ``m`` values.

    Never raises on a well-typed program: domain faults are clamped, and
    overflow surfaces as non-finite values.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"points must be a (m, d) array, got shape {X.shape}")
    root = program.root if isinstance(program, Program) else program
    if isinstance(program, Program) and program.dim is not None and X.shape[1] != program.dim:
        raise ValueError(f"points have dimension {X.shape[1]}, program expects {program.dim}")
    check_shape(root, X.shape[1])
    with np.errstate(all="ignore"):
        out = _eval(root, X, {})
    out = np.asarray(out, dtype=float)
    return np.broadcast_to(out.reshape(-1) if out.size > 1 else out.reshape(()), (X.shape[0],)).copy()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

REASONS = ("parse-error", "shape-error", "non-finite", "non-deterministic", "constant-output")


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    reason: str | None = None
    message: str = ""
    probe_min: float | None = None
    probe_max: float | None = None
    probe_mean: float | None = None

    def __post_init__(self):
        if self.valid and self.reason is not None:
            raise ValueError("a valid report cannot carry a failure reason")
        if self.reason is not None and self.reason not in REASONS:
            raise ValueError(f"unknown failure reason {self.reason!r}")


def probe_points(dim: int, bounds, n_probe: int, seed: int) -> np.ndarray:
    """Scrambled Halton points scaled into ``bounds`` (shape ``(dim, 2)`` or ``(2,)``)."""
    lo, hi = _bounds_arrays(bounds, dim)
    unit = qmc.Halton(d=dim, scramble=True, seed=seed).random(n_probe)
    return lo + unit * (hi - lo)


def _bounds_arrays(bounds, dim: int) -> tuple[np.ndarray, np.ndarray]:
    b = np.asarray(bounds, dtype=float)
    if b.shape == (2,):
        b = np.tile(b, (dim, 1))
    if b.shape != (dim, 2):
        raise ValueError(f"bounds must have shape ({dim}, 2) or (2,), got {b.shape}")
    return b[:, 0], b[:, 1]


def validate(program: Program | str, dim: int, bounds, n_probe: int = 64, seed: int = 0) -> ValidationReport:
    """Parse, shape-check and probe a program. Failures are reported, never raised."""
    if isinstance(program, str):
        try:
            program = parse(program)
        except ParseError as exc:
            return ValidationReport(False, "parse-error", str(exc))
    try:
        check_shape(program.root, dim)
    except ShapeError as exc:
        return ValidationReport(False, "shape-error", str(exc))

    X = probe_points(dim, bounds, n_probe, seed)
    y = evaluate(program.root, X)
    stats = dict(probe_min=float(np.min(y)), probe_max=float(np.max(y)), probe_mean=float(np.mean(y)))
    if y.shape != (n_probe,):
        return ValidationReport(False, "shape-error", f"output shape {y.shape}", **stats)
    if not np.all(np.isfinite(y)):
        bad = int(np.sum(~np.isfinite(y)))
        return ValidationReport(False, "non-finite", f"{bad} of {n_probe} probe outputs are not finite", **stats)
    if not np.array_equal(y, evaluate(program.root, X)):
        return ValidationReport(False, "non-deterministic", "repeated evaluation differs", **stats)
    half = n_probe // 2
    if half and not np.array_equal(y, np.concatenate([evaluate(program.root, X[:half]), evaluate(program.root, X[half:])])):
        return ValidationReport(False, "shape-error", "output depends on batch composition", **stats)
    spread = stats["probe_max"] - stats["probe_min"]
    if spread / max(1.0, abs(stats["probe_max"])) < CONSTANT_TOL:
        return ValidationReport(False, "constant-output", f"probe spread {spread:.3g} below tolerance", **stats)
    return ValidationReport(True, **stats)
