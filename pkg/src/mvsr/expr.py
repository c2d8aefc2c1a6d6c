"""Expression trees: representation, text grammar, evaluation and derivatives.

Trees are built from immutable nodes. Leaves are data variables ``x{i}``,
numeric constants and (for parametric models) parameters ``p{j}``. The text
form is plain infix with function calls, e.g. ``exp(-(2.0*x0)) + p1``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

UNARY_OPS = ("square", "exp", "sqrt", "sin", "log", "abs", "neg")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")

_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


@dataclass(frozen=True, slots=True)
class Var:
    index: int


@dataclass(frozen=True, slots=True)
class Const:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"constant must be finite, got {self.value!r}")


@dataclass(frozen=True, slots=True)
class Param:
    index: int


@dataclass(frozen=True, slots=True)
class Unary:
    op: str
    child: "Node"

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ValueError(f"unknown unary operator {self.op!r}")


@dataclass(frozen=True, slots=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary operator {self.op!r}")


Node = Union[Var, Const, Param, Unary, Binary]
Expression = Node

LEAF_TYPES = (Var, Const, Param)


class ParseError(ValueError):
    """Raised for malformed expression text; ``offset`` is the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


# ---------------------------------------------------------------------------
# structure helpers


def children(node: Node) -> tuple:
    if isinstance(node, Unary):
        return (node.child,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    return ()


def iter_nodes(node: Node) -> Iterator[Node]:
    """Pre-order traversal (node, then children left to right)."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, Binary):
            stack.append(n.right)
            stack.append(n.left)
        elif isinstance(n, Unary):
            stack.append(n.child)


def size_and_depth(node: Node) -> tuple[int, int]:
    """Return ``(node count, depth)``; a single leaf is ``(1, 1)``."""
    if isinstance(node, Binary):
        ls, ld = size_and_depth(node.left)
        rs, rd = size_and_depth(node.right)
        return ls + rs + 1, max(ld, rd) + 1
    if isinstance(node, Unary):
        s, d = size_and_depth(node.child)
        return s + 1, d + 1
    return 1, 1


def size(node: Node) -> int:
    return size_and_depth(node)[0]


def depth(node: Node) -> int:
    return size_and_depth(node)[1]


def constants(node: Node) -> list[float]:
    """Constant values in left-to-right (pre-order) order."""
    return [n.value for n in iter_nodes(node) if isinstance(n, Const)]


def max_var_index(node: Node) -> int:
    """Largest variable index used, or -1 when the tree has no variables."""
    return max((n.index for n in iter_nodes(node) if isinstance(n, Var)), default=-1)


def n_params(node: Node) -> int:
    return max((n.index for n in iter_nodes(node) if isinstance(n, Param)), default=-1) + 1


def subtree_paths(node: Node) -> list[tuple[int, ...]]:
    """Paths (child-index tuples) of every node, in pre-order."""
    out = []

    def walk(n, path):
        out.append(path)
        for i, c in enumerate(children(n)):
            walk(c, path + (i,))

    walk(node, ())
    return out


def get_subtree(node: Node, path: tuple[int, ...]) -> Node:
    for i in path:
        node = children(node)[i]
    return node


def replace_subtree(node: Node, path: tuple[int, ...], new: Node) -> Node:
    if not path:
        return new
    head, rest = path[0], path[1:]
    if isinstance(node, Unary):
        return Unary(node.op, replace_subtree(node.child, rest, new))
    if isinstance(node, Binary):
        if head == 0:
            return Binary(node.op, replace_subtree(node.left, rest, new), node.right)
        return Binary(node.op, node.left, replace_subtree(node.right, rest, new))
    raise IndexError("path descends below a leaf")


# ---------------------------------------------------------------------------
# text form


def format_float(value: float) -> str:
    return repr(float(value))


def format(node: Node) -> str:  # noqa: A001 - mirrors parse
    """Fully parenthesized infix text; ``parse(format(e)) == e``."""
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Param):
        return f"p{node.index}"
    if isinstance(node, Const):
        return format_float(node.value)
    if isinstance(node, Unary):
        inner = format(node.child)
        if node.op == "neg":
            # a bare literal after '-' would re-parse as a negative constant
            if isinstance(node.child, Const):
                return f"-({inner})"
            return f"-{inner}"
        return f"{node.op}({inner})"
    if node.op == "pow":
        return f"pow({format(node.left)}, {format(node.right)})"
    return f"({format(node.left)} {_INFIX[node.op]} {format(node.right)})"


_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/(),])"
    r")"
)
_FUNCS = {"exp", "sqrt", "sin", "log", "abs", "square", "pow"}
_VAR_RE = re.compile(r"([xp])([0-9]+)\Z")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.take()
        if val != value or kind != "op":
            what = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {what}", off)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", off)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = Binary("add" if op == "+" else "sub", node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = Binary("mul" if op == "*" else "div", node, self.unary())
        return node

    def unary(self) -> Node:
        kind, val, off = self.peek()
        if kind == "op" and val == "-":
            self.take()
            nkind, nval, noff = self.peek()
            if nkind == "num" and noff == off + 1:
                self.take()
                return Const(-self.number(nval, noff))
            return Unary("neg", self.unary())
        return self.primary()

    def number(self, text: str, off: int) -> float:
        value = float(text)
        if not math.isfinite(value):
            raise ParseError(f"non-finite literal {text!r}", off)
        return value

    def primary(self) -> Node:
        kind, val, off = self.take()
        if kind == "num":
            return Const(self.number(val, off))
        if kind == "ident":
            if val in _FUNCS:
                self.expect("(")
                first = self.expr()
                if val == "pow":
                    self.expect(",")
                    second = self.expr()
                    self.expect(")")
                    return Binary("pow", first, second)
                self.expect(")")
                return Unary(val, first)
            m = _VAR_RE.match(val)
            if m is None:
                raise ParseError(f"unknown identifier {val!r}", off)
            idx = int(m.group(2))
            return Var(idx) if m.group(1) == "x" else Param(idx)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {what}", off)


def parse(text: str) -> Node:
    """Parse expression text into a tree.

    A ``-`` immediately followed by a numeric literal yields a negative
    constant; any other unary minus yields a ``neg`` node.
    """
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# evaluation


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("X must be a 2-D (rows x columns) matrix")
    return X


def _check_vars(node: Node, m: int):
    top = max_var_index(node)
    if top >= m:
        raise IndexError(f"variable x{top} out of range for {m} column(s)")


def forward(node: Node, X: np.ndarray, theta=None, need_grad: bool = False):
    """Evaluate ``node`` over the rows of ``X`` with parameters ``theta``.

    ``theta`` is either a vector (one value per parameter) or a
    ``rows x n_params`` matrix holding a separate parameter vector for every
    row, which lets several views be evaluated in a single pass.

    Returns ``(value, grad)``. ``grad`` is ``rows x n_params`` (derivative of
    the output with respect to each parameter) or ``None`` when it is
    identically zero or not requested. No error is raised for domain
    violations; they show up as non-finite entries.
    """
    rows = X.shape[0]
    if theta is None:
        theta = np.zeros(0)
    theta = np.asarray(theta, dtype=float)
    npar = theta.shape[-1] if theta.ndim else 0
    with np.errstate(all="ignore"):
        return _fwd(node, X, theta, npar, rows, need_grad)


def _fwd(node, X, theta, npar, rows, need_grad):
    if isinstance(node, Var):
        return X[:, node.index], None
    if isinstance(node, Const):
        return np.full(rows, node.value), None
    if isinstance(node, Param):
        if theta.ndim == 2:
            v = theta[:, node.index].copy()
        else:
            v = np.full(rows, theta[node.index])
        g = None
        if need_grad:
            g = np.zeros((rows, npar))
            g[:, node.index] = 1.0
        return v, g

    if isinstance(node, Unary):
        a, ga = _fwd(node.child, X, theta, npar, rows, need_grad)
        op = node.op
        if op == "neg":
            return -a, (None if ga is None else -ga)
        if op == "square":
            v = a * a
            d = 2.0 * a
        elif op == "exp":
            v = np.exp(a)
            d = v
        elif op == "sqrt":
            v = np.sqrt(a)
            d = 0.5 / v
        elif op == "sin":
            v = np.sin(a)
            d = np.cos(a) if ga is not None else None
        elif op == "log":
            v = np.log(a)
            d = 1.0 / a
        else:  # abs
            v = np.abs(a)
            d = np.sign(a)
        if ga is None:
            return v, None
        return v, ga * d[:, None]

    a, ga = _fwd(node.left, X, theta, npar, rows, need_grad)
    b, gb = _fwd(node.right, X, theta, npar, rows, need_grad)
    op = node.op
    if op == "add":
        v = a + b
        g = _gsum(ga, gb)
    elif op == "sub":
        v = a - b
        g = _gsum(ga, None if gb is None else -gb)
    elif op == "mul":
        v = a * b
        g = _gsum(None if ga is None else ga * b[:, None],
                  None if gb is None else gb * a[:, None])
    elif op == "div":
        v = a / b
        g = _gsum(None if ga is None else ga / b[:, None],
                  None if gb is None else gb * (-v / b)[:, None])
    else:  # pow
        v = np.power(a, b)
        g = None
        if ga is not None:
            g = ga * (b * np.power(a, b - 1.0))[:, None]
        if gb is not None:
            g = _gsum(g, gb * (v * np.log(a))[:, None])
    return v, g


def _gsum(ga, gb):
    if ga is None:
        return gb
    if gb is None:
        return ga
    return ga + gb


def evaluate(expr: Node, X, theta=None) -> np.ndarray:
    """Pointwise evaluation over the rows of ``X`` (a ``p x m`` matrix)."""
    X = _as_matrix(X)
    _check_vars(expr, X.shape[1])
    return forward(expr, X, theta)[0]


def _promote_constants(node: Node, values: list) -> Node:
    if isinstance(node, Const):
        values.append(node.value)
        return Param(len(values) - 1)
    if isinstance(node, Unary):
        return Unary(node.op, _promote_constants(node.child, values))
    if isinstance(node, Binary):
        left = _promote_constants(node.left, values)
        return Binary(node.op, left, _promote_constants(node.right, values))
    return node


def grad_constants(expr: Node, X) -> np.ndarray:
    """Jacobian of the output with respect to every constant leaf.

    Column ``j`` belongs to the ``j``-th constant in left-to-right order;
    the result is ``p x c`` (``p x 0`` without constants). Parameter leaves
    are not allowed here.
    """
    X = _as_matrix(X)
    _check_vars(expr, X.shape[1])
    if any(isinstance(n, Param) for n in iter_nodes(expr)):
        raise ValueError("grad_constants expects an expression without parameters")
    values: list = []
    skeleton = _promote_constants(expr, values)
    rows = X.shape[0]
    if not values:
        return np.zeros((rows, 0))
    v, g = forward(skeleton, X, np.array(values), need_grad=True)
    if g is None:
        g = np.zeros((rows, len(values)))
    g = g.copy()
    g[~np.isfinite(v)] = np.nan
    return g
