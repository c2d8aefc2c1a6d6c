"""Simplification and constant-to-parameter promotion.

The rewrite set is deliberately small: it merges redundant constants so that
the number of free parameters of a model is meaningful, without attempting
full computer algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import Binary, Const, Node, Param, Unary, Var, forward, format, iter_nodes, parse


def _fold(node: Node):
    """Value of an all-constant tree, or None if it is not finite."""
    with np.errstate(all="ignore"):
        v = forward(node, np.zeros((1, 0)))[0][0]
    v = float(v)
    return v if math.isfinite(v) else None


def _is_const(node, value=None):
    return isinstance(node, Const) and (value is None or node.value == value)


def _rewrite(node: Node) -> Node:
    if isinstance(node, (Var, Const, Param)):
        return node
    if isinstance(node, Unary):
        a = _rewrite(node.child)
        if node.op == "neg":
            if isinstance(a, Unary) and a.op == "neg":
                return a.child
            if isinstance(a, Const):
                return Const(-a.value)
            return node if a is node.child else Unary("neg", a)
        out = node if a is node.child else Unary(node.op, a)
        if isinstance(a, Const):
            v = _fold(out)
            if v is not None:
                return Const(v)
        return out

    a = _rewrite(node.left)
    b = _rewrite(node.right)
    op = node.op
    out = node if (a is node.left and b is node.right) else Binary(op, a, b)
    if isinstance(a, Const) and isinstance(b, Const):
        v = _fold(out)
        return out if v is None else Const(v)

    if op == "add":
        if _is_const(b, 0.0):
            return a
        if _is_const(a, 0.0):
            return b
        merged = _merge_sum(a, b)
        if merged is not None:
            return merged
    elif op == "sub":
        if _is_const(b, 0.0):
            return a
        merged = _merge_sum(a, b, negate=True)
        if merged is not None:
            return merged
    elif op == "mul":
        if _is_const(b, 1.0):
            return a
        if _is_const(a, 1.0):
            return b
        merged = _merge_product(a, b)
        if merged is not None:
            return merged
    elif op == "div":
        if _is_const(b, 1.0):
            return a
    return out


def _split_sum_const(node):
    """``(rest, c, sign)`` when node is ``rest +/- c`` or ``c +/- rest``."""
    if isinstance(node, Binary) and node.op in ("add", "sub"):
        if isinstance(node.right, Const):
            c = node.right.value
            return node.left, (c if node.op == "add" else -c), 1.0
        if isinstance(node.left, Const):
            return node.right, node.left.value, (1.0 if node.op == "add" else -1.0)
    return None


def _merge_sum(a, b, negate=False):
    """Collect two constants separated by one level of +/-.

    Handles ``(r ± c1) ± c2`` and ``c2 ± (r ± c1)`` shapes.
    """
    s = -1.0 if negate else 1.0
    if isinstance(b, Const):
        split = _split_sum_const(a)
        if split is not None:
            rest, c1, sign = split
            c = c1 + s * b.value
            return _affine(rest, sign, c)
    if isinstance(a, Const):
        split = _split_sum_const(b)
        if split is not None:
            rest, c1, sign = split
            c = a.value + s * c1
            return _affine(rest, s * sign, c)
    return None


def _affine(rest, sign, c):
    if not math.isfinite(c):
        return None
    if sign > 0:
        return Binary("add", rest, Const(c))
    return Binary("sub", Const(c), rest)


def _merge_product(a, b):
    """Collect ``c1 * (c2 * r)`` style products into a single constant."""
    if isinstance(b, Const) and not isinstance(a, Const):
        a, b = b, a
    if not isinstance(a, Const):
        return None
    if isinstance(b, Binary) and b.op == "mul":
        if isinstance(b.left, Const):
            c, rest = a.value * b.left.value, b.right
        elif isinstance(b.right, Const):
            c, rest = a.value * b.right.value, b.left
        else:
            return None
        if not math.isfinite(c):
            return None
        return Binary("mul", Const(c), rest)
    return None


def simplify(expr: Node) -> Node:
    """Apply the rewrite set until the tree stops changing."""
    current = expr
    for _ in range(100):
        nxt = _rewrite(current)
        if nxt is current:
            return nxt
        current = nxt
    return current


@dataclass(frozen=True, eq=False)
class ParametricModel:
    """An expression skeleton with free parameters ``p0..p{n-1}``."""

    skeleton: Node
    initial_guess: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        guess = np.asarray(self.initial_guess, dtype=float).reshape(-1)
        object.__setattr__(self, "initial_guess", guess)

    @property
    def n_params(self) -> int:
        return len(self.initial_guess)

    def __str__(self):
        return format(self.skeleton)

    def with_guess(self, theta) -> "ParametricModel":
        return ParametricModel(self.skeleton, np.array(theta, dtype=float))

    @classmethod
    def from_text(cls, text: str, initial_guess=None) -> "ParametricModel":
        """Build a model from skeleton text such as ``"p0 * exp(p1 * x0)"``.

        Parameter indices must be ``0..n-1``; missing guesses default to ones.
        """
        skeleton = parse(text)
        idx = sorted(n.index for n in _iter_params(skeleton))
        if idx != list(range(len(idx))):
            raise ValueError("parameters must be p0..p{n-1}, each used once")
        if initial_guess is None:
            initial_guess = np.ones(len(idx))
        if len(initial_guess) != len(idx):
            raise ValueError("initial guess length does not match parameters")
        return cls(skeleton, np.asarray(initial_guess, dtype=float))


def _iter_params(node):
    return (n for n in iter_nodes(node) if isinstance(n, Param))


def _promote(node: Node, values: list) -> Node:
    if isinstance(node, Const):
        values.append(node.value)
        return Param(len(values) - 1)
    if isinstance(node, Unary):
        return Unary(node.op, _promote(node.child, values))
    if isinstance(node, Binary):
        if node.op == "div" and _is_const(node.left, 1.0):
            # reciprocal: the unit numerator stays a literal
            return Binary("div", node.left, _promote(node.right, values))
        left = _promote(node.left, values)
        return Binary(node.op, left, _promote(node.right, values))
    return node


def parameterize(expr: Node) -> ParametricModel:
    """Simplify, then turn each remaining constant into a parameter."""
    values: list = []
    skeleton = _promote(simplify(expr), values)
    return ParametricModel(skeleton, np.array(values, dtype=float))


def _substitute(node: Node, theta) -> Node:
    if isinstance(node, Param):
        return Const(float(theta[node.index]))
    if isinstance(node, Unary):
        return Unary(node.op, _substitute(node.child, theta))
    if isinstance(node, Binary):
        return Binary(node.op, _substitute(node.left, theta), _substitute(node.right, theta))
    return node


def instantiate(model: ParametricModel, theta) -> Node:
    """Replace parameter ``p{j}`` with ``theta[j]``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if len(theta) != model.n_params:
        raise ValueError(f"expected {model.n_params} parameter value(s), got {len(theta)}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter values must be finite")
    return _substitute(model.skeleton, theta)
