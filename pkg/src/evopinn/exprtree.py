"""Parametric activation functions as binary expression trees.

A tree is built from immutable nodes. The leaf is always the scalar input x.
Every node owns exactly one output edge, so learnable multiplicative
parameters are stored on nodes (``param`` is the value carried by the node's
output edge, or None). Parameters are ordered by pre-order traversal and
named alpha/beta/gamma in the canonical text form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .ops import (
    BINARY_IDS,
    BINARY_SYMBOLS,
    UNARY_IDS,
    UNARY_JETS,
    binary_jet,
    numpy_backend,
    operator_kind,
)

GREEK_NAMES = ("α", "β", "γ")
ASCII_NAMES = ("a", "b", "c")

_NUMPY = numpy_backend()


@dataclass(frozen=True)
class Node:
    op: str
    children: Tuple["Node", ...] = ()
    param: Optional[float] = None

    def __post_init__(self):
        kind = operator_kind(self.op)
        arity = {"leaf": 0, "unary": 1, "binary": 2}[kind]
        if len(self.children) != arity:
            raise ValueError(f"operator {self.op!r} takes {arity} children, got {len(self.children)}")


ActivationTree = Node  # a tree is identified by its root node


def leaf(param=None) -> Node:
    return Node("x", (), param)


def unary(op, child, param=None) -> Node:
    return Node(op, (child,), param)


def binary(op, left, right, param=None) -> Node:
    return Node(op, (left, right), param)


@dataclass(frozen=True)
class TreePolicy:
    """Structural caps: node/parameter limits of the search space."""

    max_nodes: int = 7
    max_params: int = 3


DEFAULT_POLICY = TreePolicy()


def iter_nodes(tree: Node):
    """Pre-order traversal (root first, children left to right)."""
    stack = [tree]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def node_count(tree: Node) -> int:
    """Number of operator nodes (leaves excluded)."""
    return sum(1 for n in iter_nodes(tree) if n.op != "x")


def edge_count(tree: Node) -> int:
    """Edges = one output edge per node, leaves included."""
    return sum(1 for _ in iter_nodes(tree))


def param_count(tree: Node) -> int:
    return sum(1 for n in iter_nodes(tree) if n.param is not None)


def param_values(tree: Node) -> Tuple[float, ...]:
    """Parameter values in pre-order (the ParamVector of this tree)."""
    return tuple(n.param for n in iter_nodes(tree) if n.param is not None)


def with_param_values(tree: Node, values) -> Node:
    """Rebuild the tree with parameter values replaced in pre-order."""
    values = tuple(float(v) for v in values)
    if len(values) != param_count(tree):
        raise ValueError(f"expected {param_count(tree)} parameter values, got {len(values)}")
    cursor = [0]

    def rebuild(node):
        p = node.param
        if p is not None:
            p = values[cursor[0]]
            cursor[0] += 1
        return Node(node.op, tuple(rebuild(c) for c in node.children), p)

    return rebuild(tree)


def validate(tree: Node, policy: TreePolicy = DEFAULT_POLICY):
    """Check all tree invariants; returns a list of violations (empty = ok)."""
    violations = []
    nc = node_count(tree)
    if nc < 1:
        violations.append("tree has no operator node")
    if nc > policy.max_nodes:
        violations.append(f"node_count {nc} > max {policy.max_nodes}")
    pc = param_count(tree)
    if pc > policy.max_params:
        violations.append(f"param_count {pc} > max {policy.max_params}")
    for n in iter_nodes(tree):
        try:
            operator_kind(n.op)
        except KeyError:
            violations.append(f"unknown operator {n.op!r}")
    return violations


# ---------------------------------------------------------------------------
# evaluation

class EvalResult(NamedTuple):
    value: float
    finite: bool


class Jet(NamedTuple):
    value: float
    d1: float
    d2: float
    finite: bool


def _check_params(tree, params):
    pc = param_count(tree)
    if params is None:
        return param_values(tree)
    params = tuple(float(v) for v in params)
    if len(params) != pc:
        raise ValueError(f"tree has {pc} parameters, got vector of length {len(params)}")
    return params


def _jet_rec(node, x, params, cursor, B, order):
    my_param = None
    if node.param is not None:
        my_param = params[cursor]
        cursor += 1
    if node.op == "x":
        jet = (x, 1.0, 0.0)[: order + 1]
    elif node.op in UNARY_JETS:
        child, cursor = _jet_rec(node.children[0], x, params, cursor, B, order)
        f, fp, fpp = UNARY_JETS[node.op](B, child[0])
        out = [f]
        if order >= 1:
            out.append(fp * child[1])
        if order >= 2:
            out.append(fpp * child[1] * child[1] + fp * child[2])
        jet = tuple(out)
    else:
        left, cursor = _jet_rec(node.children[0], x, params, cursor, B, order)
        right, cursor = _jet_rec(node.children[1], x, params, cursor, B, order)
        jet = binary_jet(B, node.op, left, right, order)
    if my_param is not None:
        jet = tuple(my_param * c for c in jet)
    return jet, cursor


def _scalar_jet(tree, x, params, order):
    params = _check_params(tree, params)
    finite = [True]

    # non-finiteness must be sticky: min/max and 1/inf can otherwise mask it
    def track(node, x, params, cursor, B, order):
        my_param = None
        if node.param is not None:
            my_param = params[cursor]
            cursor += 1
        if node.op == "x":
            jet = (x, 1.0, 0.0)[: order + 1]
        elif node.op in UNARY_JETS:
            child, cursor = track(node.children[0], x, params, cursor, B, order)
            f, fp, fpp = UNARY_JETS[node.op](B, child[0])
            out = [f]
            if order >= 1:
                out.append(fp * child[1])
            if order >= 2:
                out.append(fpp * child[1] * child[1] + fp * child[2])
            jet = tuple(out)
        else:
            left, cursor = track(node.children[0], x, params, cursor, B, order)
            right, cursor = track(node.children[1], x, params, cursor, B, order)
            jet = binary_jet(B, node.op, left, right, order)
        if my_param is not None:
            jet = tuple(my_param * c for c in jet)
        if finite[0] and not all(np.isfinite(c) for c in jet):
            finite[0] = False
        return jet, cursor

    with np.errstate(all="ignore"):
        jet, _ = track(tree, np.float64(x), params, 0, _NUMPY, order)
    return tuple(float(c) for c in jet), finite[0]


def evaluate(tree: Node, x: float, params=None) -> EvalResult:
    """Bottom-up scalar evaluation; non-finite results are flagged, not raised."""
    (value,), finite = _scalar_jet(tree, x, params, order=0)
    return EvalResult(value, finite)


def eval_jet(tree: Node, x: float, params=None, order: int = 2) -> Jet:
    """Value and exact first/second derivative at x (order 1 leaves d2 = 0)."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    jet, finite = _scalar_jet(tree, x, params, order=order)
    if order == 1:
        value, d1 = jet
        d2 = 0.0
    else:
        value, d1, d2 = jet
    return Jet(value, d1, d2, finite)


def jet_array(tree: Node, x, params, B, order: int = 2):
    """Batched jet over a backend array; params are backend scalars.

    Used by the network engine: x is the preactivation array and the returned
    coefficients are the activation value and its derivatives at every entry.
    No finiteness tracking here; training-level checks handle overflow.
    """
    if len(params) != param_count(tree):
        raise ValueError(f"tree has {param_count(tree)} parameters, got {len(params)}")
    jet, _ = _jet_rec(tree, x, tuple(params), 0, B, order)
    return jet


def eval_array(tree: Node, x, params, B):
    """Batched value-only evaluation over a backend array."""
    return jet_array(tree, x, params, B, order=0)[0]


# ---------------------------------------------------------------------------
# random generation

def random_tree(rng, policy: TreePolicy = DEFAULT_POLICY) -> Node:
    """One of the two generator forms, with parameters on random edges.

    Form 1: unary1(unary2(x)); form 2: binary(unary1(x), unary2(x)).
    """
    if rng.integers(2) == 0:
        u1, u2 = rng.choice(UNARY_IDS, size=2)
        tree = unary(str(u1), unary(str(u2), leaf()))
    else:
        b = str(rng.choice(BINARY_IDS))
        u1, u2 = rng.choice(UNARY_IDS, size=2)
        tree = binary(b, unary(str(u1), leaf()), unary(str(u2), leaf()))
    edges = edge_count(tree)
    k = int(rng.integers(0, min(policy.max_params, edges) + 1))
    if k:
        picks = set(rng.choice(edges, size=k, replace=False).tolist())
        tree = set_params_at(tree, picks)
    return tree


def set_params_at(tree, positions, value=1.0):
    """Attach parameters (default 1.0) at the given pre-order node positions."""

    def rebuild(node, idx):
        p = value if idx in positions else node.param
        idx += 1
        children = []
        for c in node.children:
            child, idx = rebuild(c, idx)
            children.append(child)
        return Node(node.op, tuple(children), p), idx

    result, _ = rebuild(tree, 0)
    return result


# ---------------------------------------------------------------------------
# canonical text form

_FUNC_RENDER = {
    "id": "id",
    "exp": "exp",
    "sin": "sin",
    "sinh": "sinh",
    "asinh": "asinh",
    "cos": "cos",
    "cosh": "cosh",
    "tanh": "tanh",
    "atan": "atan",
    "erf": "erf",
    "erfc": "erfc",
    "sigmoid": "sigmoid",
    "softsign": "softsign",
    "swish": "swish",
    "softplus": "softplus",
}
_FUNC_PARSE = {v: k for k, v in _FUNC_RENDER.items()}


def canonical_string(tree: Node, ascii_names: bool = False) -> str:
    """Infix text with function-call syntax; round-trips through parse()."""
    names = ASCII_NAMES if ascii_names else GREEK_NAMES
    counter = [0]

    def render(node):
        """Returns (text, atomic). Atomic text is safe as a bare operand."""
        prefix = ""
        if node.param is not None:
            prefix = names[counter[0]] + "*"
            counter[0] += 1
        op = node.op
        if op == "x":
            text, atomic = "x", True
        elif op in _FUNC_RENDER:
            text = f"{_FUNC_RENDER[op]}({render(node.children[0])[0]})"
            atomic = True
        elif op == "neg":
            text, atomic = f"(-{render(node.children[0])[0]})", True
        elif op == "recip":
            text, atomic = f"(1/{render(node.children[0])[0]})", True
        elif op == "square":
            c, c_atomic = render(node.children[0])
            text = f"{c}^2" if c_atomic else f"({c})^2"
            atomic = True
        elif op == "exp_p1":
            text, atomic = f"(exp({render(node.children[0])[0]})+1)", True
        elif op == "nexp_p1":
            text, atomic = f"(exp(-{render(node.children[0])[0]})+1)", True
        elif op == "exp_m1":
            text, atomic = f"(exp({render(node.children[0])[0]})-1)", True
        elif op == "exp2cosh":
            c = render(node.children[0])[0]
            text, atomic = f"(exp({c})+exp(-{c}))", True
        elif op == "exp2sinh":
            c = render(node.children[0])[0]
            text, atomic = f"(exp({c})-exp(-{c}))", True
        elif op in ("max", "min"):
            l = render(node.children[0])[0]
            r = render(node.children[1])[0]
            text, atomic = f"{op}({l},{r})", True
        elif op in BINARY_SYMBOLS:
            l, l_atomic = render(node.children[0])
            r, r_atomic = render(node.children[1])
            if not l_atomic:
                l = f"({l})"
            if not r_atomic:
                r = f"({r})"
            text, atomic = f"{l}{BINARY_SYMBOLS[op]}{r}", False
        else:  # pragma: no cover
            raise KeyError(op)
        if prefix:
            if not atomic:
                text = f"({text})"
            return prefix + text, False
        return text, atomic

    return render(tree)[0]


class ParseError(ValueError):
    """Syntax error with 1-based column of the failure point."""

    def __init__(self, message, column):
        super().__init__(f"{message} at column {column}")
        self.column = column


_PARAM_CHARS = {"a": 0, "b": 1, "c": 2, "α": 0, "β": 1, "γ": 2}


class _Scanner:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def column(self):
        return self.pos + 1

    def peek(self, k=0):
        i = self.pos + k
        return self.text[i] if i < len(self.text) else ""

    def error(self, message):
        raise ParseError(message, self.column())

    def expect(self, literal):
        if not self.text.startswith(literal, self.pos):
            self.error(f"expected {literal!r}")
        self.pos += len(literal)

    def try_take(self, literal):
        if self.text.startswith(literal, self.pos):
            self.pos += len(literal)
            return True
        return False


def parse(text: str) -> Node:
    """Parse the canonical grammar back into a tree (parameter values 1.0).

    Accepts Greek or ASCII parameter names; names must appear in pre-order
    traversal order (the order canonical_string assigns them).
    """
    sc = _Scanner(text)
    names = []
    tree = _parse_edge(sc, names)
    if sc.pos != len(text):
        sc.error("unexpected trailing input")
    expected = [0, 1, 2][: len(names)]
    if [n for n in names] != expected:
        raise ParseError("parameter names out of traversal order", 1)
    if param_count(tree) != len(names):
        raise ParseError("parameter bookkeeping mismatch", 1)
    return tree


def _parse_edge(sc: _Scanner, names):
    ch = sc.peek()
    if ch in _PARAM_CHARS and sc.peek(1) == "*":
        idx = _PARAM_CHARS[ch]
        sc.pos += 2
        names.append(idx)
        node = _parse_postfix(sc, names)
        return replace(node, param=1.0)
    return _parse_infix(sc, names)


def _parse_infix(sc: _Scanner, names):
    node = _parse_term(sc, names)
    while sc.peek() in ("+", "-"):
        op = "add" if sc.peek() == "+" else "sub"
        sc.pos += 1
        node = binary(op, node, _parse_term(sc, names))
    return node


def _parse_term(sc: _Scanner, names):
    node = _parse_postfix(sc, names)
    while sc.peek() in ("*", "/"):
        op = "mul" if sc.peek() == "*" else "div"
        sc.pos += 1
        node = binary(op, node, _parse_postfix(sc, names))
    return node


def _parse_postfix(sc: _Scanner, names, allow_infix=True):
    node = _parse_atom(sc, names)
    while sc.peek() == "^":
        sc.pos += 1
        sc.expect("2")
        node = unary("square", node)
    return node


def _parse_atom(sc: _Scanner, names):
    ch = sc.peek()
    if ch == "":
        sc.error("unexpected end of input")
    if ch == "(":
        return _parse_group(sc, names)
    if ch == "x" and not sc.peek(1).isalpha():
        sc.pos += 1
        return leaf()
    if ch.isalpha():
        start = sc.pos
        while sc.peek().isalpha() and sc.peek().isascii():
            sc.pos += 1
        name = sc.text[start : sc.pos]
        if name in ("max", "min"):
            sc.expect("(")
            left = _parse_edge(sc, names)
            sc.expect(",")
            right = _parse_edge(sc, names)
            sc.expect(")")
            return binary(name, left, right)
        if name in _FUNC_PARSE:
            sc.expect("(")
            child = _parse_edge(sc, names)
            sc.expect(")")
            return unary(_FUNC_PARSE[name], child)
        sc.pos = start
        sc.error(f"unknown name {name!r}")
    sc.error(f"unexpected character {ch!r}")


def _parse_group(sc: _Scanner, names):
    sc.expect("(")
    if sc.try_take("-"):
        child = _parse_edge(sc, names)
        sc.expect(")")
        return unary("neg", child)
    if sc.try_take("1/"):
        child = _parse_edge(sc, names)
        sc.expect(")")
        return unary("recip", child)
    if sc.text.startswith("exp(", sc.pos):
        node = _try_exp_template(sc, names)
        if node is not None:
            return node
    node = _parse_edge(sc, names)
    sc.expect(")")
    return node


def _try_exp_template(sc: _Scanner, names):
    """Composite operators rendered with exponentials; backtracks on mismatch."""
    save_pos, save_names = sc.pos, len(names)
    try:
        sc.expect("exp(")
        if sc.try_take("-"):
            child = _parse_edge(sc, names)
            sc.expect(")")
            sc.expect("+1)")
            return unary("nexp_p1", child)
        child = _parse_edge(sc, names)
        sc.expect(")")
        if sc.try_take("+1)"):
            return unary("exp_p1", child)
        if sc.try_take("-1)"):
            return unary("exp_m1", child)
        for lit, op in (("+exp(-", "exp2cosh"), ("-exp(-", "exp2sinh")):
            if sc.try_take(lit):
                scratch = []
                second = _parse_edge(sc, scratch)
                sc.expect("))")
                if second != child:
                    sc.error("mismatched operand in paired exponential")
                return unary(op, child)
        sc.error("unrecognized exponential form")
    except ParseError:
        sc.pos = save_pos
        del names[save_names:]
        return None
