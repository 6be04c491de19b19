"""Search-space sizes: closed-form counts plus brute-force enumeration oracles.

All counts are exact Python integers; the model space reaches ~1e18 and the
intermediate binomials overflow 64-bit arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

from . import exprtree as et

ALT_WIDTHS = tuple(range(20, 51, 2))  # neurons per hidden layer: 20..50 step 2


@dataclass(frozen=True)
class SpaceConfig:
    n_min: int = 3
    n_max: int = 11
    n_neu: int = len(ALT_WIDTHS)  # 16
    unary_ops: int = len(et.UNARY_IDS)  # 23
    binary_ops: int = len(et.BINARY_IDS)  # 6
    max_nodes: int = 7
    max_params: int = 3

    def __post_init__(self):
        if self.n_min < 2 or self.n_max < self.n_min:
            raise ValueError("invalid layer range")
        if min(self.unary_ops, self.binary_ops) < 0 or self.n_neu < 0:
            raise ValueError("counts must be non-negative")


DEFAULT_SPACE = SpaceConfig()


def fib(n: int) -> int:
    """Fibonacci with fib(1) = fib(2) = 1, computed by exact recurrence."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = 1, 1
    for _ in range(n - 2):
        a, b = b, a + b
    return b if n > 1 else 1


def catalan(b: int) -> int:
    if b < 0:
        raise ValueError("b must be >= 0")
    return comb(2 * b, b) // (b + 1)


def tree_shape_count(u: int, b: int) -> int:
    """Shapes of a tree with u unary / b binary operator nodes.

    Strict binary skeleton (Catalan) times the ways to distribute the
    remaining unary nodes over its 2b+1 edges; zero when u < b+1.
    """
    if u < 0 or b < 0:
        raise ValueError("counts must be >= 0")
    if u + b - 1 < 2 * b:
        return 0
    return catalan(b) * comb(u + b - 1, 2 * b)


def activation_space(cfg: SpaceConfig = DEFAULT_SPACE, m: int | None = None) -> int:
    """Count of activation trees with exactly m operator nodes.

    With m=None, the cumulative count over 1 <= m <= max_nodes.
    """
    if m is None:
        return sum(activation_space(cfg, k) for k in range(1, cfg.max_nodes + 1))
    if not 1 <= m <= cfg.max_nodes:
        raise ValueError(f"m must be in [1, {cfg.max_nodes}]")
    total = 0
    for b in range(0, (m - 1) // 2 + 1):
        u = m - b
        e = 2 * b + u + 1
        k_e = min(e, cfg.max_params)
        placements = sum(comb(e, i) for i in range(k_e + 1))
        total += tree_shape_count(u, b) * cfg.unary_ops**u * cfg.binary_ops**b * placements
    return total


def structure_space(cfg: SpaceConfig = DEFAULT_SPACE) -> int:
    return cfg.n_neu * sum(fib(2 * n - 1) for n in range(cfg.n_min, cfg.n_max + 1))


def model_space(cfg: SpaceConfig = DEFAULT_SPACE, m: int | None = None) -> int:
    return structure_space(cfg) * activation_space(cfg, m)


def sci3(value: int) -> str:
    """3-significant-digit scientific display used in reports (e.g. 2.83e05)."""
    if value == 0:
        return "0.00e00"
    s = f"{float(value):.2e}"
    mant, exp = s.split("e")
    return f"{mant}e{int(exp):02d}"


# ---------------------------------------------------------------------------
# enumeration oracles

def iter_shortcut_configs(n: int):
    """All sets of intervals [i, j], 0 <= i < j <= n-1, with pairwise-disjoint
    interiors (endpoints may coincide), including the empty set."""
    intervals = [(i, j) for i in range(n - 1) for j in range(i + 1, n)]

    def extend(prefix, min_start):
        yield tuple(prefix)
        for (i, j) in intervals:
            if i >= min_start:
                prefix.append((i, j))
                yield from extend(prefix, j)
                prefix.pop()

    yield from extend([], 0)


def enumerate_shortcut_configs(n: int) -> int:
    """Brute-force count of valid shortcut configurations; equals fib(2n-1)."""
    if not 2 <= n <= 12:
        raise ValueError("enumeration oracle is intended for 2 <= n <= 12")
    return sum(1 for _ in iter_shortcut_configs(n))


def enumerate_activation_trees(unary_ids, binary_ids, max_nodes, max_params):
    """Brute-force generator of every tree the counting formula covers.

    Shapes come from a strict binary skeleton with unary chains on its edges
    (leaf chains have length >= 1), matching the combinatorial model; operator
    labels and parameter placements are enumerated exhaustively. Trees with
    bare-leaf binary children are reachable by mutation but are outside this
    counted family.
    """

    def skeletons(b):
        # strict binary trees as nested tuples; () is the leaf slot
        if b == 0:
            yield ()
        else:
            for lb in range(b):
                for left in skeletons(lb):
                    for right in skeletons(b - 1 - lb):
                        yield (left, right)

    def chain_slots(skel):
        # one output-edge slot per skeleton node, leaf slots flagged
        if skel == ():
            return [True]
        return [False] + chain_slots(skel[0]) + chain_slots(skel[1])

    def compositions(total, bins):
        if bins == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in compositions(total - first, bins - 1):
                yield (first,) + rest

    from itertools import product

    u_fill, b_fill = unary_ids[0], binary_ids[0]

    def build(skel, lengths, cursor):
        # consume this node's chain length, then recurse
        mine = lengths[cursor]
        cursor += 1
        if skel == ():
            node = et.leaf()
        else:
            left, cursor = build(skel[0], lengths, cursor)
            right, cursor = build(skel[1], lengths, cursor)
            node = et.Node(b_fill, (left, right))
        for _ in range(mine):
            node = et.Node(u_fill, (node,))
        return node, cursor

    def relabel(tree, assign):
        def rec(node, i):
            op = assign.get(i, node.op)
            i += 1
            children = []
            for c in node.children:
                child, i = rec(c, i)
                children.append(child)
            return et.Node(op, tuple(children)), i

        out, _ = rec(tree, 0)
        return out

    for m in range(1, max_nodes + 1):
        for b in range(0, (m - 1) // 2 + 1):
            u = m - b
            for skel in skeletons(b):
                slots = chain_slots(skel)
                extra = u - sum(slots)
                if extra < 0:
                    continue
                for comp in compositions(extra, len(slots)):
                    lengths = tuple(c + (1 if is_leaf else 0) for c, is_leaf in zip(comp, slots))
                    shape, _ = build(skel, lengths, 0)
                    nodes = list(et.iter_nodes(shape))
                    unary_slots = [i for i, n in enumerate(nodes)
                                   if n.op != "x" and et.operator_kind(n.op) == "unary"]
                    binary_slots = [i for i, n in enumerate(nodes)
                                    if n.op != "x" and et.operator_kind(n.op) == "binary"]
                    for u_ops in product(unary_ids, repeat=len(unary_slots)):
                        for b_ops in product(binary_ids, repeat=len(binary_slots)):
                            assign = dict(zip(unary_slots, u_ops))
                            assign.update(zip(binary_slots, b_ops))
                            labeled = relabel(shape, assign)
                            edges = et.edge_count(labeled)
                            k_e = min(edges, max_params)
                            for k in range(0, k_e + 1):
                                for spots in combinations(range(edges), k):
                                    yield et.set_params_at(labeled, set(spots))
