"""Genetic encoding of a model and the evolutionary variation operators.

A genome is a structure gene (layer count, hidden width, shortcut intervals)
plus an activation gene (expression tree with its parameter values). All
operations are pure: parents are never modified, children are new values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

from . import exprtree as et
from .space import ALT_WIDTHS

MIN_LAYERS, MAX_LAYERS = 3, 11


@dataclass(frozen=True)
class StructureGene:
    num_layers: int
    hidden_width: int
    shortcuts: Tuple[Tuple[int, int], ...] = ()


@dataclass(frozen=True)
class Genome:
    structure: StructureGene
    activation: et.Node
    id: str = ""
    lineage: Tuple[str, ...] = ()


@dataclass(frozen=True)
class MutationRates:
    r_layers: float = 0.3
    r_neurons: float = 0.3
    r_shortcuts: float = 0.3
    r_activation: float = 0.7


@dataclass(frozen=True)
class InitPolicy:
    """Initial-population recipe: structure kinds and activation mix."""

    min_layers: int = MIN_LAYERS
    max_layers: int = MAX_LAYERS
    widths: Tuple[int, ...] = ALT_WIDTHS
    regular_span_range: Tuple[int, int] = (1, 5)
    common_activation_weight: float = 0.25  # common : random = 1 : 3
    tree_policy: et.TreePolicy = field(default_factory=et.TreePolicy)


DEFAULT_INIT = InitPolicy()
DEFAULT_RATES = MutationRates()


# ---------------------------------------------------------------------------
# the 13 common activations used for initialization

def _recu():
    # (max(0, x))^3 with the zero synthesized as x - x: g * g^2
    g = et.binary("max", et.binary("sub", et.leaf(), et.leaf()), et.leaf())
    return et.binary("mul", g, et.unary("square", g))


def common_activations():
    mk = lambda op, p=None: et.unary(op, et.leaf(param=p))
    return {
        "tanh": mk("tanh"),
        "atan": mk("atan"),
        "sin": mk("sin"),
        "cos": mk("cos"),
        "asinh": mk("asinh"),
        "sigmoid": mk("sigmoid"),
        "recu": _recu(),
        "swish": mk("swish"),
        "parametric tanh": mk("tanh", 1.0),
        "parametric sin": mk("sin", 1.0),
        "parametric cos": mk("cos", 1.0),
        "parametric sigmoid": mk("sigmoid", 1.0),
        "parametric swish": et.binary("mul", et.leaf(), mk("sigmoid", 1.0)),
    }


COMMON_ACTIVATION_NAMES = tuple(common_activations())


# ---------------------------------------------------------------------------
# validation

def validate_structure(s: StructureGene) -> list:
    v = []
    if not MIN_LAYERS <= s.num_layers <= MAX_LAYERS:
        v.append(f"num_layers {s.num_layers} outside [{MIN_LAYERS}, {MAX_LAYERS}]")
    if s.hidden_width not in ALT_WIDTHS:
        v.append(f"hidden_width {s.hidden_width} not an alternative width")
    last = s.num_layers - 1
    for (a, b) in s.shortcuts:
        if not (0 <= a < b <= last):
            v.append(f"shortcut {a}-{b} out of range for {s.num_layers} layers")
    ordered = sorted(s.shortcuts)
    if tuple(ordered) != s.shortcuts:
        v.append("shortcuts not sorted by start")
    for (a1, b1), (a2, b2) in zip(ordered, ordered[1:]):
        if a2 < b1:  # shared endpoints are fine, interior overlap is not
            v.append(f"shortcuts {a1}-{b1} and {a2}-{b2} intersect")
    return v


def validate_genome(g: Genome, tree_policy: et.TreePolicy = et.DEFAULT_POLICY) -> list:
    return validate_structure(g.structure) + et.validate(g.activation, tree_policy)


# ---------------------------------------------------------------------------
# initialization

def regular_shortcuts(num_layers: int, span: int) -> Tuple[Tuple[int, int], ...]:
    """Chained shortcuts of uniform span starting at the input: [0-s, s-2s, ...]."""
    out = []
    start = 0
    while start + span <= num_layers - 1:
        out.append((start, start + span))
        start += span
    return tuple(out)


def _legal_additions(shortcuts, num_layers):
    last = num_layers - 1
    out = []
    for i in range(last):
        for j in range(i + 1, last + 1):
            if all(not (i < b and a < j) for (a, b) in shortcuts):
                out.append((i, j))
    return out


def random_structure(rng, policy: InitPolicy = DEFAULT_INIT, kind: Optional[str] = None) -> StructureGene:
    """kind: 'plain' | 'regular' | 'random' (None draws uniformly)."""
    if kind is None:
        kind = ("plain", "regular", "random")[rng.integers(3)]
    n = int(rng.integers(policy.min_layers, policy.max_layers + 1))
    width = int(policy.widths[rng.integers(len(policy.widths))])
    if kind == "plain":
        shortcuts = ()
    elif kind == "regular":
        lo, hi = policy.regular_span_range
        span = int(rng.integers(lo, hi + 1))
        shortcuts = regular_shortcuts(n, span)
    elif kind == "random":
        count = int(rng.integers(1, n))  # fewer shortcuts than layers
        chosen = []
        for _ in range(count):
            legal = _legal_additions(chosen, n)
            if not legal:
                break
            chosen.append(legal[rng.integers(len(legal))])
        shortcuts = tuple(sorted(chosen))
    else:
        raise ValueError(f"unknown structure kind {kind!r}")
    return StructureGene(n, width, shortcuts)


def random_activation(rng, policy: InitPolicy = DEFAULT_INIT) -> et.Node:
    if rng.random() < policy.common_activation_weight:
        pool = common_activations()
        return pool[COMMON_ACTIVATION_NAMES[rng.integers(len(pool))]]
    return et.random_tree(rng, policy.tree_policy)


def random_genome(rng, policy: InitPolicy = DEFAULT_INIT, id: str = "") -> Genome:
    return Genome(random_structure(rng, policy), random_activation(rng, policy), id=id)


# ---------------------------------------------------------------------------
# crossover

def crossover(p1: Genome, p2: Genome, r_c: float, rng) -> Tuple[Genome, Genome]:
    """Single-point exchange of the structure and activation gene blocks."""
    lineage = (p1.id, p2.id)
    if rng.random() < r_c:
        c1 = Genome(p1.structure, p2.activation, lineage=lineage)
        c2 = Genome(p2.structure, p1.activation, lineage=lineage)
    else:
        c1 = replace(p1, id="", lineage=lineage)
        c2 = replace(p2, id="", lineage=lineage)
    return c1, c2


# ---------------------------------------------------------------------------
# structure mutations

def _shift_after_insert(shortcuts, k):
    out = []
    for (a, b) in shortcuts:
        out.append((a + 1 if a >= k else a, b + 1 if b >= k else b))
    return tuple(sorted(out))


def _shift_after_remove(shortcuts, r, new_num_layers):
    out = []
    last = new_num_layers - 1
    for (a, b) in shortcuts:
        a2 = a - 1 if a >= r else a
        b2 = b - 1 if b >= r else b
        if a2 < b2 and 0 <= a2 and b2 <= last:
            out.append((a2, b2))
    # dropping invalid intervals cannot create overlaps, but stay defensive
    out.sort()
    kept = []
    for iv in out:
        if kept and iv[0] < kept[-1][1]:
            continue
        kept.append(iv)
    return tuple(kept)


def _mutate_layers(s: StructureGene, rng) -> StructureGene:
    moves = []
    if s.num_layers < MAX_LAYERS:
        moves.append("insert")
    if s.num_layers > MIN_LAYERS:
        moves.append("remove")
    if not moves:
        return s
    move = moves[rng.integers(len(moves))]
    if move == "insert":
        k = int(rng.integers(1, s.num_layers + 1))  # new hidden layer slot
        return StructureGene(s.num_layers + 1, s.hidden_width, _shift_after_insert(s.shortcuts, k))
    r = int(rng.integers(1, s.num_layers + 1))  # layer to remove
    return StructureGene(
        s.num_layers - 1, s.hidden_width, _shift_after_remove(s.shortcuts, r, s.num_layers - 1)
    )


def _mutate_neurons(s: StructureGene, rng) -> StructureGene:
    i = ALT_WIDTHS.index(s.hidden_width)
    neighbors = [j for j in (i - 1, i + 1) if 0 <= j < len(ALT_WIDTHS)]
    j = neighbors[rng.integers(len(neighbors))]
    return replace(s, hidden_width=ALT_WIDTHS[j])


def shortcut_moves(shortcuts, num_layers):
    """All legal single-mutation outcomes, per mutation type."""
    adds = [tuple(sorted(shortcuts + ((i, j),))) for (i, j) in _legal_additions(shortcuts, num_layers)]
    removes = [tuple(s for k, s in enumerate(shortcuts) if k != idx) for idx in range(len(shortcuts))]
    changes = []
    last = num_layers - 1
    for idx, (a, b) in enumerate(shortcuts):
        rest = tuple(s for k, s in enumerate(shortcuts) if k != idx)
        for new_a in range(0, b):
            if new_a != a and all(not (new_a < y and x < b) for (x, y) in rest):
                changes.append(tuple(sorted(rest + ((new_a, b),))))
        for new_b in range(a + 1, last + 1):
            if new_b != b and all(not (a < y and x < new_b) for (x, y) in rest):
                changes.append(tuple(sorted(rest + ((a, new_b),))))
    return adds, removes, changes


def _mutate_shortcuts(s: StructureGene, rng) -> StructureGene:
    adds, removes, changes = shortcut_moves(s.shortcuts, s.num_layers)
    pools = [p for p in (adds, removes, changes) if p]
    if not pools:
        return s
    pool = pools[rng.integers(len(pools))]
    return replace(s, shortcuts=pool[rng.integers(len(pool))])


# ---------------------------------------------------------------------------
# activation mutations

def _nodes_preorder(tree):
    return list(et.iter_nodes(tree))


def _replace_at(tree, target_idx, builder):
    """Rebuild the tree with builder(old_node) applied at pre-order index."""

    def rec(node, idx):
        if idx == target_idx:
            return builder(node), idx + 1
        idx += 1
        children = []
        for c in node.children:
            child, idx = rec(c, idx)
            children.append(child)
        return et.Node(node.op, tuple(children), node.param), idx

    # manual pre-order walk matching iter_nodes numbering
    def walk(node, idx):
        if idx[0] == target_idx:
            idx[0] += 1
            # children of the replaced node are not renumbered further;
            # builder receives the original subtree
            return builder(node)
        idx[0] += 1
        children = tuple(walk(c, idx) for c in node.children)
        return et.Node(node.op, children, node.param)

    return walk(tree, [0])


def _merge_params(upper, lower):
    if upper is None:
        return lower
    if lower is None:
        return upper
    return upper * lower  # multiplicative parameters compose


def _act_insert_node(tree, rng, policy):
    m = et.node_count(tree)
    ops = []
    if m + 1 <= policy.max_nodes:
        ops.extend(et.UNARY_IDS)
    if m + 2 <= policy.max_nodes:
        ops.extend(et.BINARY_IDS)
    if not ops:
        return None
    op = str(ops[rng.integers(len(ops))])
    edges = et.edge_count(tree)
    target = int(rng.integers(edges))
    if et.operator_kind(op) == "unary":
        return _replace_at(tree, target, lambda old: et.unary(op, old))
    extra = et.unary(str(et.UNARY_IDS[rng.integers(len(et.UNARY_IDS))]), et.leaf())
    side = int(rng.integers(2))

    def build(old):
        return et.binary(op, old, extra) if side == 0 else et.binary(op, extra, old)

    return _replace_at(tree, target, build)


def _act_remove_node(tree, rng):
    nodes = _nodes_preorder(tree)
    candidates = []
    for idx, node in enumerate(nodes):
        if node.op == "x":
            continue
        if et.operator_kind(node.op) == "unary":
            keeps = [0]
        else:
            keeps = [0, 1]
        for keep in keeps:
            kept = node.children[keep]
            if idx == 0 and kept.op == "x":
                continue  # would leave a bare leaf
            candidates.append((idx, keep))
    if not candidates:
        return None
    idx, keep = candidates[rng.integers(len(candidates))]

    def build(old):
        kept = old.children[keep]
        return replace(kept, param=_merge_params(old.param, kept.param))

    return _replace_at(tree, idx, build)


def _act_change_node(tree, rng):
    nodes = _nodes_preorder(tree)
    op_nodes = [i for i, n in enumerate(nodes) if n.op != "x"]
    if not op_nodes:
        return None
    idx = op_nodes[rng.integers(len(op_nodes))]
    kind = et.operator_kind(nodes[idx].op)
    pool = [o for o in (et.UNARY_IDS if kind == "unary" else et.BINARY_IDS) if o != nodes[idx].op]
    op = str(pool[rng.integers(len(pool))])
    return _replace_at(tree, idx, lambda old: et.Node(op, old.children, old.param))


def _act_regenerate(tree, rng):
    def rec(node):
        children = tuple(rec(c) for c in node.children)
        if node.op == "x":
            return node
        pool = et.UNARY_IDS if et.operator_kind(node.op) == "unary" else et.BINARY_IDS
        return et.Node(str(pool[rng.integers(len(pool))]), children, node.param)

    return rec(tree)


def _act_insert_param(tree, rng, policy):
    if et.param_count(tree) >= policy.max_params:
        return None
    nodes = _nodes_preorder(tree)
    free = [i for i, n in enumerate(nodes) if n.param is None]
    if not free:
        return None
    idx = free[rng.integers(len(free))]
    return _replace_at(tree, idx, lambda old: replace(old, param=1.0))


def _act_remove_param(tree, rng):
    nodes = _nodes_preorder(tree)
    owned = [i for i, n in enumerate(nodes) if n.param is not None]
    if not owned:
        return None
    idx = owned[rng.integers(len(owned))]
    return _replace_at(tree, idx, lambda old: replace(old, param=None))


def _act_change_param(tree, rng):
    nodes = _nodes_preorder(tree)
    owned = [i for i, n in enumerate(nodes) if n.param is not None]
    free = [i for i, n in enumerate(nodes) if n.param is None]
    if not owned or not free:
        return None
    src = owned[rng.integers(len(owned))]
    dst = free[rng.integers(len(free))]
    value = nodes[src].param
    stripped = _replace_at(tree, src, lambda old: replace(old, param=None))
    return _replace_at(stripped, dst, lambda old: replace(old, param=value))


_ACT_MUTATIONS = ("insert node", "remove node", "change node", "regenerate nodes",
                  "insert parameter", "remove parameter", "change parameter")


def mutate_activation(tree, rng, policy: et.TreePolicy = et.DEFAULT_POLICY):
    """One uniformly chosen legal mutation; parameters inherit where edges survive."""
    appliers = {
        "insert node": lambda: _act_insert_node(tree, rng, policy),
        "remove node": lambda: _act_remove_node(tree, rng),
        "change node": lambda: _act_change_node(tree, rng),
        "regenerate nodes": lambda: _act_regenerate(tree, rng),
        "insert parameter": lambda: _act_insert_param(tree, rng, policy),
        "remove parameter": lambda: _act_remove_param(tree, rng),
        "change parameter": lambda: _act_change_param(tree, rng),
    }
    remaining = list(_ACT_MUTATIONS)
    while remaining:
        name = remaining[rng.integers(len(remaining))]
        result = appliers[name]()
        if result is not None:
            return result
        remaining.remove(name)
    return tree


def mutate(g: Genome, rates: MutationRates, rng,
           tree_policy: et.TreePolicy = et.DEFAULT_POLICY) -> Genome:
    """Independent sub-gene mutations at the configured rates."""
    s = g.structure
    if rng.random() < rates.r_layers:
        s = _mutate_layers(s, rng)
    if rng.random() < rates.r_neurons:
        s = _mutate_neurons(s, rng)
    if rng.random() < rates.r_shortcuts:
        s = _mutate_shortcuts(s, rng)
    tree = g.activation
    if rng.random() < rates.r_activation:
        tree = mutate_activation(tree, rng, tree_policy)
    return Genome(s, tree, lineage=(g.id,))


# ---------------------------------------------------------------------------
# text serialization (the notation of the discovered-model tables)

def genome_to_text(g: Genome) -> str:
    s = g.structure
    if s.shortcuts:
        sc = "[" + ",".join(f"{a}-{b}" for (a, b) in s.shortcuts) + "]"
    else:
        sc = "none"
    values = et.param_values(g.activation)
    if values:
        names = et.GREEK_NAMES
        params = ", ".join(f"{names[i]}={v!r}" for i, v in enumerate(values))
    else:
        params = "none"
    return (
        f"layer num: {s.num_layers}\n"
        f"neuron num: {s.hidden_width}\n"
        f"shortcuts: {sc}\n"
        f"activation: {et.canonical_string(g.activation)}\n"
        f"activation params: {params}\n"
    )


class GenomeParseError(ValueError):
    def __init__(self, message, line):
        super().__init__(f"{message} (line {line})")
        self.line = line


_PARAM_NAME_SLOT = {"a": 0, "b": 1, "c": 2, "α": 0, "β": 1, "γ": 2}


def genome_from_text(text: str, id: str = "") -> Genome:
    fields = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise GenomeParseError(f"expected 'key: value', got {line!r}", lineno)
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
        lines[key.strip()] = lineno
    for key in ("layer num", "neuron num", "shortcuts", "activation"):
        if key not in fields:
            raise GenomeParseError(f"missing field {key!r}", len(text.splitlines()) + 1)
    try:
        n = int(fields["layer num"])
        width = int(fields["neuron num"])
    except ValueError as exc:
        raise GenomeParseError(str(exc), lines.get("layer num", 1)) from None
    sc_text = fields["shortcuts"]
    if sc_text == "none" or sc_text == "[]":
        shortcuts = ()
    else:
        if not (sc_text.startswith("[") and sc_text.endswith("]")):
            raise GenomeParseError("shortcuts must be 'none' or '[i-j,...]'", lines["shortcuts"])
        items = []
        for part in sc_text[1:-1].split(","):
            part = part.strip()
            a, sep, b = part.partition("-")
            if not sep:
                raise GenomeParseError(f"bad shortcut {part!r}", lines["shortcuts"])
            items.append((int(a), int(b)))
        shortcuts = tuple(sorted(items))
    try:
        tree = et.parse(fields["activation"])
    except et.ParseError as exc:
        raise GenomeParseError(f"activation: {exc}", lines["activation"]) from None
    params_text = fields.get("activation params", "none")
    if params_text != "none":
        values = [1.0] * et.param_count(tree)
        for item in params_text.split(","):
            name, sep, val = item.strip().partition("=")
            name = name.strip()
            if not sep or name not in _PARAM_NAME_SLOT:
                raise GenomeParseError(f"bad parameter assignment {item.strip()!r}",
                                       lines.get("activation params", 1))
            slot = _PARAM_NAME_SLOT[name]
            if slot >= len(values):
                raise GenomeParseError(f"parameter {name!r} has no edge",
                                       lines.get("activation params", 1))
            values[slot] = float(val)
        tree = et.with_param_values(tree, values)
    genome = Genome(StructureGene(n, width, shortcuts), tree, id=id)
    problems = validate_genome(genome)
    if problems:
        raise GenomeParseError("; ".join(problems), lines.get("layer num", 1))
    return genome
