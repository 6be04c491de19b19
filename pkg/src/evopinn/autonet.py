"""Differentiable network realized from a genome.

Input derivatives are propagated as explicit second-order jets (value plus
directional first/second derivative arrays) through the layer stack, so one
reverse pass over that graph yields gradients of any jet entry with respect
to the flat parameter vector. Everything runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import torch

from . import exprtree as et
from .genome import Genome, validate_genome
from .ops import torch_backend

TORCH = torch_backend()
DOUBLE = torch.float64


def set_compute_threads(n: int):
    torch.set_num_threads(max(1, int(n)))


@dataclass(frozen=True)
class NetworkInstance:
    genome: Genome
    input_dim: int
    output_dim: int
    layer_dims: Tuple[Tuple[int, int], ...]  # (fan_in, fan_out) per affine layer
    shortcuts: Tuple[Tuple[int, int], ...]
    layout: Tuple[Tuple[str, Tuple[int, ...], int], ...]  # (name, shape, offset)
    n_params: int

    def slot(self, name):
        for n, shape, off in self.layout:
            if n == name:
                return shape, off
        raise KeyError(name)


def build(genome: Genome, input_dim: int, output_dim: int) -> NetworkInstance:
    problems = validate_genome(genome)
    if problems:
        raise ValueError("invalid genome: " + "; ".join(problems))
    if input_dim not in (2, 3) or output_dim not in (1, 2):
        raise ValueError("supported dims: input 2..3, output 1..2")
    n = genome.structure.num_layers
    w = genome.structure.hidden_width
    dims = [(input_dim, w)] + [(w, w)] * (n - 2) + [(w, output_dim)]
    layout = []
    offset = 0

    def add(name, shape):
        nonlocal offset
        layout.append((name, tuple(shape), offset))
        offset += int(np.prod(shape))

    for k, (di, do) in enumerate(dims, start=1):
        add(f"W{k}", (do, di))
        add(f"b{k}", (do,))
    for (i, j) in genome.structure.shortcuts:
        if i == 0:  # raw-coordinate source needs a width projection
            add(f"P{j}", (w, input_dim))
    p = et.param_count(genome.activation)
    if p:
        for k in range(1, n):  # one copy per hidden layer
            add(f"act{k}", (p,))
    return NetworkInstance(
        genome, input_dim, output_dim, tuple(dims),
        tuple(sorted(genome.structure.shortcuts, key=lambda s: s[1])),
        tuple(layout), offset,
    )


def init_params(net: NetworkInstance, rng: np.random.Generator) -> np.ndarray:
    """Kaiming-uniform weights, zero biases, genome-recorded activation values."""
    theta = np.zeros(net.n_params)
    values = et.param_values(net.genome.activation)
    for name, shape, off in net.layout:
        size = int(np.prod(shape))
        if name.startswith("W") or name.startswith("P"):
            fan_in = shape[1]
            bound = np.sqrt(6.0 / fan_in)
            theta[off:off + size] = rng.uniform(-bound, bound, size=size)
        elif name.startswith("act"):
            theta[off:off + size] = values
        # biases stay zero
    return theta


def _as_tensor(theta):
    if isinstance(theta, torch.Tensor):
        return theta
    return torch.as_tensor(theta, dtype=DOUBLE)


class FieldJet:
    """Requested network outputs and input derivatives at a batch of points.

    Keys are like "u", "u_x", "u_xt" (second-derivative coordinate pairs are
    stored in coordinate order; "u_tx" resolves to the same entry).
    """

    def __init__(self, entries: Dict[str, object], coords: Tuple[str, ...]):
        self._entries = entries
        self.coords = coords

    def __getitem__(self, key):
        return self._entries[normalize_key(key, self.coords)]

    def __contains__(self, key):
        return normalize_key(key, self.coords) in self._entries

    def keys(self):
        return self._entries.keys()


def normalize_key(key: str, coords: Tuple[str, ...]) -> str:
    comp, _, deriv = key.partition("_")
    if len(deriv) <= 1:
        return key
    if len(deriv) != 2:
        raise ValueError(f"derivative order above 2 not supported: {key!r}")
    i, j = sorted(deriv, key=coords.index)
    return f"{comp}_{i}{j}"


def _parse_want(want, coords, components):
    """Split requested keys into needed first-order dirs and second-order pairs."""
    dirs, pairs, parsed = [], [], []
    for key in want:
        comp, _, deriv = key.partition("_")
        if comp not in components:
            raise ValueError(f"unknown component in {key!r}")
        for c in deriv:
            if c not in coords:
                raise ValueError(f"unknown coordinate in {key!r}")
        if len(deriv) == 1 and deriv not in dirs:
            dirs.append(deriv)
        elif len(deriv) == 2:
            pair = tuple(sorted(deriv, key=coords.index))
            if pair not in pairs:
                pairs.append(pair)
        parsed.append(key)
    for (i, j) in pairs:  # second derivatives need their first-order tangents
        for c in (i, j):
            if c not in dirs:
                dirs.append(c)
    dirs.sort(key=coords.index)
    pairs.sort(key=lambda p: (coords.index(p[0]), coords.index(p[1])))
    return tuple(dirs), tuple(pairs)


def _affine_jet(state, W, b):
    Wt = W.T
    value = state[0] @ Wt + b
    tangents = {d: t @ Wt for d, t in state[1].items()}
    seconds = {p: s @ Wt for p, s in state[2].items()}
    return value, tangents, seconds


def _linear_jet(state, P):
    Pt = P.T
    return (state[0] @ Pt,
            {d: t @ Pt for d, t in state[1].items()},
            {p: s @ Pt for p, s in state[2].items()})


def _add_jets(a, b):
    return (a[0] + b[0],
            {d: a[1][d] + b[1][d] for d in a[1]},
            {p: a[2][p] + b[2][p] for p in a[2]})


def forward_jet(net: NetworkInstance, theta, points, want,
                coords: Optional[Tuple[str, ...]] = None,
                components: Optional[Tuple[str, ...]] = None) -> FieldJet:
    """Evaluate requested values/derivatives; entries stay on the autograd graph.

    theta: flat (n_params,) tensor or array; points: (N, input_dim).
    Coordinate names default to ("x","t") / ("x","y","t") by input dimension.
    """
    coords = coords or _default_coords(net.input_dim)
    components = components or _default_components(net.output_dim)
    return _forward_jet(net, _as_tensor(theta), _as_tensor(points), tuple(want),
                        coords, components)


def _default_coords(input_dim):
    return ("x", "t") if input_dim == 2 else ("x", "y", "t")


def _default_components(output_dim):
    return ("u",) if output_dim == 1 else ("u", "v")


def _forward_jet(net, theta, X, want, coords, components):
    dirs, pairs = _parse_want(want, coords, components)
    N = X.shape[0]
    order = 2 if pairs else (1 if dirs else 0)

    def slice_of(name):
        shape, off = net.slot(name)
        size = int(np.prod(shape))
        return theta[off:off + size].view(shape)

    # position-0 jet: raw coordinates
    value = X
    tangents = {}
    seconds = {}
    for d in dirs:
        t = torch.zeros(N, net.input_dim, dtype=DOUBLE)
        t[:, coords.index(d)] = 1.0
        tangents[d] = t
    for p in pairs:
        seconds[p] = torch.zeros(N, net.input_dim, dtype=DOUBLE)
    state = (value, tangents, seconds)

    n_layers = len(net.layer_dims)
    tree = net.genome.activation
    p_count = et.param_count(tree)
    by_end = {j: i for (i, j) in net.shortcuts}
    saved = {}
    sources = {i for (i, j) in net.shortcuts}
    if 0 in sources:
        saved[0] = state

    for k in range(1, n_layers + 1):
        W = slice_of(f"W{k}")
        b = slice_of(f"b{k}")
        a = _affine_jet(state, W, b)
        if k < n_layers:
            params = slice_of(f"act{k}") if p_count else ()
            f = et.jet_array(tree, a[0], tuple(params), TORCH, order=order)
            value = f[0]
            tangents = {}
            seconds = {}
            if order >= 1:
                tangents = {d: f[1] * a[1][d] for d in a[1]}
            if order >= 2:
                seconds = {(i, j): f[2] * a[1][i] * a[1][j] + f[1] * a[2][(i, j)]
                           for (i, j) in a[2]}
            state = (value, tangents, seconds)
            pos = k  # signal entering layer k+1
            if pos in by_end:
                src = by_end[pos]
                incoming = saved[src]
                if src == 0:
                    incoming = _linear_jet(incoming, slice_of(f"P{pos}"))
                state = _add_jets(state, incoming)
            if pos in sources:
                saved[pos] = state
        else:
            state = a

    entries = {}
    value, tangents, seconds = state
    for ci, comp in enumerate(components):
        entries[comp] = value[:, ci]
        for d in dirs:
            entries[f"{comp}_{d}"] = tangents[d][:, ci]
        for (i, j) in pairs:
            entries[f"{comp}_{i}{j}"] = seconds[(i, j)][:, ci]
    return FieldJet(entries, coords)


def param_gradient(loss, theta) -> np.ndarray:
    """Gradient of a scalar graph node with respect to the flat parameter leaf."""
    if not torch.isfinite(loss):
        raise FloatingPointError("non-finite loss; training must early-stop")
    (grad,) = torch.autograd.grad(loss, theta, allow_unused=True)
    if grad is None:
        grad = torch.zeros_like(theta)
    return grad.detach().numpy()


class NetworkField:
    """Field adapter: lets the problem losses evaluate a network like any field."""

    def __init__(self, net: NetworkInstance, theta, coords, components):
        self.net = net
        self.theta = _as_tensor(theta)
        self.coords = coords
        self.components = components
        self._adapt_cache = {}

    def jet(self, points, want) -> FieldJet:
        X = torch.as_tensor(points, dtype=DOUBLE)
        return _forward_jet(self.net, self.theta, X, tuple(want),
                            self.coords, self.components)

    def adapt(self, array):
        key = id(array)
        if key not in self._adapt_cache:
            self._adapt_cache[key] = torch.as_tensor(array, dtype=DOUBLE)
        return self._adapt_cache[key]

    def values(self, points) -> np.ndarray:
        with torch.no_grad():
            jet = self.jet(points, self.components)
            cols = [jet[c] for c in self.components]
        return torch.stack(cols, dim=1).numpy()
