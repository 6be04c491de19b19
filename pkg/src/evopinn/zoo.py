"""Named model fixtures: the discovered architectures reported for the three
benchmarks, reconstructible by name for retraining and regression runs."""

from __future__ import annotations

from .exprtree import parse
from .genome import Genome, StructureGene

_SPECS = {
    # evolution-discovered models (run 1..3 per benchmark)
    "kg_evo_1": (6, 48, "[0-1,1-2,2-3,3-4,4-5]", "asinh(x)*cos(x)"),
    "kg_evo_2": (9, 44, "[0-1,1-2,2-3,3-5,7-8]", "α*(tanh(β*x)*cos(x))"),
    "kg_evo_3": (7, 50, "[0-1,1-2,2-4,4-5,5-6]",
                 "α*((cos(x)*(β*atan(x)))*sigmoid(γ*x))"),
    "burgers_evo_1": (8, 40, "[3-5]", "sin(α*x)*sigmoid(x)"),
    "burgers_evo_2": (5, 20, "[0-3]", "α*sigmoid(β*x)"),
    "burgers_evo_3": (8, 42, "[0-3]", "α*asinh((β*x)*sigmoid(γ*x))"),
    "lame_evo_1": (10, 42, "[0-1,1-2,2-3,3-4,4-5,5-6,6-7,7-9]", "x/(exp(x)+exp(-x))"),
    "lame_evo_2": (8, 48, "[0-1,1-3,3-4,4-6,6-7]", "sin(tanh(α*x))"),
    "lame_evo_3": (11, 48, "[0-1,1-2,2-3,3-4,4-6,6-7,7-8,8-9,9-10]",
                   "atan(α*((β*x)*sigmoid(γ*x)))"),
    # the sensitivity-study baseline
    "baseline": (9, 30, "[0-2,2-4,4-6,6-8]", "tanh(x)"),
}


def model_names():
    return tuple(_SPECS)


def load_model(name: str) -> Genome:
    if name not in _SPECS:
        raise KeyError(f"unknown model {name!r}; known: {', '.join(_SPECS)}")
    n, width, shortcuts, activation = _SPECS[name]
    if shortcuts == "none":
        sc = ()
    else:
        sc = tuple(tuple(int(v) for v in part.split("-"))
                   for part in shortcuts.strip("[]").split(","))
    return Genome(StructureGene(n, width, sc), parse(activation), id=name)
