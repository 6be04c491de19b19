"""Glue between genomes, problems, and the optimizer.

Builds the full-batch objective (loss and flat-parameter gradient) for a
genome on a problem and runs training with deterministic seeding. The eager
torch graph is the default; long standalone trainings can opt into
torch.compile, which changes nothing but speed (and rounding).
"""

from __future__ import annotations

import hashlib
from typing import Optional

import numpy as np
import torch

from . import autonet, optim, problems
from .genome import Genome

COMPILE_EPOCH_THRESHOLD = 1000  # "auto" engine compiles only long trainings


def derive_seed(*parts) -> int:
    digest = hashlib.sha256(repr(tuple(parts)).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))


def build_network(genome: Genome, problem: problems.PdeProblem) -> autonet.NetworkInstance:
    return autonet.build(genome, len(problem.coords), len(problem.components))


def make_objective(net, problem, samples, engine: str = "eager"):
    """theta (numpy) -> (loss, gradient); gradient is None on non-finite loss."""

    def loss_of(theta_t):
        fld = autonet.NetworkField(net, theta_t, problem.coords, problem.components)
        total, _, _, _ = problems.loss(problem, fld, samples)
        return total

    if engine == "compiled":
        loss_of = torch.compile(loss_of, dynamic=False)
    elif engine != "eager":
        raise ValueError(f"unknown engine {engine!r}")

    def objective(theta_np):
        theta_t = torch.tensor(theta_np, dtype=torch.float64, requires_grad=True)
        total = loss_of(theta_t)
        f = float(total.detach())
        if not np.isfinite(f):
            return f, None
        (grad,) = torch.autograd.grad(total, theta_t)
        return f, grad.numpy()

    return objective


def resolve_engine(engine: str, epochs: int) -> str:
    if engine == "auto":
        return "compiled" if epochs >= COMPILE_EPOCH_THRESHOLD else "eager"
    return engine


def train_genome(genome: Genome, problem, epochs: int, seed_parts,
                 time_limit: Optional[float] = None,
                 lbfgs: Optional[dict] = None,
                 engine: str = "eager",
                 callback=None):
    """Kaiming-init, then L-BFGS for the given epochs. Returns (net, theta, trace).

    seed_parts feed the deterministic init stream, conventionally
    (master_seed, genome_id, evaluation_index).
    """
    if isinstance(problem, str):
        problem = problems.make_problem(problem)
    samples = problems.samples_for(problem)
    net = build_network(genome, problem)
    theta0 = autonet.init_params(net, rng_for(*seed_parts))
    objective = make_objective(net, problem, samples, resolve_engine(engine, epochs))
    cfg = optim.LbfgsConfig(epochs=epochs, **(lbfgs or {}))
    theta, trace = optim.minimize(objective, theta0, cfg,
                                  time_limit=time_limit, callback=callback)
    return net, theta, trace


def evaluate_errors(net, theta, problem, samples=None):
    """Relative L2 error per output component on the test grid."""
    samples = samples or problems.samples_for(problem)
    fld = autonet.NetworkField(net, theta, problem.coords, problem.components)
    return problems.relative_l2_error(fld, problem, samples)
