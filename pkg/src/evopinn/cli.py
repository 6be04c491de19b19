"""Configuration-driven command line: search, train, evaluate, and the
search-space report. All randomized behavior is pinned by the master seed;
every output file is written atomically (temp + rename)."""

from __future__ import annotations

import argparse
import json
import math  # noqa: F401 (used in summaries)
import os
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Tuple

import numpy as np

from . import space
from .evolve import (EvolutionAborted, EvolutionConfig, Schedule,
                     default_schedule, run_evolution)
from .genome import GenomeParseError, MutationRates, genome_from_text, genome_to_text
from .exprtree import ParseError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_ALL_INVALID = 4
EXIT_OVERFLOW = 5
EXIT_TIMEOUT = 6

MODES = ("search-evo", "search-random", "train", "evaluate", "space")


@dataclass
class RunConfig:
    mode: str = ""
    problem: str = ""
    seed: int = 0
    workers: int = 1
    out: str = "out"
    genome: str = ""
    snapshot: str = ""
    epochs: Optional[int] = None
    engine: str = "auto"  # auto | eager | compiled
    eval_every: int = 0
    time_limit: Optional[float] = None
    r_cm: float = 0.5
    r_c: float = 1.0
    r_l: float = 0.3
    r_n: float = 0.3
    r_s: float = 0.3
    r_a: float = 0.7
    r_e: float = 0.25
    n_candidates: int = 3
    n_evals: int = 4
    lbfgs_memory: int = 50
    lbfgs_c1: float = 1e-4
    lbfgs_c2: float = 0.9
    lbfgs_max_ls: int = 25
    n_min: int = 3
    n_max: int = 11
    n_neu: int = 16
    max_nodes: int = 7
    max_params: int = 3
    schedule: Optional[Schedule] = None


class ConfigError(ValueError):
    pass


_INT_KEYS = {"seed", "workers", "epochs", "eval_every", "n_candidates", "n_evals",
             "lbfgs_memory", "lbfgs_max_ls", "n_min", "n_max", "n_neu",
             "max_nodes", "max_params"}
_FLOAT_KEYS = {"time_limit", "r_cm", "r_c", "r_l", "r_n", "r_s", "r_a", "r_e",
               "lbfgs_c1", "lbfgs_c2"}
_STR_KEYS = {"mode", "problem", "out", "genome", "snapshot", "engine"}


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    rows = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.replace("=", " ").split()
        if tokens[0] == "gen":
            if len(tokens) != 6 or tokens[2] != "pop" or tokens[4] != "epochs":
                raise ConfigError(f"line {lineno}: expected 'gen <i> pop <S> epochs <E>'")
            try:
                rows[int(tokens[1])] = (int(tokens[3]), int(tokens[5]))
            except ValueError:
                raise ConfigError(f"line {lineno}: schedule row values must be integers")
            continue
        if len(tokens) != 2:
            raise ConfigError(f"line {lineno}: expected 'key value', got {line!r}")
        key, value = tokens
        try:
            if key in _INT_KEYS:
                setattr(cfg, key, int(value))
            elif key in _FLOAT_KEYS:
                setattr(cfg, key, float(value))
            elif key in _STR_KEYS:
                setattr(cfg, key, value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}")
    if rows:
        order = sorted(rows)
        if order != list(range(1, len(order) + 1)):
            raise ConfigError("schedule rows must be gen 1..T without gaps")
        cfg.schedule = Schedule(tuple(rows[i][0] for i in order),
                                tuple(rows[i][1] for i in order))
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    defaults = RunConfig()
    for f in fields(RunConfig):
        if f.name == "schedule":
            continue
        value = getattr(cfg, f.name)
        if value == getattr(defaults, f.name):
            continue
        lines.append(f"{f.name} {value}")
    lines.sort()
    if cfg.schedule is not None:
        for i, (s, e) in enumerate(zip(cfg.schedule.sizes, cfg.schedule.epochs), start=1):
            lines.append(f"gen {i} pop {s} epochs {e}")
    return "\n".join(lines) + "\n"


def atomic_write(path: str, data: str | bytes):
    mode = "wb" if isinstance(data, bytes) else "w"
    tmp = path + ".tmp"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------


def cmd_space(cfg: RunConfig, out=sys.stdout) -> int:
    try:
        sc = space.SpaceConfig(n_min=cfg.n_min, n_max=cfg.n_max, n_neu=cfg.n_neu,
                               max_nodes=cfg.max_nodes, max_params=cfg.max_params)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    structure = space.structure_space(sc)
    print("search space sizes", file=out)
    print(f"  structure: {structure} ({space.sci3(structure)})", file=out)
    act_total = space.activation_space(sc)
    for m in range(1, sc.max_nodes + 1):
        if m not in (3, 5, sc.max_nodes):
            continue
        v = space.activation_space(sc, m)
        print(f"  activation m={m}: {v} ({space.sci3(v)})", file=out)
        mv = structure * v
        print(f"  model m={m}: {mv} ({space.sci3(mv)})", file=out)
    print(f"  activation m<={sc.max_nodes}: {act_total} ({space.sci3(act_total)})", file=out)
    total = structure * act_total
    print(f"  model m<={sc.max_nodes}: {total} ({space.sci3(total)})", file=out)
    return EXIT_OK


def _load_genome(cfg: RunConfig):
    if not cfg.genome:
        raise ConfigError("train/evaluate need a genome file (--genome)")
    with open(cfg.genome, encoding="utf-8") as fh:
        text = fh.read()
    return genome_from_text(text, id=os.path.basename(cfg.genome))


def _status_exit(status: str) -> int:
    if status == "overflow":
        return EXIT_OVERFLOW
    if status == "timeout":
        return EXIT_TIMEOUT
    return EXIT_OK


def cmd_train(cfg: RunConfig, out=sys.stdout) -> int:
    from . import problems
    from .autonet import set_compute_threads
    from .training import evaluate_errors, train_genome

    if cfg.epochs is None:
        raise ConfigError("train mode needs 'epochs' in the config")
    if not cfg.problem:
        raise ConfigError("train mode needs a problem, e.g. klein_gordon:I")
    genome = _load_genome(cfg)
    problem = problems.make_problem(cfg.problem)
    samples = problems.samples_for(problem)
    set_compute_threads(cfg.workers)
    os.makedirs(cfg.out, exist_ok=True)

    checkpoints = {}
    net_box = {}

    def callback(epoch, theta, f):
        if cfg.eval_every and epoch % cfg.eval_every == 0:
            errs = evaluate_errors(net_box["net"], theta, problem, samples)
            checkpoints[epoch] = errs

    lbfgs = {"memory": cfg.lbfgs_memory, "c1": cfg.lbfgs_c1, "c2": cfg.lbfgs_c2,
             "max_ls_steps": cfg.lbfgs_max_ls}
    from . import autonet
    net = autonet.build(genome, len(problem.coords), len(problem.components))
    net_box["net"] = net
    net, theta, trace = train_genome(genome, problem, cfg.epochs,
                                     seed_parts=(cfg.seed, genome.id, 0),
                                     time_limit=cfg.time_limit, lbfgs=lbfgs,
                                     engine=cfg.engine, callback=callback)
    errors = evaluate_errors(net, theta, problem, samples)

    comp_cols = [f"rel_l2_{c}" for c in problem.components]
    rows = ["epoch,loss," + ",".join(comp_cols)]
    for epoch, value in enumerate(trace.losses):
        errs = checkpoints.get(epoch)
        tail = ",".join(f"{errs[c]:.12e}" for c in problem.components) if errs else "," * (len(comp_cols) - 1)
        rows.append(f"{epoch},{value:.17e},{tail}")
    atomic_write(os.path.join(cfg.out, "train_trace.csv"), "\n".join(rows) + "\n")

    layout = [{"name": n, "shape": list(s), "offset": o} for (n, s, o) in net.layout]
    buf = _npz_bytes(theta=theta, layout=json.dumps(layout), genome=genome_to_text(genome))
    atomic_write(os.path.join(cfg.out, "params.npz"), buf)

    metrics = {
        "problem": problem.key, "epochs": trace.epochs_run, "status": trace.status,
        "final_loss": trace.losses[-1] if trace.losses else None,
        "min_loss": trace.min_loss if trace.losses else None,
        "wall_time": trace.wall_time,
        "relative_l2": errors,
    }
    atomic_write(os.path.join(cfg.out, "metrics.json"), json.dumps(metrics, indent=2) + "\n")
    print(f"status: {trace.status}  min loss: {trace.min_loss:.6e}", file=out)
    for c, v in errors.items():
        print(f"relative L2 ({c}): {v:.6e}", file=out)
    return _status_exit(trace.status)


def _npz_bytes(**arrays) -> bytes:
    import io

    buf = io.BytesIO()
    np.savez(buf, **arrays)
    return buf.getvalue()


def cmd_evaluate(cfg: RunConfig, out=sys.stdout) -> int:
    from . import autonet, problems
    from .training import evaluate_errors

    if not cfg.problem:
        raise ConfigError("evaluate mode needs a problem")
    genome = _load_genome(cfg)
    snapshot = cfg.snapshot or os.path.join(cfg.out, "params.npz")
    if not os.path.exists(snapshot):
        raise ConfigError(f"snapshot not found: {snapshot}")
    problem = problems.make_problem(cfg.problem)
    samples = problems.samples_for(problem)
    net = autonet.build(genome, len(problem.coords), len(problem.components))
    with np.load(snapshot, allow_pickle=False) as data:
        theta = data["theta"]
        layout = json.loads(str(data["layout"]))
    expected = [{"name": n, "shape": list(s), "offset": o} for (n, s, o) in net.layout]
    if layout != expected or theta.shape != (net.n_params,):
        raise ConfigError("snapshot layout does not match the genome")
    fld = autonet.NetworkField(net, theta, problem.coords, problem.components)
    total, l_r, l_b, l_0 = problems.loss(problem, fld, samples)
    errors = evaluate_errors(net, theta, problem, samples)
    metrics = {
        "problem": problem.key,
        "loss": {"total": float(total), "residual": float(l_r),
                 "boundary": float(l_b), "initial": float(l_0)},
        "relative_l2": errors,
    }
    os.makedirs(cfg.out, exist_ok=True)
    atomic_write(os.path.join(cfg.out, "evaluate_metrics.json"),
                 json.dumps(metrics, indent=2) + "\n")
    print(f"loss: {float(total):.6e}", file=out)
    for c, v in errors.items():
        print(f"relative L2 ({c}): {v:.6e}", file=out)
    return EXIT_OK


def cmd_search(cfg: RunConfig, random_search: bool, out=sys.stdout) -> int:
    if not cfg.problem:
        raise ConfigError("search mode needs a problem")
    schedule = cfg.schedule or default_schedule(cfg.problem)
    rates = MutationRates(cfg.r_l, cfg.r_n, cfg.r_s, cfg.r_a)
    evo = EvolutionConfig(
        schedule=schedule, seed=cfg.seed, r_cm=cfg.r_cm, r_c=cfg.r_c, rates=rates,
        r_elite=cfg.r_e, n_candidates=cfg.n_candidates, n_evals=cfg.n_evals,
        time_limit=cfg.time_limit, workers=cfg.workers,
        lbfgs={"memory": cfg.lbfgs_memory, "c1": cfg.lbfgs_c1, "c2": cfg.lbfgs_c2,
               "max_ls_steps": cfg.lbfgs_max_ls},
    )
    os.makedirs(cfg.out, exist_ok=True)
    atomic_write(os.path.join(cfg.out, "run_config.txt"), serialize_config(cfg))
    archive_path = os.path.join(cfg.out, "archive.jsonl")
    try:
        result = run_evolution(evo, cfg.problem,
                               selection="uniform" if random_search else "ranking",
                               archive_path=archive_path,
                               progress=lambda msg: print(msg, file=out))
    except EvolutionAborted as exc:
        print(f"search aborted: {exc}", file=sys.stderr)
        return EXIT_ALL_INVALID
    atomic_write(os.path.join(cfg.out, "winner.genome"), genome_to_text(result.winner))
    summary = {
        "winner": result.winner.id,
        "winner_mean_fitness": result.winner_mean_fitness,
        "candidates": [{"id": g.id, "mean_fitness": mean,
                        "fitness": [f if math.isfinite(f) else None for f in fits]}
                       for (g, mean, fits) in result.candidates],
        "generations": [{"generation": s.generation, "size": s.size, "epochs": s.epochs,
                         "best_id": s.best_id, "best_fitness": s.best_fitness,
                         "finite": s.finite} for s in result.generations],
        "planned_epochs": result.planned_epochs,
        "consumed_epochs": result.consumed_epochs,
    }
    atomic_write(os.path.join(cfg.out, "summary.json"), json.dumps(summary, indent=2) + "\n")
    print(f"winner: {result.winner.id}  mean fitness: {result.winner_mean_fitness:.6e}",
          file=out)
    print(f"epochs planned: {result.planned_epochs}  consumed: {result.consumed_epochs}",
          file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evopinn",
        description="Evolutionary discovery and training of PINN models",
    )
    parser.add_argument("mode_pos", nargs="?", metavar="mode",
                        help=f"one of: {', '.join(MODES)}")
    parser.add_argument("--config", help="flat key/value config file with schedule rows")
    parser.add_argument("--mode", help="run mode (alternative to the positional)")
    parser.add_argument("--problem", help="problem name and case, e.g. klein_gordon:I")
    parser.add_argument("--genome", help="genome file for train/evaluate")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--workers", type=int, help="worker process count")
    parser.add_argument("--out", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                cfg = parse_config(fh.read())
        else:
            cfg = RunConfig()
        if args.mode_pos and args.mode and args.mode_pos != args.mode:
            raise ConfigError("conflicting positional mode and --mode")
        for key in ("problem", "genome", "seed", "workers", "out"):
            value = getattr(args, key)
            if value is not None:
                setattr(cfg, key, value)
        cfg.mode = args.mode or args.mode_pos or cfg.mode
        if cfg.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {cfg.mode!r}")
        if cfg.mode == "space":
            return cmd_space(cfg)
        if cfg.mode == "train":
            return cmd_train(cfg)
        if cfg.mode == "evaluate":
            return cmd_evaluate(cfg)
        return cmd_search(cfg, random_search=(cfg.mode == "search-random"))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GenomeParseError, ParseError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
