"""Evolution driver: shrinking population / growing epochs, linear-ranking
selection, elitist retraining, early stopping, and candidate multi-evaluation.

Every evaluation seed derives from (master seed, genome id, evaluation index),
so the set of genomes and all fitness values are reproducible regardless of
worker count. Elitist retraining reuses evaluation index 0: with more epochs
the deterministic optimizer extends its previous trace, so a retrained elitist
can only keep or improve its fitness.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import multiprocessing as mp

from . import problems
from .genome import DEFAULT_INIT, DEFAULT_RATES, Genome, InitPolicy, MutationRates, \
    crossover, genome_from_text, genome_to_text, mutate, random_genome
from .optim import TrainTrace
from .training import derive_seed, rng_for, train_genome

ARCHIVE_VERSION = 1


@dataclass(frozen=True)
class Schedule:
    sizes: Tuple[int, ...]
    epochs: Tuple[int, ...]

    def __post_init__(self):
        if len(self.sizes) != len(self.epochs) or not self.sizes:
            raise ValueError("schedule needs matching non-empty size/epoch rows")
        if any(s < 1 for s in self.sizes) or any(e < 0 for e in self.epochs):
            raise ValueError("population sizes must be >= 1 and epochs >= 0")
        if any(a < b for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("population sizes must be non-increasing")
        if any(a > b for a, b in zip(self.epochs, self.epochs[1:])):
            raise ValueError("training epochs must be non-decreasing")

    def __len__(self):
        return len(self.sizes)


# the published schedules: Klein-Gordon and the elasticity runs share one
KLEIN_GORDON_SCHEDULE = Schedule(
    (1000, 250, 125, 85, 65, 50, 40, 30, 25, 20, 15, 15, 15, 10, 10),
    (100, 200, 400, 600, 800, 1000, 1200, 1600, 2000, 2500, 3000, 3500, 4000, 4500, 5000),
)
BURGERS_SCHEDULE = Schedule(
    (1000, 200, 100, 65, 50, 40, 35, 30, 25, 20, 20, 20, 15, 15, 15),
    (100, 200, 400, 600, 800, 1000, 1200, 1400, 1600, 1800, 2000, 2200, 2400, 2700, 3000),
)


def default_schedule(problem_name: str) -> Schedule:
    return BURGERS_SCHEDULE if problem_name.startswith("burgers") else KLEIN_GORDON_SCHEDULE


@dataclass(frozen=True)
class EvolutionConfig:
    schedule: Schedule
    seed: int = 0
    r_cm: float = 0.5
    r_c: float = 1.0
    rates: MutationRates = field(default_factory=MutationRates)
    r_elite: float = 0.25
    n_candidates: int = 3
    n_evals: int = 4
    time_limit: Optional[float] = None
    workers: int = 1
    init: InitPolicy = field(default_factory=InitPolicy)
    lbfgs: Optional[dict] = None


@dataclass
class FitnessReport:
    genome: Genome
    trace: TrainTrace
    fitness: float
    status: str

    @property
    def min_loss(self):
        return self.trace.min_loss


class EvolutionAborted(RuntimeError):
    pass


def linear_ranking(size: int):
    """Selection probabilities for ranks 1 (worst) .. size (best)."""
    if size < 1:
        raise ValueError("population size must be >= 1")
    if size == 1:
        return [1.0]
    eta_minus = 2.0 / (1.0 + size)
    eta_plus = 2.0 * size / (1.0 + size)
    return [(eta_minus + (eta_plus - eta_minus) * i / (size - 1)) / size
            for i in range(size)]


def fitness_of(trace: TrainTrace) -> float:
    if trace.status in ("completed", "converged") and trace.losses:
        return -trace.min_loss
    return -math.inf  # overflow / timeout individuals rank worst


def evaluate(genome: Genome, problem_spec: str, epochs: int, master_seed: int,
             eval_index: int = 0, time_limit: Optional[float] = None,
             lbfgs: Optional[dict] = None) -> FitnessReport:
    """Train one individual from scratch; statuses live in the report."""
    from .autonet import set_compute_threads

    set_compute_threads(1)  # keeps results identical across worker layouts
    _, _, trace = train_genome(
        genome, problem_spec, epochs,
        seed_parts=(master_seed, genome.id, eval_index),
        time_limit=time_limit, lbfgs=lbfgs, engine="eager",
    )
    return FitnessReport(genome, trace, fitness_of(trace), trace.status)


# ---------------------------------------------------------------------------
# parallel plumbing (spawned workers share nothing; tasks are plain tuples)

def _run_task(task):
    text, genome_id, problem_spec, epochs, master_seed, eval_index, time_limit, lbfgs = task
    genome = genome_from_text(text, id=genome_id)
    report = evaluate(genome, problem_spec, epochs, master_seed,
                      eval_index=eval_index, time_limit=time_limit, lbfgs=lbfgs)
    return {
        "fitness": report.fitness,
        "status": report.status,
        "min_loss": report.min_loss if math.isfinite(report.min_loss) else None,
        "epochs_run": report.trace.epochs_run,
        "wall_time": report.trace.wall_time,
        "losses": report.trace.losses,
    }


class _Pool:
    def __init__(self, workers: int):
        self.workers = max(1, workers)
        self._pool = None
        if self.workers > 1:
            ctx = mp.get_context("spawn")
            self._pool = ProcessPoolExecutor(self.workers, mp_context=ctx)

    def run(self, tasks):
        if self._pool is None:
            return [_run_task(t) for t in tasks]
        return list(self._pool.map(_run_task, tasks, chunksize=1))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


# ---------------------------------------------------------------------------


@dataclass
class GenerationStats:
    generation: int
    size: int
    epochs: int
    best_id: str
    best_fitness: float
    finite: int


@dataclass
class EvolutionResult:
    winner: Genome
    winner_mean_fitness: float
    candidates: List[Tuple[Genome, float, Tuple[float, ...]]]
    generations: List[GenerationStats]
    records: List[dict]
    planned_epochs: int
    consumed_epochs: int


def planned_budget(cfg: EvolutionConfig) -> int:
    sizes, epochs = cfg.schedule.sizes, cfg.schedule.epochs
    total = sum(s * e for s, e in zip(sizes, epochs))
    total += sum(math.ceil(s * cfg.r_elite) * e for s, e in zip(sizes[1:], epochs[1:]))
    total += cfg.n_candidates * cfg.n_evals * epochs[-1]
    return total


class _Archive:
    """Append-only in memory, atomically rewritten at generation barriers.

    Cached records let an interrupted run resume without recomputation; the
    wall_time field is informational and excluded from resume equality.
    """

    def __init__(self, path: Optional[str], fingerprint: str):
        self.path = path
        self.fingerprint = fingerprint
        self.records: List[dict] = []
        self.cache: Dict[tuple, dict] = {}
        if path and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                lines = [json.loads(line) for line in fh if line.strip()]
            if lines:
                header = lines[0]
                if header.get("fingerprint") != fingerprint:
                    raise EvolutionAborted(
                        "archive belongs to a different configuration; refusing to resume")
                for rec in lines[1:]:
                    self.cache[self._key(rec)] = rec

    @staticmethod
    def _key(rec):
        return (rec["kind"], rec["gen"], rec["slot"], rec["eval"])

    def lookup(self, kind, gen, slot, eval_index, genome_text):
        rec = self.cache.get((kind, gen, slot, eval_index))
        if rec is not None and rec["genome"] != genome_text:
            raise EvolutionAborted("archived genome mismatch; refusing to resume")
        return rec

    def add(self, rec):
        self.records.append(rec)

    def flush(self):
        if not self.path:
            return
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"version": ARCHIVE_VERSION,
                                 "fingerprint": self.fingerprint}) + "\n")
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")
        os.replace(tmp, self.path)


def _config_fingerprint(cfg: EvolutionConfig, problem_spec: str, selection: str) -> str:
    payload = (problem_spec, selection, cfg.schedule.sizes, cfg.schedule.epochs,
               cfg.seed, cfg.r_cm, cfg.r_c,
               (cfg.rates.r_layers, cfg.rates.r_neurons, cfg.rates.r_shortcuts,
                cfg.rates.r_activation),
               cfg.r_elite, cfg.n_candidates, cfg.n_evals)
    import hashlib

    return hashlib.sha256(repr(payload).encode()).hexdigest()[:16]


def _breed(pop_reports, probs, count, rng, cfg: EvolutionConfig, generation: int):
    """count children from ranked parents; crossover or mutation, exclusive."""
    children = []
    pair_total = (count + 1) // 2
    indices = list(range(len(pop_reports)))
    for _ in range(pair_total):
        i1 = rng.choice(indices, p=probs)
        i2 = rng.choice(indices, p=probs)
        p1, p2 = pop_reports[i1].genome, pop_reports[i2].genome
        if rng.random() < cfg.r_cm:
            c1, c2 = crossover(p1, p2, cfg.r_c, rng)
        else:
            c1 = mutate(p1, cfg.rates, rng, cfg.init.tree_policy)
            c2 = mutate(p2, cfg.rates, rng, cfg.init.tree_policy)
        children.extend([c1, c2])
    children = children[:count]
    return [replace(c, id=f"g{generation:02d}-{k:04d}") for k, c in enumerate(children)]


def _rank(reports):
    """Best first; ties broken by earlier-created genome id."""
    return sorted(reports, key=lambda r: (-r.fitness, r.genome.id))


def run_evolution(cfg: EvolutionConfig, problem_spec: str,
                  selection: str = "ranking",
                  archive_path: Optional[str] = None,
                  progress=None) -> EvolutionResult:
    """The full search loop; selection="uniform" gives the random-search baseline."""
    if selection not in ("ranking", "uniform"):
        raise ValueError("selection must be 'ranking' or 'uniform'")
    problems.make_problem(problem_spec)  # validate early
    fingerprint = _config_fingerprint(cfg, problem_spec, selection)
    archive = _Archive(archive_path, fingerprint)
    pool = _Pool(cfg.workers)
    say = progress or (lambda msg: None)
    try:
        return _run(cfg, problem_spec, selection, archive, pool, say)
    finally:
        pool.close()


def _run(cfg, problem_spec, selection, archive, pool, say):
    sizes, epoch_table = cfg.schedule.sizes, cfg.schedule.epochs
    t = len(sizes)

    def train_batch(kind, gen, genomes, epochs, eval_indices=None):
        eval_indices = eval_indices or [0] * len(genomes)
        rows, tasks, pending = [], [], []
        full = [None] * len(genomes)
        for slot, (g, ev) in enumerate(zip(genomes, eval_indices)):
            text = genome_to_text(g)
            cached = archive.lookup(kind, gen, slot, ev, text)
            if cached is not None:
                rows.append(cached)
                continue
            rows.append(None)
            pending.append(slot)
            tasks.append((text, g.id, problem_spec, epochs, cfg.seed, ev,
                          cfg.time_limit, cfg.lbfgs))
        results = pool.run(tasks)
        for slot, res in zip(pending, results):
            g = genomes[slot]
            full[slot] = res
            rows[slot] = {
                "kind": kind, "gen": gen, "slot": slot, "eval": eval_indices[slot],
                "id": g.id, "genome": genome_to_text(g), "epochs": epochs,
                "fitness": res["fitness"], "status": res["status"],
                "min_loss": res["min_loss"], "epochs_run": res["epochs_run"],
                "wall_time": res["wall_time"],
            }
        reports = []
        for slot, (rec, res) in enumerate(zip(rows, full)):
            archive.add(rec)
            trace = TrainTrace(status=rec["status"], wall_time=rec["wall_time"])
            if res is not None:
                trace.losses = list(res["losses"])
            elif rec["min_loss"] is not None:
                trace.losses = [rec["min_loss"]]  # resumed records keep the minimum only
            reports.append(FitnessReport(genomes[slot], trace, rec["fitness"], rec["status"]))
        archive.flush()
        return reports

    # generation 1
    genomes = [random_genome(rng_for(cfg.seed, "init", i), cfg.init, id=f"g01-{i:04d}")
               for i in range(sizes[0])]
    reports = train_batch("train", 1, genomes, epoch_table[0])
    pop = _rank(reports)
    stats = [_gen_stats(1, sizes[0], epoch_table[0], pop)]
    say(f"gen 1: best fitness {pop[0].fitness:.6g} ({pop[0].genome.id})")
    _require_finite(pop, 1)
    champions = {pop[0].genome.id: pop[0]}  # random search draws candidates here

    for g in range(2, t + 1):
        s_g, e_g = sizes[g - 1], epoch_table[g - 1]
        worst_first = list(reversed(pop))  # rank 1 = worst
        if selection == "ranking":
            probs = linear_ranking(len(worst_first))
        else:
            probs = [1.0 / len(worst_first)] * len(worst_first)
        rng = rng_for(cfg.seed, "breed", g)
        children = _breed(worst_first, probs, s_g, rng, cfg, g)
        child_reports = train_batch("train", g, children, e_g)

        n_elite = math.ceil(s_g * cfg.r_elite)
        elites = [r.genome for r in pop[:n_elite]]
        elite_reports = train_batch("retrain", g, elites, e_g)

        pop = _rank(child_reports + elite_reports)[:s_g]
        stats.append(_gen_stats(g, s_g, e_g, pop))
        say(f"gen {g}: best fitness {pop[0].fitness:.6g} ({pop[0].genome.id})")
        _require_finite(pop, g)
        champions[pop[0].genome.id] = pop[0]  # an id may top several generations

    # candidate multi-evaluation
    if selection == "uniform":
        pool_reports = _rank(list(champions.values()))
    else:
        pool_reports = pop
    n_c = min(cfg.n_candidates, len(pool_reports))
    candidates = [pool_reports[i].genome for i in range(n_c)]
    cand_genomes = [g for g in candidates for _ in range(cfg.n_evals)]
    cand_evals = [e for _ in candidates for e in range(cfg.n_evals)]
    cand_reports = train_batch("candidate", t + 1, cand_genomes, epoch_table[-1],
                               eval_indices=cand_evals)
    summary = []
    for i, g in enumerate(candidates):
        fits = tuple(r.fitness for r in cand_reports[i * cfg.n_evals:(i + 1) * cfg.n_evals])
        mean = sum(fits) / len(fits)
        summary.append((g, mean, fits))
        say(f"candidate {g.id}: mean fitness {mean:.6g}")
    summary_ranked = sorted(summary, key=lambda item: (-item[1], item[0].id))
    winner, winner_mean, _ = summary_ranked[0]
    if not math.isfinite(winner_mean):
        raise EvolutionAborted("all candidates failed their evaluation trainings")

    consumed = sum(rec["epochs_run"] for rec in archive.records)
    return EvolutionResult(
        winner=winner, winner_mean_fitness=winner_mean, candidates=summary,
        generations=stats, records=archive.records,
        planned_epochs=planned_budget(cfg), consumed_epochs=consumed,
    )


def _gen_stats(g, size, epochs, pop):
    finite = sum(1 for r in pop if math.isfinite(r.fitness))
    return GenerationStats(g, size, epochs, pop[0].genome.id, pop[0].fitness, finite)


def _require_finite(pop, generation):
    if all(not math.isfinite(r.fitness) for r in pop):
        raise EvolutionAborted(
            f"generation {generation} has no finite-fitness individual; "
            "check the problem setup or loosen the time limit")


def run_random_search(cfg: EvolutionConfig, problem_spec: str,
                      archive_path: Optional[str] = None,
                      progress=None) -> EvolutionResult:
    """Uniform parent selection; candidates come from per-generation champions."""
    result = run_evolution(cfg, problem_spec, selection="uniform",
                           archive_path=archive_path, progress=progress)
    return result
