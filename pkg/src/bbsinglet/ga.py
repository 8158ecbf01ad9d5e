"""Genetic algorithm over bang-bang chromosomes.

The genome of a chromosome is its per-segment, per-channel activity bits and
phases; phases live on the grid k * phase_resolution. Every random draw comes
from a stream seeded by (master_seed, generation, slot), so a run is
reproducible regardless of how fitness evaluation is scheduled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .engine import BBSequence, ControlProblem

log = logging.getLogger(__name__)

Chromosome = BBSequence


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 64
    generations: int = 500
    tournament_size: int = 3
    crossover_rate: float = 0.8
    mutation_rate: float = 0.02
    phase_resolution: float = math.pi / 180
    activity_probability: float = 0.5
    elitism_count: int = 2
    master_seed: int = 0
    target_q: float | None = None
    stall_generations: int = 50
    stall_tolerance: float = 1e-4

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if not 0 <= self.elitism_count <= self.population_size:
            raise ValueError("elitism_count must lie in [0, population_size]")
        if self.elitism_count == self.population_size and self.population_size > 1 and self.generations > 0:
            log.warning("elitism_count == population_size: the population never changes")
        for name in ("crossover_rate", "mutation_rate", "activity_probability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")
        if self.phase_resolution <= 0:
            raise ValueError("phase_resolution must be > 0")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")

    @property
    def phase_levels(self) -> int:
        return max(1, int(math.floor(2 * math.pi / self.phase_resolution + 1e-9)))


@dataclass(frozen=True)
class FitnessRecord:
    generation: int
    best_Q: float
    mean_Q: float
    best_chromosome_id: str
    best_enhancement: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def rng_stream(master_seed: int, generation: int, slot: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, generation, slot]))


def _random_phases(rng: np.random.Generator, shape, cfg: GAConfig) -> np.ndarray:
    return rng.integers(0, cfg.phase_levels, size=shape) * cfg.phase_resolution


def random_population(cfg: GAConfig, template: BBSequence, generation: int = 0) -> list[Chromosome]:
    """``population_size`` chromosomes with independent random bits and grid phases.

    Each bit is on with probability ``activity_probability``.
    """
    shape = template.active.shape
    pop = []
    for slot in range(cfg.population_size):
        rng = rng_stream(cfg.master_seed, generation, slot)
        active = rng.random(shape) < cfg.activity_probability
        pop.append(BBSequence(template.dt, template.channels, active, _random_phases(rng, shape, cfg)))
    return pop


def _ranking(pop: Sequence[Chromosome], fitnesses) -> list[int]:
    # best first; ties broken by chromosome id for a total order
    return sorted(range(len(pop)), key=lambda i: (-float(fitnesses[i]), pop[i].id))


def _tournament(rng, rank_of: list[int], size: int) -> int:
    picks = rng.integers(0, len(rank_of), size=size)
    return min(picks, key=lambda i: rank_of[i])


def crossover(a: Chromosome, b: Chromosome, cut: int) -> Chromosome:
    """Single-point crossover: segments [0, cut) from ``a``, the rest from ``b``."""
    active = np.concatenate([a.active[:cut], b.active[cut:]])
    phases = np.concatenate([a.phases[:cut], b.phases[cut:]])
    return BBSequence(a.dt, a.channels, active, phases)


def mutate(c: Chromosome, rng: np.random.Generator, cfg: GAConfig) -> Chromosome:
    """Flip each activity bit and redraw each phase independently with probability mutation_rate."""
    if cfg.mutation_rate == 0:
        return c
    shape = c.active.shape
    flip = rng.random(shape) < cfg.mutation_rate
    redraw = rng.random(shape) < cfg.mutation_rate
    active = c.active ^ flip
    phases = np.where(redraw, _random_phases(rng, shape, cfg), c.phases)
    return BBSequence(c.dt, c.channels, active, phases)


def evolve_generation(pop: Sequence[Chromosome], fitnesses, cfg: GAConfig, generation: int) -> list[Chromosome]:
    """Elitism, tournament selection, single-point crossover and per-gene mutation.

    Elites keep their positions' relative order; offspring slot s draws from
    the stream (master_seed, generation, s).
    """
    if len(pop) != len(fitnesses):
        raise ValueError("population and fitness lengths differ")
    order = _ranking(pop, fitnesses)
    rank_of = [0] * len(pop)
    for r, i in enumerate(order):
        rank_of[i] = r
    elites = sorted(order[: cfg.elitism_count])
    out = [pop[i] for i in elites]
    n = pop[0].n_segments
    for slot in range(len(out), cfg.population_size):
        rng = rng_stream(cfg.master_seed, generation, slot)
        p1 = pop[_tournament(rng, rank_of, cfg.tournament_size)]
        child = p1
        if rng.random() < cfg.crossover_rate and n > 1:
            p2 = pop[_tournament(rng, rank_of, cfg.tournament_size)]
            child = crossover(p1, p2, int(rng.integers(1, n)))
        out.append(mutate(child, rng, cfg))
    return out


@dataclass
class OptimizeResult:
    best: Chromosome
    best_q: float
    best_enhancement: float
    history: list[FitnessRecord]
    ceiling_q: float
    ceiling_enhancement: float

    def __iter__(self):
        # allows ``best, history = optimize(...)``
        return iter((self.best, self.history))


def optimize(problem: ControlProblem, cfg: GAConfig, template: BBSequence, workers: int | None = None,
             callback: Callable[[FitnessRecord], None] | None = None) -> OptimizeResult:
    """Run the GA until the generation budget, target_q, or a fitness stall."""
    if template.channels != problem.channels or template.dt != problem.dt:
        raise ValueError("template does not match the problem's channels or dt")
    pop = random_population(cfg, template)
    history: list[FitnessRecord] = []
    best, best_raw = None, -np.inf
    stall, stall_ref = 0, -np.inf
    generation = 0
    while True:
        raw = problem.evaluate(pop, workers=workers)
        q = problem.q_from_raw(raw)
        i = _ranking(pop, raw)[0]
        if raw[i] > best_raw:
            best, best_raw = pop[i], float(raw[i])
        rec = FitnessRecord(generation, float(q[i]), float(q.mean()), pop[i].id,
                            float(problem.enhancement_from_raw(raw[i])) if problem.eps_ref else None)
        history.append(rec)
        if callback is not None:
            callback(rec)
        log.debug("gen %d best Q %.6f mean Q %.6f", generation, rec.best_Q, rec.mean_Q)
        best_q = float(problem.q_from_raw(best_raw))
        if best_q > stall_ref + cfg.stall_tolerance:
            stall_ref, stall = best_q, 0
        else:
            stall += 1
        if generation >= cfg.generations:
            break
        if cfg.target_q is not None and best_q >= cfg.target_q:
            break
        if cfg.stall_generations and stall >= cfg.stall_generations:
            break
        generation += 1
        pop = evolve_generation(pop, raw, cfg, generation)
    return OptimizeResult(
        best, float(problem.q_from_raw(best_raw)),
        float(problem.enhancement_from_raw(best_raw)) if problem.eps_ref else float("nan"),
        history, problem.ceiling_q(), problem.ceiling_enhancement(),
    )
