"""Generational GA: tournament selection, group crossover, sorted mutation, worst-lambda replacement."""

import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from typing import Any, Callable, Optional, Sequence

import numpy as np

from app.errors import ContractError, EvaluationError, InvalidArgumentError
from app.models import Checkpoint, CheckpointEntry, GaConfig, GenerationRecord, Genome, Individual
from app.services.fitness import FitnessEvaluator
from app.services.genome import Group, SearchSpace, genome_key, group_bounds, init_population

logger = logging.getLogger(__name__)

GROUPS = list(Group)


class FitnessCache:
    """genome_key -> fitness; a cached genome is never evaluated twice in a run."""

    def __init__(self, entries: Optional[dict[str, float]] = None):
        self._entries: dict[str, float] = dict(entries or {})

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> float:
        return self._entries[key]

    def put(self, key: str, fitness: float) -> None:
        self._entries[key] = fitness

    def to_dict(self) -> dict[str, float]:
        return dict(self._entries)


def _require_evaluated(individuals: Sequence[Individual]) -> None:
    if any(ind.fitness is None for ind in individuals):
        raise ContractError("every individual must be evaluated before selection")


def tournament_select(
    pop: Sequence[Individual], k: int, count: int, rng: np.random.Generator
) -> list[Individual]:
    """
    Run `count` tournaments of size k, removing each winner from the pool.

    When the pool shrinks below k the tournament draws the whole remaining pool.
    Ties on fitness are broken uniformly at random.
    """
    _require_evaluated(pop)
    if count > len(pop):
        raise InvalidArgumentError(f"cannot select {count} parents from {len(pop)} individuals")

    pool = list(range(len(pop)))
    winners = []
    for _ in range(count):
        drawn = rng.choice(len(pool), size=min(k, len(pool)), replace=False)
        fitnesses = np.array([pop[pool[i]].fitness for i in drawn])
        tied = np.flatnonzero(fitnesses == fitnesses.max())
        pick = drawn[tied[0]] if len(tied) == 1 else drawn[rng.choice(tied)]
        winners.append(pop[pool.pop(int(pick))])
    return winners


def swap_groups(p1: Genome, p2: Genome, space: SearchSpace, groups: Sequence[Group]) -> tuple[Genome, Genome]:
    """Exchange the full gene slices of the given groups, one group after the other."""
    a, b = list(p1.genes), list(p2.genes)
    for group in groups:
        span = group_bounds(space, group)
        a[span.start:span.stop], b[span.start:span.stop] = b[span.start:span.stop], a[span.start:span.stop]
    return Genome(genes=tuple(a)), Genome(genes=tuple(b))


def crossover(
    p1: Genome, p2: Genome, space: SearchSpace, rate: float, rng: np.random.Generator
) -> tuple[Genome, Genome]:
    """Two-point group-level crossover, firing with probability `rate`."""
    space.validate_genome(p1)
    space.validate_genome(p2)
    if rng.random() >= rate:
        return p1.model_copy(), p2.model_copy()
    chosen = rng.choice(len(GROUPS), size=2, replace=False)
    return swap_groups(p1, p2, space, [GROUPS[i] for i in chosen])


def sort_conv_dims(genes: list[int], space: SearchSpace) -> list[int]:
    """Reorder the conv-dim genes so their decoded channel counts are non-decreasing."""
    span = group_bounds(space, Group.CONV_DIMS)
    alphabet = space.alphabets[span.start].values
    genes = list(genes)
    genes[span.start:span.stop] = sorted(genes[span.start:span.stop], key=lambda i: alphabet[i])
    return genes


def point_mutate(genes: list[int], space: SearchSpace, group: Group, rng: np.random.Generator) -> list[int]:
    """Resample one gene of `group` to a different index of its alphabet."""
    span = group_bounds(space, group)
    position = span.start + int(rng.integers(len(span)))
    size = len(space.alphabets[position])
    genes = list(genes)
    if size > 1:
        genes[position] = (genes[position] + int(rng.integers(1, size))) % size
    return genes


def mutate(g: Genome, space: SearchSpace, rng: np.random.Generator, sort_dims: bool = True) -> Genome:
    space.validate_genome(g)
    genes = sort_conv_dims(list(g.genes), space) if sort_dims else list(g.genes)
    group = GROUPS[int(rng.integers(len(GROUPS)))]
    genes = point_mutate(genes, space, group, rng)
    if sort_dims and group is Group.CONV_DIMS:
        genes = sort_conv_dims(genes, space)
    return Genome(genes=tuple(genes))


def survivor_select(
    pop: Sequence[Individual], offspring: Sequence[Individual], rng: np.random.Generator
) -> list[Individual]:
    """Drop the len(offspring) worst parents (random tie-break) and append every offspring."""
    _require_evaluated(pop)
    _require_evaluated(offspring)
    lam = len(offspring)
    if lam > len(pop):
        raise InvalidArgumentError(f"lambda={lam} exceeds population size {len(pop)}")
    # stable sort over a random permutation gives uniform tie-breaking
    shuffled = [int(i) for i in rng.permutation(len(pop))]
    worst = set(sorted(shuffled, key=lambda i: pop[i].fitness)[:lam])
    return [ind for i, ind in enumerate(pop) if i not in worst] + list(offspring)


_worker_evaluator: Optional[FitnessEvaluator] = None


def _init_worker(evaluator: FitnessEvaluator) -> None:
    global _worker_evaluator
    _worker_evaluator = evaluator


def _evaluate_in_worker(genome: Genome) -> float:
    return _worker_evaluator.evaluate(genome)


def _checked(key: str, fitness: Any) -> float:
    fitness = float(fitness)
    if not 0.0 <= fitness <= 1.0:
        raise EvaluationError(key, ContractError(f"fitness {fitness} outside [0, 1]"))
    return fitness


def evaluate_genomes(
    genomes: Sequence[Genome],
    evaluator: FitnessEvaluator,
    cache: FitnessCache,
    executor: Optional[Executor] = None,
) -> tuple[list[float], int]:
    """
    Evaluate genomes cache-first.

    Uncached genomes are evaluated once each, in key order, and merged in that order,
    so serial and parallel execution fill the cache identically.

    Returns:
        Tuple of (fitness per input genome, number of new evaluations)
    """
    missing = sorted({genome_key(g): g for g in genomes if genome_key(g) not in cache}.items())
    if executor is not None and len(missing) > 1:
        futures = [(key, executor.submit(_evaluate_in_worker, g)) for key, g in missing]
        for key, future in futures:
            try:
                cache.put(key, _checked(key, future.result()))
            except EvaluationError:
                raise
            except Exception as e:
                raise EvaluationError(key, e) from e
    else:
        for key, g in missing:
            try:
                fitness = evaluator.evaluate(g)
            except Exception as e:
                raise EvaluationError(key, e) from e
            cache.put(key, _checked(key, fitness))
            logger.debug(f"evaluated {key}: {fitness:.4f}")
    return [cache.get(genome_key(g)) for g in genomes], len(missing)


def make_record(generation: int, pop: Sequence[Individual], evaluations: int) -> GenerationRecord:
    fitnesses = np.array([ind.fitness for ind in pop], dtype=np.float64)
    best = int(np.argmax(fitnesses))
    worst, top = float(fitnesses.min()), float(fitnesses.max())
    return GenerationRecord(
        generation=generation,
        best_fitness=top,
        mean_fitness=min(max(float(fitnesses.mean()), worst), top),
        worst_fitness=worst,
        best_genome_key=genome_key(pop[best].genome),
        evaluations_performed=evaluations,
    )


def step(
    pop: Sequence[Individual],
    config: GaConfig,
    space: SearchSpace,
    evaluator: FitnessEvaluator,
    cache: FitnessCache,
    rng: np.random.Generator,
    generation: int = 1,
    executor: Optional[Executor] = None,
) -> tuple[list[Individual], GenerationRecord]:
    """One pass of the flowchart: select, cross, mutate, evaluate, replace."""
    parents = tournament_select(pop, config.tournament_size, config.parents_per_generation, rng)

    children: list[Genome] = []
    # pair parents in selection order: 1st with 2nd, 3rd with 4th, ...
    for first, second in zip(parents[0::2], parents[1::2]):
        c1, c2 = crossover(first.genome, second.genome, space, config.crossover_rate, rng)
        children.append(mutate(c1, space, rng, config.sort_conv_dims))
        children.append(mutate(c2, space, rng, config.sort_conv_dims))
    children = children[:config.lam]

    fitnesses, evaluations = evaluate_genomes(children, evaluator, cache, executor)
    offspring = [Individual(genome=g, fitness=f) for g, f in zip(children, fitnesses)]
    new_pop = survivor_select(pop, offspring, rng)
    return new_pop, make_record(generation, new_pop, evaluations)


class GeneticSearch:
    """
    Stateful driver around `step` that owns the rng, the cache and the population.

    `on_generation` is called after every record (generation 0 included) and is where
    callers persist history lines and checkpoints.
    """

    def __init__(
        self,
        config: GaConfig,
        space: SearchSpace,
        evaluator: FitnessEvaluator,
        parallel: int = 1,
        on_generation: Optional[Callable[["GeneticSearch", GenerationRecord], None]] = None,
    ):
        self.config = config
        self.space = space
        self.evaluator = evaluator
        self.parallel = parallel
        self.on_generation = on_generation
        self.rng = np.random.default_rng(config.master_seed)
        self.cache = FitnessCache()
        self.population: list[Individual] = []
        self.history: list[GenerationRecord] = []
        self.best_ever: Optional[Individual] = None
        self.generation = -1

    @property
    def finished(self) -> bool:
        return self.generation >= self.config.max_generations

    def best(self) -> Individual:
        """Best individual of any generation so far; earliest wins ties."""
        if self.best_ever is None:
            raise ContractError("no generation has been evaluated yet")
        return self.best_ever

    def _emit(self, record: GenerationRecord) -> None:
        _require_evaluated(self.population)
        leader = max(self.population, key=lambda ind: ind.fitness)
        if self.best_ever is None or leader.fitness > self.best_ever.fitness:
            self.best_ever = leader
        self.generation = record.generation
        self.history.append(record)
        logger.info(
            f"generation {record.generation}: best={record.best_fitness:.4f} "
            f"mean={record.mean_fitness:.4f} worst={record.worst_fitness:.4f} "
            f"new_evals={record.evaluations_performed}"
        )
        if self.on_generation is not None:
            self.on_generation(self, record)

    def initialize(self, executor: Optional[Executor] = None) -> GenerationRecord:
        genomes = init_population(self.config.population_size, self.space, self.rng)
        fitnesses, evaluations = evaluate_genomes(genomes, self.evaluator, self.cache, executor)
        self.population = [Individual(genome=g, fitness=f) for g, f in zip(genomes, fitnesses)]
        record = make_record(0, self.population, evaluations)
        self._emit(record)
        return record

    def _loop(self, executor: Optional[Executor]) -> None:
        if self.generation < 0:
            self.initialize(executor)
        while not self.finished:
            self.population, record = step(
                self.population, self.config, self.space, self.evaluator,
                self.cache, self.rng, self.generation + 1, executor,
            )
            self._emit(record)

    def run(self) -> tuple[Individual, list[GenerationRecord]]:
        if self.parallel > 1:
            with ProcessPoolExecutor(
                max_workers=self.parallel, initializer=_init_worker, initargs=(self.evaluator,)
            ) as executor:
                self._loop(executor)
        else:
            self._loop(None)
        return self.best(), list(self.history)

    def to_checkpoint(self, run_config: dict[str, Any]) -> Checkpoint:
        return Checkpoint(
            generation=self.generation,
            config=run_config,
            population=[CheckpointEntry(genes=ind.genome.to_line(), fitness=ind.fitness) for ind in self.population],
            rng_state=self.rng.bit_generator.state,
            cache=self.cache.to_dict(),
            best=None if self.best_ever is None else CheckpointEntry(
                genes=self.best_ever.genome.to_line(), fitness=self.best_ever.fitness,
            ),
        )

    @classmethod
    def from_checkpoint(
        cls,
        checkpoint: Checkpoint,
        config: GaConfig,
        space: SearchSpace,
        evaluator: FitnessEvaluator,
        parallel: int = 1,
        on_generation: Optional[Callable[["GeneticSearch", GenerationRecord], None]] = None,
    ) -> "GeneticSearch":
        if len(checkpoint.population) != config.population_size:
            raise ValueError(
                f"checkpoint holds {len(checkpoint.population)} individuals, "
                f"population_size is {config.population_size}"
            )
        search = cls(config, space, evaluator, parallel, on_generation)
        search.rng.bit_generator.state = checkpoint.rng_state
        search.cache = FitnessCache(checkpoint.cache)
        search.population = [
            Individual(genome=Genome.from_line(entry.genes), fitness=entry.fitness)
            for entry in checkpoint.population
        ]
        for ind in search.population:
            space.validate_genome(ind.genome)
        if checkpoint.best is not None:
            search.best_ever = Individual(genome=Genome.from_line(checkpoint.best.genes), fitness=checkpoint.best.fitness)
            space.validate_genome(search.best_ever.genome)
        elif search.population:
            search.best_ever = max(search.population, key=lambda ind: ind.fitness)
        search.generation = checkpoint.generation
        return search


def run(
    config: GaConfig, space: SearchSpace, evaluator: FitnessEvaluator, parallel: int = 1
) -> tuple[Individual, list[GenerationRecord]]:
    """Initialise, evaluate and evolve for config.max_generations generations."""
    return GeneticSearch(config, space, evaluator, parallel).run()
