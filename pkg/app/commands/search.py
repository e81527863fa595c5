"""search and resume commands; own the run-directory layout."""

import json
import logging
import os
from pathlib import Path

from pydantic import ValidationError

from app.config import RunConfig
from app.errors import EXIT_OK, CheckpointError
from app.models import Checkpoint, GenerationRecord, Individual
from app.services.dataio import load_dataset
from app.services.evolution import GeneticSearch
from app.services.fitness import CnnEvaluator, FitnessEvaluator, SurrogateEvaluator
from app.services.genome import SearchSpace, decode, default_space

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
HISTORY_FILE = "history.jsonl"
CHECKPOINT_FILE = "checkpoint.json"
BEST_FILE = "best_genome.txt"
EVALUATIONS_FILE = "evaluations.jsonl"


def build_evaluator(config: RunConfig, space: SearchSpace, out: Path) -> FitnessEvaluator:
    if config.evaluator == "surrogate":
        return SurrogateEvaluator(space)
    dataset = load_dataset(config.data, config.image_size, config.split_ratio, config.split_seed)
    logger.info(f"dataset split: {len(dataset.train)} train / {len(dataset.val)} val")
    return CnnEvaluator(dataset, config.train_config(), space, config.seed, out / EVALUATIONS_FILE)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


class RunRecorder:
    """on_generation hook: append the history line, then replace the checkpoint."""

    def __init__(self, out: Path, config: RunConfig):
        self.out = out
        self.config_echo = config.echo()

    def __call__(self, search: GeneticSearch, record: GenerationRecord) -> None:
        with open(self.out / HISTORY_FILE, "a") as f:
            f.write(record.model_dump_json() + "\n")
        checkpoint = search.to_checkpoint(self.config_echo)
        _write_atomic(self.out / CHECKPOINT_FILE, checkpoint.model_dump_json())


def write_best(out: Path, best: Individual, space: SearchSpace) -> None:
    """Genome line, then the fitness and decoded ModelSpec as JSON."""
    spec = decode(best.genome, space)
    body = json.dumps({"fitness": best.fitness, "model_spec": spec.model_dump(mode="json")}, indent=2)
    _write_atomic(out / BEST_FILE, best.genome.to_line() + "\n" + body + "\n")


def _truncate_history(path: Path, last_generation: int) -> None:
    if not path.exists():
        return
    kept = []
    for line in path.read_text().splitlines():
        if line.strip() and GenerationRecord.model_validate_json(line).generation <= last_generation:
            kept.append(line + "\n")
    _write_atomic(path, "".join(kept))


def cmd_search(config: RunConfig) -> int:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / CONFIG_FILE, json.dumps(config.echo(), indent=2, sort_keys=True) + "\n")
    for name in (HISTORY_FILE, EVALUATIONS_FILE):
        (out / name).unlink(missing_ok=True)

    space = default_space()
    evaluator = build_evaluator(config, space, out)
    search = GeneticSearch(config.ga_config(), space, evaluator, config.parallel, RunRecorder(out, config))
    logger.info(f"starting search: population={config.population_size} generations={config.max_generations} evaluator={config.evaluator}")
    best, history = search.run()
    write_best(out, best, space)
    print(f"best fitness {best.fitness:.4f} after {len(history) - 1} generations: {best.genome.to_line()}")
    return EXIT_OK


def load_checkpoint(path: Path) -> tuple[Checkpoint, RunConfig]:
    try:
        checkpoint = Checkpoint.model_validate_json(Path(path).read_text())
        config = RunConfig(**checkpoint.config)
    except (OSError, ValidationError, TypeError) as e:
        raise CheckpointError(f"cannot load checkpoint {path}: {e}") from e
    return checkpoint, config


def cmd_resume(checkpoint_path: Path) -> int:
    checkpoint_path = Path(checkpoint_path)
    checkpoint, config = load_checkpoint(checkpoint_path)
    out = checkpoint_path.parent
    try:
        ga_config = config.ga_config()
    except ValidationError as e:
        raise CheckpointError(f"checkpoint {checkpoint_path} carries an invalid configuration: {e}") from e
    if checkpoint.generation >= ga_config.max_generations:
        logger.info(f"run already complete at generation {checkpoint.generation}")
        return EXIT_OK

    space = default_space()
    evaluator = build_evaluator(config, space, out)
    try:
        search = GeneticSearch.from_checkpoint(
            checkpoint, ga_config, space, evaluator, config.parallel, RunRecorder(out, config),
        )
        _truncate_history(out / HISTORY_FILE, checkpoint.generation)
    except (ValidationError, ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"checkpoint {checkpoint_path} is inconsistent: {e}") from e

    logger.info(f"resuming from generation {checkpoint.generation}")
    best, _ = search.run()
    write_best(out, best, space)
    print(f"best fitness {best.fitness:.4f}: {best.genome.to_line()}")
    return EXIT_OK
