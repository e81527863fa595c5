"""gen-data, grad-check and eval-genome commands."""

import logging
from pathlib import Path
from typing import Optional

from app.config import RunConfig
from app.errors import EXIT_OK, GradientCheckError
from app.models import Genome
from app.nn.gradcheck import run_suite
from app.services.dataio import load_dataset, synth_generate, write_directory
from app.services.fitness import evaluate_cnn, genome_seed
from app.services.genome import default_space, genome_key

logger = logging.getLogger(__name__)


def cmd_gen_data(n: int, size: int, seed: int, out_dir: Path) -> int:
    records = synth_generate(n, (size, size), seed)
    write_directory(records, out_dir)
    print(f"wrote {len(records)} images ({size}x{size}) to {out_dir}")
    return EXIT_OK


def cmd_grad_check(seed: int = 0) -> int:
    results = run_suite(seed)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {r.max_relative_error:.3e}  (< {r.tolerance:.0e})  {status}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise GradientCheckError(f"gradient check failed for: {', '.join(failed)}")
    return EXIT_OK


def cmd_eval_genome(line: str, config: RunConfig, weights_path: Optional[Path] = None) -> int:
    genome = Genome.from_line(line)
    space = default_space()
    space.validate_genome(genome)
    dataset = load_dataset(config.data, config.image_size, config.split_ratio, config.split_seed)
    seed = genome_seed(config.seed, genome_key(genome))
    report = evaluate_cnn(genome, dataset, config.train_config(), space, seed, weights_path)
    print(report.model_dump_json(indent=2))
    return EXIT_OK
