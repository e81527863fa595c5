"""Fitness contract, the CNN-training evaluator and the surrogate landscape."""

import hashlib
import logging
import math
import time
from fractions import Fraction
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from app.errors import InvalidDataError, NumericError
from app.models import EvaluationReport, Genome, TrainConfig
from app.nn.network import Network
from app.nn.optim import AdamState
from app.services.dataio import ImageRecord, SplitDataset, batches
from app.services.genome import SearchSpace, decode, genome_key

logger = logging.getLogger(__name__)


class FitnessEvaluator(Protocol):
    """Maps a genome to a fitness in [0, 1]; deterministic for a fixed construction seed."""

    def evaluate(self, genome: Genome) -> float: ...


def class_weights(labels: Sequence[int], num_classes: int = 2) -> list[Fraction]:
    """W_i = N / (2 * m_i), kept exact so m_i * W_i == N / 2 holds without rounding."""
    counts = [0] * num_classes
    for label in labels:
        if not 0 <= label < num_classes:
            raise InvalidDataError(f"label {label} outside [0, {num_classes})")
        counts[label] += 1
    if any(m == 0 for m in counts):
        raise InvalidDataError(f"every class needs at least one sample, got counts {counts}")
    n = len(labels)
    return [Fraction(n, 2 * m) for m in counts]


def genome_seed(master_seed: int, key: str) -> int:
    """63-bit seed from SHA-256 of "<master_seed>:<genome_key>"."""
    digest = hashlib.sha256(f"{master_seed}:{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def surrogate_eval(genome: Genome, space: SearchSpace) -> float:
    """Normalised gene-index sum; 1.0 only for the all-max-index genome."""
    space.validate_genome(genome)
    total = 0.0
    for gene, alphabet in zip(genome.genes, space.alphabets):
        total += gene / (len(alphabet) - 1) if len(alphabet) > 1 else 1.0
    return total / space.genome_length


def _accuracy(net: Network, records: Sequence[ImageRecord], batch_size: int) -> float:
    if not records:
        return 0.0
    correct = 0
    for x, y in batches(records, batch_size, epoch_seed=0):
        correct += int((net.predict(x, batch_size) == y).sum())
    return correct / len(records)


def evaluate_cnn(
    genome: Genome,
    dataset: SplitDataset,
    cfg: TrainConfig,
    space: SearchSpace,
    seed: int = 0,
    weights_path: Optional[Path] = None,
) -> EvaluationReport:
    """
    Train the decoded network and score it on the validation split.

    Class weights come from the training labels only. Divergence (a non-finite loss)
    yields accuracy 0 with `diverged` set instead of an error.
    """
    start = time.perf_counter()
    key = genome_key(genome)
    net = Network(decode(genome, space), seed=seed)
    weights = np.array([float(w) for w in class_weights([r.label for r in dataset.train])], dtype=np.float32)
    adam = AdamState()
    trace: list[float] = []
    diverged = False

    try:
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(cfg.epochs):
                total, seen = 0.0, 0
                for x, y in batches(dataset.train, cfg.batch_size, epoch_seed=seed + epoch + 1):
                    total += net.train_batch(x, y, weights, adam, cfg.learning_rate) * len(y)
                    seen += len(y)
                epoch_loss = total / seen
                if not math.isfinite(epoch_loss):
                    raise NumericError(f"non-finite loss in epoch {epoch}")
                trace.append(epoch_loss)
                logger.debug(f"{key} epoch {epoch}: loss={epoch_loss:.4f}")
    except NumericError as e:
        logger.warning(f"training diverged for {key}: {e}")
        diverged = True

    accuracy = 0.0 if diverged else _accuracy(net, dataset.val, cfg.batch_size)
    if weights_path is not None:
        net.save_weights(weights_path)
    return EvaluationReport(
        genome_key=key,
        validation_accuracy=accuracy,
        loss_trace=trace,
        wall_time_s=time.perf_counter() - start,
        diverged=diverged,
    )


class SurrogateEvaluator:
    def __init__(self, space: SearchSpace):
        self.space = space

    def evaluate(self, genome: Genome) -> float:
        return surrogate_eval(genome, self.space)


class CnnEvaluator:
    """
    Fitness = validation accuracy of the trained phenotype.

    Each genome trains with its own seed derived from (master_seed, genome_key), so
    results do not depend on evaluation order or on which process runs them.
    """

    def __init__(
        self,
        dataset: SplitDataset,
        cfg: TrainConfig,
        space: SearchSpace,
        master_seed: int = 0,
        report_path: Optional[Path] = None,
    ):
        if not dataset.train or not dataset.val:
            raise InvalidDataError("both training and validation splits must be non-empty")
        self.dataset = dataset
        self.cfg = cfg
        self.space = space
        self.master_seed = master_seed
        self.report_path = report_path

    def evaluate_report(self, genome: Genome) -> EvaluationReport:
        report = evaluate_cnn(genome, self.dataset, self.cfg, self.space, genome_seed(self.master_seed, genome_key(genome)))
        logger.info(
            f"{report.genome_key}: accuracy={report.validation_accuracy:.4f} "
            f"in {report.wall_time_s:.1f}s{' (diverged)' if report.diverged else ''}"
        )
        if self.report_path is not None:
            with open(self.report_path, "a") as f:
                f.write(report.model_dump_json() + "\n")
        return report

    def evaluate(self, genome: Genome) -> float:
        return self.evaluate_report(genome).validation_accuracy
