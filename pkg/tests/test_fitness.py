"""Tests for class weighting, the surrogate landscape and CNN fitness."""

import json
from fractions import Fraction

import numpy as np
import pytest

from app.errors import InvalidDataError
from app.models import Genome, TrainConfig
from app.nn.network import Network
from app.services.dataio import ImageRecord, SplitDataset, split, synth_generate
from app.services.fitness import (
    CnnEvaluator,
    class_weights,
    evaluate_cnn,
    genome_seed,
    surrogate_eval,
)
from app.services.genome import FirstConv, SearchSpace, default_space, init_population

RELU_GENOME = Genome(genes=(0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 2, 2, 0, 0))


@pytest.fixture
def space():
    return default_space()


@pytest.fixture
def small_space():
    return SearchSpace.from_choices(
        conv_dims=(8, 16), kernels=(3,), activations=("relu", "tanh"),
        fc_widths=(16,), dropouts=(0.1,), first_conv=FirstConv(out_channels=8),
    )


@pytest.fixture(scope="module")
def synthetic_split():
    return split(synth_generate(250, (32, 32), seed=0), 0.8, seed=0)


class TestClassWeights:
    """Test suite for inverse-frequency class weights."""

    def test_balanced(self):
        """Test that a 50/50 split weighs both classes 1."""
        assert class_weights([0] * 50 + [1] * 50) == [1, 1]

    def test_imbalanced(self):
        """Test direct substitution for N=390, m=(90, 300)."""
        w0, w1 = class_weights([0] * 90 + [1] * 300)

        assert float(w0) == pytest.approx(2.1667, abs=1e-4)
        assert w1 == Fraction(13, 20)

    def test_positive_weight(self):
        """Test N=487 with 300 positives."""
        assert class_weights([0] * 187 + [1] * 300)[1] == Fraction(487, 600)

    def test_exact_balance(self):
        """Test that m_i * W_i equals N/2 exactly for random label sets."""
        rng = np.random.default_rng(0)
        for _ in range(200):
            labels = [0, 1] + list(rng.integers(0, 2, int(rng.integers(0, 500))))
            weights = class_weights(labels)
            counts = [labels.count(0), labels.count(1)]
            assert counts[0] * weights[0] == counts[1] * weights[1] == Fraction(len(labels), 2)

    def test_empty_class(self):
        """Test that a missing class leaves its weight undefined."""
        with pytest.raises(InvalidDataError):
            class_weights([0, 0, 0])


class TestSurrogate:
    """Test suite for the surrogate landscape."""

    def test_minimum(self, space):
        """Test that the all-zero genome scores 0."""
        assert surrogate_eval(Genome(genes=(0,) * 16), space) == 0.0

    def test_maximum(self, space):
        """Test that the all-max genome scores 1."""
        top = tuple(len(a) - 1 for a in space.alphabets)

        assert surrogate_eval(Genome(genes=top), space) == 1.0

    def test_half_at_max(self, space):
        """Test that eight maxed genes score one half."""
        genes = tuple(len(a) - 1 if i < 8 else 0 for i, a in enumerate(space.alphabets))

        assert surrogate_eval(Genome(genes=genes), space) == pytest.approx(0.5)

    def test_monotone_in_each_gene(self, space):
        """Test that raising any gene index raises the score."""
        for genome in init_population(100, space, np.random.default_rng(1)):
            base = surrogate_eval(genome, space)
            for i, alphabet in enumerate(space.alphabets):
                if genome.genes[i] < len(alphabet) - 1:
                    raised = list(genome.genes)
                    raised[i] += 1
                    assert surrogate_eval(Genome(genes=tuple(raised)), space) > base


class TestGenomeSeed:
    """Test suite for per-genome training seeds."""

    def test_stable(self):
        """Test that the derivation is a pure function."""
        assert genome_seed(7, "0-1-2") == genome_seed(7, "0-1-2")

    def test_depends_on_master_seed(self):
        """Test that master seed and key both feed the seed."""
        assert genome_seed(7, "0-1-2") != genome_seed(8, "0-1-2")
        assert genome_seed(7, "0-1-2") != genome_seed(7, "0-1-3")
        assert 0 <= genome_seed(7, "0-1-2") < 2**63


class TestEvaluateCnn:
    """Test suite for training-based fitness."""

    def test_learns_synthetic_blobs(self, space, synthetic_split):
        """Test desk-scale trainability on the separable synthetic set."""
        report = evaluate_cnn(RELU_GENOME, synthetic_split, TrainConfig(epochs=5), space, seed=3)

        assert len(synthetic_split.train) == 200 and len(synthetic_split.val) == 50
        assert report.validation_accuracy >= 0.9
        assert len(report.loss_trace) == 5
        assert not report.diverged

    def test_no_signal_baseline(self, small_space):
        """Test that identical images give chance-level accuracy."""
        accuracies = []
        for seed in range(5):
            labels = np.random.default_rng(seed).permutation([0] * 50 + [1] * 50)
            records = [ImageRecord(pixels=np.full((16, 16, 3), 0.5, dtype=np.float32), label=int(y)) for y in labels]
            dataset = split(records, 0.8, seed)
            genome = Genome(genes=(0,) * 16)
            accuracies.append(evaluate_cnn(genome, dataset, TrainConfig(epochs=2), small_space, seed).validation_accuracy)

        assert abs(np.mean(accuracies) - 0.5) <= 0.15

    def test_deterministic(self, small_space):
        """Test that one seed gives one report."""
        dataset = split(synth_generate(40, (16, 16), seed=1), 0.8, seed=1)
        genome = Genome(genes=(1, 0, 1) + (0,) * 13)
        a = evaluate_cnn(genome, dataset, TrainConfig(epochs=2), small_space, seed=4)
        b = evaluate_cnn(genome, dataset, TrainConfig(epochs=2), small_space, seed=4)

        assert a.validation_accuracy == b.validation_accuracy
        assert a.loss_trace == b.loss_trace

    def test_divergence_is_minimal_fitness(self, small_space, monkeypatch):
        """Test that a non-finite loss scores 0 with the divergence flag."""
        monkeypatch.setattr(Network, "train_batch", lambda self, *args: float("nan"))
        dataset = split(synth_generate(20, (16, 16), seed=2), 0.8, seed=2)
        report = evaluate_cnn(Genome(genes=(0,) * 16), dataset, TrainConfig(epochs=3), small_space)

        assert report.diverged
        assert report.validation_accuracy == 0.0
        assert report.loss_trace == []

    def test_saves_weights(self, small_space, tmp_path):
        """Test that the trained weights can be written out."""
        dataset = split(synth_generate(20, (16, 16), seed=2), 0.8, seed=2)
        evaluate_cnn(Genome(genes=(0,) * 16), dataset, TrainConfig(epochs=1), small_space, weights_path=tmp_path / "w.bin")

        assert (tmp_path / "w.bin").stat().st_size > 0


class TestCnnEvaluator:
    """Test suite for the GA-facing CNN evaluator."""

    def test_appends_reports(self, small_space, tmp_path):
        """Test that each evaluation is logged as one JSON line."""
        dataset = split(synth_generate(20, (16, 16), seed=3), 0.8, seed=3)
        evaluator = CnnEvaluator(dataset, TrainConfig(epochs=1), small_space, master_seed=5, report_path=tmp_path / "e.jsonl")
        fitness = evaluator.evaluate(Genome(genes=(0,) * 16))
        evaluator.evaluate(Genome(genes=(1,) + (0,) * 15))

        lines = (tmp_path / "e.jsonl").read_text().splitlines()
        assert len(lines) == 2
        assert json.loads(lines[0])["validation_accuracy"] == fitness
        assert 0.0 <= fitness <= 1.0

    def test_empty_split(self, small_space):
        """Test that an evaluator needs both splits."""
        dataset = split(synth_generate(2, (8, 8), seed=0), 0.5, seed=0)
        with pytest.raises(InvalidDataError):
            CnnEvaluator(SplitDataset(train=dataset.train, val=[]), TrainConfig(), small_space)
