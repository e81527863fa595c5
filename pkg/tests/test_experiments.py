"""End-to-end search experiments on the surrogate landscape and on synthetic images."""

import numpy as np
import pytest

from app.models import GaConfig, TrainConfig
from app.services.dataio import split, synth_generate
from app.services.evolution import run
from app.services.fitness import CnnEvaluator, SurrogateEvaluator
from app.services.genome import default_space


@pytest.fixture
def space():
    return default_space()


class TestSurrogateSearch:
    """Test suite for GA dynamics without network training."""

    def test_reaches_optimum(self, space):
        """Test that default settings find the all-max genome in at least 9 of 10 seeds."""
        reached = 0
        for seed in range(10):
            best, history = run(GaConfig(master_seed=seed), space, SurrogateEvaluator(space))
            assert len(history) == 101
            assert [r.best_fitness for r in history] == sorted(r.best_fitness for r in history)
            reached += best.fitness == 1.0

        assert reached >= 9

    def test_population_size_trend(self, space):
        """Test that the mean final best does not drop as the population grows."""
        means = []
        for size in (20, 30, 50):
            finals = [
                run(GaConfig(population_size=size, master_seed=seed), space, SurrogateEvaluator(space))[0].fitness
                for seed in range(20)
            ]
            means.append(float(np.mean(finals)))

        assert means == sorted(means)


@pytest.mark.slow
class TestCnnSearch:
    """Test suite for a reduced-scale search that trains every network."""

    def test_desk_scale_search(self, space):
        """Test pop 8, 5 generations, 5 epochs on 250 synthetic 32x32 images."""
        dataset = split(synth_generate(250, (32, 32), seed=0), 0.8, seed=0)
        config = GaConfig(
            population_size=8, max_generations=5, tournament_size=5, parents_per_generation=4, master_seed=1,
        )

        histories = []
        for _ in range(2):
            evaluator = CnnEvaluator(dataset, TrainConfig(epochs=5), space, master_seed=config.master_seed)
            best, history = run(config, space, evaluator)
            histories.append("".join(r.model_dump_json() + "\n" for r in history))

        assert best.fitness >= 0.9
        assert histories[0] == histories[1]
