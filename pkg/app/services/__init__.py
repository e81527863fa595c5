"""Services package for the search logic."""

from app.services.evolution import GeneticSearch, run
from app.services.fitness import CnnEvaluator, SurrogateEvaluator, evaluate_cnn, surrogate_eval
from app.services.genome import SearchSpace, decode, default_space, genome_key, init_population

__all__ = [
    "GeneticSearch",
    "run",
    "CnnEvaluator",
    "SurrogateEvaluator",
    "evaluate_cnn",
    "surrogate_eval",
    "SearchSpace",
    "decode",
    "default_space",
    "genome_key",
    "init_population",
]
