"""Genetic-algorithm search over CNN hyperparameters, with a numpy CNN to score them."""
