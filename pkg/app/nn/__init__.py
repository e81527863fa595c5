"""From-scratch numpy CNN: layers, Adam, and finite-difference gradient checks."""

from app.nn.network import Network, parameter_count

__all__ = ["Network", "parameter_count"]
