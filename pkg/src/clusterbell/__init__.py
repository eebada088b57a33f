"""Exact simulation and epsilon-locality certification for multipartite Bell
functionals on finite spin lattices."""

__version__ = "0.1.0"
