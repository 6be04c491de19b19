"""Evolutionary discovery of PINN models for PDE benchmarks.

Subpackages cover the activation-function expression trees, search-space
combinatorics, genetic encoding and variation, the differentiable network
engine, the three benchmark problems, L-BFGS training, and the evolution
driver. See README for the CLI and acceptance suite.
"""

__version__ = "0.1.0"
