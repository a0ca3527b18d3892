"""Numerical toolkit for subcritical self-catalytic branching Brownian
motions: a pairwise-local-time particle simulator, the dual stochastic heat
equation, the mean-field PDE, and the statistical checks tying them together.
"""

from .kernels import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
