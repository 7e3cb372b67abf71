"""dyadtest: testing constants, stopping-cube decompositions and Bellman
tables for positive dyadic operators on weighted truncated trees."""

from .kernels import USING_COMPILED

__all__ = ["USING_COMPILED"]
__version__ = "0.1.0"
