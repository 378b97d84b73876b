"""Per-query selection between conventional and semi-join SQL evaluation.

The package parses a restricted class of SQL queries, tests acyclicity via
GYO reduction, rewrites acyclic queries into a Yannakakis-style statement
sequence, measures both strategies on an in-memory bag-semantics engine,
extracts feature vectors, and trains a decision-tree selector that picks
the faster strategy per query.
"""

from .errors import SmashError

__all__ = ["SmashError"]
__version__ = "1.0.0"
