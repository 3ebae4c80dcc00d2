"""Gridworld object-goal navigation with a learnable category-relation graph
and a temporal-spatial-region attention encoder, trained by expert imitation
and asynchronous advantage actor-critic."""

__version__ = "0.1.0"
