"""Coherence modeling toolkit.

Operationalizes the three coherence conditions (cohesion, consistency,
relevance) as five jointly trained proxy tasks, and evaluates the resulting
model on coherence scoring and coherence reasoning.
"""

__version__ = "0.1.0"

from .corpus import Task  # noqa: F401
