"""Decoders from head outputs to task-level predictions.

A pairwise precedence matrix becomes a permutation via the zero-in-degree
topological sort; cyclic preference graphs fall back to sorting by total
outgoing probability mass so a permutation is always returned. Irrelevant
sentence selection takes the row with the lowest combined relevance score.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DecodeError(ValueError):
    pass


class CotParseError(DecodeError):
    """Raised when a staged relation output does not have three fields."""

    def __init__(self, raw: str, msg: str):
        super().__init__(f"{msg}: {raw!r}")
        self.raw = raw


@dataclass(frozen=True)
class CotTriple:
    connector: str
    l1: str
    l2: str


@dataclass
class DecodeStats:
    """Counters for decoder instrumentation (fallback usage)."""

    fallback_count: int = 0


@dataclass(frozen=True)
class PairwiseMatrix:
    """n x n matrix with p_before[i][j] = P(sentence i precedes sentence j).

    Construction symmetrizes the raw entries so that
    p_before[i][j] + p_before[j][i] == 1; the diagonal is ignored.
    """

    n: int
    p_before: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        raw = np.asarray(self.p_before, dtype=float)
        if raw.shape != (self.n, self.n):
            raise DecodeError(f"expected {self.n}x{self.n} matrix, got {raw.shape}")
        sym = np.full((self.n, self.n), 0.5)
        for i in range(self.n):
            for j in range(self.n):
                if i == j:
                    continue
                total = raw[i, j] + raw[j, i]
                sym[i, j] = raw[i, j] / total if total > 0 else 0.5
        np.fill_diagonal(sym, 0.0)
        sym.setflags(write=False)
        object.__setattr__(self, "p_before", sym)

    @classmethod
    def from_pair_probs(cls, n: int, probs: dict[tuple[int, int], float]) -> "PairwiseMatrix":
        """Build from one probability per unordered pair: probs[(i, j)] with
        i < j gives P(i precedes j); the mirror entry is its complement."""
        raw = np.full((n, n), 0.5)
        for (i, j), p in probs.items():
            raw[i, j] = p
            raw[j, i] = 1.0 - p
        return cls(n=n, p_before=raw)


def _mass_order(p: np.ndarray) -> list[int]:
    """Node indices by descending total outgoing probability mass, then index."""
    mass = p.sum(axis=1)
    return sorted(range(p.shape[0]), key=lambda i: (-mass[i], i))


def topological_order(pairs: PairwiseMatrix, stats: DecodeStats | None = None) -> list[int]:
    """Order sentence indices by pairwise precedence.

    Edges i -> j exist where p_before[i][j] > 0.5. Ties among zero-in-degree
    nodes break by highest outgoing mass, then lowest index. If the
    preference graph is cyclic the whole order falls back to the outgoing
    mass ranking, so the result is always a permutation.
    """
    n = pairs.n
    if n < 1:
        raise DecodeError("need at least one node")
    p = pairs.p_before
    succ: list[set[int]] = [set() for _ in range(n)]
    indeg = [0] * n
    for i in range(n):
        for j in range(n):
            if i != j and p[i, j] > 0.5:
                succ[i].add(j)
                indeg[j] += 1

    mass = p.sum(axis=1)
    ready = [i for i in range(n) if indeg[i] == 0]
    out: list[int] = []
    while ready:
        ready.sort(key=lambda i: (-mass[i], i))
        node = ready.pop(0)
        out.append(node)
        for m in sorted(succ[node]):
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
        succ[node] = set()

    if len(out) != n:  # remaining edges: at least one cycle
        if stats is not None:
            stats.fallback_count += 1
        return _mass_order(p)
    return out


def isr_select(relevance: Sequence[Sequence[float]] | np.ndarray) -> int:
    """Index of the sentence with the lowest combined relevance score.

    Entry [i][j] is P(pair (i, j) relevant); the matrix is symmetrized by
    averaging with its transpose. Ties break toward the lowest index.
    """
    m = np.asarray(relevance, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DecodeError(f"expected a square matrix, got shape {m.shape}")
    n = m.shape[0]
    if n < 2:
        raise DecodeError("need at least two sentences")
    sym = (m + m.T) / 2.0
    np.fill_diagonal(sym, 0.0)
    scores = sym.sum(axis=1)
    return int(np.argmin(scores))  # argmin returns the first (lowest) index on ties


def parse_cot(text: str) -> CotTriple:
    """Parse a staged 'connector -> level-1 -> level-2' relation output."""
    fields = [f.strip() for f in text.split("->")]
    if len(fields) != 3:
        raise CotParseError(text, f"expected 3 '->'-separated fields, got {len(fields)}")
    if not all(fields):
        raise CotParseError(text, "empty field")
    return CotTriple(connector=fields[0], l1=fields[1], l2=fields[2])
