"""Self-supervised construction of reordering and irrelevant-sentence
instances from coherent paragraphs, and expansion into the sentence-pair
form consumed by the pairwise classification heads.

All functions are pure in (input, seed); parallel generation should derive
one seed per paragraph from a root seed.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .corpus import IsrInstance, Paragraph, SroInstance

_WORD_RE = re.compile(r"[\w'-]+")

# Minimal stopword list used by the content-token fallback of the
# entity-overlap check.
STOPWORDS = frozenset(
    """a an the and or but if then else of in on at to for from with by as is
    are was were be been being it its this that these those he she they them
    his her their we you i not no do does did have has had will would can
    could""".split()
)


class PairOrder(str, Enum):
    A_BEFORE_B = "a_before_b"
    B_BEFORE_A = "b_before_a"


class PairRelevance(str, Enum):
    RELEVANT = "relevant"
    IRRELEVANT = "irrelevant"


@dataclass(frozen=True)
class OrderedPairExample:
    s_a: str
    s_b: str
    label: PairOrder


@dataclass(frozen=True)
class RelevancePairExample:
    s_a: str
    s_b: str
    label: PairRelevance


class TaskGenError(ValueError):
    pass


def _words(text: str) -> list[str]:
    return _WORD_RE.findall(text)


def entity_tokens(sentence: str) -> set[str]:
    """Capitalized tokens that are not sentence-initial: a cheap NER proxy."""
    words = _words(sentence)
    return {w for w in words[1:] if w[:1].isupper()}


def content_tokens(sentence: str) -> set[str]:
    return {w.lower() for w in _words(sentence) if w.lower() not in STOPWORDS}


def paragraph_entities(paragraph: Paragraph) -> set[str]:
    ents: set[str] = set()
    for s in paragraph.sentences:
        ents |= entity_tokens(s)
    return ents


def shares_entity(sentence: str, paragraph: Paragraph) -> bool:
    """Entity-overlap predicate for candidate injected sentences.

    Falls back to shared content tokens when either side has no capitalized
    non-initial token to compare.
    """
    sent_ents = entity_tokens(sentence)
    para_ents = paragraph_entities(paragraph)
    if sent_ents and para_ents:
        return bool(sent_ents & para_ents)
    para_content: set[str] = set()
    for s in paragraph.sentences:
        para_content |= content_tokens(s)
    return bool(content_tokens(sentence) & para_content)


def make_sro(paragraph: Paragraph, seed: int) -> SroInstance:
    """Shuffle a paragraph uniformly at random, excluding the identity.

    gold_positions inverts the shuffle: applying it to the shuffled list
    recovers the original sentence order.
    """
    n = len(paragraph.sentences)
    if n < 2:
        raise TaskGenError("nothing to shuffle: paragraph has fewer than 2 sentences")
    rng = random.Random(seed)
    identity = list(range(n))
    perm = identity[:]
    while perm == identity:
        rng.shuffle(perm)
    # perm[k] = original index of the sentence placed at shuffled position k
    shuffled = tuple(paragraph.sentences[i] for i in perm)
    gold = [0] * n
    for pos, orig in enumerate(perm):
        gold[orig] = pos
    return SroInstance(shuffled=shuffled, gold_positions=tuple(gold))


def make_isr(paragraph: Paragraph, pool: Sequence[Paragraph], seed: int) -> IsrInstance:
    """Insert one foreign sentence at a uniform random position.

    The injected sentence is drawn from the pool under the sole constraint
    that it shares an entity token with the target paragraph. Sentences that
    already occur in the target are never candidates.
    """
    rng = random.Random(seed)
    own = set(paragraph.sentences)
    candidates = [
        s
        for p in pool
        if p.id != paragraph.id
        for s in p.sentences
        if s not in own and shares_entity(s, paragraph)
    ]
    if not candidates:
        raise TaskGenError("no candidate: pool has no entity-sharing foreign sentence")
    injected = rng.choice(candidates)
    slot = rng.randrange(len(paragraph.sentences) + 1)
    sentences = list(paragraph.sentences)
    sentences.insert(slot, injected)
    return IsrInstance(sentences=tuple(sentences), irrelevant_index=slot)


def expand_sro_pairs(instance: SroInstance) -> list[OrderedPairExample]:
    """Emit each unordered sentence pair once, labeled by gold precedence."""
    n = len(instance.shuffled)
    # rank[k] = position of shuffled sentence k in the restored order
    rank = [0] * n
    for order_pos, shuffled_pos in enumerate(instance.gold_positions):
        rank[shuffled_pos] = order_pos
    pairs: list[OrderedPairExample] = []
    for i in range(n):
        for j in range(i + 1, n):
            label = PairOrder.A_BEFORE_B if rank[i] < rank[j] else PairOrder.B_BEFORE_A
            pairs.append(OrderedPairExample(instance.shuffled[i], instance.shuffled[j], label))
    return pairs


def expand_isr_pairs(instance: IsrInstance) -> list[RelevancePairExample]:
    """Emit each unordered pair once; pairs touching the injected sentence
    are labeled irrelevant, all others relevant."""
    n = len(instance.sentences)
    k = instance.irrelevant_index
    pairs: list[RelevancePairExample] = []
    for i in range(n):
        for j in range(i + 1, n):
            label = PairRelevance.IRRELEVANT if (i == k) != (j == k) else PairRelevance.RELEVANT
            pairs.append(RelevancePairExample(instance.sentences[i], instance.sentences[j], label))
    return pairs
