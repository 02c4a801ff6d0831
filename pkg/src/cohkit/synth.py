"""Synthetic desk-scale datasets with planted, learnable structure.

Every generator is a pure function of its seed. The planted rules are
deliberately lexical so the toolkit's small additive model can learn them:

- ordering: each story sentence carries a stage marker whose rank gives the
  gold order;
- relevance: injected sentences come from a distractor corpus whose topic
  tokens never occur in stories, while sharing the story name pool so the
  entity-overlap constraint holds;
- discourse relations: the second unit opens with a connective mapped to its
  sense;
- NP links: the complement span carries a location/possession/time marker
  deciding the preposition (or none);
- NLI, scoring, and reasoning: marker tokens decide the label.
"""

from __future__ import annotations

import random

from .corpus import (
    DEFAULT_DRR_LABELS,
    DrrInstance,
    NliInstance,
    NpeInstance,
    Paragraph,
    ReasoningInstance,
    Scale,
    ScoringInstance,
)

NAMES = ("Alice", "Bob", "Carol", "Dave", "Erin", "Frank")
STORY_TOPICS = ("garden", "bakery", "harbor", "museum", "market", "library")
DISTRACTOR_TOPICS = ("turbine", "ledger", "algebra", "quasar", "sediment", "enzyme")
FILLERS = tuple(f"fill{i}" for i in range(20))

# Connective openers for the 14 default senses, in inventory order.
DRR_CONNECTIVES = {
    "Cause": "so",
    "Cause+Belief": "evidently",
    "Concession": "although",
    "Condition": "if",
    "Conjunction": "also",
    "Contrast": "but",
    "Equivalence": "equivalently",
    "Instantiation": "instance",
    "Level-of-detail": "specifically",
    "Manner": "thereby",
    "Purpose": "thereto",
    "Substitution": "instead",
    "Synchronous": "meanwhile",
    "Asynchronous": "afterwards",
}

DRR_L1_OF_L2 = {
    "Cause": "Contingency",
    "Cause+Belief": "Contingency",
    "Condition": "Contingency",
    "Purpose": "Contingency",
    "Concession": "Comparison",
    "Contrast": "Comparison",
    "Conjunction": "Expansion",
    "Equivalence": "Expansion",
    "Instantiation": "Expansion",
    "Level-of-detail": "Expansion",
    "Manner": "Expansion",
    "Substitution": "Expansion",
    "Synchronous": "Temporal",
    "Asynchronous": "Temporal",
}

NLI_AFFIRM = ("certainly", "surely", "plainly")
NLI_NEGATE = ("never", "impossible", "contrary")
NLI_OFFTOPIC = ("weather", "paperwork", "geometry")

GARBLE_TOKENS = ("zxq", "vrb", "klp", "wfj")

REASONING_MARKERS = {
    "cohesive": "jarring",
    "consistent": "impossible",
    "relevant": "tangent",
}


def _sentence(rng: random.Random, name: str, topic: str, stage: int) -> str:
    filler = rng.choice(FILLERS)
    return f"then {name} kept the {topic} going stage{stage:02d} {filler}"


def story_paragraphs(
    n: int, seed: int, min_sentences: int = 3, max_sentences: int = 6
) -> list[Paragraph]:
    rng = random.Random(seed)
    out: list[Paragraph] = []
    for k in range(n):
        name = rng.choice(NAMES)
        topic = rng.choice(STORY_TOPICS)
        n_sent = rng.randint(min_sentences, max_sentences)
        sentences = tuple(_sentence(rng, name, topic, i) for i in range(n_sent))
        out.append(
            Paragraph(
                id=f"story-{seed}-{k}",
                sentences=sentences,
                title=f"{name} and the {topic}",
                domain="fiction",
            )
        )
    return out


def distractor_paragraphs(n: int, seed: int) -> list[Paragraph]:
    """Off-topic pool for irrelevant-sentence injection; shares the story
    name pool so injected sentences satisfy the entity-overlap constraint."""
    rng = random.Random(seed)
    out: list[Paragraph] = []
    for k in range(n):
        name = rng.choice(NAMES)
        topic = rng.choice(DISTRACTOR_TOPICS)
        sentences = tuple(_sentence(rng, name, topic, i) for i in range(3))
        out.append(
            Paragraph(
                id=f"distractor-{seed}-{k}",
                sentences=sentences,
                title=f"{name} versus the {topic}",
                domain="nonfiction",
            )
        )
    return out


def drr_instances(n: int, seed: int) -> list[DrrInstance]:
    rng = random.Random(seed)
    out: list[DrrInstance] = []
    for _ in range(n):
        label = rng.choice(DEFAULT_DRR_LABELS)
        connective = DRR_CONNECTIVES[label]
        name = rng.choice(NAMES)
        du1 = f"then {name} finished the {rng.choice(STORY_TOPICS)} work {rng.choice(FILLERS)}"
        du2 = f"{connective} the outcome pleased everyone {rng.choice(FILLERS)}"
        out.append(
            DrrInstance(
                du1=du1,
                du2=du2,
                gold_l2=frozenset([label]),
                gold_connector=connective,
                gold_l1=DRR_L1_OF_L2[label],
            )
        )
    return out


_NPE_MARKERS = {"in": "placemark", "of": "ownermark", "during": "timemark"}


def npe_instances(n: int, seed: int) -> list[NpeInstance]:
    rng = random.Random(seed)
    out: list[NpeInstance] = []
    preps = sorted(_NPE_MARKERS)
    for _ in range(n):
        tokens: list[str] = []
        nps: list[tuple[int, int]] = []
        # one anchor NP plus three candidate complements
        tokens += ["the", "event"]
        nps.append((0, 2))
        links: list[tuple[int, int, str]] = []
        for c in range(3):
            prep = rng.choice(preps + ["NONE"])
            start = len(tokens)
            if prep == "NONE":
                tokens += ["some", rng.choice(FILLERS)]
            else:
                tokens += ["the", _NPE_MARKERS[prep]]
            nps.append((start, start + 2))
            if prep != "NONE":
                links.append((0, c + 1, prep))
        out.append(NpeInstance(tokens=tuple(tokens), nps=tuple(nps), links=tuple(links)))
    return out


def nli_instances(n: int, seed: int) -> list[NliInstance]:
    rng = random.Random(seed)
    out: list[NliInstance] = []
    for _ in range(n):
        name = rng.choice(NAMES)
        topic = rng.choice(STORY_TOPICS)
        premise = f"then {name} kept the {topic} going {rng.choice(FILLERS)}"
        gold = rng.choice(("entailment", "contradiction", "neutral"))
        marker = {
            "entailment": rng.choice(NLI_AFFIRM),
            "contradiction": rng.choice(NLI_NEGATE),
            "neutral": rng.choice(NLI_OFFTOPIC),
        }[gold]
        hypothesis = f"{marker} {name} handled the {topic}"
        out.append(NliInstance(premise=premise, hypothesis=hypothesis, gold=gold))
    return out


def scoring_instances(n: int, scale: Scale, seed: int) -> list[ScoringInstance]:
    """Paragraphs whose gold score is top minus the number of garbled
    sentences, floored at 1."""
    rng = random.Random(seed)
    scale = Scale(scale)
    top = scale.n_classes
    out: list[ScoringInstance] = []
    for k in range(n):
        name = rng.choice(NAMES)
        topic = rng.choice(STORY_TOPICS)
        n_garbled = rng.randint(0, top - 1)
        sentences = [_sentence(rng, name, topic, i) for i in range(top)]
        for i in range(n_garbled):
            sentences[i] = f"then {name} said {GARBLE_TOKENS[i % len(GARBLE_TOKENS)]} twice"
        rng.shuffle(sentences)
        paragraph = Paragraph(
            id=f"score-{scale.value}-{seed}-{k}",
            sentences=tuple(sentences),
            title=f"{name} and the {topic}",
            domain="fiction" if scale is Scale.FIVE_WAY else "yelp",
        )
        out.append(
            ScoringInstance(paragraph=paragraph, scale=scale, gold_score=max(1, top - n_garbled))
        )
    return out


def reasoning_instances(n: int, seed: int) -> list[ReasoningInstance]:
    rng = random.Random(seed)
    out: list[ReasoningInstance] = []
    for _ in range(n):
        name = rng.choice(NAMES)
        topic = rng.choice(STORY_TOPICS)
        prefix = tuple(_sentence(rng, name, topic, i) for i in range(2))
        flags: list[bool] = []
        pieces: list[str] = []
        for condition in ("cohesive", "consistent", "relevant"):
            ok = rng.random() < 0.5
            flags.append(ok)
            if not ok:
                pieces.append(REASONING_MARKERS[condition])
        new_sentence = f"then {name} kept the {topic} going " + " ".join(pieces or ["smoothly"])
        out.append(
            ReasoningInstance(prefix=prefix, new_sentence=new_sentence, gold=tuple(flags))
        )
    return out
