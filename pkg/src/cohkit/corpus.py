"""Canonical data model for texts and task instances, plus JSONL loading.

One line-delimited JSON file per task split. Every record carries a
"schema" version field. Instances are immutable after construction and
validated eagerly, so anything loaded here is safe to share across threads.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

SCHEMA_VERSION = 1

DOMAINS = ("clinton", "enron", "yahoo", "yelp", "fiction", "nonfiction", "other")

NLI_LABELS = ("entailment", "contradiction", "neutral")

# Discourse relation senses at the second taxonomy level. The inventory is
# data-driven (a sidecar labels file overrides it); this default carries the
# 14 senses that survive the corpus frequency cut.
DEFAULT_DRR_LABELS = (
    "Cause",
    "Cause+Belief",
    "Concession",
    "Condition",
    "Conjunction",
    "Contrast",
    "Equivalence",
    "Instantiation",
    "Level-of-detail",
    "Manner",
    "Purpose",
    "Substitution",
    "Synchronous",
    "Asynchronous",
)

# Prepositional relation inventory for NP pairs: NONE plus 27 relations.
NPE_NONE = "NONE"
DEFAULT_NPE_LABELS = (
    NPE_NONE,
    "about",
    "after",
    "against",
    "among",
    "around",
    "at",
    "before",
    "between",
    "by",
    "during",
    "for",
    "from",
    "identity-idiomatic",
    "identity-standard",
    "identity-time",
    "in",
    "inside",
    "into",
    "member-of",
    "near",
    "of",
    "on",
    "outside",
    "over",
    "to",
    "under",
    "with",
)


class Task(str, Enum):
    """The seven task families handled by the toolkit."""

    SRO = "sro"
    ISR = "isr"
    DRR = "drr"
    NPE = "npe"
    NLI = "nli"
    SCORING = "scoring"
    REASONING = "reasoning"


# Ablation ids used in figures and grid CSVs: 1-SRO, 2-ISR, 3-DRR, 4-NPE, 5-NLI.
PROXY_TASK_IDS = {Task.SRO: 1, Task.ISR: 2, Task.DRR: 3, Task.NPE: 4, Task.NLI: 5}
PROXY_TASKS = tuple(PROXY_TASK_IDS)


class CorpusError(ValueError):
    """Raised for malformed records or invariant violations."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise CorpusError(msg)


@dataclass(frozen=True)
class Paragraph:
    """An ordered sentence sequence with optional title and domain tag."""

    id: str
    sentences: tuple[str, ...]
    title: str | None = None
    domain: str = "other"

    def __post_init__(self) -> None:
        _require(len(self.sentences) >= 1, "sentences must be non-empty")
        for i, s in enumerate(self.sentences):
            _require(bool(s.strip()), f"sentence {i} is empty after trim")
        _require(self.domain in DOMAINS, f"unknown domain {self.domain!r}")
        object.__setattr__(self, "sentences", tuple(self.sentences))

    @property
    def text(self) -> str:
        return " ".join(self.sentences)


@dataclass(frozen=True)
class SroInstance:
    """Shuffled sentences plus the positions that restore the original order.

    gold_positions[i] is the index within `shuffled` of the i-th sentence of
    the ordered sequence, so [shuffled[p] for p in gold_positions] is the
    original paragraph.
    """

    shuffled: tuple[str, ...]
    gold_positions: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "shuffled", tuple(self.shuffled))
        object.__setattr__(self, "gold_positions", tuple(self.gold_positions))
        n = len(self.shuffled)
        _require(n >= 1, "shuffled must be non-empty")
        _require(
            sorted(self.gold_positions) == list(range(n)),
            "gold_positions is not a permutation",
        )

    @property
    def ordered(self) -> tuple[str, ...]:
        return tuple(self.shuffled[p] for p in self.gold_positions)


@dataclass(frozen=True)
class IsrInstance:
    """A paragraph with one injected irrelevant sentence at a known index."""

    sentences: tuple[str, ...]
    irrelevant_index: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentences", tuple(self.sentences))
        _require(len(self.sentences) >= 2, "need at least two sentences")
        _require(
            0 <= self.irrelevant_index < len(self.sentences),
            "irrelevant_index out of range",
        )


@dataclass(frozen=True)
class DrrInstance:
    """A discourse-unit pair with its relation sense label set.

    gold_l2 may hold several senses; a prediction matching any of them counts
    as correct. connector and l1 feed the staged generation target
    connector -> level-1 sense -> level-2 sense.
    """

    du1: str
    du2: str
    gold_l2: frozenset[str]
    gold_connector: str | None = None
    gold_l1: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "gold_l2", frozenset(self.gold_l2))
        _require(len(self.gold_l2) >= 1, "gold_l2 must be non-empty")

    def primary_l2(self) -> str:
        return min(self.gold_l2)


@dataclass(frozen=True)
class NpeInstance:
    """Tokenized document, noun-phrase spans, and prepositional links.

    Spans are half-open (start, end) token ranges. Each link is
    (anchor_np_index, complement_np_index, preposition); at most one link per
    ordered NP pair, and NONE links are never stored explicitly.
    """

    tokens: tuple[str, ...]
    nps: tuple[tuple[int, int], ...]
    links: tuple[tuple[int, int, str], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "nps", tuple(tuple(s) for s in self.nps))
        object.__setattr__(self, "links", tuple(tuple(l) for l in self.links))
        n_tok = len(self.tokens)
        for i, (start, end) in enumerate(self.nps):
            _require(0 <= start < end <= n_tok, f"np {i} span out of bounds")
        seen: set[tuple[int, int]] = set()
        for anchor, comp, prep in self.links:
            _require(anchor != comp, "link anchor equals complement")
            _require(0 <= anchor < len(self.nps), "link anchor out of range")
            _require(0 <= comp < len(self.nps), "link complement out of range")
            _require(prep != NPE_NONE, "NONE links must be implicit")
            _require((anchor, comp) not in seen, "duplicate link for NP pair")
            seen.add((anchor, comp))

    def np_text(self, index: int) -> str:
        start, end = self.nps[index]
        return " ".join(self.tokens[start:end])


@dataclass(frozen=True)
class NliInstance:
    premise: str
    hypothesis: str
    gold: str

    def __post_init__(self) -> None:
        _require(self.gold in NLI_LABELS, f"unknown NLI label {self.gold!r}")


class Scale(str, Enum):
    THREE_WAY = "three_way"
    FIVE_WAY = "five_way"

    @property
    def n_classes(self) -> int:
        return 3 if self is Scale.THREE_WAY else 5


@dataclass(frozen=True)
class ScoringInstance:
    """A paragraph with a human coherence score on a 3-way or 5-way scale."""

    paragraph: Paragraph
    scale: Scale
    gold_score: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "scale", Scale(self.scale))
        lo, hi = 1, self.scale.n_classes
        _require(
            lo <= self.gold_score <= hi,
            f"score out of range: {self.gold_score} not in {lo}..{hi}",
        )


CONDITIONS = ("cohesive", "consistent", "relevant")


@dataclass(frozen=True)
class ReasoningInstance:
    """A text prefix, a candidate next sentence, and three condition flags."""

    prefix: tuple[str, ...]
    new_sentence: str
    gold: tuple[bool, bool, bool]

    def __post_init__(self) -> None:
        object.__setattr__(self, "prefix", tuple(self.prefix))
        object.__setattr__(self, "gold", tuple(bool(b) for b in self.gold))
        _require(len(self.prefix) >= 1, "prefix must be non-empty")
        _require(len(self.gold) == 3, "gold must have three flags")


TaskInstance = (
    SroInstance
    | IsrInstance
    | DrrInstance
    | NpeInstance
    | NliInstance
    | ScoringInstance
    | ReasoningInstance
)


@dataclass(frozen=True)
class LabelInventory:
    """Ordered label set for a classification head; index = class id."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        _require(len(set(self.labels)) == len(self.labels), "duplicate labels")
        _require(len(self.labels) >= 2, "need at least two labels")

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise CorpusError(f"label {label!r} not in inventory") from None

    @classmethod
    def load(cls, path: str | Path) -> "LabelInventory":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(labels=tuple(data["labels"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({"labels": list(self.labels)}), encoding="utf-8")


def default_drr_inventory() -> LabelInventory:
    return LabelInventory(labels=DEFAULT_DRR_LABELS)


def default_npe_inventory() -> LabelInventory:
    return LabelInventory(labels=DEFAULT_NPE_LABELS)


# ---------------------------------------------------------------------------
# Record <-> instance conversion


def paragraph_to_record(p: Paragraph) -> dict:
    rec: dict = {"id": p.id, "sentences": list(p.sentences), "domain": p.domain}
    if p.title is not None:
        rec["title"] = p.title
    return rec


def paragraph_from_record(rec: dict) -> Paragraph:
    return Paragraph(
        id=str(rec["id"]),
        sentences=tuple(rec["sentences"]),
        title=rec.get("title"),
        domain=rec.get("domain", "other"),
    )


def instance_to_record(task: Task, inst: TaskInstance) -> dict:
    rec: dict = {"schema": SCHEMA_VERSION}
    if task is Task.SRO:
        rec.update(shuffled=list(inst.shuffled), gold_positions=list(inst.gold_positions))
    elif task is Task.ISR:
        rec.update(sentences=list(inst.sentences), irrelevant_index=inst.irrelevant_index)
    elif task is Task.DRR:
        rec.update(du1=inst.du1, du2=inst.du2, gold_l2=sorted(inst.gold_l2))
        if inst.gold_connector is not None:
            rec["gold_connector"] = inst.gold_connector
        if inst.gold_l1 is not None:
            rec["gold_l1"] = inst.gold_l1
    elif task is Task.NPE:
        rec.update(
            tokens=list(inst.tokens),
            nps=[list(s) for s in inst.nps],
            links=[[a, c, p] for a, c, p in inst.links],
        )
    elif task is Task.NLI:
        rec.update(premise=inst.premise, hypothesis=inst.hypothesis, gold=inst.gold)
    elif task is Task.SCORING:
        rec.update(
            paragraph=paragraph_to_record(inst.paragraph),
            scale=inst.scale.value,
            gold_score=inst.gold_score,
        )
    elif task is Task.REASONING:
        rec.update(
            prefix=list(inst.prefix),
            new_sentence=inst.new_sentence,
            gold=list(inst.gold),
        )
    else:  # pragma: no cover - exhaustive above
        raise CorpusError(f"unknown task {task}")
    return rec


def instance_from_record(task: Task, rec: dict) -> TaskInstance:
    if task is Task.SRO:
        return SroInstance(
            shuffled=tuple(rec["shuffled"]),
            gold_positions=tuple(int(p) for p in rec["gold_positions"]),
        )
    if task is Task.ISR:
        return IsrInstance(
            sentences=tuple(rec["sentences"]),
            irrelevant_index=int(rec["irrelevant_index"]),
        )
    if task is Task.DRR:
        return DrrInstance(
            du1=rec["du1"],
            du2=rec["du2"],
            gold_l2=frozenset(rec["gold_l2"]),
            gold_connector=rec.get("gold_connector"),
            gold_l1=rec.get("gold_l1"),
        )
    if task is Task.NPE:
        return NpeInstance(
            tokens=tuple(rec["tokens"]),
            nps=tuple((int(s), int(e)) for s, e in rec["nps"]),
            links=tuple((int(a), int(c), str(p)) for a, c, p in rec["links"]),
        )
    if task is Task.NLI:
        return NliInstance(
            premise=rec["premise"], hypothesis=rec["hypothesis"], gold=rec["gold"]
        )
    if task is Task.SCORING:
        return ScoringInstance(
            paragraph=paragraph_from_record(rec["paragraph"]),
            scale=Scale(rec["scale"]),
            gold_score=int(rec["gold_score"]),
        )
    if task is Task.REASONING:
        return ReasoningInstance(
            prefix=tuple(rec["prefix"]),
            new_sentence=rec["new_sentence"],
            gold=tuple(bool(b) for b in rec["gold"]),
        )
    raise CorpusError(f"unknown task {task}")


# ---------------------------------------------------------------------------
# Dataset IO


def load_dataset(path: str | Path, task: Task) -> list[TaskInstance]:
    """Load one JSONL file of task instances, validating every record.

    Order is preserved. A malformed line or invariant violation raises
    CorpusError naming the line number.
    """
    task = Task(task)
    instances: list[TaskInstance] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            schema = rec.get("schema", SCHEMA_VERSION)
            if schema != SCHEMA_VERSION:
                raise CorpusError(
                    f"{path}:{lineno}: schema version {schema} != supported {SCHEMA_VERSION}"
                )
            try:
                instances.append(instance_from_record(task, rec))
            except (CorpusError, KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
            if task is Task.SCORING:
                pid = instances[-1].paragraph.id
                if pid in seen_ids:
                    raise CorpusError(f"{path}:{lineno}: duplicate paragraph id {pid!r}")
                seen_ids.add(pid)
    return instances


def save_dataset(path: str | Path, task: Task, instances: Iterable[TaskInstance]) -> None:
    task = Task(task)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_record(task, inst)) + "\n")


def load_paragraphs(path: str | Path) -> list[Paragraph]:
    paragraphs: list[Paragraph] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                p = paragraph_from_record(json.loads(line))
            except (CorpusError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
            if p.id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate paragraph id {p.id!r}")
            seen.add(p.id)
            paragraphs.append(p)
    return paragraphs


def save_paragraphs(path: str | Path, paragraphs: Iterable[Paragraph]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for p in paragraphs:
            fh.write(json.dumps(paragraph_to_record(p)) + "\n")


def split(
    dataset: Sequence[TaskInstance],
    fractions: tuple[float, float, float],
    seed: int,
) -> tuple[list[TaskInstance], list[TaskInstance], list[TaskInstance]]:
    """Deterministic train/dev/test split; disjoint, union equals input."""
    if not dataset:
        raise CorpusError("cannot split an empty dataset")
    train_f, dev_f, test_f = fractions
    if min(fractions) <= 0:
        raise CorpusError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise CorpusError(f"fractions must sum to 1, got {sum(fractions)}")
    indices = list(range(len(dataset)))
    random.Random(seed).shuffle(indices)
    n = len(dataset)
    n_train = int(n * train_f)
    n_dev = int(n * dev_f)
    train_idx = indices[:n_train]
    dev_idx = indices[n_train : n_train + n_dev]
    test_idx = indices[n_train + n_dev :]
    pick = lambda idx: [dataset[i] for i in idx]
    return pick(train_idx), pick(dev_idx), pick(test_idx)


def expand_drr_multilabel(instances: Sequence[DrrInstance]) -> list[DrrInstance]:
    """Duplicate multi-sense DRR instances into one instance per sense.

    Used at training time only; evaluation keeps the full sense set and
    accepts a prediction matching any of them.
    """
    out: list[DrrInstance] = []
    for inst in instances:
        for label in sorted(inst.gold_l2):
            out.append(
                DrrInstance(
                    du1=inst.du1,
                    du2=inst.du2,
                    gold_l2=frozenset([label]),
                    gold_connector=inst.gold_connector,
                    gold_l1=inst.gold_l1,
                )
            )
    return out
