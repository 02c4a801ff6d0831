"""Prompt and target rendering for the generation-based route, and the
inverse parsing of free-text outputs back into predictions.

Rendering is byte-stable for identical inputs. Parsing is total: anything
that cannot be read as a prediction becomes the UNPARSEABLE sentinel, which
evaluation scores as incorrect and counts separately.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any

from .corpus import (
    CONDITIONS,
    DrrInstance,
    IsrInstance,
    NliInstance,
    NpeInstance,
    ReasoningInstance,
    Scale,
    ScoringInstance,
    SroInstance,
    Task,
)
from .decode import CotParseError, parse_cot


class PromptError(ValueError):
    pass


class _Unparseable:
    """Sentinel for model outputs that cannot be read as a prediction."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNPARSEABLE"

    def __bool__(self) -> bool:
        return False


UNPARSEABLE = _Unparseable()


def is_unparseable(value: Any) -> bool:
    return value is UNPARSEABLE


# One pattern per prompt family; every placeholder renders exactly once.
TEMPLATES: dict[str, str] = {
    "sro": (
        "reorder: what is the order of the sentences so that the paragraph "
        "is coherent? {sentences}"
    ),
    "isr": "relevance: what is the irrelevant sentence in the text? {sentences}",
    "drr": "discourse relation: what is the discourse relation between {du1} {du2}",
    "npe": (
        "coreference text: what are the preposition relations between {np1} "
        "and {np2}? text: {text}"
    ),
    "nli": (
        "mnli: does this hypothesis contradict, entail, or neutral with the "
        "premise? hypothesis: {hypothesis} premise: {premise}"
    ),
    "scoring_3": (
        "GCDC coherence: what is the coherence score of the text "
        "(3 - high, 1 - low)? text: {text}"
    ),
    "scoring_5": (
        "CoheSentia coherence: what is the coherence score of the text "
        "(5 - high, 1 - low)? title: {title} text: {text}"
    ),
    "reasoning_cohesive": (
        "Cohesion reasoning: previous data: {previous} new sentence: {sentence}. "
        "Task: is the new sentence cohesive in regard to the previous data? "
        "give a yes or no answer to each item"
    ),
    "reasoning_consistent": (
        "Consistency reasoning: previous data: {previous} new sentence: {sentence}. "
        "Task: is the new sentence consistent in regard to the previous data? "
        "give a yes or no answer to each item"
    ),
    "reasoning_relevant": (
        "Relevance reasoning: previous data: {previous} new sentence: {sentence}. "
        "Task: is the new sentence relevant in regard to the previous data? "
        "give a yes or no answer to each item"
    ),
}

# Canonical NLI surface forms on the wire.
NLI_TARGETS = {"entailment": "Entails", "contradiction": "Contradict", "neutral": "Neutral"}
_NLI_PARSE = {
    "entails": "entailment",
    "entail": "entailment",
    "entailment": "entailment",
    "contradict": "contradiction",
    "contradicts": "contradiction",
    "contradiction": "contradiction",
    "neutral": "neutral",
}

_INT_RE = re.compile(r"-?\d+")


def _numbered(sentences: tuple[str, ...], fmt: str) -> str:
    return " ".join(fmt.format(i=i + 1, s=s) for i, s in enumerate(sentences))


def template_key(
    task: Task,
    instance: Any = None,
    condition: str | None = None,
) -> str:
    task = Task(task)
    if task is Task.SCORING:
        scale = instance.scale if instance is not None else Scale.THREE_WAY
        return "scoring_3" if scale is Scale.THREE_WAY else "scoring_5"
    if task is Task.REASONING:
        if condition not in CONDITIONS:
            raise PromptError(f"reasoning prompts need a condition from {CONDITIONS}")
        return f"reasoning_{condition}"
    return task.value


def render_prompt(
    task: Task,
    instance: Any,
    *,
    condition: str | None = None,
    np_pair: tuple[int, int] | None = None,
) -> str:
    """Instantiate the task's template for one instance.

    Reasoning prompts need `condition`; NP-pair prompts need `np_pair`
    (anchor index, complement index). Missing required fields raise
    PromptError.
    """
    task = Task(task)
    key = template_key(task, instance, condition)
    pattern = TEMPLATES[key]
    if task is Task.SRO:
        assert isinstance(instance, SroInstance)
        return pattern.format(sentences=_numbered(instance.shuffled, "sentence {i}: {s}"))
    if task is Task.ISR:
        assert isinstance(instance, IsrInstance)
        return pattern.format(sentences=_numbered(instance.sentences, "sentence{i}: {s}"))
    if task is Task.DRR:
        assert isinstance(instance, DrrInstance)
        return pattern.format(du1=instance.du1, du2=instance.du2)
    if task is Task.NPE:
        assert isinstance(instance, NpeInstance)
        if np_pair is None:
            raise PromptError("NP-pair prompts need np_pair=(anchor, complement)")
        a, c = np_pair
        return pattern.format(
            np1=instance.np_text(a), np2=instance.np_text(c), text=" ".join(instance.tokens)
        )
    if task is Task.NLI:
        assert isinstance(instance, NliInstance)
        return pattern.format(hypothesis=instance.hypothesis, premise=instance.premise)
    if task is Task.SCORING:
        assert isinstance(instance, ScoringInstance)
        if instance.scale is Scale.THREE_WAY:
            return pattern.format(text=instance.paragraph.text)
        if instance.paragraph.title is None:
            raise PromptError("five-way scoring prompt needs a paragraph title")
        return pattern.format(title=instance.paragraph.title, text=instance.paragraph.text)
    if task is Task.REASONING:
        assert isinstance(instance, ReasoningInstance)
        return pattern.format(previous=" ".join(instance.prefix), sentence=instance.new_sentence)
    raise PromptError(f"unknown task {task}")


def render_target(
    task: Task,
    instance: Any,
    *,
    condition: str | None = None,
    np_pair: tuple[int, int] | None = None,
) -> str:
    """Serialize the gold structure as the generation target string."""
    task = Task(task)
    if task is Task.SRO:
        assert isinstance(instance, SroInstance)
        # Position markers are 1-based on the wire.
        return "[" + ", ".join(str(p + 1) for p in instance.gold_positions) + "]"
    if task is Task.ISR:
        assert isinstance(instance, IsrInstance)
        return str(instance.irrelevant_index + 1)
    if task is Task.DRR:
        assert isinstance(instance, DrrInstance)
        connector = instance.gold_connector or "unknown"
        l1 = instance.gold_l1 or "unknown"
        return f"{connector} -> {l1} -> {instance.primary_l2()}"
    if task is Task.NPE:
        assert isinstance(instance, NpeInstance)
        if np_pair is None:
            raise PromptError("NP-pair targets need np_pair=(anchor, complement)")
        by_pair = {(a, c): p for a, c, p in instance.links}
        return by_pair.get(tuple(np_pair), "NONE")
    if task is Task.NLI:
        assert isinstance(instance, NliInstance)
        return NLI_TARGETS[instance.gold]
    if task is Task.SCORING:
        assert isinstance(instance, ScoringInstance)
        return str(instance.gold_score)
    if task is Task.REASONING:
        assert isinstance(instance, ReasoningInstance)
        if condition not in CONDITIONS:
            raise PromptError(f"reasoning targets need a condition from {CONDITIONS}")
        return "Yes" if instance.gold[CONDITIONS.index(condition)] else "No"
    raise PromptError(f"unknown task {task}")


def parse_output(task: Task, text: str) -> Any:
    """Parse a free-text model output into the task's prediction type.

    Total function: case-insensitive and whitespace-tolerant, returning
    UNPARSEABLE instead of raising. Position markers come back 0-based so
    predictions compare directly against stored gold structure.
    """
    task = Task(task)
    text = text.strip()
    if task is Task.SRO:
        tokens = text.strip("[]() ").replace(",", " ").split()
        if not tokens:
            return UNPARSEABLE
        positions: list[int] = []
        for tok in tokens:
            if not _INT_RE.fullmatch(tok):
                return UNPARSEABLE
            marker = int(tok)
            if marker < 1:
                return UNPARSEABLE
            positions.append(marker - 1)
        return tuple(positions)
    if task is Task.ISR:
        m = _INT_RE.search(text)
        if not m or int(m.group()) < 1:
            return UNPARSEABLE
        return int(m.group()) - 1
    if task is Task.DRR:
        try:
            return parse_cot(text).l2
        except CotParseError:
            return UNPARSEABLE
    if task is Task.NPE:
        return text if text else UNPARSEABLE
    if task is Task.NLI:
        return _NLI_PARSE.get(text.lower().rstrip("."), UNPARSEABLE)
    if task is Task.SCORING:
        m = _INT_RE.search(text)
        return int(m.group()) if m else UNPARSEABLE
    if task is Task.REASONING:
        word = text.lower().rstrip(".!")
        if word == "yes":
            return True
        if word == "no":
            return False
        return UNPARSEABLE
    raise PromptError(f"unknown task {task}")


def dump_templates(path: str | Path) -> None:
    """Write the template set as JSON so external backends can render
    prompts without this toolkit."""
    payload = {
        "version": 1,
        "templates": TEMPLATES,
        "nli_targets": NLI_TARGETS,
        "notes": {
            "sro_target": "bracketed 1-based position markers, e.g. [2, 4, 3, 1]",
            "isr_target": "1-based sentence number",
            "drr_target": "connector -> level-1 sense -> level-2 sense",
            "reasoning_target": "Yes or No",
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
