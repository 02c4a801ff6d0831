"""Evaluation metrics with auditable integer counts.

Each metric returns plain floats; report helpers bundle values together with
the numerator/denominator counts needed to recompute every ratio. F1 with a
zero denominator is defined as 0 so reports are total.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Sequence

from .corpus import CONDITIONS


class MetricError(ValueError):
    pass


@dataclass
class EvalReport:
    """Per-task metric bundle; every ratio is recomputable from counts."""

    task: str
    values: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    n_instances: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "task": self.task,
                "values": self.values,
                "counts": self.counts,
                "n_instances": self.n_instances,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        data = json.loads(text)
        return cls(
            task=data["task"],
            values=dict(data["values"]),
            counts={k: int(v) for k, v in data["counts"].items()},
            n_instances=int(data["n_instances"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _check_aligned(predicted: Sequence, gold: Sequence) -> None:
    if len(predicted) != len(gold):
        raise MetricError(f"length mismatch: {len(predicted)} predictions vs {len(gold)} golds")


def _check_orders(predicted_orders: Sequence[Sequence[int]], gold_orders: Sequence[Sequence[int]]) -> None:
    _check_aligned(predicted_orders, gold_orders)
    for k, (p, g) in enumerate(zip(predicted_orders, gold_orders)):
        if len(p) != len(g):
            raise MetricError(f"instance {k}: order lengths differ ({len(p)} vs {len(g)})")


def pmr(predicted_orders: Sequence[Sequence[int]], gold_orders: Sequence[Sequence[int]]) -> float:
    """Fraction of instances whose entire predicted order is exact."""
    _check_orders(predicted_orders, gold_orders)
    if not gold_orders:
        return 0.0
    exact = sum(1 for p, g in zip(predicted_orders, gold_orders) if tuple(p) == tuple(g))
    return exact / len(gold_orders)


def sentence_acc(predicted_orders: Sequence[Sequence[int]], gold_orders: Sequence[Sequence[int]]) -> float:
    """Mean over instances of the fraction of sentences placed at their
    exact gold position."""
    _check_orders(predicted_orders, gold_orders)
    if not gold_orders:
        return 0.0
    total = 0.0
    for p, g in zip(predicted_orders, gold_orders):
        correct = sum(1 for a, b in zip(p, g) if a == b)
        total += correct / len(g)
    return total / len(gold_orders)


def drr_accuracy(predictions: Sequence[str], golds: Sequence[Iterable[str]]) -> float:
    """Multi-reference accuracy: a prediction matching any gold sense counts."""
    _check_aligned(predictions, golds)
    gold_sets = [frozenset(g) for g in golds]
    for k, g in enumerate(gold_sets):
        if not g:
            raise MetricError(f"instance {k}: empty gold label set")
    if not predictions:
        return 0.0
    correct = sum(1 for p, g in zip(predictions, gold_sets) if p in g)
    return correct / len(predictions)


def npe_prf(
    predicted_links: Iterable[Hashable],
    gold_links: Iterable[Hashable],
) -> tuple[float, float, float]:
    """Precision, recall, F1 over exact link-triple matches.

    Links are hashable triples (anchor, complement, preposition); NONE
    predictions must not appear in the predicted set. Duplicates within one
    side are an error. Zero denominators yield 0.
    """
    pred_list = list(predicted_links)
    gold_list = list(gold_links)
    pred = set(pred_list)
    gold = set(gold_list)
    if len(pred) != len(pred_list):
        raise MetricError("duplicate triples in predicted links")
    if len(gold) != len(gold_list):
        raise MetricError("duplicate triples in gold links")
    tp = len(pred & gold)
    precision = tp / len(pred) if pred else 0.0
    recall = tp / len(gold) if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def accuracy(predictions: Sequence, golds: Sequence) -> float:
    """Exact-match fraction, used for NLI, ISR, and coherence scoring."""
    _check_aligned(predictions, golds)
    if not predictions:
        return 0.0
    correct = sum(1 for p, g in zip(predictions, golds) if p == g)
    return correct / len(predictions)


def binary_prf(predictions: Sequence[bool], golds: Sequence[bool]) -> tuple[float, float, float]:
    _check_aligned(predictions, golds)
    tp = sum(1 for p, g in zip(predictions, golds) if p and g)
    fp = sum(1 for p, g in zip(predictions, golds) if p and not g)
    fn = sum(1 for p, g in zip(predictions, golds) if not p and g)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def reasoning_prf(
    predictions: Sequence[tuple[bool, bool, bool]],
    golds: Sequence[tuple[bool, bool, bool]],
) -> dict[str, tuple[float, float, float]]:
    """Per-condition precision/recall/F1; the positive class is the
    condition holding, exactly as annotated."""
    _check_aligned(predictions, golds)
    out: dict[str, tuple[float, float, float]] = {}
    for c, name in enumerate(CONDITIONS):
        preds_c = [bool(p[c]) for p in predictions]
        golds_c = [bool(g[c]) for g in golds]
        out[name] = binary_prf(preds_c, golds_c)
    return out


# ---------------------------------------------------------------------------
# Report builders: metric values plus the counts that back them.


def order_report(
    predicted_orders: Sequence[Sequence[int]],
    gold_orders: Sequence[Sequence[int]],
    task: str = "sro",
) -> EvalReport:
    _check_orders(predicted_orders, gold_orders)
    exact = sum(1 for p, g in zip(predicted_orders, gold_orders) if tuple(p) == tuple(g))
    correct_pos = sum(
        sum(1 for a, b in zip(p, g) if a == b) for p, g in zip(predicted_orders, gold_orders)
    )
    total_pos = sum(len(g) for g in gold_orders)
    n = len(gold_orders)
    return EvalReport(
        task=task,
        values={
            "pmr": pmr(predicted_orders, gold_orders),
            "acc": sentence_acc(predicted_orders, gold_orders),
        },
        counts={
            "exact_match": exact,
            "instances": n,
            "correct_positions": correct_pos,
            "total_positions": total_pos,
        },
        n_instances=n,
    )


def accuracy_report(predictions: Sequence, golds: Sequence, task: str) -> EvalReport:
    _check_aligned(predictions, golds)
    correct = sum(1 for p, g in zip(predictions, golds) if p == g)
    return EvalReport(
        task=task,
        values={"accuracy": accuracy(predictions, golds)},
        counts={"correct": correct, "instances": len(golds)},
        n_instances=len(golds),
    )


def drr_report(predictions: Sequence[str], golds: Sequence[Iterable[str]]) -> EvalReport:
    value = drr_accuracy(predictions, golds)
    correct = sum(1 for p, g in zip(predictions, golds) if p in frozenset(g))
    return EvalReport(
        task="drr",
        values={"accuracy": value},
        counts={"correct": correct, "instances": len(predictions)},
        n_instances=len(predictions),
    )


def npe_report(predicted_links: Iterable[Hashable], gold_links: Iterable[Hashable], n_instances: int) -> EvalReport:
    pred = set(predicted_links)
    gold = set(gold_links)
    precision, recall, f1 = npe_prf(pred, gold)
    tp = len(pred & gold)
    return EvalReport(
        task="npe",
        values={"precision": precision, "recall": recall, "f1": f1},
        counts={
            "true_positives": tp,
            "predicted_links": len(pred),
            "gold_links": len(gold),
        },
        n_instances=n_instances,
    )


def reasoning_report(
    predictions: Sequence[tuple[bool, bool, bool]],
    golds: Sequence[tuple[bool, bool, bool]],
) -> EvalReport:
    prf = reasoning_prf(predictions, golds)
    values: dict[str, float] = {}
    counts: dict[str, int] = {"instances": len(golds)}
    for c, name in enumerate(CONDITIONS):
        p, r, f1 = prf[name]
        values[f"{name}_precision"] = p
        values[f"{name}_recall"] = r
        values[f"{name}_f1"] = f1
        counts[f"{name}_tp"] = sum(1 for pr, g in zip(predictions, golds) if pr[c] and g[c])
        counts[f"{name}_fp"] = sum(1 for pr, g in zip(predictions, golds) if pr[c] and not g[c])
        counts[f"{name}_fn"] = sum(1 for pr, g in zip(predictions, golds) if not pr[c] and g[c])
    return EvalReport(task="reasoning", values=values, counts=counts, n_instances=len(golds))
