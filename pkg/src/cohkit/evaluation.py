"""Task-level prediction and evaluation.

Converts task instances into the head examples the trained model consumes,
composes head outputs with the decoders into task predictions, and scores
prediction lists from any engine into EvalReports. Evaluation is
engine-agnostic: it only needs a `predict(task, instance)` callable, and
UNPARSEABLE predictions are scored as incorrect and counted separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .corpus import (
    CONDITIONS,
    NLI_LABELS,
    NPE_NONE,
    DrrInstance,
    IsrInstance,
    NliInstance,
    NpeInstance,
    ReasoningInstance,
    Scale,
    ScoringInstance,
    SroInstance,
    Task,
    TaskInstance,
    expand_drr_multilabel,
)
from .decode import PairwiseMatrix, isr_select, topological_order
from .metrics import EvalReport
from .model import CoherenceModel
from .prompts import is_unparseable
from .taskgen import PairOrder, PairRelevance, expand_isr_pairs, expand_sro_pairs
from .training import HeadExample

# Class index conventions for the binary pair heads and reasoning heads.
PAIR_ORDER_CLASSES = (PairOrder.A_BEFORE_B, PairOrder.B_BEFORE_A)
PAIR_RELEVANCE_CLASSES = (PairRelevance.RELEVANT, PairRelevance.IRRELEVANT)


class EvaluationError(ValueError):
    pass


def _label_index(labels: tuple[str, ...], label: str, head: str) -> int:
    try:
        return labels.index(label)
    except ValueError:
        raise EvaluationError(
            f"label {label!r} not in the {head!r} inventory ({len(labels)} labels); "
            "check the dataset's labels.json sidecar"
        ) from None


@dataclass(frozen=True)
class NpePrediction:
    """Predicted prepositional links for one document; NONE pairs are
    implicit. unparseable counts NP-pair outputs that could not be read."""

    links: tuple[tuple[int, int, str], ...]
    unparseable: int = 0


def scoring_head(scale: Scale) -> str:
    return "scoring_3" if Scale(scale) is Scale.THREE_WAY else "scoring_5"


def ordered_np_pairs(inst: NpeInstance) -> list[tuple[int, int]]:
    n = len(inst.nps)
    return [(a, c) for a in range(n) for c in range(n) if a != c]


def to_head_examples(
    task: Task,
    instances: Sequence[TaskInstance],
    model: CoherenceModel,
    for_training: bool = False,
) -> dict[str, list[HeadExample]]:
    """Expand instances into per-head (texts, label) training examples.

    Multi-sense relation instances are duplicated per sense when
    for_training is set; evaluation keeps the full sense set.
    """
    task = Task(task)
    out: dict[str, list[HeadExample]] = {}
    if task is Task.SRO:
        examples: list[HeadExample] = []
        for inst in instances:
            for pair in expand_sro_pairs(inst):
                examples.append(((pair.s_a, pair.s_b), PAIR_ORDER_CLASSES.index(pair.label)))
        out["pair_order"] = examples
    elif task is Task.ISR:
        examples = []
        for inst in instances:
            for pair in expand_isr_pairs(inst):
                examples.append(((pair.s_a, pair.s_b), PAIR_RELEVANCE_CLASSES.index(pair.label)))
        out["pair_relevance"] = examples
    elif task is Task.DRR:
        labels = model.labels["drr"]
        expanded = expand_drr_multilabel(instances) if for_training else instances
        out["drr"] = [
            ((inst.du1, inst.du2), _label_index(labels, inst.primary_l2(), "drr"))
            for inst in expanded
        ]
    elif task is Task.NPE:
        labels = model.labels["npe"]
        examples = []
        for inst in instances:
            by_pair = {(a, c): p for a, c, p in inst.links}
            for a, c in ordered_np_pairs(inst):
                prep = by_pair.get((a, c), NPE_NONE)
                examples.append(
                    ((inst.np_text(a), inst.np_text(c)), _label_index(labels, prep, "npe"))
                )
        out["npe"] = examples
    elif task is Task.NLI:
        out["nli"] = [
            ((inst.premise, inst.hypothesis), NLI_LABELS.index(inst.gold)) for inst in instances
        ]
    elif task is Task.SCORING:
        for inst in instances:
            head = scoring_head(inst.scale)
            out.setdefault(head, []).append(((inst.paragraph.text,), inst.gold_score - 1))
    elif task is Task.REASONING:
        for c, condition in enumerate(CONDITIONS):
            head = f"reasoning_{condition}"
            out[head] = [
                ((" ".join(inst.prefix), inst.new_sentence), int(inst.gold[c]))
                for inst in instances
            ]
    else:  # pragma: no cover
        raise EvaluationError(f"unknown task {task}")
    return out


# ---------------------------------------------------------------------------
# Builtin predictions: forward passes composed with the decode module.


def predict_sro(model: CoherenceModel, inst: SroInstance) -> tuple[int, ...]:
    n = len(inst.shuffled)
    if n == 1:
        return (0,)
    probs = {}
    for i in range(n):
        for j in range(i + 1, n):
            p = model.forward("pair_order", (inst.shuffled[i], inst.shuffled[j]))
            probs[(i, j)] = float(p[0])  # P(i precedes j), once per unordered pair
    order = topological_order(PairwiseMatrix.from_pair_probs(n, probs))
    return tuple(order)


def predict_isr(model: CoherenceModel, inst: IsrInstance) -> int:
    n = len(inst.sentences)
    rel = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            p = model.forward("pair_relevance", (inst.sentences[i], inst.sentences[j]))
            rel[i][j] = rel[j][i] = float(p[0])  # P(pair relevant)
    return isr_select(rel)


def predict_drr(model: CoherenceModel, inst: DrrInstance) -> str:
    idx = model.predict("drr", (inst.du1, inst.du2))
    return model.labels["drr"][idx]


def predict_npe(model: CoherenceModel, inst: NpeInstance) -> NpePrediction:
    labels = model.labels["npe"]
    links = []
    for a, c in ordered_np_pairs(inst):
        idx = model.predict("npe", (inst.np_text(a), inst.np_text(c)))
        if labels[idx] != NPE_NONE:
            links.append((a, c, labels[idx]))
    return NpePrediction(links=tuple(links))


def predict_nli(model: CoherenceModel, inst: NliInstance) -> str:
    return NLI_LABELS[model.predict("nli", (inst.premise, inst.hypothesis))]


def predict_scoring(model: CoherenceModel, inst: ScoringInstance) -> int:
    return model.predict(scoring_head(inst.scale), (inst.paragraph.text,)) + 1


def predict_reasoning(model: CoherenceModel, inst: ReasoningInstance) -> tuple[bool, bool, bool]:
    prefix = " ".join(inst.prefix)
    return tuple(
        bool(model.predict(f"reasoning_{condition}", (prefix, inst.new_sentence)))
        for condition in CONDITIONS
    )


_PREDICTORS = {
    Task.SRO: predict_sro,
    Task.ISR: predict_isr,
    Task.DRR: predict_drr,
    Task.NPE: predict_npe,
    Task.NLI: predict_nli,
    Task.SCORING: predict_scoring,
    Task.REASONING: predict_reasoning,
}


def predict_instance(model: CoherenceModel, task: Task, instance: TaskInstance):
    return _PREDICTORS[Task(task)](model, instance)


# ---------------------------------------------------------------------------
# Scoring prediction lists into reports.

PredictFn = Callable[[Task, TaskInstance], object]


def _is_valid_order(pred, n: int) -> bool:
    return (
        isinstance(pred, tuple)
        and len(pred) == n
        and sorted(pred) == list(range(n))
    )


def evaluate_task(
    predict: PredictFn, task: Task, instances: Sequence[TaskInstance]
) -> EvalReport:
    """Run predictions over a dataset and assemble the task's EvalReport.

    Unparseable predictions never abort evaluation: they score as incorrect
    and increment the report's 'unparseable' counter. Relation labels are
    matched case-insensitively to tolerate generative casing.
    """
    task = Task(task)
    if not instances:
        raise EvaluationError("no instances to evaluate")
    predictions = [predict(task, inst) for inst in instances]
    return score_predictions(task, predictions, instances)


def score_predictions(
    task: Task, predictions: Sequence[object], instances: Sequence[TaskInstance]
) -> EvalReport:
    task = Task(task)
    n = len(instances)
    if len(predictions) != n:
        raise EvaluationError("predictions and instances misaligned")
    unparseable = 0

    if task is Task.SRO:
        exact = 0
        acc_sum = 0.0
        correct_positions = 0
        total_positions = 0
        invalid = 0
        for pred, inst in zip(predictions, instances):
            gold = inst.gold_positions
            total_positions += len(gold)
            if is_unparseable(pred):
                unparseable += 1
                continue
            if not _is_valid_order(tuple(pred), len(gold)):
                invalid += 1
                continue
            pred = tuple(pred)
            if pred == gold:
                exact += 1
            hits = sum(1 for a, b in zip(pred, gold) if a == b)
            correct_positions += hits
            acc_sum += hits / len(gold)
        return EvalReport(
            task=task.value,
            values={"pmr": exact / n, "acc": acc_sum / n},
            counts={
                "exact_match": exact,
                "instances": n,
                "correct_positions": correct_positions,
                "total_positions": total_positions,
                "invalid_order": invalid,
                "unparseable": unparseable,
            },
            n_instances=n,
        )

    if task in (Task.ISR, Task.NLI, Task.SCORING):
        golds = {
            Task.ISR: lambda i: i.irrelevant_index,
            Task.NLI: lambda i: i.gold,
            Task.SCORING: lambda i: i.gold_score,
        }[task]
        correct = 0
        for pred, inst in zip(predictions, instances):
            if is_unparseable(pred):
                unparseable += 1
            elif pred == golds(inst):
                correct += 1
        return EvalReport(
            task=task.value,
            values={"accuracy": correct / n},
            counts={"correct": correct, "instances": n, "unparseable": unparseable},
            n_instances=n,
        )

    if task is Task.DRR:
        correct = 0
        for pred, inst in zip(predictions, instances):
            if is_unparseable(pred):
                unparseable += 1
            elif str(pred).lower() in {g.lower() for g in inst.gold_l2}:
                correct += 1
        return EvalReport(
            task=task.value,
            values={"accuracy": correct / n},
            counts={"correct": correct, "instances": n, "unparseable": unparseable},
            n_instances=n,
        )

    if task is Task.NPE:
        pred_links: set[tuple] = set()
        gold_links: set[tuple] = set()
        for k, (pred, inst) in enumerate(zip(predictions, instances)):
            gold_links |= {(k, a, c, p.lower()) for a, c, p in inst.links}
            if is_unparseable(pred):
                unparseable += len(ordered_np_pairs(inst))
                continue
            unparseable += pred.unparseable
            pred_links |= {(k, a, c, p.lower()) for a, c, p in pred.links}
        tp = len(pred_links & gold_links)
        precision = tp / len(pred_links) if pred_links else 0.0
        recall = tp / len(gold_links) if gold_links else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return EvalReport(
            task=task.value,
            values={"precision": precision, "recall": recall, "f1": f1},
            counts={
                "true_positives": tp,
                "predicted_links": len(pred_links),
                "gold_links": len(gold_links),
                "unparseable": unparseable,
            },
            n_instances=n,
        )

    if task is Task.REASONING:
        values: dict[str, float] = {}
        counts: dict[str, int] = {"instances": n}
        for pred in predictions:
            if is_unparseable(pred):
                unparseable += 3
            else:
                unparseable += sum(1 for v in pred if is_unparseable(v))
        for c, name in enumerate(CONDITIONS):
            tp = fp = fn = correct = 0
            for pred, inst in zip(predictions, instances):
                gold = inst.gold[c]
                value = pred[c] if not is_unparseable(pred) else pred
                if value == gold:  # UNPARSEABLE never equals a bool
                    correct += 1
                p = bool(value)  # UNPARSEABLE scores as a negative prediction
                if p and gold:
                    tp += 1
                elif p and not gold:
                    fp += 1
                elif not p and gold:
                    fn += 1
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            values[f"{name}_precision"] = precision
            values[f"{name}_recall"] = recall
            values[f"{name}_f1"] = f1
            values[f"{name}_accuracy"] = correct / n
            counts[f"{name}_tp"] = tp
            counts[f"{name}_fp"] = fp
            counts[f"{name}_fn"] = fn
        counts["unparseable"] = unparseable
        return EvalReport(task=task.value, values=values, counts=counts, n_instances=n)

    raise EvaluationError(f"unknown task {task}")
