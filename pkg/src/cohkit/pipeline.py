"""Experiment pipeline: joint proxy training, assessment fine-tuning, and
evaluation, plus the ablation grid and cross-domain runs.

Every run directory carries the exact spec, seed, and checkpoint hashes
needed to reproduce it. Stages are resumable: an existing checkpoint whose
recorded spec fingerprint matches is reused instead of retrained, and
evaluation from checkpoints is deterministic, so deleting reports and
re-running evaluation reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import shutil
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .backend import Backend, BackendConfig, BuiltinBackend, create_backend
from .corpus import (
    DrrInstance,
    IsrInstance,
    LabelInventory,
    NliInstance,
    NpeInstance,
    ReasoningInstance,
    ScoringInstance,
    SroInstance,
    Task,
    TaskInstance,
    load_dataset,
)
from .evaluation import evaluate_task, to_head_examples
from .metrics import EvalReport
from .model import CoherenceModel, ModelConfig, Vocab, checkpoint_sha256
from .training import TrainConfig, train_interleaved

PROXY_KEYS = ("sro", "isr", "drr", "npe", "nli")
ASSESSMENT_KEYS = ("scoring_gcdc", "scoring_cohesentia", "reasoning")
FINETUNE_TARGETS = ("scoring_gcdc", "scoring_cohesentia", "scoring_both", "reasoning")
SPLITS = ("train", "dev", "test")

_KEY_TASK = {
    "sro": Task.SRO,
    "isr": Task.ISR,
    "drr": Task.DRR,
    "npe": Task.NPE,
    "nli": Task.NLI,
    "scoring_gcdc": Task.SCORING,
    "scoring_cohesentia": Task.SCORING,
    "reasoning": Task.REASONING,
}


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment cell: which proxy tasks to train jointly, what to
    fine-tune on afterwards, and where everything lives."""

    tasks: tuple[str, ...] = ()
    finetune_target: str | None = None
    data_paths: dict[str, str] = field(default_factory=dict)
    output_dir: str = "runs/experiment"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=5))
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=10))
    backend: BackendConfig | None = None
    cv_folds: int = 0
    domains: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "domains", tuple(self.domains))
        for t in self.tasks:
            if t not in PROXY_KEYS:
                raise PipelineError(f"unknown proxy task {t!r}; choose from {PROXY_KEYS}")
        if len(set(self.tasks)) != len(self.tasks):
            raise PipelineError("duplicate proxy tasks")
        if self.finetune_target is not None and self.finetune_target not in FINETUNE_TARGETS:
            raise PipelineError(
                f"unknown finetune target {self.finetune_target!r}; choose from {FINETUNE_TARGETS}"
            )

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "tasks": list(self.tasks),
            "finetune_target": self.finetune_target,
            "data_paths": dict(sorted(self.data_paths.items())),
            "output_dir": self.output_dir,
            "model": asdict(self.model),
            "train": asdict(self.train),
            "finetune": asdict(self.finetune),
            "backend": asdict(self.backend) if self.backend else None,
            "cv_folds": self.cv_folds,
            "domains": list(self.domains),
        }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        known = {
            "tasks": tuple(data.get("tasks", ())),
            "finetune_target": data.get("finetune_target"),
            "data_paths": dict(data.get("data_paths", {})),
            "output_dir": data.get("output_dir", "runs/experiment"),
            "cv_folds": int(data.get("cv_folds", 0)),
            "domains": tuple(data.get("domains", ())),
        }
        if data.get("model"):
            known["model"] = ModelConfig(**data["model"])
        if data.get("train"):
            known["train"] = TrainConfig(**data["train"])
        if data.get("finetune"):
            known["finetune"] = TrainConfig(**data["finetune"])
        if data.get("backend"):
            known["backend"] = BackendConfig(**data["backend"])
        return cls(**known)

    def fingerprint(self) -> str:
        """Hash of everything that affects the trained parameters."""
        payload = self.to_dict()
        payload.pop("output_dir")
        payload.pop("backend")
        payload.pop("cv_folds")
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    # -- dataset bookkeeping -------------------------------------------------

    def assessment_keys(self) -> tuple[str, ...]:
        if self.finetune_target is None:
            return ()
        if self.finetune_target == "scoring_both":
            return ("scoring_gcdc", "scoring_cohesentia")
        return (self.finetune_target,)

    def required_keys(self) -> tuple[str, ...]:
        return tuple(self.tasks) + self.assessment_keys()

    def proxy_ckpt(self) -> Path:
        return Path(self.output_dir) / "checkpoints" / "proxy.ckpt"

    def final_ckpt(self) -> Path:
        return Path(self.output_dir) / "checkpoints" / "final.ckpt"

    def reports_dir(self) -> Path:
        return Path(self.output_dir) / "reports"


def instance_texts(task: Task, inst: TaskInstance) -> list[str]:
    """Texts the encoder will see for one instance (vocab building)."""
    if isinstance(inst, SroInstance):
        return list(inst.shuffled)
    if isinstance(inst, IsrInstance):
        return list(inst.sentences)
    if isinstance(inst, DrrInstance):
        return [inst.du1, inst.du2]
    if isinstance(inst, NpeInstance):
        return [" ".join(inst.tokens)]
    if isinstance(inst, NliInstance):
        return [inst.premise, inst.hypothesis]
    if isinstance(inst, ScoringInstance):
        return [inst.paragraph.text]
    if isinstance(inst, ReasoningInstance):
        return [" ".join(inst.prefix), inst.new_sentence]
    raise PipelineError(f"unknown instance type {type(inst)}")


def load_splits(spec: ExperimentSpec, key: str) -> dict[str, list[TaskInstance]]:
    data_dir = Path(spec.data_paths[key])
    task = _KEY_TASK[key]
    out = {}
    for split in SPLITS:
        instances = load_dataset(data_dir / f"{split}.jsonl", task)
        if key.startswith("scoring") and spec.domains:
            instances = [i for i in instances if i.paragraph.domain in spec.domains]
        out[split] = instances
    return out


def validate_data(spec: ExperimentSpec) -> None:
    """Fail before any training starts if referenced files are missing."""
    missing = []
    for key in spec.required_keys():
        if key not in spec.data_paths:
            missing.append(f"data_paths[{key!r}] not configured")
            continue
        for split in SPLITS:
            path = Path(spec.data_paths[key]) / f"{split}.jsonl"
            if not path.exists():
                missing.append(str(path))
    if missing:
        raise PipelineError("missing data: " + "; ".join(missing))


def _load_inventory(spec: ExperimentSpec, key: str) -> LabelInventory | None:
    if key not in spec.data_paths:
        return None
    sidecar = Path(spec.data_paths[key]) / "labels.json"
    return LabelInventory.load(sidecar) if sidecar.exists() else None


def build_model(spec: ExperimentSpec, datasets: dict[str, dict[str, list]]) -> CoherenceModel:
    """Fresh model with a vocab from the training splits only."""
    from .corpus import default_drr_inventory, default_npe_inventory

    texts: list[str] = []
    for key in spec.required_keys():
        task = _KEY_TASK[key]
        for inst in datasets[key]["train"]:
            texts.extend(instance_texts(task, inst))
    vocab = Vocab.build(texts)
    drr_inv = _load_inventory(spec, "drr") or default_drr_inventory()
    npe_inv = _load_inventory(spec, "npe") or default_npe_inventory()
    return CoherenceModel.build(
        vocab,
        spec.model,
        seed=spec.train.seed,
        labels={"drr": drr_inv.labels, "npe": npe_inv.labels},
    )


def _head_datasets(
    model: CoherenceModel,
    datasets: dict[str, dict[str, list]],
    keys: Sequence[str],
    split: str,
    for_training: bool,
) -> dict[str, list]:
    out: dict[str, list] = {}
    for key in keys:
        task = _KEY_TASK[key]
        for head, examples in to_head_examples(
            task, datasets[key][split], model, for_training=for_training
        ).items():
            out.setdefault(head, []).extend(examples)
    return out


def _run_meta_path(spec: ExperimentSpec) -> Path:
    return Path(spec.output_dir) / "run.json"


def _write_run_meta(spec: ExperimentSpec, extra: dict) -> None:
    meta_path = _run_meta_path(spec)
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"spec": spec.to_dict(), "fingerprint": spec.fingerprint()}
    meta.update(extra)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _can_resume(spec: ExperimentSpec, ckpt: Path) -> bool:
    meta_path = _run_meta_path(spec)
    if not (ckpt.exists() and meta_path.exists()):
        return False
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError:
        return False
    return meta.get("fingerprint") == spec.fingerprint()


def stage_train(spec: ExperimentSpec, resume: bool = True) -> tuple[Path, Path]:
    """Joint proxy training then optional assessment fine-tuning.

    Returns (proxy checkpoint, final checkpoint). With no proxy tasks the
    proxy checkpoint holds the untrained shared encoder (the "none"
    condition), and with no fine-tune target the final checkpoint equals the
    proxy one.
    """
    validate_data(spec)
    out_dir = Path(spec.output_dir)
    proxy_path, final_path = spec.proxy_ckpt(), spec.final_ckpt()
    if resume and _can_resume(spec, final_path):
        return proxy_path, final_path

    datasets = {key: load_splits(spec, key) for key in spec.required_keys()}
    model = build_model(spec, datasets)

    if spec.tasks:
        train_heads = _head_datasets(model, datasets, spec.tasks, "train", for_training=True)
        dev_heads = _head_datasets(model, datasets, spec.tasks, "dev", for_training=False)
        result = train_interleaved(model, train_heads, spec.train, dev_heads or None)
        result.write_log(out_dir / "logs" / "proxy_train.jsonl")
    model.save(proxy_path)

    assessment = spec.assessment_keys()
    if assessment:
        ft_train = _head_datasets(model, datasets, assessment, "train", for_training=True)
        ft_dev = _head_datasets(model, datasets, assessment, "dev", for_training=False)
        result = train_interleaved(model, ft_train, spec.finetune, ft_dev or None)
        result.write_log(out_dir / "logs" / "finetune_train.jsonl")
        model.save(final_path)
    else:
        final_path.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(proxy_path, final_path)

    _write_run_meta(
        spec,
        {
            "checkpoints": {
                "proxy": checkpoint_sha256(proxy_path),
                "final": checkpoint_sha256(final_path),
            },
            "seed": spec.train.seed,
        },
    )
    return proxy_path, final_path


def _eval_backend(spec: ExperimentSpec, ckpt: Path) -> Backend:
    if spec.backend is None:
        return BuiltinBackend.from_checkpoint(ckpt, expect_config=spec.model)
    return create_backend(spec.backend, expect_config=spec.model)


def stage_eval_tasks(spec: ExperimentSpec) -> dict[str, EvalReport]:
    """Evaluate each trained proxy task on its test split."""
    if not spec.tasks:
        return {}
    backend = _eval_backend(spec, spec.proxy_ckpt())
    reports: dict[str, EvalReport] = {}
    for key in spec.tasks:
        instances = load_splits(spec, key)["test"]
        report = evaluate_task(backend.predict, _KEY_TASK[key], instances)
        report.task = key
        reports[key] = report
        _save_report(spec, key, report)
    return reports


def stage_eval_scoring(spec: ExperimentSpec) -> dict[str, EvalReport]:
    """Coherence scoring accuracy on each configured scoring dataset."""
    keys = [k for k in spec.assessment_keys() if k.startswith("scoring")]
    if not keys:
        raise PipelineError("spec has no scoring fine-tune target")
    if spec.cv_folds > 1:
        return {key: cross_validate_scoring(spec, key, spec.cv_folds) for key in keys}
    backend = _eval_backend(spec, spec.final_ckpt())
    reports = {}
    for key in keys:
        instances = load_splits(spec, key)["test"]
        report = evaluate_task(backend.predict, Task.SCORING, instances)
        report.task = key
        reports[key] = report
        _save_report(spec, key, report)
    return reports


def stage_eval_reasoning(spec: ExperimentSpec) -> EvalReport:
    if "reasoning" not in spec.assessment_keys():
        raise PipelineError("spec has no reasoning fine-tune target")
    backend = _eval_backend(spec, spec.final_ckpt())
    instances = load_splits(spec, "reasoning")["test"]
    report = evaluate_task(backend.predict, Task.REASONING, instances)
    _save_report(spec, "reasoning", report)
    return report


def _save_report(spec: ExperimentSpec, name: str, report: EvalReport) -> None:
    path = spec.reports_dir() / f"{name}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    report.save(path)


def run_pipeline(spec: ExperimentSpec, resume: bool = True) -> dict[str, EvalReport]:
    """Full pipeline: train, fine-tune, evaluate everything configured."""
    stage_train(spec, resume=resume)
    reports = dict(stage_eval_tasks(spec))
    keys = spec.assessment_keys()
    if any(k.startswith("scoring") for k in keys):
        reports.update(stage_eval_scoring(spec))
    if "reasoning" in keys:
        reports["reasoning"] = stage_eval_reasoning(spec)
    return reports


def cross_validate_scoring(spec: ExperimentSpec, key: str, folds: int) -> EvalReport:
    """K-fold cross-validation over the pooled splits of one scoring set.

    Each fold fine-tunes from the proxy checkpoint on the other folds and
    evaluates the held-out one; the report pools fold counts so the ratio
    stays recomputable.
    """
    splits = load_splits(spec, key)
    pooled = splits["train"] + splits["dev"] + splits["test"]
    if len(pooled) < folds:
        raise PipelineError(f"{key}: {len(pooled)} instances cannot fill {folds} folds")
    correct = 0
    fold_values = []
    for fold in range(folds):
        held = [inst for i, inst in enumerate(pooled) if i % folds == fold]
        rest = [inst for i, inst in enumerate(pooled) if i % folds != fold]
        model = CoherenceModel.load(spec.proxy_ckpt())
        train_heads = to_head_examples(Task.SCORING, rest, model, for_training=True)
        train_interleaved(model, train_heads, spec.finetune)
        report = evaluate_task(BuiltinBackend(model).predict, Task.SCORING, held)
        correct += report.counts["correct"]
        fold_values.append(report.values["accuracy"])
    report = EvalReport(
        task=key,
        values={
            "accuracy": correct / len(pooled),
            "mean_fold_accuracy": sum(fold_values) / folds,
        },
        counts={"correct": correct, "instances": len(pooled), "folds": folds},
        n_instances=len(pooled),
    )
    _save_report(spec, f"{key}_cv{folds}", report)
    return report


# ---------------------------------------------------------------------------
# Ablation grid and cross-domain harness


def subset_id(tasks: Sequence[str]) -> str:
    """Numeric subset label: tasks 1-SRO, 2-ISR, 3-DRR, 4-NPE, 5-NLI."""
    if not tasks:
        return "none"
    return "+".join(str(PROXY_KEYS.index(t) + 1) for t in sorted(tasks, key=PROXY_KEYS.index))


def run_ablation_grid(
    base_spec: ExperimentSpec, subsets: Sequence[Sequence[str]], resume: bool = True
) -> str:
    """One pipeline per task subset with shared seeds; returns the CSV text
    (also written under the base output dir)."""
    if not subsets:
        raise PipelineError("empty subset list")
    rows = []
    metric_names: list[str] = []
    for subset in subsets:
        sid = subset_id(subset)
        cell_spec = replace(
            base_spec,
            tasks=tuple(subset),
            output_dir=str(Path(base_spec.output_dir) / "ablation" / sid),
        )
        reports = run_pipeline(cell_spec, resume=resume)
        row: dict[str, object] = {"subset": sid, "tasks": " ".join(subset) or "none"}
        for name, report in sorted(reports.items()):
            for metric, value in sorted(report.values.items()):
                column = f"{name}.{metric}"
                row[column] = f"{value:.6f}"
                if column not in metric_names:
                    metric_names.append(column)
        rows.append(row)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["subset", "tasks"] + metric_names, restval="")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    csv_text = buf.getvalue()
    out = Path(base_spec.output_dir) / "ablation" / "grid.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text, encoding="utf-8")
    return csv_text


def cross_domain(
    spec: ExperimentSpec, train_on: str, resume: bool = True
) -> dict[str, EvalReport]:
    """Fine-tune scoring on one dataset (or both) and evaluate on both.

    Returns reports keyed "{eval_key}" with an in/out-of-domain tag in the
    report values; scoring heads for datasets outside train_on stay at
    their proxy-stage parameters.
    """
    if train_on not in ("gcdc", "cohesentia", "both"):
        raise PipelineError("train_on must be gcdc, cohesentia, or both")
    target = {"gcdc": "scoring_gcdc", "cohesentia": "scoring_cohesentia", "both": "scoring_both"}[
        train_on
    ]
    for key in ("scoring_gcdc", "scoring_cohesentia"):
        if key not in spec.data_paths:
            raise PipelineError(f"cross-domain needs data_paths[{key!r}]")
    cd_spec = replace(
        spec,
        finetune_target=target,
        output_dir=str(Path(spec.output_dir) / "cross_domain" / train_on),
    )
    stage_train(cd_spec, resume=resume)
    backend = _eval_backend(cd_spec, cd_spec.final_ckpt())
    trained_keys = set(cd_spec.assessment_keys())
    reports = {}
    for key in ("scoring_gcdc", "scoring_cohesentia"):
        instances = load_splits(cd_spec, key)["test"]
        report = evaluate_task(backend.predict, Task.SCORING, instances)
        report.task = key
        report.values["in_domain"] = 1.0 if key in trained_keys else 0.0
        reports[key] = report
        _save_report(cd_spec, f"cross_{train_on}_{key}", report)
    return reports
