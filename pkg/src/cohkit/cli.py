"""Command-line interface.

Subcommands: build-datasets, train, eval-task, eval-coherence,
eval-reasoning, ablate, cross-domain, report, serve, dump-templates.
Experiment cells are described by a JSON config file mirroring
ExperimentSpec; every field can be overridden with --set key=value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import synth
from .corpus import Scale, Task, save_dataset
from .metrics import EvalReport
from .pipeline import (
    PROXY_KEYS,
    ExperimentSpec,
    PipelineError,
    cross_domain,
    run_ablation_grid,
    run_pipeline,
    stage_eval_reasoning,
    stage_eval_scoring,
    stage_eval_tasks,
    stage_train,
)
from .prompts import dump_templates
from .taskgen import make_isr, make_sro


def _set_nested(data: dict, dotted: str, raw: str) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node[keys[-1]] = value


# Environment fallbacks for the external backend; --set flags win.
_BACKEND_ENV = {
    "COHKIT_ENDPOINT": "endpoint",
    "COHKIT_TIMEOUT": "timeout",
    "COHKIT_MAX_RETRIES": "max_retries",
    "COHKIT_MAX_IN_FLIGHT": "max_in_flight",
    "COHKIT_AUTH_TOKEN": "auth_token",
}


def _apply_backend_env(data: dict) -> None:
    values = {field: os.environ[var] for var, field in _BACKEND_ENV.items() if var in os.environ}
    if not values:
        return
    backend = data.setdefault("backend", {})
    if "kind" not in backend:
        backend["kind"] = "external"
    for field, raw in values.items():
        if field not in backend:
            try:
                backend[field] = json.loads(raw)
            except json.JSONDecodeError:
                backend[field] = raw


def load_spec(args: argparse.Namespace) -> ExperimentSpec:
    data: dict = {}
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    _apply_backend_env(data)
    for override in args.set or []:
        if "=" not in override:
            raise SystemExit(f"--set expects key=value, got {override!r}")
        dotted, raw = override.split("=", 1)
        _set_nested(data, dotted, raw)
    if getattr(args, "output_dir", None):
        data["output_dir"] = args.output_dir
    return ExperimentSpec.from_dict(data)


def _add_spec_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file mirroring ExperimentSpec")
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config field, e.g. --set train.learning_rate=0.5",
    )
    parser.add_argument("--output-dir", help="run directory (overrides config)")


# -- dataset building ---------------------------------------------------------


def build_synthetic(out: Path, seed: int, n_train: int, n_dev: int, n_test: int) -> None:
    sizes = {"train": n_train, "dev": n_dev, "test": n_test}
    total = sum(sizes.values())

    stories = synth.story_paragraphs(total, seed=seed, min_sentences=4, max_sentences=5)
    pool = synth.distractor_paragraphs(max(40, total // 2), seed=seed + 1)

    def split_ranges():
        start = 0
        for split, size in sizes.items():
            yield split, range(start, start + size)
            start += size

    for split, idx in split_ranges():
        save_dataset(
            out / "sro" / f"{split}.jsonl",
            Task.SRO,
            [make_sro(stories[i], seed=seed * 7919 + i) for i in idx],
        )
        save_dataset(
            out / "isr" / f"{split}.jsonl",
            Task.ISR,
            [make_isr(stories[i], pool, seed=seed * 104729 + i) for i in idx],
        )

    generators = {
        "drr": lambda n, s: synth.drr_instances(n, seed=s),
        "npe": lambda n, s: synth.npe_instances(n, seed=s),
        "nli": lambda n, s: synth.nli_instances(n, seed=s),
        "scoring_gcdc": lambda n, s: synth.scoring_instances(n, Scale.THREE_WAY, seed=s),
        "scoring_cohesentia": lambda n, s: synth.scoring_instances(n, Scale.FIVE_WAY, seed=s),
        "reasoning": lambda n, s: synth.reasoning_instances(n, seed=s),
    }
    tasks = {
        "drr": Task.DRR,
        "npe": Task.NPE,
        "nli": Task.NLI,
        "scoring_gcdc": Task.SCORING,
        "scoring_cohesentia": Task.SCORING,
        "reasoning": Task.REASONING,
    }
    for key_index, (key, gen) in enumerate(sorted(generators.items())):
        for k, (split, size) in enumerate(sizes.items()):
            save_dataset(
                out / key / f"{split}.jsonl", tasks[key], gen(size, seed + 13 * k + 1009 * key_index)
            )


def cmd_build_datasets(args: argparse.Namespace) -> int:
    out = Path(args.out)
    if args.synthetic:
        build_synthetic(out, args.seed, args.synthetic, args.synthetic_dev, args.synthetic_test)
        print(f"wrote synthetic datasets for all tasks under {out}")
        return 0
    if not args.paragraphs:
        raise SystemExit("need --paragraphs FILE (or --synthetic N)")
    from .corpus import load_paragraphs, split

    paragraphs = load_paragraphs(args.paragraphs)
    pool = load_paragraphs(args.pool) if args.pool else paragraphs
    fractions = tuple(args.fractions)
    tr, dv, te = split(paragraphs, fractions, seed=args.seed)
    for split_name, items in (("train", tr), ("dev", dv), ("test", te)):
        save_dataset(
            out / "sro" / f"{split_name}.jsonl",
            Task.SRO,
            [make_sro(p, seed=args.seed * 7919 + k) for k, p in enumerate(items)],
        )
        save_dataset(
            out / "isr" / f"{split_name}.jsonl",
            Task.ISR,
            [make_isr(p, pool, seed=args.seed * 104729 + k) for k, p in enumerate(items)],
        )
    print(f"wrote sro/ and isr/ splits under {out}")
    return 0


# -- report rendering ---------------------------------------------------------


def _fmt(value: float) -> str:
    return f"{100 * value:.1f}"


def render_reports(reports: dict[str, EvalReport]) -> str:
    lines: list[str] = []
    task_keys = [k for k in PROXY_KEYS if k in reports]
    if task_keys:
        lines.append("Proxy task evaluation")
        header = f"  {'task':<12}{'metric':<12}{'value':>8}   counts"
        lines.append(header)
        for key in task_keys:
            rep = reports[key]
            for metric, value in sorted(rep.values.items()):
                counts = ", ".join(f"{k}={v}" for k, v in sorted(rep.counts.items()))
                lines.append(f"  {key:<12}{metric:<12}{_fmt(value):>8}   ({counts})")
        lines.append("")
    scoring_keys = [k for k in reports if k.startswith("scoring")]
    if scoring_keys:
        lines.append("Coherence scoring (accuracy)")
        for key in sorted(scoring_keys):
            rep = reports[key]
            tag = ""
            if "in_domain" in rep.values:
                tag = "  [in-domain]" if rep.values["in_domain"] else "  [out-of-domain]"
            lines.append(f"  {key:<22}{_fmt(rep.values['accuracy']):>8}{tag}")
        lines.append("")
    if "reasoning" in reports:
        rep = reports["reasoning"]
        lines.append("Coherence reasoning (per condition)")
        lines.append(f"  {'condition':<12}{'P':>7}{'R':>7}{'F1':>7}")
        for name in ("cohesive", "consistent", "relevant"):
            lines.append(
                f"  {name:<12}"
                f"{_fmt(rep.values[f'{name}_precision']):>7}"
                f"{_fmt(rep.values[f'{name}_recall']):>7}"
                f"{_fmt(rep.values[f'{name}_f1']):>7}"
            )
        lines.append("")
    return "\n".join(lines)


def _load_reports(paths: list[str]) -> dict[str, EvalReport]:
    reports = {}
    for raw in paths:
        path = Path(raw)
        files = sorted(path.glob("*.json")) if path.is_dir() else [path]
        for file in files:
            rep = EvalReport.load(file)
            reports[rep.task] = rep
    return reports


# -- subcommand handlers --------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    spec = load_spec(args)
    proxy, final = stage_train(spec, resume=not args.no_resume)
    print(f"proxy checkpoint: {proxy}")
    print(f"final checkpoint: {final}")
    return 0


def cmd_eval_task(args: argparse.Namespace) -> int:
    spec = load_spec(args)
    if args.task:
        spec = ExperimentSpec.from_dict({**spec.to_dict(), "tasks": [args.task]})
    reports = stage_eval_tasks(spec)
    print(render_reports(reports))
    return 0


def cmd_eval_coherence(args: argparse.Namespace) -> int:
    spec = load_spec(args)
    if args.cv:
        spec = ExperimentSpec.from_dict({**spec.to_dict(), "cv_folds": args.cv})
    if args.domain:
        spec = ExperimentSpec.from_dict({**spec.to_dict(), "domains": args.domain})
    reports = stage_eval_scoring(spec)
    print(render_reports(reports))
    return 0


def cmd_eval_reasoning(args: argparse.Namespace) -> int:
    spec = load_spec(args)
    report = stage_eval_reasoning(spec)
    print(render_reports({"reasoning": report}))
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    spec = load_spec(args)
    reports = run_pipeline(spec, resume=not args.no_resume)
    print(render_reports(reports))
    return 0


def _parse_subsets(raw: str) -> list[list[str]]:
    subsets = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if chunk in ("none", ""):
            subsets.append([])
            continue
        names = []
        for item in chunk.split(","):
            item = item.strip()
            if item.isdigit():
                names.append(PROXY_KEYS[int(item) - 1])
            else:
                names.append(item)
        subsets.append(names)
    return subsets


def cmd_ablate(args: argparse.Namespace) -> int:
    spec = load_spec(args)
    subsets = _parse_subsets(args.subsets)
    csv_text = run_ablation_grid(spec, subsets, resume=not args.no_resume)
    print(csv_text, end="")
    return 0


def cmd_cross_domain(args: argparse.Namespace) -> int:
    spec = load_spec(args)
    reports = cross_domain(spec, args.train_on, resume=not args.no_resume)
    print(render_reports(reports))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    reports = _load_reports(args.paths)
    if not reports:
        raise SystemExit("no report files found")
    print(render_reports(reports))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.checkpoint)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_dump_templates(args: argparse.Namespace) -> int:
    dump_templates(args.out)
    print(f"wrote templates to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cohkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-datasets", help="generate task datasets (JSONL splits)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", required=True, type=int, help="root seed for reproducibility")
    p.add_argument("--paragraphs", help="JSONL file of coherent paragraphs")
    p.add_argument("--pool", help="JSONL pool of paragraphs for irrelevant-sentence injection")
    p.add_argument(
        "--fractions", nargs=3, type=float, default=(0.8, 0.1, 0.1), metavar=("TRAIN", "DEV", "TEST")
    )
    p.add_argument("--synthetic", type=int, help="generate N synthetic train instances per task")
    p.add_argument("--synthetic-dev", type=int, default=50)
    p.add_argument("--synthetic-test", type=int, default=50)
    p.set_defaults(fn=cmd_build_datasets)

    for name, fn, extra in (
        ("train", cmd_train, ()),
        ("run", cmd_run, ()),
        ("eval-task", cmd_eval_task, ("task",)),
        ("eval-coherence", cmd_eval_coherence, ("cv", "domain")),
        ("eval-reasoning", cmd_eval_reasoning, ()),
        ("ablate", cmd_ablate, ("subsets",)),
        ("cross-domain", cmd_cross_domain, ("train_on",)),
    ):
        p = sub.add_parser(name)
        _add_spec_args(p)
        p.add_argument("--no-resume", action="store_true", help="retrain even if checkpoints exist")
        if "task" in extra:
            p.add_argument("--task", choices=PROXY_KEYS, help="evaluate a single task")
        if "cv" in extra:
            p.add_argument("--cv", type=int, help="k-fold cross-validation on scoring")
        if "domain" in extra:
            p.add_argument("--domain", action="append", help="filter scoring data by domain")
        if "subsets" in extra:
            p.add_argument(
                "--subsets",
                required=True,
                help="semicolon-separated task subsets, e.g. '1;2;1,2,5;none'",
            )
        if "train_on" in extra:
            p.add_argument("--train-on", required=True, choices=("gcdc", "cohesentia", "both"))
        p.set_defaults(fn=fn)

    p = sub.add_parser("report", help="render report JSON files as text tables")
    p.add_argument("paths", nargs="+", help="report files or directories")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("dump-templates", help="write the prompt template set as JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_dump_templates)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
