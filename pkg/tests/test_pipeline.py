import json
from dataclasses import replace
from pathlib import Path

import pytest

from cohkit.backend import BackendConfig
from cohkit.cli import build_synthetic
from cohkit.model import CoherenceModel, ModelConfig
from cohkit.pipeline import (
    ExperimentSpec,
    PipelineError,
    cross_domain,
    run_ablation_grid,
    run_pipeline,
    stage_eval_scoring,
    stage_eval_tasks,
    stage_train,
    subset_id,
    validate_data,
)
from cohkit.training import TrainConfig


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    build_synthetic(out, seed=11, n_train=24, n_dev=8, n_test=8)
    return out


def make_spec(data_dir, out_dir, **kw):
    defaults = dict(
        tasks=("sro", "isr"),
        finetune_target="scoring_gcdc",
        data_paths={
            key: str(data_dir / key)
            for key in ("sro", "isr", "drr", "npe", "nli", "scoring_gcdc", "scoring_cohesentia", "reasoning")
        },
        output_dir=str(out_dir),
        model=ModelConfig(embed_dim=12, hidden_dim=12, biaffine_dim=6),
        train=TrainConfig(learning_rate=0.5, epochs=8, batch_size=8, seed=3),
        finetune=TrainConfig(
            learning_rate=0.5, epochs=10, batch_size=8, seed=3, early_stop_patience=10
        ),
    )
    defaults.update(kw)
    return ExperimentSpec(**defaults)


def test_spec_validation():
    with pytest.raises(PipelineError):
        ExperimentSpec(tasks=("bogus",))
    with pytest.raises(PipelineError):
        ExperimentSpec(tasks=("sro", "sro"))
    with pytest.raises(PipelineError):
        ExperimentSpec(finetune_target="nope")
    spec = ExperimentSpec(tasks=())  # the none condition is allowed
    assert spec.assessment_keys() == ()


def test_spec_json_round_trip(data_dir, tmp_path):
    spec = make_spec(data_dir, tmp_path / "run")
    again = ExperimentSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again == spec
    assert again.fingerprint() == spec.fingerprint()


def test_fingerprint_ignores_output_dir_and_backend(data_dir, tmp_path):
    spec = make_spec(data_dir, tmp_path / "a")
    moved = replace(spec, output_dir=str(tmp_path / "b"))
    assert moved.fingerprint() == spec.fingerprint()
    with_backend = replace(
        spec, backend=BackendConfig(kind="external", endpoint="http://x/generate")
    )
    assert with_backend.fingerprint() == spec.fingerprint()
    different = replace(spec, tasks=("sro",))
    assert different.fingerprint() != spec.fingerprint()


def test_validate_data_errors_before_training(data_dir, tmp_path):
    spec = make_spec(data_dir, tmp_path / "run", data_paths={"sro": str(data_dir / "sro")})
    with pytest.raises(PipelineError, match="missing data"):
        validate_data(spec)
    with pytest.raises(PipelineError, match="missing data"):
        stage_train(spec)
    assert not (tmp_path / "run" / "checkpoints").exists()


def test_pipeline_trains_and_evaluates(data_dir, tmp_path):
    spec = make_spec(data_dir, tmp_path / "run")
    reports = run_pipeline(spec)
    assert set(reports) == {"sro", "isr", "scoring_gcdc"}
    # planted structure is learnable: near-perfect desk-scale metrics
    assert reports["sro"].values["pmr"] >= 0.75
    assert reports["isr"].values["accuracy"] >= 0.75
    assert reports["scoring_gcdc"].values["accuracy"] >= 0.5
    assert spec.proxy_ckpt().exists()
    assert spec.final_ckpt().exists()
    run_meta = json.loads((Path(spec.output_dir) / "run.json").read_text())
    assert run_meta["fingerprint"] == spec.fingerprint()
    assert set(run_meta["checkpoints"]) == {"proxy", "final"}
    assert (Path(spec.output_dir) / "logs" / "proxy_train.jsonl").exists()


def test_pipeline_deterministic_reports(data_dir, tmp_path):
    spec_a = make_spec(data_dir, tmp_path / "a")
    spec_b = make_spec(data_dir, tmp_path / "b")
    run_pipeline(spec_a)
    run_pipeline(spec_b)
    for name in ("sro", "isr", "scoring_gcdc"):
        a = (Path(spec_a.output_dir) / "reports" / f"{name}.json").read_bytes()
        b = (Path(spec_b.output_dir) / "reports" / f"{name}.json").read_bytes()
        assert a == b


def test_pipeline_resume_reuses_checkpoints(data_dir, tmp_path):
    spec = make_spec(data_dir, tmp_path / "run")
    stage_train(spec)
    before = spec.final_ckpt().read_bytes()
    mtime = spec.final_ckpt().stat().st_mtime_ns
    stage_train(spec, resume=True)
    assert spec.final_ckpt().stat().st_mtime_ns == mtime
    stage_train(spec, resume=False)
    assert spec.final_ckpt().read_bytes() == before  # retrain is deterministic


def test_eval_stage_isolated_from_training(data_dir, tmp_path):
    spec = make_spec(data_dir, tmp_path / "run")
    run_pipeline(spec)
    report_path = Path(spec.output_dir) / "reports" / "sro.json"
    original = report_path.read_bytes()
    report_path.unlink()
    stage_eval_tasks(spec)
    assert report_path.read_bytes() == original


def test_none_condition_trains_scoring_head_directly(data_dir, tmp_path):
    spec = make_spec(data_dir, tmp_path / "run", tasks=())
    reports = run_pipeline(spec)
    assert set(reports) == {"scoring_gcdc"}
    assert spec.proxy_ckpt().exists()


def test_dimension_mismatch_checkpoint_rejected(data_dir, tmp_path):
    spec = make_spec(data_dir, tmp_path / "run")
    stage_train(spec)
    bigger = replace(spec, model=ModelConfig(embed_dim=24, hidden_dim=24, biaffine_dim=6))
    from cohkit.model import CheckpointError

    with pytest.raises(CheckpointError, match="dimensions"):
        CoherenceModel.load(spec.final_ckpt(), expect_config=bigger.model)


def test_subset_id_uses_numeric_task_ids():
    assert subset_id(()) == "none"
    assert subset_id(("sro",)) == "1"
    assert subset_id(("nli", "sro", "drr")) == "1+3+5"


def test_ablation_grid_rows_and_determinism(data_dir, tmp_path):
    spec = make_spec(data_dir, tmp_path / "grid", tasks=())
    subsets = [["sro"], ["isr"], []]
    csv_text = run_ablation_grid(spec, subsets)
    lines = csv_text.strip().splitlines()
    assert len(lines) == 4  # header + 3 rows
    assert lines[1].startswith("1,")
    assert lines[3].startswith("none,")
    again = run_ablation_grid(spec, subsets)
    assert again == csv_text
    with pytest.raises(PipelineError):
        run_ablation_grid(spec, [])


def test_cross_domain_runs_both_evaluations(data_dir, tmp_path):
    spec = make_spec(data_dir, tmp_path / "xd", tasks=("sro",), finetune_target=None)
    reports = cross_domain(spec, "gcdc")
    assert set(reports) == {"scoring_gcdc", "scoring_cohesentia"}
    assert reports["scoring_gcdc"].values["in_domain"] == 1.0
    assert reports["scoring_cohesentia"].values["in_domain"] == 0.0
    # counts sum to the configured test-set sizes
    assert reports["scoring_gcdc"].counts["instances"] == 8
    assert reports["scoring_cohesentia"].counts["instances"] == 8
    both = cross_domain(spec, "both")
    assert both["scoring_gcdc"].values["in_domain"] == 1.0
    assert both["scoring_cohesentia"].values["in_domain"] == 1.0
    with pytest.raises(PipelineError):
        cross_domain(spec, "neither")


def test_reasoning_finetune_target(data_dir, tmp_path):
    spec = make_spec(data_dir, tmp_path / "rsn", tasks=("isr",), finetune_target="reasoning")
    reports = run_pipeline(spec)
    assert set(reports) == {"isr", "reasoning"}
    rep = reports["reasoning"]
    for name in ("cohesive", "consistent", "relevant"):
        assert 0.0 <= rep.values[f"{name}_f1"] <= 1.0
        assert rep.values[f"{name}_accuracy"] >= 0.5  # planted markers are learnable
    assert rep.counts["instances"] == 8


def test_cross_validation_scoring(data_dir, tmp_path):
    spec = make_spec(data_dir, tmp_path / "cv", tasks=(), cv_folds=3)
    stage_train(spec)
    reports = stage_eval_scoring(spec)
    rep = reports["scoring_gcdc"]
    assert rep.counts["folds"] == 3
    assert rep.counts["instances"] == 40  # pooled train+dev+test
    assert rep.values["accuracy"] == rep.counts["correct"] / rep.counts["instances"]
