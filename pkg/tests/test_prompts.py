import json
import random
import re

import pytest

from cohkit.corpus import (
    CONDITIONS,
    DrrInstance,
    IsrInstance,
    NliInstance,
    NpeInstance,
    Paragraph,
    ReasoningInstance,
    Scale,
    ScoringInstance,
    SroInstance,
    Task,
)
from cohkit.prompts import (
    TEMPLATES,
    UNPARSEABLE,
    PromptError,
    dump_templates,
    is_unparseable,
    parse_output,
    render_prompt,
    render_target,
)
from cohkit import synth


def test_template_placeholders_render_exactly_once():
    for key, pattern in TEMPLATES.items():
        placeholders = re.findall(r"\{(\w+)\}", pattern)
        assert placeholders, key
        assert len(placeholders) == len(set(placeholders)), key


def test_sro_prompt_two_sentences():
    inst = SroInstance(shuffled=("First one.", "Second one."), gold_positions=(1, 0))
    prompt = render_prompt(Task.SRO, inst)
    assert prompt == (
        "reorder: what is the order of the sentences so that the paragraph is "
        "coherent? sentence 1: First one. sentence 2: Second one."
    )


def test_isr_prompt_numbering():
    inst = IsrInstance(sentences=("a one.", "b two.", "c three."), irrelevant_index=1)
    prompt = render_prompt(Task.ISR, inst)
    assert "relevance: what is the irrelevant sentence in the text?" in prompt
    assert "sentence1: a one." in prompt
    assert "sentence3: c three." in prompt


def test_npe_prompt_mentions_both_nps():
    inst = NpeInstance(
        tokens=("the", "birth", "in", "Denmark"),
        nps=((0, 2), (3, 4)),
        links=((0, 1, "in"),),
    )
    prompt = render_prompt(Task.NPE, inst, np_pair=(0, 1))
    assert "what are the preposition relations between" in prompt
    assert "the birth" in prompt and "Denmark" in prompt
    with pytest.raises(PromptError):
        render_prompt(Task.NPE, inst)


def test_scoring_prompt_requires_title_on_five_way():
    p_untitled = Paragraph(id="p", sentences=("hello there.",))
    inst = ScoringInstance(paragraph=p_untitled, scale=Scale.FIVE_WAY, gold_score=3)
    with pytest.raises(PromptError):
        render_prompt(Task.SCORING, inst)
    p_titled = Paragraph(id="p", sentences=("hello there.",), title="Greetings")
    inst = ScoringInstance(paragraph=p_titled, scale=Scale.FIVE_WAY, gold_score=3)
    assert "title: Greetings" in render_prompt(Task.SCORING, inst)
    assert "(5 - high, 1 - low)" in render_prompt(Task.SCORING, inst)


def test_scoring_prompt_three_way_has_no_title():
    p = Paragraph(id="p", sentences=("hello there.",))
    inst = ScoringInstance(paragraph=p, scale=Scale.THREE_WAY, gold_score=2)
    prompt = render_prompt(Task.SCORING, inst)
    assert "(3 - high, 1 - low)" in prompt
    assert "title" not in prompt


def test_reasoning_prompt_needs_condition():
    inst = ReasoningInstance(prefix=("Once upon a time.",), new_sentence="The end.", gold=(1, 1, 0))
    with pytest.raises(PromptError):
        render_prompt(Task.REASONING, inst)
    prompt = render_prompt(Task.REASONING, inst, condition="cohesive")
    assert "is the new sentence cohesive" in prompt
    prompt = render_prompt(Task.REASONING, inst, condition="consistent")
    assert "is the new sentence consistent" in prompt


def test_prompts_byte_stable():
    inst = NliInstance(premise="It rained.", hypothesis="It was wet.", gold="entailment")
    assert render_prompt(Task.NLI, inst) == render_prompt(Task.NLI, inst)


def test_sro_target_markers_one_based():
    inst = SroInstance(
        shuffled=("d sent", "a sent", "c sent", "b sent"), gold_positions=(1, 3, 2, 0)
    )
    assert render_target(Task.SRO, inst) == "[2, 4, 3, 1]"


def test_reasoning_target_selects_condition():
    inst = ReasoningInstance(prefix=("p.",), new_sentence="s.", gold=(True, False, True))
    assert render_target(Task.REASONING, inst, condition="cohesive") == "Yes"
    assert render_target(Task.REASONING, inst, condition="consistent") == "No"
    assert render_target(Task.REASONING, inst, condition="relevant") == "Yes"


def test_nli_target_forms():
    inst = NliInstance(premise="p", hypothesis="h", gold="contradiction")
    assert render_target(Task.NLI, inst) == "Contradict"
    inst = NliInstance(premise="p", hypothesis="h", gold="entailment")
    assert render_target(Task.NLI, inst) == "Entails"


def test_drr_target_cot_shape():
    inst = DrrInstance(
        du1="a", du2="b", gold_l2=frozenset(["Cause"]), gold_connector="so", gold_l1="Contingency"
    )
    assert render_target(Task.DRR, inst) == "so -> Contingency -> Cause"


def test_parse_output_tolerance():
    assert parse_output(Task.REASONING, " YES ") is True
    assert parse_output(Task.REASONING, "no.") is False
    assert is_unparseable(parse_output(Task.REASONING, "maybe"))
    assert parse_output(Task.SRO, "[2,4,3,1]") == (1, 3, 2, 0)
    assert parse_output(Task.SRO, "2, 4, 3, 1") == (1, 3, 2, 0)
    assert is_unparseable(parse_output(Task.SRO, "banana"))
    assert is_unparseable(parse_output(Task.SRO, "[0, 1]"))
    assert parse_output(Task.NLI, "contradict") == "contradiction"
    assert parse_output(Task.NLI, " Entails ") == "entailment"
    assert is_unparseable(parse_output(Task.NLI, "banana"))
    assert parse_output(Task.ISR, "3") == 2
    assert parse_output(Task.SCORING, "score: 4") == 4
    assert parse_output(Task.DRR, "so -> Contingency -> Cause") == "Cause"
    assert is_unparseable(parse_output(Task.DRR, "Cause"))
    assert not UNPARSEABLE


def _round_trip_cases(n=100):
    rng = random.Random(99)
    cases = []
    stories = synth.story_paragraphs(n, seed=1)
    from cohkit.taskgen import make_sro

    for k in range(n):
        inst = make_sro(stories[k], seed=k)
        cases.append((Task.SRO, inst, {}, inst.gold_positions))
    pool = synth.distractor_paragraphs(50, seed=2)
    from cohkit.taskgen import make_isr

    for k in range(n):
        inst = make_isr(stories[k], pool, seed=k)
        cases.append((Task.ISR, inst, {}, inst.irrelevant_index))
    for inst in synth.drr_instances(n, seed=3):
        cases.append((Task.DRR, inst, {}, inst.primary_l2()))
    for inst in synth.npe_instances(n, seed=4):
        pair = (0, 1 + rng.randrange(3))
        by_pair = {(a, c): p for a, c, p in inst.links}
        cases.append((Task.NPE, inst, {"np_pair": pair}, by_pair.get(pair, "NONE")))
    for inst in synth.nli_instances(n, seed=5):
        cases.append((Task.NLI, inst, {}, inst.gold))
    for inst in synth.scoring_instances(n // 2, Scale.THREE_WAY, seed=6):
        cases.append((Task.SCORING, inst, {}, inst.gold_score))
    for inst in synth.scoring_instances(n // 2, Scale.FIVE_WAY, seed=7):
        cases.append((Task.SCORING, inst, {}, inst.gold_score))
    for inst in synth.reasoning_instances(n, seed=8):
        c = rng.choice(CONDITIONS)
        cases.append(
            (Task.REASONING, inst, {"condition": c}, inst.gold[CONDITIONS.index(c)])
        )
    return cases


def test_parse_render_round_trip_all_tasks():
    for task, inst, kwargs, gold_prediction in _round_trip_cases():
        rendered = render_target(task, inst, **kwargs)
        parsed = parse_output(task, rendered)
        assert parsed == gold_prediction, (task, rendered, parsed, gold_prediction)


def test_dump_templates(tmp_path):
    path = tmp_path / "templates.json"
    dump_templates(path)
    data = json.loads(path.read_text())
    assert data["templates"] == TEMPLATES
    assert data["version"] == 1
