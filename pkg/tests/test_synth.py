from cohkit import synth
from cohkit.corpus import DEFAULT_DRR_LABELS, NPE_NONE, Scale
from cohkit.taskgen import shares_entity


def test_generators_deterministic():
    assert synth.story_paragraphs(5, seed=1) == synth.story_paragraphs(5, seed=1)
    assert synth.drr_instances(5, seed=2) == synth.drr_instances(5, seed=2)
    assert synth.scoring_instances(5, Scale.FIVE_WAY, seed=3) == synth.scoring_instances(
        5, Scale.FIVE_WAY, seed=3
    )
    assert synth.story_paragraphs(5, seed=1) != synth.story_paragraphs(5, seed=2)


def test_story_paragraphs_have_titles_and_unique_ids():
    stories = synth.story_paragraphs(20, seed=4)
    assert len({p.id for p in stories}) == 20
    assert all(p.title for p in stories)
    assert all(3 <= len(p.sentences) <= 6 for p in stories)


def test_distractors_share_name_pool_with_stories():
    stories = synth.story_paragraphs(10, seed=5)
    pool = synth.distractor_paragraphs(40, seed=6)
    hits = sum(
        1 for story in stories if any(shares_entity(s, story) for p in pool for s in p.sentences)
    )
    assert hits == len(stories)


def test_distractor_topics_disjoint_from_story_topics():
    assert not set(synth.STORY_TOPICS) & set(synth.DISTRACTOR_TOPICS)


def test_drr_instances_carry_cot_fields():
    for inst in synth.drr_instances(30, seed=7):
        label = inst.primary_l2()
        assert label in DEFAULT_DRR_LABELS
        assert inst.gold_connector == synth.DRR_CONNECTIVES[label]
        assert inst.gold_l1 == synth.DRR_L1_OF_L2[label]
        assert inst.du2.startswith(inst.gold_connector)


def test_npe_instances_links_match_markers():
    for inst in synth.npe_instances(30, seed=8):
        by_pair = {(a, c): p for a, c, p in inst.links}
        for (a, c), prep in by_pair.items():
            assert prep != NPE_NONE
            marker = synth._NPE_MARKERS[prep]
            start, end = inst.nps[c]
            assert marker in inst.tokens[start:end]


def test_scoring_instances_score_matches_garble_count():
    for inst in synth.scoring_instances(40, Scale.THREE_WAY, seed=9):
        garbled = sum(
            1 for s in inst.paragraph.sentences if any(g in s for g in synth.GARBLE_TOKENS)
        )
        assert inst.gold_score == max(1, 3 - garbled)
        assert inst.paragraph.title


def test_reasoning_instances_markers_match_flags():
    for inst in synth.reasoning_instances(40, seed=10):
        for flag, condition in zip(inst.gold, ("cohesive", "consistent", "relevant")):
            marker = synth.REASONING_MARKERS[condition]
            assert (marker in inst.new_sentence) == (not flag)
