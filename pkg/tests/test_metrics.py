import random

import pytest

from cohkit.metrics import (
    EvalReport,
    MetricError,
    accuracy,
    accuracy_report,
    drr_accuracy,
    drr_report,
    npe_prf,
    npe_report,
    order_report,
    pmr,
    reasoning_prf,
    reasoning_report,
    sentence_acc,
)


def test_pmr_exact():
    orders = [(0, 1, 2), (2, 1, 0)]
    assert pmr(orders, orders) == 1.0


def test_worked_example_pmr_zero_acc_half():
    gold = [(2, 4, 3, 1)]
    pred = [(2, 3, 4, 1)]
    assert pmr(pred, gold) == 0.0
    assert sentence_acc(pred, gold) == 0.5


def test_sentence_acc_identical():
    orders = [(1, 0), (0, 1, 2)]
    assert sentence_acc(orders, orders) == 1.0


def test_order_metric_length_mismatch():
    with pytest.raises(MetricError):
        pmr([(0, 1)], [(0, 1), (1, 0)])
    with pytest.raises(MetricError):
        sentence_acc([(0, 1)], [(0, 1, 2)])


def test_order_metrics_recount_oracle():
    rng = random.Random(5)
    for _ in range(1000):
        n_inst = rng.randint(1, 6)
        gold, pred = [], []
        for _ in range(n_inst):
            n = rng.randint(1, 6)
            g = list(range(n))
            rng.shuffle(g)
            p = list(range(n))
            rng.shuffle(p)
            gold.append(tuple(g))
            pred.append(tuple(p))
        # naive recount
        exact = sum(1 for p, g in zip(pred, gold) if p == g)
        acc_sum = 0.0
        for p, g in zip(pred, gold):
            acc_sum += sum(1 for a, b in zip(p, g) if a == b) / len(g)
        assert pmr(pred, gold) == pytest.approx(exact / n_inst)
        assert sentence_acc(pred, gold) == pytest.approx(acc_sum / n_inst)


def test_pmr_never_exceeds_acc():
    rng = random.Random(6)
    for _ in range(300):
        n_inst = rng.randint(1, 8)
        gold, pred = [], []
        for _ in range(n_inst):
            n = rng.randint(1, 5)
            g = list(range(n))
            rng.shuffle(g)
            p = list(g)
            if rng.random() < 0.7:
                rng.shuffle(p)
            gold.append(tuple(g))
            pred.append(tuple(p))
        assert 0.0 <= pmr(pred, gold) <= sentence_acc(pred, gold) <= 1.0


def test_drr_accuracy_multilabel():
    assert drr_accuracy(["Cause"], [{"Cause", "Concession"}]) == 1.0
    assert drr_accuracy(["Contrast"], [{"Cause"}]) == 0.0
    with pytest.raises(MetricError):
        drr_accuracy(["Cause"], [set()])


def test_drr_accuracy_recount_oracle():
    rng = random.Random(7)
    labels = ["Cause", "Contrast", "Conjunction", "Concession"]
    for _ in range(200):
        n = rng.randint(1, 30)
        preds = [rng.choice(labels) for _ in range(n)]
        golds = [set(rng.sample(labels, rng.randint(1, 3))) for _ in range(n)]
        expected = sum(1 for p, g in zip(preds, golds) if p in g) / n
        assert drr_accuracy(preds, golds) == pytest.approx(expected)


def test_npe_prf_worked_example():
    gold = {("birth", "Denmark", "in"), ("birth", "male child", "of")}
    assert npe_prf(gold, gold) == (1.0, 1.0, 1.0)


def test_npe_prf_empty_prediction_convention():
    gold = {("a", "b", "in")}
    assert npe_prf(set(), gold) == (0.0, 0.0, 0.0)


def test_npe_prf_wrong_preposition_is_fp_and_fn():
    gold = {("a", "b", "in")}
    pred = {("a", "b", "of")}
    p, r, f1 = npe_prf(pred, gold)
    assert (p, r, f1) == (0.0, 0.0, 0.0)
    # adding a correct link: the wrong-preposition one still costs precision
    pred = {("a", "b", "of"), ("c", "d", "in")}
    gold = {("a", "b", "in"), ("c", "d", "in")}
    p, r, f1 = npe_prf(pred, gold)
    assert p == pytest.approx(0.5)
    assert r == pytest.approx(0.5)


def test_npe_prf_duplicates_rejected():
    with pytest.raises(MetricError):
        npe_prf([("a", "b", "in"), ("a", "b", "in")], set())


def test_npe_prf_recount_oracle():
    rng = random.Random(8)
    preps = ["in", "of", "at", "with"]
    for _ in range(1000):
        universe = [(f"n{i}", f"n{j}", p) for i in range(4) for j in range(4) if i != j for p in preps]
        pred = set(rng.sample(universe, rng.randint(0, 10)))
        gold = set(rng.sample(universe, rng.randint(0, 10)))
        p, r, f1 = npe_prf(pred, gold)
        tp = len(pred & gold)
        exp_p = tp / len(pred) if pred else 0.0
        exp_r = tp / len(gold) if gold else 0.0
        exp_f = 2 * exp_p * exp_r / (exp_p + exp_r) if exp_p + exp_r else 0.0
        assert (p, r, f1) == pytest.approx((exp_p, exp_r, exp_f))


def test_accuracy_basic():
    assert accuracy(["contradiction"], ["contradiction"]) == 1.0
    assert accuracy([1, 2, 3], [1, 2, 4]) == pytest.approx(2 / 3)
    with pytest.raises(MetricError):
        accuracy([1], [1, 2])


def test_accuracy_recount_oracle():
    rng = random.Random(9)
    for _ in range(1000):
        n = rng.randint(1, 40)
        preds = [rng.randint(0, 3) for _ in range(n)]
        golds = [rng.randint(0, 3) for _ in range(n)]
        expected = sum(p == g for p, g in zip(preds, golds)) / n
        assert accuracy(preds, golds) == pytest.approx(expected)


def test_reasoning_prf_perfect():
    golds = [(True, False, True), (False, True, True)]
    out = reasoning_prf(golds, golds)
    for name in ("cohesive", "consistent", "relevant"):
        assert out[name] == (1.0, 1.0, 1.0)


def test_reasoning_prf_all_positive_on_balanced():
    golds = [(True, True, True), (False, False, False)] * 10
    preds = [(True, True, True)] * 20
    out = reasoning_prf(preds, golds)
    for name in ("cohesive", "consistent", "relevant"):
        p, r, f1 = out[name]
        assert p == pytest.approx(0.5)
        assert r == pytest.approx(1.0)


def test_reasoning_prf_recount_oracle():
    rng = random.Random(10)
    for _ in range(500):
        n = rng.randint(1, 25)
        preds = [tuple(rng.random() < 0.5 for _ in range(3)) for _ in range(n)]
        golds = [tuple(rng.random() < 0.5 for _ in range(3)) for _ in range(n)]
        out = reasoning_prf(preds, golds)
        for c, name in enumerate(("cohesive", "consistent", "relevant")):
            tp = sum(1 for p, g in zip(preds, golds) if p[c] and g[c])
            fp = sum(1 for p, g in zip(preds, golds) if p[c] and not g[c])
            fn = sum(1 for p, g in zip(preds, golds) if not p[c] and g[c])
            ep = tp / (tp + fp) if tp + fp else 0.0
            er = tp / (tp + fn) if tp + fn else 0.0
            ef = 2 * ep * er / (ep + er) if ep + er else 0.0
            assert out[name] == pytest.approx((ep, er, ef))


def test_metrics_invariant_to_instance_order():
    gold = [(0, 1, 2), (1, 0, 2), (2, 1, 0)]
    pred = [(0, 1, 2), (0, 1, 2), (2, 1, 0)]
    rev = list(reversed(list(zip(pred, gold))))
    assert pmr(pred, gold) == pmr([p for p, _ in rev], [g for _, g in rev])
    assert sentence_acc(pred, gold) == sentence_acc([p for p, _ in rev], [g for _, g in rev])


def test_report_ratios_recomputable():
    gold = [(2, 4, 3, 1), (0, 1)]
    pred = [(2, 3, 4, 1), (0, 1)]
    rep = order_report(pred, gold)
    assert rep.values["pmr"] == rep.counts["exact_match"] / rep.counts["instances"]
    assert rep.n_instances == 2

    rep = accuracy_report([1, 2], [1, 3], task="nli")
    assert rep.values["accuracy"] == rep.counts["correct"] / rep.counts["instances"]

    rep = drr_report(["Cause"], [{"Cause"}])
    assert rep.values["accuracy"] == rep.counts["correct"] / rep.counts["instances"]

    rep = npe_report({("a", "b", "in")}, {("a", "b", "in"), ("c", "d", "of")}, n_instances=2)
    assert rep.values["precision"] == rep.counts["true_positives"] / rep.counts["predicted_links"]
    assert rep.values["recall"] == rep.counts["true_positives"] / rep.counts["gold_links"]

    rep = reasoning_report([(True, False, True)], [(True, True, True)])
    tp = rep.counts["cohesive_tp"]
    assert rep.values["cohesive_precision"] == tp / (tp + rep.counts["cohesive_fp"])


def test_report_json_round_trip(tmp_path):
    rep = accuracy_report([1, 2, 3], [1, 2, 3], task="nli")
    path = tmp_path / "report.json"
    rep.save(path)
    again = EvalReport.load(path)
    assert again == rep
