import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dialogue_rater.domain import default_ontology, generate_database, sample_goal
from dialogue_rater.features import DialogueFeatureSequence
from dialogue_rater.harness import (CorpusSpec, LearningCurve, ObjectiveReward, RaterReward,
                                    evaluate_rater, generate_corpus, make_policy, moving_average,
                                    oracle_policy, read_corpus, run_dialogue, train_policy_online)
from dialogue_rater.rater import Head, build_rater, predict_success
from dialogue_rater.simulator import DialogueOutcome, compute_return

ONTO = default_ontology()
DB = generate_database(1, 150, ONTO)


def test_balanced_corpus():
    for n in (100, 35):
        c = generate_corpus(CorpusSpec(n, 0.15, balance=True, policy="random", seed=3), DB)
        succ = sum(r.outcome.success for r in c.records)
        assert len(c.records) == n
        assert abs(succ - (n - succ)) <= 1
        assert not c.warnings


def test_balance_shortfall_warns():
    # A noiseless oracle never fails, so the failure half can not be filled.
    c = generate_corpus(CorpusSpec(10, 0.0, balance=True, policy="oracle", seed=0), DB)
    assert len(c.records) == 5 and c.warnings
    assert all(r.outcome.success for r in c.records)


def test_corpus_is_byte_identical():
    spec = CorpusSpec(30, [0.0, 0.3], policy="scratch", seed=9, n_policies=2)
    a, b = generate_corpus(spec, DB).to_jsonl(), generate_corpus(spec, DB).to_jsonl()
    assert a == b
    assert generate_corpus(CorpusSpec(30, [0.0, 0.3], policy="scratch", seed=10,
                                      n_policies=2), DB).to_jsonl() != a


def test_corpus_roundtrip_and_header():
    c = generate_corpus(CorpusSpec(12, 0.15, policy="random", seed=1), DB)
    header, seqs = read_corpus(c.to_jsonl().splitlines())
    assert header["F"] == 57 and header["ontology_hash"] == ONTO.hash()
    assert header["format_version"] == 1
    assert len(seqs) == 12
    for s, r in zip(seqs, c.records):
        np.testing.assert_array_equal(s.turns, r.features)
        assert s.label == r.outcome


def test_oracle_succeeds_without_noise():
    c = generate_corpus(CorpusSpec(200, 0.0, policy="oracle", seed=4), DB)
    assert all(r.outcome.success for r in c.records)


def test_spec_validation():
    with pytest.raises(ValueError):
        CorpusSpec(0)
    with pytest.raises(ValueError):
        CorpusSpec(5, [0.1, 1.2])
    with pytest.raises(ValueError):
        CorpusSpec(5, policy="human")


def _seq(n, success):
    return DialogueFeatureSequence(np.zeros((n, 57)),
                                   DialogueOutcome(success, n, compute_return(success, n)))


def test_evaluate_rater_oracle_and_constant():
    c = generate_corpus(CorpusSpec(40, 0.15, balance=True, policy="random", seed=2), DB)
    seqs = c.sequences()
    assert evaluate_rater(lambda s: (s.label.success, s.label.ret), seqs) == \
        {"accuracy": 1.0, "rmse": 0.0, "n": 40}
    m = evaluate_rater(lambda s: (False, -len(s)), seqs)
    assert abs(m["accuracy"] - 0.5) <= 1 / 40


def test_evaluate_rater_hand_fixture():
    seqs = [_seq(4, True), _seq(10, False), _seq(6, True), _seq(30, False)]
    # Returns 16, -10, 14, -30; predictions below miss the third label.
    preds = iter([(True, 15.0), (False, -10.0), (False, -6.0), (False, -27.0)])
    m = evaluate_rater(lambda s: next(preds), seqs)
    assert m["accuracy"] == 0.75
    assert m["rmse"] == pytest.approx(np.sqrt((1 + 0 + 400 + 9) / 4))
    with pytest.raises(ValueError):
        evaluate_rater(lambda s: (True, 0.0), [])


def test_evaluate_rater_with_model():
    c = generate_corpus(CorpusSpec(10, 0.15, policy="random", seed=5), DB)
    model = build_rater("rnn", 57, Head("regress"), seed=0, hidden=8)
    m = evaluate_rater(model, c.sequences())
    assert 0.0 <= m["accuracy"] <= 1.0 and m["rmse"] >= 0


def test_moving_average_examples():
    assert moving_average([0, 10], 2) == [0, 5]
    assert moving_average([3.0] * 7, 4) == [3.0] * 7
    assert moving_average([], 5) == []
    with pytest.raises(ValueError):
        moving_average([1], 0)


@given(st.lists(st.floats(-100, 100), max_size=30))
def test_moving_average_window_one_is_identity(xs):
    np.testing.assert_allclose(moving_average(xs, 1), xs, atol=1e-9)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30), st.integers(1, 40))
def test_moving_average_matches_loop(xs, w):
    oracle = [sum(xs[max(0, i - w + 1):i + 1]) / len(xs[max(0, i - w + 1):i + 1])
              for i in range(len(xs))]
    np.testing.assert_allclose(moving_average(xs, w), oracle, atol=1e-9)


def test_zero_dialogues_leave_policy_untouched():
    pol, curve = train_policy_online(ObjectiveReward(DB), DB, 0, 0.15, seed=0)
    assert len(pol) == 0 and curve.reward == [] and curve.discarded == 0


def test_rater_reward_is_goal_blind():
    model = build_rater("rnn", 57, Head("binary"), seed=0, hidden=8)
    _, curve = train_policy_online(RaterReward(model), DB, 15, 0.15, seed=1)
    assert curve.goal_reads_by_reward == 0
    assert curve.discarded == 0 and len(curve.reward) == 15
    _, curve = train_policy_online(ObjectiveReward(DB), DB, 15, 0.15, seed=1)
    assert curve.goal_reads_by_reward == 15


@pytest.mark.parametrize("head", ["binary", "class", "regress"])
def test_rater_reward_totals(head):
    model = build_rater("rnn", 57, Head(head), seed=1, hidden=8)
    src = RaterReward(model)
    rng = np.random.default_rng(0)
    for _ in range(10):
        rec = run_dialogue(make_policy(ONTO), sample_goal(rng, ONTO, DB), DB, 0.15, rng)
        r = src.rewards(rec)
        label, ret = predict_success(model, rec.features)
        assert len(r) == rec.num_turns
        if head == "binary":
            assert sum(r) == 20 * label - rec.num_turns
            assert all(x == -1.0 for x in r[:-1])
        else:
            assert sum(r) == pytest.approx(ret) and all(x == 0.0 for x in r[:-1])


def test_objective_reward_matches_return():
    rng = np.random.default_rng(3)
    src = ObjectiveReward(DB)
    for _ in range(10):
        rec = run_dialogue(oracle_policy(DB), sample_goal(rng, ONTO, DB), DB, 0.15, rng)
        assert sum(src.rewards(rec)) == rec.outcome.ret


def test_acceptance_filter_discards():
    src = ObjectiveReward(DB, accept=lambda rec: rec.outcome.success)
    pol, curve = train_policy_online(src, DB, 10, 0.15, seed=2)
    assert curve.discarded == sum(not s for s in curve.success)


def test_rater_width_mismatch_rejected():
    model = build_rater("rnn", 12, Head("binary"), seed=0, hidden=4)
    with pytest.raises(ValueError):
        train_policy_online(RaterReward(model), DB, 1, 0.15)


def test_curve_csv_columns():
    curve = LearningCurve([1.0, 3.0], [1.0, -2.0], [4, 2], [True, False], [True, True])
    lines = curve.to_csv(window=2).splitlines()
    assert lines[0].split(",")[:6] == ["dialogue_index", "reward", "turns", "objective_success",
                                       "ma_reward", "ma_turns"]
    assert lines[2].split(",")[:6] == ["1", "3.0", "2", "0", "2.0", "3.0"]
