import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from dialogue_rater.domain import DialogueAct, default_ontology
from dialogue_rater.tracker import (belief_vector, belief_width, init_belief, update_belief)

ONTO = default_ontology()


def _acts():
    slot_value = st.sampled_from(ONTO.constraint_slots).flatmap(
        lambda s: st.builds(DialogueAct, st.sampled_from(["inform", "affirm", "negate", "confirm"]),
                            st.just(s), st.sampled_from(ONTO.values(s) + ("dontcare",))))
    request = st.builds(DialogueAct, st.just("request"), st.sampled_from(ONTO.requestable_slots))
    bare = st.builds(DialogueAct, st.sampled_from(["null", "hello", "reqalts", "repeat", "bye"]))
    junk = st.builds(DialogueAct, st.just("inform"), st.just("food"), st.just("pizza"))
    return st.one_of(slot_value, request, bare, junk)


def test_init_is_uniform():
    b = init_belief(ONTO)
    np.testing.assert_allclose(b.slots["food"], np.full(8, 0.125))
    assert not b.requested.any() and b.offered == 0.0
    assert b.method[-1] == 1.0


def test_vector_width():
    b = init_belief(ONTO)
    assert belief_width(ONTO) == (8 + 6 + 4) + 4 + (3 + 1) == 26
    assert belief_vector(b).shape == (26,)


def test_inform_bayes_by_hand():
    b = update_belief(init_belief(ONTO), DialogueAct("inform", "food", "british"), None, 0.85)
    expected = (0.85 * 0.125) / (0.85 * 0.125 + 0.15 / 7 * 0.875)
    assert abs(b.slots["food"][1] - expected) < 1e-12
    assert abs(expected - 0.85) < 1e-3


def test_dontcare_supports_none():
    b = update_belief(init_belief(ONTO), DialogueAct("inform", "area", "dontcare"), None)
    assert b.top_value("area") is None
    assert b.slots["area"][0] > 0.8


def test_null_only_decays_flags():
    b = update_belief(init_belief(ONTO), DialogueAct("request", "phone"), None)
    assert b.requested[0] == 1.0
    c = update_belief(b, DialogueAct("null"), None)
    assert c.requested[0] == 0.9
    for s in ONTO.constraint_slots:
        np.testing.assert_array_equal(c.slots[s], b.slots[s])
    np.testing.assert_array_equal(c.method, b.method)


def test_repeated_inform_increases():
    act = DialogueAct("inform", "food", "thai")
    b1 = update_belief(init_belief(ONTO), act, None)
    b2 = update_belief(b1, act, None)
    k = ONTO.values("food").index("thai") + 1
    assert b2.slots["food"][k] > b1.slots["food"][k]


def test_offer_sets_flag():
    b = update_belief(init_belief(ONTO), DialogueAct("null"), DialogueAct("offer", venue="venue001"))
    assert b.offered == 1.0


def test_unknown_value_ignored_and_counted():
    b0 = init_belief(ONTO)
    b = update_belief(b0, DialogueAct("inform", "food", "pizza"), None)
    assert b.ignored == 1
    np.testing.assert_array_equal(b.slots["food"], b0.slots["food"])


@given(st.lists(_acts(), max_size=15))
def test_blocks_stay_normalised(acts):
    b = init_belief(ONTO)
    for a in acts:
        b = update_belief(b, a, None)
    v = belief_vector(b)
    assert v.shape == (26,)
    assert np.all(v >= 0) and np.all(v <= 1)
    off = 0
    for s in ONTO.constraint_slots:
        n = len(ONTO.values(s)) + 1
        assert abs(v[off:off + n].sum() - 1) < 1e-9
        off += n
    assert abs(v[off:off + 4].sum() - 1) < 1e-9


@given(st.lists(_acts(), max_size=8))
def test_update_is_deterministic(acts):
    b1 = b2 = init_belief(ONTO)
    for a in acts:
        b1 = update_belief(b1, a, None)
        b2 = update_belief(b2, a, None)
    np.testing.assert_array_equal(belief_vector(b1), belief_vector(b2))


def test_several_acts_in_one_turn():
    b0 = update_belief(init_belief(ONTO), DialogueAct("request", "phone"), None)
    both = update_belief(b0, [DialogueAct("inform", "food", "thai"),
                              DialogueAct("request", "address")], None)
    one = update_belief(b0, DialogueAct("inform", "food", "thai"), None)
    np.testing.assert_array_equal(both.slots["food"], one.slots["food"])
    # Flags decay once per turn however many acts arrive.
    assert both.requested[0] == 0.9 and both.requested[1] == 1.0
