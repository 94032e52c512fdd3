import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialogue_rater.domain import (DialogueAct, Ontology, UserGoal, VenueDB, default_ontology,
                                   generate_database, is_well_formed_user_act, matching_venues,
                                   sample_goal)

ONTO = default_ontology()
DB = generate_database(1, 150, ONTO)

constraint_sets = st.fixed_dictionaries(
    {}, optional={s: st.sampled_from(ONTO.values(s)) for s in ONTO.constraint_slots})


def test_default_ontology_shape(onto):
    assert [len(onto.values(s)) for s in onto.constraint_slots] == [7, 5, 3]
    assert onto.requestable_slots == ("phone", "address", "postcode")
    assert onto.n_summary_actions == 20


def test_duplicate_slots_rejected():
    with pytest.raises(ValueError):
        Ontology(("a", "a"), {"a": ("x",)}, ("b",))
    with pytest.raises(ValueError):
        Ontology(("a",), {"a": ()}, ("b",))


def test_database_default_size(db):
    assert len(db) == 150


def test_database_seeded():
    assert generate_database(1, 150) == generate_database(1, 150)
    assert generate_database(1, 150) != generate_database(2, 150)


def test_database_values_from_ontology(onto):
    db = generate_database(2, 3, onto)
    assert len(db) == 3
    for v in db.venues:
        for s in onto.constraint_slots:
            assert v.constraints[s] in onto.values(s)
        assert set(v.info) == set(onto.requestable_slots)
    assert len({v.name for v in db.venues}) == 3


def test_database_rejects_zero_size():
    with pytest.raises(ValueError):
        generate_database(1, 0)


def test_database_json_roundtrip(db):
    again = VenueDB.loads(db.dumps())
    assert again.venues == db.venues
    assert again.ontology.hash() == db.ontology.hash()


def test_matching_empty_constraints_is_everything(db):
    assert matching_venues(db, {}) == list(db.venues)


def test_matching_impossible_value(db, onto):
    # Any full combination absent from the database yields nothing.
    seen = {tuple(v.constraints[s] for s in onto.constraint_slots) for v in db.venues}
    for f in onto.values("food"):
        for a in onto.values("area"):
            for p in onto.values("pricerange"):
                if (f, a, p) not in seen:
                    assert matching_venues(db, {"food": f, "area": a, "pricerange": p}) == []
                    return
    pytest.skip("database covers every combination")


def test_matching_against_linear_scan(db):
    got = matching_venues(db, {"food": "french"})
    scan = []
    for v in db.venues:
        if v.constraints["food"] == "french":
            scan.append(v)
    assert got == scan and got


def test_matching_unknown_slot(db):
    with pytest.raises(KeyError):
        matching_venues(db, {"colour": "red"})


@given(c1=constraint_sets, c2=constraint_sets)
def test_matching_is_monotone(c1, c2):
    both = {**c2, **c1}  # c1 ⊆ both
    narrow = {v.name for v in matching_venues(DB, both)}
    assert narrow <= {v.name for v in matching_venues(DB, c1)}


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_goal_postconditions(seed):
    rng = np.random.default_rng(seed)
    g = sample_goal(rng, ONTO, DB, 0.0)
    assert g.satisfiable and matching_venues(DB, g.constraints)
    assert 1 <= len(g.constraints) <= 3
    assert 1 <= len(g.requests) <= 3
    assert set(g.requests) <= set(ONTO.requestable_slots)
    assert set(g.constraints) <= set(ONTO.constraint_slots)


def test_unsatisfiable_fraction(db, onto):
    rng = np.random.default_rng(7)
    goals = [sample_goal(rng, onto, db, 0.1) for _ in range(1000)]
    # The flag must agree with a brute-force scan of the database.
    for g in goals:
        brute = any(all(v.constraints[s] == x for s, x in g.constraints.items()) for v in db.venues)
        assert g.satisfiable == brute
    frac = np.mean([not g.satisfiable for g in goals])
    assert abs(frac - 0.1) <= 0.03


def test_goal_probability_range(db, onto, rng):
    with pytest.raises(ValueError):
        sample_goal(rng, onto, db, 1.0)


def test_goal_roundtrip():
    g = UserGoal({"food": "thai"}, ("phone",), True)
    assert UserGoal.from_dict(g.to_dict()) == g


def test_act_rendering_and_wellformedness(onto):
    act = DialogueAct("inform", "food", "thai")
    assert str(act) == "inform(food=thai)"
    assert DialogueAct.from_dict(act.to_dict()) == act
    assert is_well_formed_user_act(act, onto)
    assert is_well_formed_user_act(DialogueAct("request", "phone"), onto)
    assert not is_well_formed_user_act(DialogueAct("request", "food"), onto)
    assert not is_well_formed_user_act(DialogueAct("inform", "food", "pizza"), onto)
    assert not is_well_formed_user_act(DialogueAct("bye", "food"), onto)
