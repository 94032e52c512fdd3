"""Agenda-based simulated user, semantic error channel and objective scoring.

Rule table, checked in this order against the system act:

1. bye-when-done / patience abort: if the last turn is reached, or the
   system says bye, the user says bye.
2. respond-to-request: ``request(s)``, ``select(s)`` and ``confirm(s=v)``
   are answered from the goal (``dontcare`` for unconstrained slots,
   affirm/negate for confirmations).
3. correct-bad-offer: an offer (or venue inform) violating a constraint
   gets a corrective inform of the first violated slot.
4. accept-good-offer: a matching offer is answered with a request for a
   pending requested slot; informs about it mark slots as received. Once
   every requested slot is received the user says bye.
5. no-match: a correct no-match claim (unsatisfiable goal) closes the
   dialogue; a wrong one is answered with a constraint.
6. request-pending: anything else pops the agenda (pending informs, then
   pending requests for a good offer).
7. repeat-on-null: with nothing left to pop the user repeats its last act.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import (DONTCARE, SLOT_ACTS, SLOT_VALUE_ACTS, DialogueAct, Ontology, UserGoal,
                     VenueDB, matching_venues)

MAX_TURNS = 30
SUCCESS_REWARD = 20


class DialogueTerminated(RuntimeError):
    pass


@dataclass
class AgendaState:
    goal: UserGoal
    agenda: list[DialogueAct]
    informed: set[str] = field(default_factory=set)
    received: set[str] = field(default_factory=set)
    offered_venue: str | None = None
    last_act: DialogueAct | None = None
    turn: int = 0
    max_turns: int = MAX_TURNS
    terminated: bool = False


def init_dialogue(goal: UserGoal, max_turns: int = MAX_TURNS) -> AgendaState:
    # Stack top is the end of the list: first the opening inform, then the rest.
    slots = list(goal.constraints)
    agenda = [DialogueAct("inform", s, goal.constraints[s]) for s in reversed(slots)]
    if not agenda:
        agenda = [DialogueAct("hello")]
    return AgendaState(goal=goal, agenda=agenda, max_turns=max_turns)


def _violations(goal: UserGoal, venue, db: VenueDB) -> list[str]:
    if not goal.satisfiable:
        # Any concrete venue is wrong; point at the first constraint.
        return list(goal.constraints)[:1]
    return [s for s in db.ontology.constraint_slots
            if s in goal.constraints and venue.constraints[s] != goal.constraints[s]]


def _drop_pending_inform(state: AgendaState, slot: str) -> None:
    state.agenda = [a for a in state.agenda if not (a.type == "inform" and a.slot == slot)]


def _inform(state: AgendaState, slot: str) -> DialogueAct:
    state.informed.add(slot)
    _drop_pending_inform(state, slot)
    return DialogueAct("inform", slot, state.goal.constraints[slot])


def _next_request(state: AgendaState, rng: np.random.Generator) -> DialogueAct | None:
    pending = [s for s in state.goal.requests if s not in state.received]
    if not pending:
        return None
    return DialogueAct("request", pending[int(rng.integers(len(pending)))])


def _offer_ok(state: AgendaState, db: VenueDB) -> bool:
    if state.offered_venue is None:
        return False
    return not _violations(state.goal, db[state.offered_venue], db)


def _respond(state: AgendaState, sys_act: DialogueAct, db: VenueDB,
             rng: np.random.Generator) -> DialogueAct:
    goal = state.goal
    t = sys_act.type

    if state.turn >= state.max_turns or t == "bye":
        return DialogueAct("bye")

    if t in ("request", "select"):
        if sys_act.slot in goal.constraints:
            return _inform(state, sys_act.slot)
        return DialogueAct("inform", sys_act.slot, DONTCARE)

    if t == "confirm":
        slot = sys_act.slot
        if slot in goal.constraints:
            state.informed.add(slot)
            _drop_pending_inform(state, slot)
            if sys_act.value == goal.constraints[slot]:
                return DialogueAct("affirm", slot, sys_act.value)
            return DialogueAct("negate", slot, goal.constraints[slot])
        if sys_act.value == DONTCARE:
            return DialogueAct("affirm", slot, DONTCARE)
        return DialogueAct("negate", slot, DONTCARE)

    if t in ("offer", "inform") and sys_act.venue is not None:
        if sys_act.venue != state.offered_venue:
            state.offered_venue = sys_act.venue
            state.received = set()
        bad = _violations(goal, db[sys_act.venue], db)
        if bad:
            return _inform(state, bad[0])
        if t == "inform" and sys_act.slot in goal.requests:
            state.received.add(sys_act.slot)
        nxt = _next_request(state, rng)
        return nxt if nxt is not None else DialogueAct("bye")

    if t == "no_match":
        if not goal.satisfiable:
            return DialogueAct("bye")
        return _inform(state, next(iter(goal.constraints)))

    if t == "repeat" and state.last_act is not None:
        return state.last_act

    # request-pending: pop the agenda, then chase an open offer.
    if state.agenda:
        act = state.agenda.pop()
        if act.type == "inform":
            state.informed.add(act.slot)
        return act
    if state.offered_venue is not None:
        if _offer_ok(state, db):
            nxt = _next_request(state, rng)
            if nxt is not None:
                return nxt
        else:
            return _inform(state, _violations(goal, db[state.offered_venue], db)[0])
    if state.last_act is not None:
        return state.last_act
    return DialogueAct("null")


def user_respond(state: AgendaState, system_act: DialogueAct, rng: np.random.Generator,
                 db: VenueDB) -> DialogueAct:
    """Produce the true user act for this turn and advance the agenda."""
    if state.terminated:
        raise DialogueTerminated("user_respond called after the dialogue ended")
    state.turn += 1
    act = _respond(state, system_act, db, rng)
    state.last_act = act
    if act.type == "bye" or state.turn >= state.max_turns:
        state.terminated = True
    return act


@dataclass(frozen=True)
class ErrorChannelConfig:
    ser: float = 0.15
    p_type_substitution: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.ser <= 1.0:
            raise ValueError("ser must be in [0, 1]")
        if not 0.0 <= self.p_type_substitution <= 1.0:
            raise ValueError("p_type_substitution must be in [0, 1]")


def _fill_args(act_type: str, slot: str | None, value: str | None, ontology: Ontology,
               rng: np.random.Generator) -> DialogueAct:
    if act_type in SLOT_VALUE_ACTS:
        if slot not in ontology.constraint_slots:
            slot = ontology.constraint_slots[rng.integers(len(ontology.constraint_slots))]
            value = None
        if value is None:
            value = ontology.values(slot)[rng.integers(len(ontology.values(slot)))]
        return DialogueAct(act_type, slot, value)
    if act_type in SLOT_ACTS:
        if slot not in ontology.requestable_slots:
            slot = ontology.requestable_slots[rng.integers(len(ontology.requestable_slots))]
        return DialogueAct(act_type, slot)
    return DialogueAct(act_type)


def _substitute_type(act: DialogueAct, ontology: Ontology, rng: np.random.Generator) -> DialogueAct:
    others = [a for a in ontology.user_act_types if a != act.type]
    new_type = others[rng.integers(len(others))]
    return _fill_args(new_type, act.slot, act.value, ontology, rng)


def _substitute_value(act: DialogueAct, ontology: Ontology, rng: np.random.Generator) -> DialogueAct:
    if act.type in SLOT_VALUE_ACTS:
        pool = [v for v in ontology.values(act.slot) + (DONTCARE,) if v != act.value]
        return DialogueAct(act.type, act.slot, pool[rng.integers(len(pool))])
    pool = [s for s in ontology.requestable_slots if s != act.slot]
    return DialogueAct(act.type, pool[rng.integers(len(pool))])


def corrupt_act(act: DialogueAct, config: ErrorChannelConfig, rng: np.random.Generator,
                ontology: Ontology) -> DialogueAct:
    """With probability ``config.ser`` replace the act type or its slot value.

    Acts without arguments can only have their type substituted.
    """
    if rng.random() >= config.ser:
        return act
    has_args = act.type in SLOT_VALUE_ACTS or act.type in SLOT_ACTS
    if has_args and rng.random() >= config.p_type_substitution:
        return _substitute_value(act, ontology, rng)
    return _substitute_type(act, ontology, rng)


@dataclass(frozen=True)
class Turn:
    summary_action: int
    sys_act: DialogueAct
    true_user_act: DialogueAct
    observed_user_act: DialogueAct
    masked: bool = False

    def to_dict(self) -> dict:
        return {"summary_action": self.summary_action, "sys_act": self.sys_act.to_dict(),
                "true_user_act": self.true_user_act.to_dict(),
                "observed_user_act": self.observed_user_act.to_dict(), "masked": self.masked}

    @classmethod
    def from_dict(cls, d: dict) -> "Turn":
        return cls(d["summary_action"], DialogueAct.from_dict(d["sys_act"]),
                   DialogueAct.from_dict(d["true_user_act"]),
                   DialogueAct.from_dict(d["observed_user_act"]), d.get("masked", False))


@dataclass(frozen=True)
class DialogueOutcome:
    success: bool
    num_turns: int
    ret: int

    def to_dict(self) -> dict:
        return {"success": self.success, "N": self.num_turns, "return": self.ret}

    @classmethod
    def from_dict(cls, d: dict) -> "DialogueOutcome":
        return cls(bool(d["success"]), int(d["N"]), int(d["return"]))


def objective_success(log: list[Turn], goal: UserGoal, db: VenueDB,
                      max_turns: int = MAX_TURNS) -> bool:
    """Did the system serve the goal, judged with full knowledge of it?

    Satisfiable goals need a final offered venue that matches every
    constraint with every requested slot informed for it afterwards.
    Unsatisfiable goals need a no-match claim not followed by any offer.
    """
    if not log or len(log) > max_turns:
        return False
    sys_acts = [t.sys_act for t in log]
    offer_idx = [i for i, a in enumerate(sys_acts) if a.type in ("offer", "inform")
                 and a.venue is not None]
    if not goal.satisfiable:
        nomatch = [i for i, a in enumerate(sys_acts) if a.type == "no_match"]
        return bool(nomatch) and (not offer_idx or nomatch[-1] > offer_idx[-1])
    if not offer_idx:
        return False
    venue = sys_acts[offer_idx[-1]].venue
    if any(db[venue].constraints[s] != val for s, val in goal.constraints.items()):
        return False
    told = set()
    for i in reversed(offer_idx):
        if sys_acts[i].venue != venue:
            break
        if sys_acts[i].type == "inform":
            told.add(sys_acts[i].slot)
    return set(goal.requests) <= told


def compute_return(success: bool, num_turns: int, max_turns: int = MAX_TURNS) -> int:
    if not 1 <= num_turns <= max_turns:
        raise ValueError(f"num_turns must be in [1, {max_turns}], got {num_turns}")
    return SUCCESS_REWARD * int(bool(success)) - num_turns
