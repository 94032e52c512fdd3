"""Toy restaurant ontology, synthetic venue database and user goal sampling."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

DB_FORMAT_VERSION = 1
DONTCARE = "dontcare"

# Acts that carry a (slot, value) pair, a bare slot, or nothing.
SLOT_VALUE_ACTS = ("inform", "confirm", "affirm", "negate")
SLOT_ACTS = ("request",)

DEFAULT_USER_ACT_TYPES = (
    "null", "hello", "inform", "request", "confirm",
    "affirm", "negate", "reqalts", "repeat", "bye",
)


@dataclass(frozen=True)
class Ontology:
    constraint_slots: tuple[str, ...]
    slot_values: Mapping[str, tuple[str, ...]]
    requestable_slots: tuple[str, ...]
    user_act_types: tuple[str, ...] = DEFAULT_USER_ACT_TYPES
    summary_actions: tuple[str, ...] = ()

    def __post_init__(self):
        names = list(self.constraint_slots) + list(self.requestable_slots)
        if len(set(names)) != len(names):
            raise ValueError("slot names must be unique")
        for slot in self.constraint_slots:
            vals = self.slot_values.get(slot)
            if not vals:
                raise ValueError(f"slot {slot!r} has no values")
            if len(set(vals)) != len(vals) or DONTCARE in vals:
                raise ValueError(f"bad value set for slot {slot!r}")
        if set(self.slot_values) != set(self.constraint_slots):
            raise ValueError("slot_values must cover exactly the constraint slots")
        if len(set(self.user_act_types)) != len(self.user_act_types):
            raise ValueError("duplicate user act types")
        if not self.summary_actions:
            object.__setattr__(self, "summary_actions", default_summary_actions(
                self.constraint_slots, self.requestable_slots))
        if len(set(self.summary_actions)) != len(self.summary_actions):
            raise ValueError("duplicate summary actions")

    @property
    def n_user_acts(self) -> int:
        return len(self.user_act_types)

    @property
    def n_summary_actions(self) -> int:
        return len(self.summary_actions)

    def values(self, slot: str) -> tuple[str, ...]:
        return self.slot_values[slot]

    def to_dict(self) -> dict:
        return {
            "constraint_slots": list(self.constraint_slots),
            "slot_values": {s: list(self.slot_values[s]) for s in self.constraint_slots},
            "requestable_slots": list(self.requestable_slots),
            "user_act_types": list(self.user_act_types),
            "summary_actions": list(self.summary_actions),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ontology":
        return cls(
            constraint_slots=tuple(d["constraint_slots"]),
            slot_values={s: tuple(v) for s, v in d["slot_values"].items()},
            requestable_slots=tuple(d["requestable_slots"]),
            user_act_types=tuple(d["user_act_types"]),
            summary_actions=tuple(d["summary_actions"]),
        )

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def default_summary_actions(constraint_slots: Iterable[str],
                            requestable_slots: Iterable[str]) -> tuple[str, ...]:
    cs, rs = list(constraint_slots), list(requestable_slots)
    return tuple(
        [f"request({s})" for s in cs]
        + [f"confirm({s})" for s in cs]
        + [f"select({s})" for s in cs]
        + ["inform_offer"]
        + [f"inform_requested({s})" for s in rs]
        + ["inform_no_match", "repeat", "reqmore", "hello", "bye", "restart",
           "inform_alternatives"]
    )


def default_ontology() -> Ontology:
    """Restaurant ontology with 7/5/3 constraint values and 3 requestable slots."""
    return Ontology(
        constraint_slots=("food", "area", "pricerange"),
        slot_values={
            "food": ("british", "chinese", "french", "indian", "italian", "japanese", "thai"),
            "area": ("centre", "north", "south", "east", "west"),
            "pricerange": ("cheap", "moderate", "expensive"),
        },
        requestable_slots=("phone", "address", "postcode"),
    )


@dataclass(frozen=True)
class DialogueAct:
    """A single semantic act, e.g. ``inform(food=thai)`` or ``offer(venue=v012)``."""

    type: str
    slot: str | None = None
    value: str | None = None
    venue: str | None = None

    def __str__(self) -> str:
        args = []
        if self.venue is not None:
            args.append(f"venue={self.venue}")
        if self.slot is not None:
            args.append(self.slot if self.value is None else f"{self.slot}={self.value}")
        return f"{self.type}({','.join(args)})"

    def to_dict(self) -> dict:
        return {k: v for k, v in (("type", self.type), ("slot", self.slot),
                                  ("value", self.value), ("venue", self.venue)) if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "DialogueAct":
        return cls(d["type"], d.get("slot"), d.get("value"), d.get("venue"))


def is_well_formed_user_act(act: DialogueAct, ontology: Ontology) -> bool:
    if act.type not in ontology.user_act_types or act.venue is not None:
        return False
    if act.type in SLOT_VALUE_ACTS:
        return (act.slot in ontology.constraint_slots
                and (act.value == DONTCARE or act.value in ontology.values(act.slot)))
    if act.type in SLOT_ACTS:
        return act.slot in ontology.requestable_slots and act.value is None
    return act.slot is None and act.value is None


@dataclass(frozen=True)
class Venue:
    name: str
    constraints: Mapping[str, str]
    info: Mapping[str, str]

    def get(self, slot: str) -> str:
        if slot in self.constraints:
            return self.constraints[slot]
        return self.info[slot]

    def to_dict(self) -> dict:
        return {"name": self.name, **dict(self.constraints), **dict(self.info)}


@dataclass(frozen=True)
class VenueDB:
    ontology: Ontology
    venues: tuple[Venue, ...]
    _by_name: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [v.name for v in self.venues]
        if len(set(names)) != len(names):
            raise ValueError("venue names must be unique")
        object.__setattr__(self, "_by_name", {v.name: v for v in self.venues})

    def __len__(self) -> int:
        return len(self.venues)

    def __getitem__(self, name: str) -> Venue:
        return self._by_name[name]

    def __contains__(self, name) -> bool:
        return name in self._by_name

    def to_dict(self) -> dict:
        return {
            "format_version": DB_FORMAT_VERSION,
            "ontology": self.ontology.to_dict(),
            "venues": [v.to_dict() for v in self.venues],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VenueDB":
        if d.get("format_version") != DB_FORMAT_VERSION:
            raise ValueError(f"unsupported database format {d.get('format_version')!r}")
        onto = Ontology.from_dict(d["ontology"])
        venues = tuple(
            Venue(name=v["name"],
                  constraints={s: v[s] for s in onto.constraint_slots},
                  info={s: v[s] for s in onto.requestable_slots})
            for v in d["venues"]
        )
        return cls(onto, venues)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "VenueDB":
        return cls.from_dict(json.loads(text))


def generate_database(seed: int, size: int = 150, ontology: Ontology | None = None) -> VenueDB:
    if size < 1:
        raise ValueError("database size must be >= 1")
    onto = ontology or default_ontology()
    rng = np.random.default_rng(seed)
    venues = []
    for i in range(size):
        cons = {s: onto.values(s)[rng.integers(len(onto.values(s)))] for s in onto.constraint_slots}
        info = {}
        for s in onto.requestable_slots:
            if s == "phone":
                info[s] = "01223 " + "".join(str(d) for d in rng.integers(0, 10, 6))
            elif s == "postcode":
                info[s] = f"cb{rng.integers(1, 6)} {rng.integers(1, 10)}{'abdefghjlnpqrstuwxyz'[rng.integers(20)]}"
            else:
                info[s] = f"{s} {i}"
        venues.append(Venue(name=f"venue{i:03d}", constraints=cons, info=info))
    return VenueDB(onto, tuple(venues))


def matching_venues(db: VenueDB, constraints: Mapping[str, str]) -> list[Venue]:
    for slot in constraints:
        if slot not in db.ontology.constraint_slots:
            raise KeyError(f"unknown constraint slot {slot!r}")
    active = {s: v for s, v in constraints.items() if v != DONTCARE}
    return [v for v in db.venues if all(v.constraints[s] == val for s, val in active.items())]


@dataclass(frozen=True)
class UserGoal:
    constraints: Mapping[str, str]
    requests: tuple[str, ...]
    satisfiable: bool

    def to_dict(self) -> dict:
        return {"constraints": dict(self.constraints), "requests": list(self.requests),
                "satisfiable": self.satisfiable}

    @classmethod
    def from_dict(cls, d: dict) -> "UserGoal":
        return cls(dict(d["constraints"]), tuple(d["requests"]), bool(d["satisfiable"]))


def _draw_goal(rng: np.random.Generator, onto: Ontology) -> tuple[dict, tuple[str, ...]]:
    n_cons = int(rng.integers(1, len(onto.constraint_slots) + 1))
    slots = sorted(rng.choice(len(onto.constraint_slots), n_cons, replace=False))
    cons = {}
    for i in slots:
        s = onto.constraint_slots[i]
        cons[s] = onto.values(s)[rng.integers(len(onto.values(s)))]
    n_req = int(rng.integers(1, len(onto.requestable_slots) + 1))
    reqs = sorted(rng.choice(len(onto.requestable_slots), n_req, replace=False))
    return cons, tuple(onto.requestable_slots[i] for i in reqs)


def sample_goal(rng: np.random.Generator, ontology: Ontology, db: VenueDB,
                p_unsatisfiable: float = 0.0, max_tries: int = 1000) -> UserGoal:
    """Draw a goal whose satisfiability is decided up front by a coin flip.

    Goals are redrawn until their satisfiability matches the coin; if no
    unsatisfiable goal turns up within ``max_tries`` (dense databases) the
    last draw is returned with its true flag.
    """
    if not 0.0 <= p_unsatisfiable < 1.0:
        raise ValueError("p_unsatisfiable must be in [0, 1)")
    want_sat = rng.random() >= p_unsatisfiable
    for _ in range(max_tries):
        cons, reqs = _draw_goal(rng, ontology)
        sat = bool(matching_venues(db, cons))
        if sat == want_sat:
            break
    return UserGoal(cons, reqs, sat)
