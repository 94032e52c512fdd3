"""Dialogue runs, labelled corpora, rater evaluation and online policy training.

Determinism: every dialogue draws from its own generator seeded by
``(seed, stream, index)``; floats are written with ``repr`` so a corpus is
byte-identical for a fixed seed on a given numpy build.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .domain import DialogueAct, Ontology, UserGoal, VenueDB, sample_goal
from .features import DialogueFeatureSequence, extract_turn_features, feature_width
from .policy import (GPConfig, GPPolicy, executable_mask, master_action, select_action,
                     summary_features, summary_width)
from .rater import RaterModel, predict_success
from .simulator import (MAX_TURNS, SUCCESS_REWARD, DialogueOutcome, ErrorChannelConfig, Turn,
                        compute_return, corrupt_act, init_dialogue, objective_success, user_respond)
from .tracker import DEFAULT_CONFIDENCE, init_belief, update_belief

logger = logging.getLogger(__name__)

CORPUS_FORMAT_VERSION = 1


class SealedGoal:
    """Holds the user goal and counts who opens it."""

    def __init__(self, goal: UserGoal):
        self._goal = goal
        self.reads: dict[str, int] = {}

    def open(self, reader: str) -> UserGoal:
        self.reads[reader] = self.reads.get(reader, 0) + 1
        return self._goal


@dataclass
class DialogueRecord:
    turns: list[Turn]
    features: np.ndarray
    decision_features: list[np.ndarray]
    goal: SealedGoal
    outcome: DialogueOutcome
    ser: float

    @property
    def num_turns(self) -> int:
        return len(self.turns)

    def sequence(self) -> DialogueFeatureSequence:
        return DialogueFeatureSequence(self.features, self.outcome)

    def to_json(self) -> str:
        return json.dumps({
            "turns": [t.to_dict() for t in self.turns],
            "features": self.features.tolist(),
            "outcome": self.outcome.to_dict(),
            "goal": self.goal.open("serialize").to_dict(),
            "ser": self.ser,
        }, sort_keys=True)


def run_dialogue(policy: GPPolicy | Callable, goal: UserGoal, db: VenueDB, ser: float,
                 rng: np.random.Generator, mode: str = "explore",
                 max_turns: int = MAX_TURNS, confidence: float = DEFAULT_CONFIDENCE,
                 channel: ErrorChannelConfig | None = None) -> DialogueRecord:
    """Play one dialogue; ``policy`` is a GPPolicy or ``f(belief, rng, offered) -> action``."""
    onto = db.ontology
    channel = channel or ErrorChannelConfig(ser=ser)
    state = init_dialogue(goal, max_turns)
    belief = init_belief(onto)
    offered, said_no_match = None, False
    turns, feats, decisions = [], [], []
    for t in range(1, max_turns + 1):
        x = summary_features(belief)
        if isinstance(policy, GPPolicy):
            a = select_action(policy, x, mode, rng, executable_mask(onto, offered, said_no_match))
        else:
            a = policy(belief, rng, offered)
        sys_act, masked = master_action(a, belief, db, offered)
        if sys_act.venue is not None:
            offered = sys_act.venue
        said_no_match |= sys_act.type == "no_match"
        true_act = user_respond(state, sys_act, rng, db)
        obs_act = corrupt_act(true_act, channel, rng, onto)
        belief = update_belief(belief, obs_act, sys_act, confidence)
        feats.append(extract_turn_features(obs_act, belief, a, t, max_turns))
        decisions.append(x)
        turns.append(Turn(a, sys_act, true_act, obs_act, masked))
        if state.terminated:
            break
    sealed = SealedGoal(goal)
    success = objective_success(turns, sealed.open("label"), db, max_turns)
    outcome = DialogueOutcome(success, len(turns), compute_return(success, len(turns), max_turns))
    return DialogueRecord(turns, np.array(feats), decisions, sealed, outcome, ser)


def oracle_policy(db: VenueDB) -> Callable:
    """Scripted expert: ask for unclear slots, offer, re-offer when the belief moves
    away from the venue on the table, then answer the most recent request."""
    onto = db.ontology
    acts = onto.summary_actions

    def act(belief, rng, offered) -> int:
        for s in onto.constraint_slots:
            if belief.slots[s].max() < 0.5:
                return acts.index(f"request({s})")
        if offered is None:
            return acts.index("inform_offer")
        venue = db[offered]
        for s in onto.constraint_slots:
            v = belief.top_value(s)
            if v is not None and venue.constraints[s] != v:
                return acts.index("inform_offer")
        k = int(np.argmax(belief.requested))
        return acts.index(f"inform_requested({onto.requestable_slots[k]})")

    return act


def random_policy(ontology: Ontology) -> Callable:
    n = ontology.n_summary_actions
    return lambda belief, rng, offered: int(rng.integers(n))


# -- rewards -----------------------------------------------------------------

class ObjectiveReward:
    """-1 per turn and +20 on objective success; reads the user goal."""

    name = "objective"

    def __init__(self, db: VenueDB, accept: Callable[[DialogueRecord], bool] | None = None):
        self.db = db
        self.accept = accept or (lambda rec: True)

    def rewards(self, rec: DialogueRecord) -> list[float]:
        goal = rec.goal.open("reward")
        ok = objective_success(rec.turns, goal, self.db, rec.num_turns)
        r = [-1.0] * rec.num_turns
        r[-1] += SUCCESS_REWARD * ok
        return r


class RaterReward:
    """Rewards from a trained rater; never touches the goal.

    Binary heads keep the -1 turn penalty and add +20 for a predicted
    success; return heads pay the predicted return at the last turn.
    """

    name = "rater"

    def __init__(self, model: RaterModel):
        self.model = model
        self.accept = lambda rec: True

    def rewards(self, rec: DialogueRecord) -> list[float]:
        label, ret = predict_success(self.model, rec.features)
        if self.model.head.kind == "binary":
            r = [-1.0] * rec.num_turns
            r[-1] += SUCCESS_REWARD * label
        else:
            r = [0.0] * rec.num_turns
            r[-1] = ret
        return r


def make_policy(ontology: Ontology, config: GPConfig | None = None) -> GPPolicy:
    return GPPolicy(ontology.n_summary_actions, summary_width(ontology), config)


def episode_of(rec: DialogueRecord, rewards: Sequence[float]) -> list[tuple]:
    return [(x, t.summary_action, r) for x, t, r in zip(rec.decision_features, rec.turns, rewards)]


@dataclass
class LearningCurve:
    reward: list[float] = field(default_factory=list)
    objective_reward: list[float] = field(default_factory=list)
    turns: list[int] = field(default_factory=list)
    success: list[bool] = field(default_factory=list)
    used: list[bool] = field(default_factory=list)
    goal_reads_by_reward: int = 0

    @property
    def discarded(self) -> int:
        return sum(not u for u in self.used)

    def to_csv(self, window: int = 100) -> str:
        ma_r = moving_average(self.reward, window)
        ma_o = moving_average(self.objective_reward, window)
        ma_t = moving_average(self.turns, window)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dialogue_index", "reward", "turns", "objective_success", "ma_reward",
                    "ma_turns", "objective_reward", "ma_objective_reward", "used"])
        for i in range(len(self.reward)):
            w.writerow([i, self.reward[i], self.turns[i], int(self.success[i]), ma_r[i], ma_t[i],
                        self.objective_reward[i], ma_o[i], int(self.used[i])])
        return buf.getvalue()


def moving_average(series: Sequence[float], window: int) -> list[float]:
    """Trailing mean over the last ``min(window, i + 1)`` values."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    if not len(x):
        return []
    c = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(1, len(x) + 1)
    lo = np.maximum(i - window, 0)
    return list((c[i] - c[lo]) / (i - lo))


def train_policy_online(reward_source, db: VenueDB, n_dialogues: int, ser: float,
                        config: GPConfig | None = None, seed: int = 0,
                        policy: GPPolicy | None = None, p_unsatisfiable: float = 0.0,
                        max_turns: int = MAX_TURNS) -> tuple[GPPolicy, LearningCurve]:
    onto = db.ontology
    if isinstance(reward_source, RaterReward) and \
            reward_source.model.n_features != feature_width(onto):
        raise ValueError("rater feature width does not match the ontology")
    policy = policy or make_policy(onto, config)
    curve = LearningCurve()
    for i in range(n_dialogues):
        rng = np.random.default_rng([seed, 1, i])
        goal = sample_goal(rng, onto, db, p_unsatisfiable)
        rec = run_dialogue(policy, goal, db, ser, rng, "explore", max_turns)
        rewards = reward_source.rewards(rec)
        use = reward_source.accept(rec)
        if use:
            policy.update(episode_of(rec, rewards))
        curve.reward.append(float(sum(rewards)))
        curve.objective_reward.append(float(rec.outcome.ret))
        curve.turns.append(rec.num_turns)
        curve.success.append(rec.outcome.success)
        curve.used.append(use)
        curve.goal_reads_by_reward += rec.goal.reads.get("reward", 0)
    return policy, curve


def evaluate_policy(policy, db: VenueDB, n_dialogues: int, ser: float, seed: int = 0,
                    p_unsatisfiable: float = 0.0, max_turns: int = MAX_TURNS) -> dict[str, float]:
    """Exploit-mode success rate and mean return on a fixed goal stream."""
    succ, rets, turns = [], [], []
    for i in range(n_dialogues):
        rng = np.random.default_rng([seed, 2, i])
        goal = sample_goal(rng, db.ontology, db, p_unsatisfiable)
        rec = run_dialogue(policy, goal, db, ser, rng, "exploit", max_turns)
        succ.append(rec.outcome.success)
        rets.append(rec.outcome.ret)
        turns.append(rec.num_turns)
    return {"success_rate": float(np.mean(succ)), "mean_return": float(np.mean(rets)),
            "mean_turns": float(np.mean(turns)), "n": n_dialogues}


# -- corpora -----------------------------------------------------------------

@dataclass
class CorpusSpec:
    n_dialogues: int
    ser: float | list[float] = 0.15
    balance: bool = False
    policy: str = "scratch"
    seed: int = 0
    n_policies: int = 3
    p_unsatisfiable: float = 0.0
    checkpoint: str | None = None
    max_turns: int = MAX_TURNS

    def __post_init__(self):
        if self.n_dialogues < 1:
            raise ValueError("n_dialogues must be >= 1")
        sers = self.ser if isinstance(self.ser, list) else [self.ser]
        if not sers or any(not 0.0 <= s <= 1.0 for s in sers):
            raise ValueError("SER values must lie in [0, 1]")
        if self.policy not in ("random", "oracle", "checkpoint", "scratch"):
            raise ValueError(f"unknown policy source {self.policy!r}")

    @property
    def ser_schedule(self) -> list[float]:
        return list(self.ser) if isinstance(self.ser, list) else [self.ser]


@dataclass
class Corpus:
    header: dict
    records: list[DialogueRecord]
    warnings: list[str] = field(default_factory=list)

    def sequences(self) -> list[DialogueFeatureSequence]:
        return [r.sequence() for r in self.records]

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header, sort_keys=True)] + [r.to_json() for r in self.records]
        return "\n".join(lines) + "\n"


def _split(n: int, parts: int) -> list[int]:
    return [n // parts + (i < n % parts) for i in range(parts)]


def _accept_for_balance(label: bool, counts: dict[bool, int], n: int) -> bool:
    half = n // 2
    if counts[label] < half:
        return True
    return n % 2 == 1 and counts[label] == half and counts[not label] == half


def generate_corpus(spec: CorpusSpec, db: VenueDB, policy: GPPolicy | None = None,
                    gp_config: GPConfig | None = None) -> Corpus:
    """Collect labelled dialogues under the spec's policy source and SER schedule.

    ``scratch`` trains fresh GP policies with the objective reward while
    collecting, ``n_policies`` per SER segment.
    """
    onto = db.ontology
    sers = spec.ser_schedule
    records: list[DialogueRecord] = []
    warnings = []
    objective = ObjectiveReward(db)
    for seg, (ser, seg_n) in enumerate(zip(sers, _split(spec.n_dialogues, len(sers)))):
        blocks = _split(seg_n, spec.n_policies if spec.policy == "scratch" else 1)
        for b, block_n in enumerate(blocks):
            if block_n == 0:
                continue
            if spec.policy == "scratch":
                actor = make_policy(onto, gp_config)
            elif spec.policy == "checkpoint":
                if policy is None:
                    raise ValueError("checkpoint policy source needs a policy")
                actor = policy
            elif spec.policy == "oracle":
                actor = oracle_policy(db)
            else:
                actor = random_policy(onto)
            counts = {True: 0, False: 0}
            kept, attempts = [], 0
            budget = 10 * block_n if spec.balance else block_n
            while len(kept) < block_n and attempts < budget:
                rng = np.random.default_rng([spec.seed, 3, seg, b, attempts])
                attempts += 1
                goal = sample_goal(rng, onto, db, spec.p_unsatisfiable)
                mode = "exploit" if spec.policy == "checkpoint" else "explore"
                rec = run_dialogue(actor, goal, db, ser, rng, mode, spec.max_turns)
                if spec.policy == "scratch":
                    actor.update(episode_of(rec, objective.rewards(rec)))
                label = rec.outcome.success
                if spec.balance and not _accept_for_balance(label, counts, block_n):
                    continue
                counts[label] += 1
                kept.append(rec)
            if len(kept) < block_n:
                msg = (f"segment ser={ser} block {b}: kept {len(kept)}/{block_n} after "
                       f"{attempts} attempts ({counts[True]} success, {counts[False]} failure)")
                logger.warning(msg)
                warnings.append(msg)
            records.extend(kept)
    header = {"format_version": CORPUS_FORMAT_VERSION, "F": feature_width(onto),
              "ontology_hash": onto.hash(), "n": len(records), "spec": asdict(spec)}
    return Corpus(header, records, warnings)


def read_corpus(lines: Iterable[str]) -> tuple[dict, list[DialogueFeatureSequence]]:
    """Parse corpus JSONL into its header and labelled feature sequences."""
    it = iter(lines)
    header = json.loads(next(it))
    if header.get("format_version") != CORPUS_FORMAT_VERSION:
        raise ValueError(f"unsupported corpus format {header.get('format_version')!r}")
    seqs = []
    for line in it:
        if not line.strip():
            continue
        d = json.loads(line)
        feats = np.array(d["features"], dtype=float)
        if feats.shape[1] != header["F"]:
            raise ValueError("feature width disagrees with corpus header")
        seqs.append(DialogueFeatureSequence(feats, DialogueOutcome.from_dict(d["outcome"])))
    return header, seqs


def evaluate_rater(model, corpus: Sequence[DialogueFeatureSequence]) -> dict[str, float]:
    """Label accuracy and return RMSE of any ``predict(seq) -> (label, ret)`` rater."""
    if not corpus:
        raise ValueError("empty corpus")
    predict = model if callable(model) and not isinstance(model, RaterModel) else \
        (lambda seq: predict_success(model, seq))
    hits, sq = 0, 0.0
    for d in corpus:
        label, ret = predict(d)
        hits += bool(label) == d.label.success
        sq += (ret - d.label.ret) ** 2
    return {"accuracy": hits / len(corpus), "rmse": float(np.sqrt(sq / len(corpus))),
            "n": len(corpus)}
