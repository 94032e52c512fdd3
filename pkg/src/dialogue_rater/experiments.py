"""Standard corpus recipes shared by the acceptance suite and the scripts.

train / validation / testA are balanced at SER 0.15; testB is unbalanced
and mixes four SER levels, each segment collected while training three
fresh GP policies. Balanced corpora use many short-lived policies so that
each block is drawn from the part of learning where both outcomes occur.
A block that cannot balance within its attempt budget comes up short; the
shortfall is topped up from extra seeded blocks so sizes are exact.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from .domain import VenueDB
from .features import DialogueFeatureSequence
from .harness import CorpusSpec, generate_corpus
from .policy import GPConfig

logger = logging.getLogger(__name__)

TESTB_SERS = [0.0, 0.15, 0.30, 0.45]


@dataclass
class CorpusSizes:
    train: int = 5000
    val: int = 1000
    test_a: int = 1000
    test_b_per_ser: int = 1000
    block: int = 50
    ser: float = 0.15


def corpus_specs(sizes: CorpusSizes, seed: int = 0) -> dict[str, CorpusSpec]:
    def balanced(n, offset):
        return CorpusSpec(n, sizes.ser, balance=True, policy="scratch", seed=seed + offset,
                          n_policies=max(1, n // sizes.block))
    return {
        "train": balanced(sizes.train, 10),
        "val": balanced(sizes.val, 11),
        "testA": balanced(sizes.test_a, 12),
        "testB": CorpusSpec(sizes.test_b_per_ser * len(TESTB_SERS), list(TESTB_SERS),
                            balance=False, policy="scratch", seed=seed + 13, n_policies=3),
    }


def build_corpora(db: VenueDB, sizes: CorpusSizes | None = None, seed: int = 0,
                  gp_config: GPConfig | None = None,
                  names=("train", "val", "testA", "testB")) -> dict[str, list[DialogueFeatureSequence]]:
    specs = corpus_specs(sizes or CorpusSizes(), seed)
    out = {}
    for name in names:
        spec = specs[name]
        corpus = generate_corpus(spec, db, gp_config=gp_config)
        for w in corpus.warnings:
            logger.warning("%s: %s", name, w)
        seqs = corpus.sequences()
        if spec.balance:
            seqs = _top_up(seqs, spec, db, gp_config, (sizes or CorpusSizes()).block, name)
        out[name] = seqs
    return out


def _top_up(seqs, spec: CorpusSpec, db: VenueDB, gp_config, block: int, name: str,
            max_rounds: int = 20) -> list[DialogueFeatureSequence]:
    """Fill a balanced corpus up to n/2 of each label from extra seeded blocks."""
    half = spec.n_dialogues // 2
    seqs = list(seqs)
    for k in range(1, max_rounds + 1):
        need = {lab: half - sum(s.label.success == lab for s in seqs) for lab in (True, False)}
        if max(need.values()) <= 0:
            return seqs
        n = 2 * max(need.values())
        extra = generate_corpus(replace(spec, n_dialogues=n, seed=spec.seed + 100 * k,
                                        n_policies=max(1, n // block)), db, gp_config=gp_config)
        for s in extra.sequences():
            if need[s.label.success] > 0:
                need[s.label.success] -= 1
                seqs.append(s)
    logger.warning("%s: still short of %d dialogues after top-up", name,
                   spec.n_dialogues - len(seqs))
    return seqs
