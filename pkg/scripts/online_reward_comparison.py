"""Online GP-SARSA training with the objective reward vs a binary RNN rater.

Trains the rater on the standard 5K corpus (or loads one with --rater), then
trains two policies on the same goal and noise stream and writes a learning
curve CSV for each plus a summary of exploit-mode success.

    python scripts/online_reward_comparison.py --n-dialogues 1000 --out-dir online
"""
import argparse
import json
import logging
from pathlib import Path

from dialogue_rater.domain import default_ontology, generate_database
from dialogue_rater.experiments import CorpusSizes, build_corpora
from dialogue_rater.features import feature_width
from dialogue_rater.harness import (ObjectiveReward, RaterReward, evaluate_policy,
                                    train_policy_online)
from dialogue_rater.rater import Head, TrainConfig, build_rater, load_rater, save_rater, sgd_train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-dialogues", type=int, default=1000)
    p.add_argument("--n-eval", type=int, default=200)
    p.add_argument("--ser", type=float, default=0.15)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--rater", help="binary rater checkpoint; trained from scratch if omitted")
    p.add_argument("--out-dir", default="online")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    onto = default_ontology()
    db = generate_database(1, 150, onto)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.rater:
        model, header = load_rater(args.rater)
        if header["ontology_hash"] != onto.hash() or model.head.kind != "binary":
            raise SystemExit("rater must be a binary rater for the default ontology")
    else:
        corpora = build_corpora(db, CorpusSizes(), names=("train", "val"))
        model, _ = sgd_train(build_rater("rnn", feature_width(onto), Head("binary"), seed=0),
                             corpora["train"], corpora["val"], TrainConfig())
        save_rater(out / "rater.bin", model, onto.hash())

    summary = []
    for seed in args.seeds:
        for name, source in (("objective", ObjectiveReward(db)), ("rater", RaterReward(model))):
            policy, curve = train_policy_online(source, db, args.n_dialogues, args.ser, seed=seed)
            (out / f"curve-{name}-seed{seed}.csv").write_text(curve.to_csv(args.window))
            ev = evaluate_policy(policy, db, args.n_eval, args.ser, seed=seed)
            row = {"seed": seed, "reward": name, "discarded": curve.discarded,
                   "goal_reads_by_reward": curve.goal_reads_by_reward, **ev}
            summary.append(row)
            logging.info(json.dumps(row))
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


if __name__ == "__main__":
    main()
