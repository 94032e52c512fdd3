"""Rater quality as a function of training-set size.

Builds the standard corpora once, trains every requested arch x head on the
first n training dialogues for each n, and writes one CSV row per run with
accuracy and RMSE on testA and testB.

    python scripts/rater_vs_data.py --sizes 1000 2000 3000 4000 5000 --out rater_vs_data.csv
"""
import argparse
import csv
import itertools
import logging
import time

from dialogue_rater.domain import default_ontology, generate_database
from dialogue_rater.experiments import CorpusSizes, build_corpora
from dialogue_rater.features import feature_width
from dialogue_rater.rater import Head, TrainConfig, build_rater, sgd_train
from dialogue_rater.harness import evaluate_rater


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[1000, 2000, 3000, 4000, 5000])
    p.add_argument("--archs", nargs="+", default=["rnn", "cnn"], choices=["rnn", "cnn"])
    p.add_argument("--heads", nargs="+", default=["binary", "class", "regress"],
                   choices=["binary", "class", "regress"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--out", default="rater_vs_data.csv")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    onto = default_ontology()
    db = generate_database(1, 150, onto)
    t = time.time()
    corpora = build_corpora(db, CorpusSizes(train=max(args.sizes)), seed=args.seed)
    logging.info("corpora built in %.0fs", time.time() - t)

    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["arch", "head", "n_train", "epochs", "acc_testA", "rmse_testA",
                    "acc_testB", "rmse_testB"])
        for arch, head, n in itertools.product(args.archs, args.heads, args.sizes):
            model = build_rater(arch, feature_width(onto), Head(head), seed=args.seed)
            best, history = sgd_train(model, corpora["train"][:n], corpora["val"],
                                      TrainConfig(seed=args.seed, max_epochs=args.max_epochs))
            a = evaluate_rater(best, corpora["testA"])
            b = evaluate_rater(best, corpora["testB"])
            w.writerow([arch, head, n, len(history), a["accuracy"], a["rmse"],
                        b["accuracy"], b["rmse"]])
            f.flush()
            logging.info("%s/%s n=%d: testA acc %.3f rmse %.2f, testB acc %.3f rmse %.2f",
                         arch, head, n, a["accuracy"], a["rmse"], b["accuracy"], b["rmse"])


if __name__ == "__main__":
    main()
