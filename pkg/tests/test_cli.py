import io
import json
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialogue_rater import cli
from dialogue_rater.cli import (RunConfig, UsageError, config_json, main, parse_config,
                                parse_user_acts, run_id)
from dialogue_rater.domain import DialogueAct, Ontology, default_ontology, generate_database
from dialogue_rater.features import extract_turn_features
from dialogue_rater.harness import evaluate_rater, read_corpus
from dialogue_rater.rater import Head, build_rater, load_rater, save_rater
from dialogue_rater.tracker import init_belief, update_belief

ONTO = default_ontology()


def run(argv, inp=None):
    out = io.StringIO()
    code = main(argv, out=out, inp=inp)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    runs = str(d / "runs")
    assert run(["gen-db", "--seed", "1", "--size", "150", "--out", str(d / "db.json"),
                "--out-dir", runs])[0] == 0
    for name, seed, n in (("train", 1, 40), ("val", 2, 20)):
        code, _ = run(["gen-data", "--db", str(d / "db.json"), "--n-dialogues", str(n),
                       "--balance", "--policy-source", "random", "--seed", str(seed),
                       "--out", str(d / f"{name}.jsonl"), "--out-dir", runs])
        assert code == 0
    code, _ = run(["train-rater", "--corpus", str(d / "train.jsonl"), "--val-corpus",
                   str(d / "val.jsonl"), "--hidden", "8", "--max-epochs", "2",
                   "--out", str(d / "rater.bin"), "--out-dir", runs])
    assert code == 0
    code, _ = run(["train-policy", "--db", str(d / "db.json"), "--n-dialogues", "20",
                   "--out", str(d / "policy.bin"), "--out-dir", runs])
    assert code == 0
    return d


def test_flag_overrides_file(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"ser": 0.15, "seed": 4}))
    args = cli.build_parser().parse_args(["gen-data", "--config", str(cfg_file), "--ser", "0.30"])
    cfg = cli.config_from_args(args)
    assert cfg.ser == 0.30 and cfg.seed == 4
    args = cli.build_parser().parse_args(["gen-data", "--ser", "0,0.15,0.3,0.45"])
    assert cli.config_from_args(args).ser == [0.0, 0.15, 0.3, 0.45]


def test_unknown_key_named():
    with pytest.raises(UsageError, match="serr"):
        parse_config({"serr": 0.3})


def test_type_mismatch_rejected():
    for bad in ({"seed": "one"}, {"seed": 1.5}, {"balance": 1}, {"ser": "high"},
                {"curves": "a.csv"}, {"head": "softmax"}):
        with pytest.raises(UsageError):
            parse_config(bad)
    assert parse_config({"learning_rate": 1}).learning_rate == 1.0


def test_missing_required_key_named(work, tmp_path, capsys):
    code, _ = run(["eval-rater", "--corpus", str(work / "val.jsonl"), "--out-dir", str(tmp_path)])
    assert code == 1
    assert "missing required key: rater" in capsys.readouterr().err
    assert not tmp_path.joinpath("runs").exists()


configs = st.fixed_dictionaries({}, optional={
    "seed": st.integers(0, 2**31), "ser": st.one_of(st.floats(0, 1), st.lists(st.floats(0, 1),
                                                                             min_size=1, max_size=4)),
    "balance": st.booleans(), "mlp_hidden": st.one_of(st.none(), st.integers(1, 500)),
    "curves": st.lists(st.text("abc/._", min_size=1), max_size=3),
    "gp_sigma2": st.floats(0, 100), "arch": st.sampled_from(["rnn", "cnn"]),
})


@given(configs)
@settings(max_examples=60)
def test_echo_roundtrip(values):
    cfg = parse_config(values)
    again = parse_config(json.loads(config_json(cfg)))
    assert again == cfg
    assert run_id("gen-data", again) == run_id("gen-data", cfg)


def test_run_id_is_seed_derived():
    a = run_id("train-policy", RunConfig(seed=7))
    assert a.startswith("train-policy-seed7-")
    assert a == run_id("train-policy", RunConfig(seed=7))
    assert a != run_id("train-policy", RunConfig(seed=8))


def test_gen_db_deterministic(tmp_path):
    for name in ("a.json", "b.json"):
        code, _ = run(["gen-db", "--seed", "3", "--size", "20", "--out", str(tmp_path / name),
                       "--out-dir", str(tmp_path / name[0])])
        assert code == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_no_overwrite_without_force(tmp_path):
    argv = ["gen-db", "--seed", "3", "--size", "5", "--out-dir", str(tmp_path)]
    assert run(argv)[0] == 0
    (run_dir,) = list(tmp_path.iterdir())
    before = (run_dir / "db.json").read_bytes()
    assert run(argv)[0] == 1
    assert (run_dir / "db.json").read_bytes() == before
    assert run(argv + ["--force"])[0] == 0
    echoed = json.loads((run_dir / "config.json").read_text())
    assert parse_config(echoed) == parse_config({"seed": 3, "db_size": 5,
                                                 "out_dir": str(tmp_path)})


def test_eval_rater_matches_library(work, tmp_path):
    code, text = run(["eval-rater", "--corpus", str(work / "val.jsonl"), "--rater",
                      str(work / "rater.bin"), "--out-dir", str(tmp_path)])
    assert code == 0
    model, _ = load_rater(work / "rater.bin")
    _, seqs = read_corpus((work / "val.jsonl").read_text().splitlines())
    m = evaluate_rater(model, seqs)
    assert f"accuracy {m['accuracy']:.4f} rmse {m['rmse']:.4f}" in text
    (run_dir,) = list(tmp_path.iterdir())
    assert json.loads((run_dir / "metrics.json").read_text()) == m


def test_wrong_width_rater_rejected_without_artifacts(work, tmp_path):
    narrow = build_rater("rnn", 12, Head("binary"), seed=0, hidden=4)
    save_rater(tmp_path / "narrow.bin", narrow, ONTO.hash())
    out_dir = tmp_path / "runs"
    code, _ = run(["train-policy", "--db", str(work / "db.json"), "--reward", "rater",
                   "--rater", str(tmp_path / "narrow.bin"), "--out-dir", str(out_dir)])
    assert code == 2
    assert not out_dir.exists()


def test_ontology_mismatch_rejected(work, tmp_path):
    other = Ontology(("food", "area"), {"food": ("a", "b"), "area": ("x",)}, ("phone",))
    (tmp_path / "other.json").write_text(generate_database(1, 10, other).dumps())
    out_dir = tmp_path / "runs"
    code, _ = run(["eval-policy", "--db", str(tmp_path / "other.json"), "--policy",
                   str(work / "policy.bin"), "--out-dir", str(out_dir)])
    assert code == 2 and not out_dir.exists()
    code, _ = run(["eval-rater", "--corpus", str(work / "val.jsonl"), "--rater",
                   str(work / "policy.bin"), "--out-dir", str(out_dir)])
    assert code == 2


def test_internal_error_code(work, tmp_path, monkeypatch):
    def boom(cfg):
        raise RuntimeError("boom")
    monkeypatch.setitem(cli.PREPARE, "gen-db", boom)
    assert run(["gen-db", "--out-dir", str(tmp_path)])[0] == 3


def test_usage_errors():
    assert run(["frobnicate"])[0] == 1
    assert run([])[0] == 1
    assert run(["gen-db", "--size", "many"])[0] == 1


def test_train_policy_artifacts(work, tmp_path):
    code, text = run(["train-policy", "--db", str(work / "db.json"), "--n-dialogues", "12",
                      "--reward", "rater", "--rater", str(work / "rater.bin"),
                      "--window", "5", "--out-dir", str(tmp_path)])
    assert code == 0
    (run_dir,) = list(tmp_path.iterdir())
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["goal_reads_by_reward"] == 0 and summary["discarded"] == 0
    lines = (run_dir / "curve.csv").read_text().splitlines()
    assert len(lines) == 13
    assert lines[0].startswith("dialogue_index,reward,turns,objective_success,ma_reward,ma_turns")
    code, _ = run(["export-curves", "--curves", str(run_dir / "curve.csv"), "--window", "3",
                   "--out", str(tmp_path / "c.csv"), "--out-dir", str(tmp_path / "x")])
    assert code == 0
    rows = (tmp_path / "c.csv").read_text().splitlines()[1:]
    rewards = [float(r.split(",")[1]) for r in rows]
    assert float(rows[2].split(",")[4]) == pytest.approx(np.mean(rewards[:3]))


def test_gen_data_corpus_header(work):
    header = json.loads((work / "train.jsonl").read_text().splitlines()[0])
    assert header["F"] == 57 and header["format_version"] == 1
    assert header["ontology_hash"] == ONTO.hash()


def test_parse_user_acts():
    assert parse_user_acts("inform food=thai; request phone", ONTO) == \
        [DialogueAct("inform", "food", "thai"), DialogueAct("request", "phone")]
    assert parse_user_acts("bye", ONTO) == [DialogueAct("bye")]
    for bad in ("inform food=pizza", "request food", "", "dance", "inform a b c"):
        with pytest.raises(ValueError):
            parse_user_acts(bad, ONTO)


def test_chat_replay_matches_live(work, tmp_path):
    script = "inform food=thai; request phone\nnot an act\ninform area=north\n" \
             "inform pricerange=cheap\nrequest address\nbye\n"
    code, text = run(["chat", "--db", str(work / "db.json"), "--policy", str(work / "policy.bin"),
                      "--rater", str(work / "rater.bin"), "--out-dir", str(tmp_path)],
                     inp=io.StringIO(script))
    assert code == 0
    live = [float(x) for x in re.findall(r"p\(success\)=(\S+)", text)]
    assert len(live) == 5 and "error:" in text
    (run_dir,) = list(tmp_path.iterdir())
    entries = [json.loads(line) for line in (run_dir / "transcript.jsonl").read_text().splitlines()]
    # Independent replay of the transcript through tracker, feature extractor and rater.
    model, _ = load_rater(work / "rater.bin")
    belief, feats, replay = init_belief(ONTO), [], []
    for e in entries:
        acts = [DialogueAct.from_dict(u) for u in e["user"]]
        sys_act = DialogueAct.from_dict(e["system"])
        belief = update_belief(belief, acts, sys_act)
        feats.append(extract_turn_features(acts[0], belief, e["summary_action"], e["t"], 30))
        replay.append(float(model.predict(np.array(feats))))
    assert replay == live
