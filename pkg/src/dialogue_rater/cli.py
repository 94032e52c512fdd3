"""Command-line entry point.

Every command takes ``--config FILE`` (JSON) plus long-form flags that
override the file. The resolved config is echoed to the run directory,
``<out_dir>/<command>-seed<seed>-<digest>``, where the digest is taken
over the resolved config so a run id never depends on the clock.

Exit codes: 0 success, 1 usage error, 2 data or compatibility error,
3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import sys
import types
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .domain import DialogueAct, VenueDB, generate_database, is_well_formed_user_act
from .features import extract_turn_features, feature_width
from .harness import (CorpusSpec, LearningCurve, ObjectiveReward, RaterReward, evaluate_policy,
                      evaluate_rater, generate_corpus, make_policy, moving_average, read_corpus,
                      train_policy_online)
from .io import FormatError, atomic_write
from .policy import (GPConfig, executable_mask, load_policy, master_action, save_policy,
                     select_action, summary_features)
from .rater import Head, TrainConfig, build_rater, history_csv, load_rater, save_rater, sgd_train
from .tracker import init_belief, update_belief

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs"
    out: str | None = None
    db: str | None = None
    db_size: int = 150
    ser: float | list[float] = 0.15
    n_dialogues: int = 1000
    balance: bool = False
    policy_source: str = "scratch"
    n_policies: int = 3
    p_unsatisfiable: float = 0.0
    max_turns: int = 30
    corpus: str | None = None
    val_corpus: str | None = None
    arch: str = "rnn"
    head: str = "binary"
    hidden: int = 300
    n_filters: int = 50
    width: int = 30
    mlp_hidden: int | None = None
    sigma: float = 1.0
    learning_rate: float = 0.01
    max_epochs: int = 50
    patience: int = 5
    clip: float = 5.0
    rater: str | None = None
    policy: str | None = None
    reward: str = "objective"
    gp_gamma: float = 1.0
    gp_sigma2: float = 20.0
    gp_nu: float = 0.1
    gp_kernel_scale: float = 5.0
    gp_kernel_bias: float = 1.0
    gp_max_dict: int = 1000
    gp_exploration: str = "thompson"
    gp_explore_scale: float = 3.0
    gp_epsilon: float = 0.1
    n_eval: int = 200
    window: int = 100
    curves: list[str] = field(default_factory=list)

    def gp_config(self) -> GPConfig:
        return GPConfig(**{f.name: getattr(self, "gp_" + f.name)
                           for f in dataclasses.fields(GPConfig)})

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.max_epochs, self.patience, self.seed, self.clip)


_HINTS = typing.get_type_hints(RunConfig)
FIELDS = [f.name for f in dataclasses.fields(RunConfig)]

CHOICES = {"policy_source": ("random", "oracle", "checkpoint", "scratch"),
           "arch": ("rnn", "cnn"), "head": ("binary", "class", "regress"),
           "reward": ("objective", "rater"), "gp_exploration": ("thompson", "epsilon")}

REQUIRED = {
    "gen-db": [],
    "gen-data": ["db"],
    "train-rater": ["corpus", "val_corpus"],
    "eval-rater": ["rater", "corpus"],
    "train-policy": ["db"],
    "eval-policy": ["db", "policy"],
    "export-curves": ["curves"],
    "chat": ["db", "policy"],
}

ARTIFACTS = {
    "gen-db": ["db.json"],
    "gen-data": ["corpus.jsonl"],
    "train-rater": ["rater.bin", "history.csv", "metrics.json"],
    "eval-rater": ["metrics.json"],
    "train-policy": ["policy.bin", "curve.csv", "summary.json"],
    "eval-policy": ["metrics.json"],
    "export-curves": ["curves.csv"],
    "chat": ["transcript.jsonl"],
}


def _check_type(name: str, value, hint):
    """Validate a JSON value against a RunConfig field type; returns the normalized value."""
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        errors = []
        for arm in typing.get_args(hint):
            try:
                return _check_type(name, value, arm)
            except UsageError as e:
                errors.append(str(e))
        raise UsageError(f"{name}: {value!r} does not match {hint}")
    if hint is type(None):
        if value is not None:
            raise UsageError(f"{name}: expected null")
        return None
    if origin is list:
        (arm,) = typing.get_args(hint)
        if not isinstance(value, list):
            raise UsageError(f"{name}: expected a list, got {value!r}")
        return [_check_type(name, v, arm) for v in value]
    if hint is bool:
        if not isinstance(value, bool):
            raise UsageError(f"{name}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise UsageError(f"{name}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UsageError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise UsageError(f"{name}: expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported field type {hint}")


def _flag_value(name: str, text: str):
    """Turn a command-line string into the JSON value a config file would hold."""
    hint = _HINTS[name]
    args = set(typing.get_args(hint)) | {hint}
    if text == "null" and type(None) in args:
        return None
    if list[str] in args:
        return [t for t in text.split(",") if t]
    if list[float] in args and "," in text:
        return [_parse_number(name, t) for t in text.split(",")]
    if int in args and float not in args:
        try:
            return int(text)
        except ValueError:
            raise UsageError(f"{name}: expected an integer, got {text!r}") from None
    if float in args:
        return _parse_number(name, text)
    return text


def _parse_number(name, text):
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"{name}: expected a number, got {text!r}") from None


def parse_config(file_values: dict, overrides: dict | None = None) -> RunConfig:
    """Merge a config document with flag overrides, rejecting unknown keys and bad types."""
    merged = dict(file_values)
    merged.update(overrides or {})
    unknown = sorted(set(merged) - set(FIELDS))
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    values = {k: _check_type(k, v, _HINTS[k]) for k, v in merged.items()}
    for k, allowed in CHOICES.items():
        if k in values and values[k] not in allowed:
            raise UsageError(f"{k}: {values[k]!r} is not one of {', '.join(allowed)}")
    return RunConfig(**values)


def config_json(cfg: RunConfig) -> str:
    return json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n"


def run_id(command: str, cfg: RunConfig) -> str:
    digest = hashlib.sha256(config_json(cfg).encode()).hexdigest()[:8]
    return f"{command}-seed{cfg.seed}-{digest}"


# -- argument parsing ----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--force", action="store_true", help="overwrite existing artifacts")
    common.add_argument("-v", "--verbose", action="store_true")
    for name in FIELDS:
        flags = ["--" + name.replace("_", "-")]
        if name == "db_size":
            flags.append("--size")
        if _HINTS[name] is bool:
            common.add_argument(*flags, dest=name, action=argparse.BooleanOptionalAction,
                                default=argparse.SUPPRESS)
        else:
            common.add_argument(*flags, dest=name, default=argparse.SUPPRESS, metavar="VALUE")
    parser = _Parser(prog="dialogue-rater", description="Dialogue rater and policy laboratory.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd in REQUIRED:
        sub.add_parser(cmd, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = {}
    if args.config:
        try:
            file_values = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"config file {args.config} is not valid JSON: {e}") from None
        if not isinstance(file_values, dict):
            raise UsageError("config file must hold a JSON object")
    overrides = {}
    for name in FIELDS:
        if hasattr(args, name):
            raw = getattr(args, name)
            overrides[name] = raw if isinstance(raw, bool) else _flag_value(name, raw)
    return parse_config(file_values, overrides)


# -- loading with compatibility checks ----------------------------------------

def _read(path: str, what: str) -> str:
    try:
        return Path(path).read_text()
    except FileNotFoundError:
        raise DataError(f"{what} {path} not found") from None


def _load_db(cfg: RunConfig) -> VenueDB:
    try:
        return VenueDB.loads(_read(cfg.db, "database"))
    except (ValueError, KeyError) as e:
        raise DataError(f"database {cfg.db}: {e}") from None


def _load_corpus(path: str):
    try:
        return read_corpus(_read(path, "corpus").splitlines())
    except (ValueError, KeyError, StopIteration) as e:
        raise DataError(f"corpus {path}: {e}") from None


def _load_rater(path: str, ontology_hash: str | None, width: int | None):
    if not Path(path).exists():
        raise DataError(f"rater checkpoint {path} not found")
    try:
        model, header = load_rater(path)
    except (FormatError, ValueError, KeyError) as e:
        raise DataError(f"rater checkpoint {path}: {e}") from None
    if ontology_hash is not None and header["ontology_hash"] != ontology_hash:
        raise DataError(f"rater checkpoint {path} was trained on ontology "
                        f"{header['ontology_hash']}, expected {ontology_hash}")
    if width is not None and model.n_features != width:
        raise DataError(f"rater checkpoint {path} expects F={model.n_features}, data has F={width}")
    return model


def _load_policy(path: str, db: VenueDB):
    if not Path(path).exists():
        raise DataError(f"policy checkpoint {path} not found")
    try:
        return load_policy(path, db.ontology)
    except (FormatError, ValueError, KeyError) as e:
        raise DataError(f"policy checkpoint {path}: {e}") from None


def _single_ser(cfg: RunConfig) -> float:
    if isinstance(cfg.ser, list):
        raise UsageError("this command takes a single SER value")
    if not 0.0 <= cfg.ser <= 1.0:
        raise UsageError("ser must lie in [0, 1]")
    return cfg.ser


# -- commands -------------------------------------------------------------------
# Each command validates its inputs in ``prepare`` (before any artifact is
# touched) and returns a ``run`` closure that produces {filename: content}.

def _prep_gen_db(cfg):
    if cfg.db_size < 1:
        raise UsageError("db_size must be >= 1")

    def run(out):
        db = generate_database(cfg.seed, cfg.db_size)
        print(f"{len(db)} venues, ontology {db.ontology.hash()}", file=out)
        return {"db.json": db.dumps() + "\n"}
    return run


def _prep_gen_data(cfg):
    db = _load_db(cfg)
    try:
        spec = CorpusSpec(cfg.n_dialogues, cfg.ser, cfg.balance, cfg.policy_source, cfg.seed,
                          cfg.n_policies, cfg.p_unsatisfiable, cfg.policy, cfg.max_turns)
    except ValueError as e:
        raise UsageError(str(e)) from None
    policy = None
    if cfg.policy_source == "checkpoint":
        if cfg.policy is None:
            raise UsageError("missing required key: policy (policy_source=checkpoint)")
        policy = _load_policy(cfg.policy, db)

    def run(out):
        corpus = generate_corpus(spec, db, policy, cfg.gp_config())
        succ = sum(r.outcome.success for r in corpus.records)
        print(f"{len(corpus.records)} dialogues, {succ} successful", file=out)
        for w in corpus.warnings:
            print(f"warning: {w}", file=out)
        return {"corpus.jsonl": corpus.to_jsonl()}
    return run


def _prep_train_rater(cfg):
    h_train, train = _load_corpus(cfg.corpus)
    h_val, val = _load_corpus(cfg.val_corpus)
    if h_train["ontology_hash"] != h_val["ontology_hash"] or h_train["F"] != h_val["F"]:
        raise DataError("training and validation corpora come from different ontologies")
    if not train or not val:
        raise DataError("training and validation corpora must be non-empty")
    kw = {"hidden": cfg.hidden} if cfg.arch == "rnn" else \
        {"n_filters": cfg.n_filters, "width": cfg.width, "mlp_hidden": cfg.mlp_hidden}
    head = Head(cfg.head, cfg.max_turns, cfg.sigma)
    model = build_rater(cfg.arch, h_train["F"], head, cfg.seed, **kw)

    def run(out):
        best, history = sgd_train(model, train, val, cfg.train_config())
        metrics = evaluate_rater(best, val)
        print(f"epochs {len(history)} val accuracy {metrics['accuracy']:.4f} "
              f"rmse {metrics['rmse']:.4f}", file=out)
        return {"rater.bin": ("rater", best, h_train["ontology_hash"]),
                "history.csv": history_csv(history),
                "metrics.json": json.dumps(metrics, indent=2) + "\n"}
    return run


def _prep_eval_rater(cfg):
    header, corpus = _load_corpus(cfg.corpus)
    if not corpus:
        raise DataError("empty corpus")
    model = _load_rater(cfg.rater, header["ontology_hash"], header["F"])

    def run(out):
        metrics = evaluate_rater(model, corpus)
        print(f"accuracy {metrics['accuracy']:.4f} rmse {metrics['rmse']:.4f} n {metrics['n']}",
              file=out)
        return {"metrics.json": json.dumps(metrics, indent=2) + "\n"}
    return run


def _prep_train_policy(cfg):
    db = _load_db(cfg)
    ser = _single_ser(cfg)
    if cfg.reward == "rater":
        if cfg.rater is None:
            raise UsageError("missing required key: rater (reward=rater)")
        source = RaterReward(_load_rater(cfg.rater, db.ontology.hash(), feature_width(db.ontology)))
    else:
        source = ObjectiveReward(db)
    start = _load_policy(cfg.policy, db) if cfg.policy else make_policy(db.ontology, cfg.gp_config())

    def run(out):
        policy, curve = train_policy_online(source, db, cfg.n_dialogues, ser, seed=cfg.seed,
                                            policy=start, p_unsatisfiable=cfg.p_unsatisfiable,
                                            max_turns=cfg.max_turns)
        summary = {"n_dialogues": cfg.n_dialogues, "reward": cfg.reward,
                   "goal_reads_by_reward": curve.goal_reads_by_reward,
                   "discarded": curve.discarded, "dictionary_size": len(policy),
                   "objective_success_rate": float(np.mean(curve.success)) if curve.success else 0.0}
        print(json.dumps(summary), file=out)
        return {"policy.bin": ("policy", policy, db.ontology),
                "curve.csv": curve.to_csv(cfg.window),
                "summary.json": json.dumps(summary, indent=2) + "\n"}
    return run


def _prep_eval_policy(cfg):
    db = _load_db(cfg)
    ser = _single_ser(cfg)
    policy = _load_policy(cfg.policy, db)

    def run(out):
        metrics = evaluate_policy(policy, db, cfg.n_eval, ser, cfg.seed, cfg.p_unsatisfiable,
                                  cfg.max_turns)
        print(f"success {metrics['success_rate']:.4f} return {metrics['mean_return']:.3f} "
              f"turns {metrics['mean_turns']:.2f}", file=out)
        return {"metrics.json": json.dumps(metrics, indent=2) + "\n"}
    return run


def _read_curve(path: str) -> LearningCurve:
    rows = list(csv.DictReader(io.StringIO(_read(path, "curve"))))
    try:
        return LearningCurve(
            reward=[float(r["reward"]) for r in rows],
            objective_reward=[float(r.get("objective_reward", "nan")) for r in rows],
            turns=[int(r["turns"]) for r in rows],
            success=[r["objective_success"] == "1" for r in rows],
            used=[r.get("used", "1") == "1" for r in rows])
    except (KeyError, ValueError) as e:
        raise DataError(f"curve {path}: {e}") from None


def _prep_export_curves(cfg):
    if cfg.window < 1:
        raise UsageError("window must be >= 1")
    curves = [(Path(p).parent.name or Path(p).stem, _read_curve(p)) for p in cfg.curves]

    def run(out):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dialogue_index", "reward", "turns", "objective_success", "ma_reward",
                    "ma_turns", "objective_reward", "ma_objective_reward", "source"])
        for name, c in curves:
            ma_r = moving_average(c.reward, cfg.window)
            ma_t = moving_average(c.turns, cfg.window)
            ma_o = moving_average(c.objective_reward, cfg.window)
            for i in range(len(c.reward)):
                w.writerow([i, c.reward[i], c.turns[i], int(c.success[i]), ma_r[i], ma_t[i],
                            c.objective_reward[i], ma_o[i], name])
            if c.reward:
                print(f"{name}: {len(c.reward)} dialogues, final ma_reward {ma_r[-1]:.3f}",
                      file=out)
        return {"curves.csv": buf.getvalue()}
    return run


# -- chat -----------------------------------------------------------------------

def parse_user_acts(line: str, ontology) -> list[DialogueAct]:
    """Parse shorthand such as ``inform food=thai; request phone`` into user acts."""
    acts = []
    for chunk in line.split(";"):
        words = chunk.split()
        if not words:
            continue
        if len(words) > 2:
            raise ValueError(f"cannot parse {chunk.strip()!r}")
        kind, arg = words[0], (words[1] if len(words) == 2 else None)
        if arg is None:
            act = DialogueAct(kind)
        elif "=" in arg:
            slot, _, value = arg.partition("=")
            act = DialogueAct(kind, slot, value)
        else:
            act = DialogueAct(kind, arg)
        if not is_well_formed_user_act(act, ontology):
            raise ValueError(f"not a valid user act: {act}")
        acts.append(act)
    if not acts:
        raise ValueError("empty input")
    return acts


def chat_features(acts: list[DialogueAct], belief, summary_action: int, t: int,
                  max_turns: int) -> np.ndarray:
    # With several acts in one turn the first one fills the user-act slot.
    return extract_turn_features(acts[0], belief, summary_action, t, max_turns)


def _render(act: DialogueAct, db: VenueDB) -> str:
    text = str(act)
    if act.type == "offer" and act.venue in db:
        v = db[act.venue]
        text += " " + " ".join(f"{s}={v.constraints[s]}" for s in db.ontology.constraint_slots)
    return text


def rater_reading(model, feats: list[np.ndarray]) -> float:
    """The rater's output on the dialogue so far: success probability or predicted return."""
    out = model.predict(np.array(feats))
    if model.head.kind == "binary":
        return float(out)
    if model.head.kind == "class":
        return float(int(np.argmax(out)) - model.head.max_turns)
    return float(out)


def _prep_chat(cfg):
    db = _load_db(cfg)
    policy = _load_policy(cfg.policy, db)
    model = _load_rater(cfg.rater, db.ontology.hash(), feature_width(db.ontology)) \
        if cfg.rater else None

    def run(out, inp=None):
        inp = inp or sys.stdin
        onto = db.ontology
        print("type user acts, e.g. 'inform food=thai; request phone'; 'quit' ends", file=out)
        belief = init_belief(onto)
        offered, said_no_match = None, False
        feats, transcript = [], []
        t = 0
        while t < cfg.max_turns:
            x = summary_features(belief)
            a = select_action(policy, x, "exploit", mask=executable_mask(onto, offered, said_no_match))
            sys_act, _ = master_action(a, belief, db, offered)
            if sys_act.venue is not None:
                offered = sys_act.venue
            said_no_match |= sys_act.type == "no_match"
            print(f"system: {_render(sys_act, db)}", file=out)
            while True:
                print("user> ", end="", file=out, flush=True)
                line = inp.readline()
                if not line or line.strip() == "quit":
                    return {"transcript.jsonl": _transcript_text(transcript)}
                try:
                    acts = parse_user_acts(line, onto)
                    break
                except ValueError as e:
                    print(f"error: {e}", file=out)
            t += 1
            belief = update_belief(belief, acts, sys_act)
            feats.append(chat_features(acts, belief, a, t, cfg.max_turns))
            entry = {"t": t, "summary_action": a, "system": sys_act.to_dict(),
                     "user": [u.to_dict() for u in acts]}
            if model is not None:
                reading = rater_reading(model, feats)
                entry["rater"] = reading
                label = "p(success)" if model.head.kind == "binary" else "predicted return"
                print(f"rater: {label}={reading!r}", file=out)
            transcript.append(entry)
            if sys_act.type == "bye" or any(u.type == "bye" for u in acts):
                break
        print("dialogue over", file=out)
        return {"transcript.jsonl": _transcript_text(transcript)}
    return run


def _transcript_text(transcript: list[dict]) -> str:
    return "".join(json.dumps(e, sort_keys=True) + "\n" for e in transcript)


PREPARE = {
    "gen-db": _prep_gen_db, "gen-data": _prep_gen_data, "train-rater": _prep_train_rater,
    "eval-rater": _prep_eval_rater, "train-policy": _prep_train_policy,
    "eval-policy": _prep_eval_policy, "export-curves": _prep_export_curves, "chat": _prep_chat,
}


def _targets(command: str, cfg: RunConfig) -> tuple[Path, dict[str, Path]]:
    run_dir = Path(cfg.out_dir) / run_id(command, cfg)
    paths = {name: run_dir / name for name in ARTIFACTS[command]}
    if cfg.out is not None:
        paths[ARTIFACTS[command][0]] = Path(cfg.out)
    return run_dir, paths


def _write(path: Path, content) -> None:
    if isinstance(content, tuple):
        kind, obj, extra = content
        if kind == "rater":
            save_rater(path, obj, extra)
        else:
            save_policy(path, obj, extra)
    else:
        atomic_write(path, content)


def dispatch(command: str, cfg: RunConfig, force: bool = False, out=None, inp=None) -> Path:
    """Validate, run and write one command's artifacts; returns the run directory."""
    out = out or sys.stdout
    for key in REQUIRED[command]:
        if getattr(cfg, key) in (None, []):
            raise UsageError(f"missing required key: {key}")
    run_dir, paths = _targets(command, cfg)
    config_path = run_dir / "config.json"
    clashes = [p for p in [config_path, *paths.values()] if p.exists()]
    if clashes and not force:
        raise UsageError(f"refusing to overwrite {clashes[0]} (pass --force)")
    run = PREPARE[command](cfg)
    produced = run(out, inp) if command == "chat" else run(out)
    atomic_write(config_path, config_json(cfg))
    for name, content in produced.items():
        _write(paths[name], content)
    print(f"run directory: {run_dir}", file=out)
    return run_dir


def main(argv=None, out=None, inp=None) -> int:
    err = sys.stderr
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = config_from_args(args)
        dispatch(args.command, cfg, args.force, out, inp)
    except UsageError as e:
        print(f"usage error: {e}", file=err)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=err)
        return EXIT_DATA
    except SystemExit as e:
        # --help exits 0 from inside argparse
        return EXIT_OK if not e.code else EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        logger.exception("internal error")
        print(f"internal error: {type(e).__name__}: {e}", file=err)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
