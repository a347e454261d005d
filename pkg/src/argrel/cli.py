"""Command-line surface: reproducible experiments and the annotation service.

Every command resolves its configuration from defaults, an optional JSON
config file (--config), and explicit flags (highest precedence), then writes
a manifest (resolved config + input digests) into its run directory.
`rerun` re-dispatches a manifest; in simulated/deterministic modes the
primary outputs are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .alloop import ALConfig, compare_strategies, run_al
from .baseline import predict_baseline, train_baseline
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    SynthConfig,
    distance_histogram,
    generate_synthetic,
    load_corpus,
    relation_density,
    save_corpus,
    validate,
    window_coverage,
)
from .encoder import EncoderConfig
from .errors import ArgrelError
from .markers import DEFAULT_MARKERS, match_markers
from .metrics import evaluate
from .pretrain import pretrain
from .relhead import PredictionRecord, TrainConfig, predict_document, train
from .windows import WindowConfig


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def write_table(path, rows: list[dict], columns: list[str]) -> None:
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(repr(row[c]) if isinstance(row[c], float)
                               else str(row[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def resolve_run_dir(explicit, tag: str) -> Path:
    if explicit:
        run_dir = Path(explicit)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        run_dir = Path("runs") / f"{stamp}-{tag}"
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def write_manifest(run_dir: Path, command: str, config: dict,
                   inputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "version": __version__,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    write_json(run_dir / "manifest.json", manifest)


# ---------------------------------------------------------------------------
# Config resolution: defaults < config file < explicit flags

def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    config = {}
    if getattr(args, "config", None):
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if "config" in config and "command" in config:
            config = config["config"]  # a manifest was passed directly
    merged = dict(defaults)
    merged.update({k: v for k, v in config.items() if k in defaults})
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


WINDOW_DEFAULTS = {"window": 20, "max_tokens": 512, "mode": "head_given"}
ENCODER_DEFAULTS = {"dim": 64, "layers": 2, "heads": 2, "ffn_mult": 4,
                    "dropout_p": 0.1, "max_positions": 512}
TRAIN_DEFAULTS = {"learning_rate": 1e-3, "warmup_steps": 100,
                  "schedule": "constant", "epochs": 15, "batch_size": 16,
                  "class_weighting": False}


def window_from(cfg: dict) -> WindowConfig:
    return WindowConfig(window=cfg["window"], max_tokens=cfg["max_tokens"],
                        mode=cfg["mode"])


def encoder_from(cfg: dict, seed: int) -> EncoderConfig:
    return EncoderConfig(dim=cfg["dim"], layers=cfg["layers"],
                         heads=cfg["heads"], ffn_mult=cfg["ffn_mult"],
                         dropout_p=cfg["dropout_p"],
                         max_positions=cfg["max_positions"], seed=seed)


def train_from(cfg: dict, seed: int) -> TrainConfig:
    return TrainConfig(learning_rate=cfg["learning_rate"],
                       warmup_steps=cfg["warmup_steps"],
                       schedule=cfg["schedule"], epochs=cfg["epochs"],
                       batch_size=cfg["batch_size"], seed=seed,
                       class_weighting=cfg["class_weighting"])


def add_common_flags(p: argparse.ArgumentParser, groups=("window", "encoder",
                                                         "train")) -> None:
    p.add_argument("--config", help="JSON config file (or a prior manifest)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--run-dir", dest="run_dir", default=None)
    if "window" in groups:
        p.add_argument("--window", type=int, default=None)
        p.add_argument("--max-tokens", dest="max_tokens", type=int, default=None)
        p.add_argument("--mode", choices=("head_given", "end_to_end"),
                       default=None)
    if "encoder" in groups:
        p.add_argument("--dim", type=int, default=None)
        p.add_argument("--layers", type=int, default=None)
        p.add_argument("--heads", type=int, default=None)
        p.add_argument("--ffn-mult", dest="ffn_mult", type=int, default=None)
        p.add_argument("--dropout-p", dest="dropout_p", type=float, default=None)
        p.add_argument("--max-positions", dest="max_positions", type=int,
                       default=None)
    if "train" in groups:
        p.add_argument("--learning-rate", dest="learning_rate", type=float,
                       default=None)
        p.add_argument("--warmup-steps", dest="warmup_steps", type=int,
                       default=None)
        p.add_argument("--schedule", choices=("constant", "linear"), default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--class-weighting", dest="class_weighting",
                       action="store_const", const=True, default=None)


# ---------------------------------------------------------------------------
# Subcommands

def cmd_synth(args) -> int:
    defaults = {"n_docs": 100, "props_per_doc": 8, "relation_rate": 0.35,
                "distance_skew": 0.7, "marker_plant_prob": 0.5,
                "vocab_size": 200, "attack_rate": 0.1, "seed": 0,
                "out": "corpus.jsonl"}
    cfg = resolve(args, defaults)
    corpus = generate_synthetic(SynthConfig(
        n_docs=cfg["n_docs"], props_per_doc=cfg["props_per_doc"],
        relation_rate=cfg["relation_rate"], distance_skew=cfg["distance_skew"],
        marker_plant_prob=cfg["marker_plant_prob"],
        vocab_size=cfg["vocab_size"], attack_rate=cfg["attack_rate"],
        seed=cfg["seed"]))
    save_corpus(corpus, cfg["out"])
    write_json(str(cfg["out"]) + ".manifest.json", {
        "command": "synth", "config": cfg, "inputs": {},
        "version": __version__,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    })
    print(f"wrote {len(corpus)} documents, {corpus.n_relations} relations "
          f"to {cfg['out']}")
    return 0


def marker_breakdown(corpus) -> dict[str, tuple[int, int, int]]:
    """Per marker: (count in head props, in tail props, in uninvolved props).

    Counts propositions containing the marker; a proposition that is both a
    head and a tail contributes to both columns.
    """
    table = {m: [0, 0, 0] for m in DEFAULT_MARKERS}
    for doc in corpus.documents:
        heads = {r.head for r in doc.relations}
        tails = {r.tail for r in doc.relations}
        for prop in doc.propositions:
            matched = match_markers(prop.text)
            for marker in matched:
                if prop.id in heads:
                    table[marker][0] += 1
                if prop.id in tails:
                    table[marker][1] += 1
                if prop.id not in heads and prop.id not in tails:
                    table[marker][2] += 1
    return {m: tuple(v) for m, v in table.items()}


def cmd_stats(args) -> int:
    corpus = load_corpus(args.corpus)
    window = args.window if args.window is not None else 20
    density = relation_density(corpus)
    hist = distance_histogram(corpus)
    coverage = window_coverage(corpus, window)
    print(f"documents: {len(corpus)}")
    print(f"propositions: {corpus.n_propositions}")
    print(f"relations: {corpus.n_relations}")
    print(f"density: {density}")
    print(f"window_coverage(L={window}): {coverage}")
    print("distance_histogram: "
          + json.dumps({str(k): hist[k] for k in sorted(hist)}))
    report = validate(corpus, profile=args.profile)
    print(f"validation({args.profile}): "
          + ("ok" if report.ok else f"{len(report.errors)} errors"))
    for doc_id, rule, message in report.errors[:20]:
        print(f"  {doc_id} [{rule}] {message}")
    if args.markers:
        print("marker breakdown (marker: heads, tails, elsewhere):")
        for marker, (h, t, o) in marker_breakdown(corpus).items():
            print(f"  {marker}: {h}, {t}, {o}")
    return 0


def _load_warm(path):
    return load_checkpoint(path) if path else None


def cmd_train(args) -> int:
    defaults = {**WINDOW_DEFAULTS, **ENCODER_DEFAULTS, **TRAIN_DEFAULTS,
                "seed": 0, "train_path": None, "test_path": None,
                "init": None, "out": None, "dump_predictions": False}
    cfg = resolve(args, defaults)
    if not cfg["train_path"]:
        print("error: --train is required", file=sys.stderr)
        return 2
    run_dir = resolve_run_dir(args.run_dir, "train")
    train_corpus = load_corpus(cfg["train_path"], split="train")
    init = _load_warm(cfg["init"])
    ckpt = train(train_corpus, window_from(cfg), train_from(cfg, cfg["seed"]),
                 encoder_cfg=None if init else encoder_from(cfg, cfg["seed"]),
                 init=init, source_tag=cfg["train_path"])
    out = cfg["out"] or str(run_dir / "model.npz")
    save_checkpoint(ckpt, out)
    write_json(run_dir / "training_log.json", ckpt.metadata)
    inputs = [cfg["train_path"]]
    if cfg["test_path"]:
        inputs.append(cfg["test_path"])
        test_corpus = load_corpus(cfg["test_path"], split="test")
        window_cfg = window_from(cfg)
        predictions = [rec for doc in test_corpus.documents
                       for rec in predict_document(doc, ckpt, window_cfg)]
        metrics = evaluate(predictions, test_corpus, window_cfg)
        write_json(run_dir / "metrics.json", metrics)
        print(f"test macro_f1: {metrics['macro_f1']}")
        if cfg["dump_predictions"]:
            with open(run_dir / "predictions.jsonl", "w", encoding="utf-8") as fh:
                for rec in predictions:
                    fh.write(json.dumps({
                        "doc_id": rec.doc_id, "head": rec.head,
                        "tail": rec.tail, "label": rec.label,
                        "probs": rec.probs}, sort_keys=True) + "\n")
    write_manifest(run_dir, "train", cfg, inputs)
    print(f"checkpoint: {out}")
    return 0


def cmd_baseline(args) -> int:
    defaults = {**WINDOW_DEFAULTS, "seed": 0, "train_path": None,
                "test_path": None, "reg": 0.01, "epochs": 10}
    cfg = resolve(args, defaults)
    if not cfg["train_path"] or not cfg["test_path"]:
        print("error: --train and --test are required", file=sys.stderr)
        return 2
    run_dir = resolve_run_dir(args.run_dir, "baseline")
    train_corpus = load_corpus(cfg["train_path"], split="train")
    test_corpus = load_corpus(cfg["test_path"], split="test")
    window_cfg = window_from(cfg)
    model, lexicon = train_baseline(train_corpus, window_cfg, reg=cfg["reg"],
                                    epochs=cfg["epochs"], seed=cfg["seed"])
    records = predict_baseline(test_corpus, model, lexicon, window_cfg)
    metrics = evaluate(records, test_corpus, window_cfg)
    write_json(run_dir / "metrics.json", metrics)
    write_manifest(run_dir, "baseline", cfg,
                   [cfg["train_path"], cfg["test_path"]])
    print(f"baseline macro_f1: {metrics['macro_f1']}")
    return 0


def cmd_pretrain(args) -> int:
    defaults = {**ENCODER_DEFAULTS, **TRAIN_DEFAULTS, "seed": 0,
                "corpus_path": None, "objective": "mlm", "out": None,
                "window": 20, "max_tokens": 512, "mode": "head_given"}
    cfg = resolve(args, defaults)
    if not cfg["corpus_path"]:
        print("error: --corpus is required", file=sys.stderr)
        return 2
    run_dir = resolve_run_dir(args.run_dir, f"pretrain-{cfg['objective']}")
    corpus = load_corpus(cfg["corpus_path"], split="unlabeled")
    ckpt = pretrain(corpus, cfg["objective"], encoder_from(cfg, cfg["seed"]),
                    train_from(cfg, cfg["seed"]))
    out = cfg["out"] or str(run_dir / "encoder.npz")
    save_checkpoint(ckpt, out)
    write_json(run_dir / "training_log.json", ckpt.metadata)
    write_manifest(run_dir, "pretrain", cfg, [cfg["corpus_path"]])
    print(f"pretrained ({cfg['objective']}) checkpoint: {out}")
    return 0


def cmd_transfer(args) -> int:
    """Chained pipelines: [pretrain ->] source supervised -> target fine-tune."""
    defaults = {**WINDOW_DEFAULTS, **ENCODER_DEFAULTS, **TRAIN_DEFAULTS,
                "seed": 0, "source_path": None, "target_path": None,
                "test_path": None, "pretrain_path": None,
                "pretrain_objective": "mlm", "out": None}
    cfg = resolve(args, defaults)
    for key in ("source_path", "target_path", "test_path"):
        if not cfg[key]:
            print(f"error: --{key.replace('_path', '')} is required",
                  file=sys.stderr)
            return 2
    run_dir = resolve_run_dir(args.run_dir, "transfer")
    window_cfg = window_from(cfg)
    inputs = [cfg["source_path"], cfg["target_path"], cfg["test_path"]]
    init = None
    if cfg["pretrain_path"]:
        inputs.append(cfg["pretrain_path"])
        unlabeled = load_corpus(cfg["pretrain_path"], split="unlabeled")
        init = pretrain(unlabeled, cfg["pretrain_objective"],
                        encoder_from(cfg, cfg["seed"]),
                        train_from(cfg, cfg["seed"]))
    source = load_corpus(cfg["source_path"], split="train")
    source_ckpt = train(source, window_cfg, train_from(cfg, cfg["seed"]),
                        encoder_cfg=None if init else encoder_from(cfg, cfg["seed"]),
                        init=init, source_tag="source")
    target = load_corpus(cfg["target_path"], split="train")
    final = train(target, window_cfg, train_from(cfg, cfg["seed"] + 1),
                  init=source_ckpt, source_tag="target-finetune")
    out = cfg["out"] or str(run_dir / "model.npz")
    save_checkpoint(final, out)
    test_corpus = load_corpus(cfg["test_path"], split="test")
    predictions = [rec for doc in test_corpus.documents
                   for rec in predict_document(doc, final, window_cfg)]
    metrics = evaluate(predictions, test_corpus, window_cfg)
    write_json(run_dir / "metrics.json", metrics)
    write_manifest(run_dir, "transfer", cfg, inputs)
    print(f"transfer macro_f1: {metrics['macro_f1']}")
    return 0


AL_DEFAULTS = {**WINDOW_DEFAULTS, **ENCODER_DEFAULTS, **TRAIN_DEFAULTS,
               "seed": 0, "pool_path": None, "test_path": None,
               "iterations": 10, "budget": None, "strategy": None,
               "warm_start": None, "oracle": "simulated", "mc_passes": 5,
               "port": 8765, "state_dir": None, "timeout": None,
               "marker_file": None}

TABLE_COLUMNS = ["strategy", "warm_start", "seed", "iteration",
                 "labeled_size", "macro_f1", "support_f1", "attack_f1",
                 "no_rel_f1"]


def al_config_from(cfg: dict) -> ALConfig:
    return ALConfig(
        iterations=cfg["iterations"], budget=cfg["budget"],
        strategy=cfg["strategy"], window=window_from(cfg),
        train=train_from(cfg, cfg["seed"]),
        encoder=encoder_from(cfg, cfg["seed"]), oracle=cfg["oracle"],
        seed=cfg["seed"], mc_passes=cfg["mc_passes"],
        marker_file=cfg["marker_file"])


def cmd_al_run(args) -> int:
    cfg = resolve(args, AL_DEFAULTS)
    if not cfg["pool_path"] or not cfg["test_path"] or not cfg["strategy"]:
        print("error: --pool, --test and --strategy are required",
              file=sys.stderr)
        return 2
    run_dir = resolve_run_dir(args.run_dir, f"al-{cfg['strategy']}")
    pool = load_corpus(cfg["pool_path"], split="train")
    test = load_corpus(cfg["test_path"], split="test")
    warm = _load_warm(cfg["warm_start"])
    al_cfg = al_config_from(cfg)
    if cfg["oracle"] == "external":
        from .server import run_external
        state_dir = cfg["state_dir"] or str(run_dir / "state")
        trace = run_external(pool, test, al_cfg, state_dir, port=cfg["port"],
                             warm_start=warm, timeout=cfg["timeout"])
    else:
        trace = run_al(pool, test, al_cfg, warm_start=warm)
    write_json(run_dir / "trace.json", trace.to_dict())
    write_table(run_dir / "table.tsv", trace.rows(), TABLE_COLUMNS)
    write_manifest(run_dir, "al-run", cfg, [cfg["pool_path"], cfg["test_path"]])
    if trace.suspended:
        print("run suspended (external oracle timeout); state is resumable")
        return 1
    print(f"final macro_f1: {trace.records[-1]['macro_f1']}")
    return 0


def cmd_al_compare(args) -> int:
    defaults = {**AL_DEFAULTS, "strategies": None, "seeds": "0,1,2,3,4"}
    cfg = resolve(args, defaults)
    if not cfg["pool_path"] or not cfg["test_path"] or not cfg["strategies"]:
        print("error: --pool, --test and --strategies are required",
              file=sys.stderr)
        return 2
    run_dir = resolve_run_dir(args.run_dir, "al-compare")
    pool = load_corpus(cfg["pool_path"], split="train")
    test = load_corpus(cfg["test_path"], split="test")
    warm = _load_warm(cfg["warm_start"])
    strategies = [s.strip() for s in cfg["strategies"].split(",") if s.strip()]
    seeds = [int(s) for s in str(cfg["seeds"]).split(",") if str(s).strip()]
    base_cfg = al_config_from({**cfg, "strategy": strategies[0]})
    report = compare_strategies(pool, test, base_cfg, strategies, seeds,
                                warm_start=warm)
    write_json(run_dir / "report.json", report)
    write_table(run_dir / "table.tsv", report["cells"], TABLE_COLUMNS)
    write_manifest(run_dir, "al-compare", cfg,
                   [cfg["pool_path"], cfg["test_path"]])
    for row in report["means"]:
        print(f"{row['strategy']}{' +warm' if row['warm_start'] else ''} "
              f"iter {row['iteration']}: {row['mean_macro_f1']:.4f}")
    return 0


def cmd_eval(args) -> int:
    defaults = {**WINDOW_DEFAULTS, "predictions_path": None, "gold_path": None,
                "seed": 0}
    cfg = resolve(args, defaults)
    if not cfg["predictions_path"] or not cfg["gold_path"]:
        print("error: --predictions and --gold are required", file=sys.stderr)
        return 2
    gold = load_corpus(cfg["gold_path"], split="test")
    records = []
    with open(cfg["predictions_path"], encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                raw = json.loads(line)
                records.append(PredictionRecord(
                    doc_id=raw["doc_id"], head=raw["head"], tail=raw["tail"],
                    label=raw["label"],
                    probs=tuple(raw["probs"]) if raw.get("probs") else None))
    metrics = evaluate(records, gold, window_from(cfg))
    print(json.dumps(metrics, sort_keys=True, indent=2))
    if args.run_dir:
        run_dir = resolve_run_dir(args.run_dir, "eval")
        write_json(run_dir / "metrics.json", metrics)
        write_manifest(run_dir, "eval", cfg,
                       [cfg["predictions_path"], cfg["gold_path"]])
    return 0


def cmd_serve(args) -> int:
    from .server import AnnotationServer, AnnotationService
    cfg = resolve(args, {**AL_DEFAULTS, "overlap": False, "static_dir": None})
    if not cfg["pool_path"] or not cfg["test_path"] or not cfg["strategy"]:
        print("error: --pool, --test and --strategy are required",
              file=sys.stderr)
        return 2
    run_dir = resolve_run_dir(args.run_dir, "serve")
    pool = load_corpus(cfg["pool_path"], split="train")
    test = load_corpus(cfg["test_path"], split="test")
    warm = _load_warm(cfg["warm_start"])
    state_dir = cfg["state_dir"] or str(run_dir / "state")
    service = AnnotationService(pool, test, al_config_from(cfg), state_dir,
                                warm_start=warm, overlap=bool(cfg["overlap"]))
    server = AnnotationServer(service, port=cfg["port"],
                              static_dir=cfg["static_dir"])
    write_manifest(run_dir, "serve", cfg, [cfg["pool_path"], cfg["test_path"]])
    print(f"annotation service on http://127.0.0.1:{server.port}/ "
          f"(state: {state_dir})", flush=True)
    server.start()
    try:
        while True:
            if service.done_event.wait(timeout=1.0):
                write_json(run_dir / "trace.json", service.trace.to_dict())
                write_table(run_dir / "table.tsv", service.trace.rows(),
                            TABLE_COLUMNS)
                print("active learning run complete; still serving progress",
                      flush=True)
                service.done_event.clear()
    except KeyboardInterrupt:
        print("shutting down")
    finally:
        server.shutdown()
    return 0


def cmd_rerun(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    command = manifest["command"]
    handler = _COMMANDS.get(command)
    if handler is None:
        print(f"error: manifest command {command!r} is not rerunnable",
              file=sys.stderr)
        return 2
    sub = argparse.Namespace(config=None, run_dir=args.run_dir)
    for key, value in manifest["config"].items():
        setattr(sub, key, value)
    return handler(sub)


_COMMANDS = {}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="argrel",
        description="Context-aware argument relation prediction with "
                    "active learning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", default=None)
    p.add_argument("--n-docs", dest="n_docs", type=int, default=None)
    p.add_argument("--props-per-doc", dest="props_per_doc", type=int,
                   default=None)
    p.add_argument("--relation-rate", dest="relation_rate", type=float,
                   default=None)
    p.add_argument("--distance-skew", dest="distance_skew", type=float,
                   default=None)
    p.add_argument("--marker-plant-prob", dest="marker_plant_prob", type=float,
                   default=None)
    p.add_argument("--vocab-size", dest="vocab_size", type=int, default=None)
    p.add_argument("--attack-rate", dest="attack_rate", type=float, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--profile", choices=("basic", "ampere"), default="basic")
    p.add_argument("--markers", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="supervised training")
    p.add_argument("--train", dest="train_path", default=None)
    p.add_argument("--test", dest="test_path", default=None)
    p.add_argument("--init", default=None, help="warm-start checkpoint")
    p.add_argument("--out", default=None)
    p.add_argument("--dump-predictions", dest="dump_predictions",
                   action="store_const", const=True, default=None)
    add_common_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("baseline", help="feature-based linear baseline")
    p.add_argument("--train", dest="train_path", default=None)
    p.add_argument("--test", dest="test_path", default=None)
    p.add_argument("--reg", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    add_common_flags(p, groups=("window",))
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("pretrain", help="self-supervised pretraining")
    p.add_argument("--corpus", dest="corpus_path", default=None)
    p.add_argument("--objective", choices=("mlm", "context_pert"), default=None)
    p.add_argument("--out", default=None)
    add_common_flags(p, groups=("encoder", "train"))
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("transfer", help="chained transfer pipelines")
    p.add_argument("--source", dest="source_path", default=None)
    p.add_argument("--target", dest="target_path", default=None)
    p.add_argument("--test", dest="test_path", default=None)
    p.add_argument("--pretrain-corpus", dest="pretrain_path", default=None)
    p.add_argument("--pretrain-objective", dest="pretrain_objective",
                   choices=("mlm", "context_pert"), default=None)
    p.add_argument("--out", default=None)
    add_common_flags(p)
    p.set_defaults(func=cmd_transfer)

    for name, handler in (("al-run", cmd_al_run), ("al-compare", cmd_al_compare)):
        p = sub.add_parser(name, help=f"active learning ({name})")
        p.add_argument("--pool", dest="pool_path", default=None)
        p.add_argument("--test", dest="test_path", default=None)
        if name == "al-run":
            p.add_argument("--strategy", default=None)
            p.add_argument("--oracle", choices=("simulated", "external"),
                           default=None)
            p.add_argument("--port", type=int, default=None)
            p.add_argument("--state-dir", dest="state_dir", default=None)
            p.add_argument("--timeout", type=float, default=None)
        else:
            p.add_argument("--strategies", default=None)
            p.add_argument("--seeds", default=None)
        p.add_argument("--iterations", type=int, default=None)
        p.add_argument("--budget", type=int, default=None)
        p.add_argument("--warm-start", dest="warm_start", default=None)
        p.add_argument("--mc-passes", dest="mc_passes", type=int, default=None)
        p.add_argument("--marker-file", dest="marker_file", default=None)
        add_common_flags(p)
        p.set_defaults(func=handler)

    p = sub.add_parser("eval", help="score a predictions dump against gold")
    p.add_argument("--predictions", dest="predictions_path", default=None)
    p.add_argument("--gold", dest="gold_path", default=None)
    add_common_flags(p, groups=("window",))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="annotation service (external oracle)")
    p.add_argument("--pool", dest="pool_path", default=None)
    p.add_argument("--test", dest="test_path", default=None)
    p.add_argument("--strategy", default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--warm-start", dest="warm_start", default=None)
    p.add_argument("--mc-passes", dest="mc_passes", type=int, default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--state-dir", dest="state_dir", default=None)
    p.add_argument("--static-dir", dest="static_dir", default=None)
    p.add_argument("--overlap", action="store_const", const=True, default=None)
    add_common_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("rerun", help="re-dispatch a manifest")
    p.add_argument("manifest")
    p.add_argument("--run-dir", dest="run_dir", default=None)
    p.set_defaults(func=cmd_rerun)

    return parser


_COMMANDS.update({
    "synth": cmd_synth, "train": cmd_train, "baseline": cmd_baseline,
    "pretrain": cmd_pretrain, "transfer": cmd_transfer, "al-run": cmd_al_run,
    "al-compare": cmd_al_compare, "eval": cmd_eval,
})


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ArgrelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
