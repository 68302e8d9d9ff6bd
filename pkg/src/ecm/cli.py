"""Command-line entry points for the full pipeline.

Subcommands map 1:1 onto the package operations:

  gen-data          write a synthetic emotional-dialogue corpus (JSONL)
  train-classifier  train the recurrent emotion classifier
  annotate          label a corpus with a classifier (or the lexicon)
  pretrain          stage 1: train the plain seq2seq and build the vocab
  train             stage 2: warm-start the emotion model and finetune
  evaluate          perplexity + emotion accuracy report (JSON)
  eip               emotion-interaction matrix (JSON/CSV)
  chat              decode one post from the terminal
  serve             run the HTTP inference service

Exit codes: 0 success, 1 runtime failure (one-line `error: ...` on
stderr), 2 usage errors. The config file is JSON; see configs/desk.json.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import corpus as cp
from .classifier import (ClassifierConfig, LexiconClassifier,
                         RecurrentClassifier, annotate_corpus, train_classifier)
from .corpus import EmotionCategory, Vocab
from .errors import ConfigError, EcmError
from .evaluation import (eip_from_corpus, evaluate_model, unique_posts)
from .inference import beam_search
from .model import EcmConfig, EcmModel
from .training import TrainConfig, init_from_pretrained, train

DEFAULT_CONFIG = {
    "model": {"hidden": 64, "layers": 1, "embed_dim": 32, "emotion_dim": 32,
              "attn_dim": 64, "max_decode_len": 20, "alpha_full_bce": True,
              "memory_loss": True, "dtype": "f32",
              "use_category_embedding": True, "use_internal_memory": True,
              "use_external_memory": True},
    "train": {"batch_size": 16, "lr": 0.5, "max_epochs": 12, "patience": 3,
              "clip_norm": 5.0, "seed": 7},
    "classifier": {"embed_dim": 32, "hidden": 32, "bidirectional": True,
                   "batch_size": 32, "lr": 0.5, "max_epochs": 40,
                   "patience": 10, "clip_norm": 5.0, "seed": 7},
    "data": {"max_vocab": 2000, "split": [0.8, 0.1, 0.1], "seed": 7},
    "eval": {"beam_width": 4, "max_posts": 60},
}


def load_config(path: str | None) -> dict:
    config = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        for section, values in user.items():
            if section.startswith("_"):
                continue
            if section not in config:
                raise ConfigError(f"unknown config section {section!r}")
            if not isinstance(values, dict):
                raise ConfigError(f"config section {section!r} must be an object")
            for key, value in values.items():
                if key not in config[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                config[section][key] = value
    return config


def model_config_from(config: dict, vocab: Vocab, **overrides) -> EcmConfig:
    d = dict(config["model"])
    d.update(overrides)
    return EcmConfig(vocab_generic=vocab.n_generic, vocab_emotion=vocab.n_emotion, **d)


def load_split_corpus(path: str, config: dict):
    pairs = cp.load_corpus(path)
    ratios = tuple(config["data"]["split"])
    return cp.split_corpus(pairs, ratios, seed=config["data"]["seed"])


def resolve_checkpoint(path: str | None) -> str:
    # ECM_CHECKPOINT overrides the configured path, matching the service
    effective = os.environ.get("ECM_CHECKPOINT") or path
    if not effective:
        raise ConfigError("no checkpoint given (use --model or ECM_CHECKPOINT)")
    return effective


def pick_classifier(path: str | None):
    if path:
        return RecurrentClassifier.load(path)
    return LexiconClassifier(cp.default_lexicon())


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    pairs, counts = cp.generate_synthetic_corpus(seed=args.seed, n_pairs=args.pairs,
                                                 empathy=args.empathy)
    cp.save_corpus(args.out, pairs)
    stats = {cat.value: n for cat, n in counts.items()}
    if args.stats_out:
        Path(args.stats_out).write_text(json.dumps(stats, indent=2, sort_keys=True))
    print(f"wrote {len(pairs)} pairs to {args.out}")
    for name, n in stats.items():
        print(f"  {name:<8s} {n}")
    return 0


def cmd_train_classifier(args) -> int:
    config = load_config(args.config)
    pairs = cp.load_corpus(args.corpus)
    lexicon = cp.default_lexicon()
    vocab = cp.build_vocab(pairs, max_size=config["data"]["max_vocab"], lexicon=lexicon)
    clf_config = ClassifierConfig(vocab_size=vocab.size, **config["classifier"])
    clf, report = train_classifier(pairs, config=clf_config, vocab=vocab,
                                   lexicon=lexicon, ratios=tuple(config["data"]["split"]))
    clf.save(args.out)
    print(f"classifier saved to {args.out}")
    print(f"held-out accuracy {report.overall_accuracy:.3f} "
          f"(train {report.train_accuracy:.3f}, {report.epochs_run} epochs)")
    for name, acc in report.per_category.items():
        print(f"  {name:<8s} {acc:.3f}")
    return 0


def cmd_annotate(args) -> int:
    pairs = cp.load_corpus(args.corpus)
    classifier = pick_classifier(args.classifier)
    labeled, stats = annotate_corpus(pairs, classifier)
    cp.save_corpus(args.out, labeled)
    if args.stats_out:
        Path(args.stats_out).write_text(json.dumps(stats, indent=2, sort_keys=True))
    print(f"annotated {len(labeled)} pairs -> {args.out}")
    for name, n in stats.items():
        print(f"  {name:<8s} {n}")
    return 0


def cmd_pretrain(args) -> int:
    config = load_config(args.config)
    train_pairs, valid_pairs, _ = load_split_corpus(args.corpus, config)
    lexicon = cp.default_lexicon()
    vocab = cp.build_vocab(train_pairs + valid_pairs,
                           max_size=config["data"]["max_vocab"], lexicon=lexicon)
    if args.vocab_out:
        vocab.save(args.vocab_out)
    train_ex = cp.encode_pairs(train_pairs, vocab)
    valid_ex = cp.encode_pairs(valid_pairs, vocab)
    model = EcmModel(model_config_from(config, vocab,
                                       use_category_embedding=False,
                                       use_internal_memory=False,
                                       use_external_memory=False),
                     seed=config["train"]["seed"])
    tcfg = TrainConfig(**config["train"])
    log = train(model, train_ex, valid_ex, tcfg, quiet=args.quiet)
    model.save(args.out, vocab=vocab)
    if args.log_csv:
        log.save_csv(args.log_csv)
    print(f"pretrained seq2seq saved to {args.out} "
          f"({len(log.epochs)} epochs, val ppl {log.epochs[-1].val_ppl:.3f})")
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config)
    pretrained, vocab = EcmModel.load(args.init)
    if vocab is None:
        raise ConfigError(f"{args.init} does not embed a vocab")
    train_pairs, valid_pairs, _ = load_split_corpus(args.corpus, config)
    train_ex = cp.encode_pairs(train_pairs, vocab)
    valid_ex = cp.encode_pairs(valid_pairs, vocab)
    overrides = {}
    if args.mechanisms is not None:
        chosen = {m.strip() for m in args.mechanisms.split(",") if m.strip()}
        unknown = chosen - {"emb", "imem", "emem"}
        if unknown:
            raise ConfigError(f"unknown mechanisms: {sorted(unknown)}")
        overrides = {"use_category_embedding": "emb" in chosen,
                     "use_internal_memory": "imem" in chosen,
                     "use_external_memory": "emem" in chosen}
    ecm_config = model_config_from(config, vocab, **overrides)
    model, copied = init_from_pretrained(ecm_config, pretrained,
                                         seed=config["train"]["seed"])
    tcfg = TrainConfig(**config["train"])
    log = train(model, train_ex, valid_ex, tcfg, quiet=args.quiet)
    model.save(args.out, vocab=vocab)
    if args.log_csv:
        log.save_csv(args.log_csv)
    print(f"model saved to {args.out} ({len(copied)} warm-started tensors, "
          f"{len(log.epochs)} epochs, val ppl {log.epochs[-1].val_ppl:.3f})")
    return 0


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    model, vocab = EcmModel.load(resolve_checkpoint(args.model))
    if vocab is None:
        raise ConfigError("model checkpoint does not embed a vocab")
    _, _, test_pairs = load_split_corpus(args.corpus, config)
    test_ex = cp.encode_pairs(test_pairs, vocab)
    posts = unique_posts(test_pairs, cap=config["eval"]["max_posts"])
    classifier = pick_classifier(args.classifier)
    report = evaluate_model(model, classifier, test_ex, posts, vocab,
                            width=config["eval"]["beam_width"])
    if args.report_out:
        Path(args.report_out).write_text(report.to_json())
    print(report.render())
    return 0


def cmd_eip(args) -> int:
    pairs = cp.load_corpus(args.corpus)
    classifier = pick_classifier(args.classifier)
    matrix = eip_from_corpus(pairs, classifier)
    if args.out_json:
        Path(args.out_json).write_text(matrix.to_json())
    if args.out_csv:
        Path(args.out_csv).write_text(matrix.to_csv())
    print(matrix.render())
    return 0


def cmd_chat(args) -> int:
    model, vocab = EcmModel.load(resolve_checkpoint(args.model))
    if vocab is None:
        raise ConfigError("model checkpoint does not embed a vocab")
    emotion = EmotionCategory.from_name(args.emotion)
    tokens = cp.tokenize(args.post)
    if not tokens:
        raise ConfigError("post is empty after tokenization")
    result = beam_search(model, vocab, vocab.encode(tokens), emotion,
                         width=args.beam, max_len=args.max_len)
    top = result.top
    if top is None:
        print("(no response: every hypothesis contained unknown words)")
        return 0
    print(f"[{emotion.value}] {top.text(vocab)}   (log-prob {top.score:.3f})")
    if args.trace:
        print(json.dumps(top.trace.to_list(), indent=2))
    return 0


def cmd_serve(args) -> int:
    from .service import serve
    serve(args.model, args.classifier, host=args.host, port=args.port,
          ui_origin=args.ui_origin)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecm",
                                     description="emotion-conditioned chat pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dialogue corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--pairs", type=int, default=6000)
    p.add_argument("--empathy", type=float, default=0.6)
    p.add_argument("--stats-out")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-classifier", help="train the emotion classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("annotate", help="label a corpus with a classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classifier", help="classifier checkpoint; lexicon if omitted")
    p.add_argument("--stats-out")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("pretrain", help="stage 1: plain seq2seq")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--vocab-out")
    p.add_argument("--log-csv")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="stage 2: finetune with emotion mechanisms")
    p.add_argument("--corpus", required=True)
    p.add_argument("--init", required=True, help="pretrained seq2seq checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--mechanisms",
                   help="comma list of emb,imem,emem (default: config flags)")
    p.add_argument("--log-csv")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="perplexity + emotion accuracy")
    p.add_argument("--model", help="model checkpoint (ECM_CHECKPOINT overrides)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--classifier")
    p.add_argument("--config")
    p.add_argument("--report-out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("eip", help="emotion interaction matrix")
    p.add_argument("--corpus", required=True)
    p.add_argument("--classifier")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_eip)

    p = sub.add_parser("chat", help="decode one post")
    p.add_argument("--model", help="model checkpoint (ECM_CHECKPOINT overrides)")
    p.add_argument("--post", required=True)
    p.add_argument("--emotion", required=True)
    p.add_argument("--beam", type=int, default=4)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--trace", action="store_true")
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--model", help="model checkpoint (ECM_CHECKPOINT overrides)")
    p.add_argument("--classifier")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui-origin", default="*")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EcmError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
