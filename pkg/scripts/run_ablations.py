#!/usr/bin/env python3
"""Ablation experiment: train the full model and the three one-mechanism-
removed variants with identical seeds, data and warm start, then print the
comparison table.

    python3 scripts/run_ablations.py --workdir runs/ablations [--pairs 3000]
"""

import argparse
from pathlib import Path

from ecm import corpus as cp
from ecm.classifier import LexiconClassifier
from ecm.evaluation import ablation_suite, render_ablation_table, unique_posts
from ecm.model import EcmConfig, EcmModel
from ecm.training import TrainConfig, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", default="runs/ablations")
    ap.add_argument("--pairs", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--epochs", type=int, default=10)
    args = ap.parse_args()

    wd = Path(args.workdir)
    wd.mkdir(parents=True, exist_ok=True)

    lexicon = cp.default_lexicon()
    pairs, _ = cp.generate_synthetic_corpus(seed=args.seed, n_pairs=args.pairs)
    vocab = cp.build_vocab(pairs, max_size=2000, lexicon=lexicon)
    train_p, valid_p, test_p = cp.split_corpus(pairs, (0.8, 0.1, 0.1), seed=args.seed)
    train_ex = cp.encode_pairs(train_p, vocab)
    valid_ex = cp.encode_pairs(valid_p, vocab)
    test_ex = cp.encode_pairs(test_p, vocab)

    def config(**kw):
        return EcmConfig(vocab_generic=vocab.n_generic, vocab_emotion=vocab.n_emotion,
                         hidden=args.hidden, layers=1, embed_dim=32, emotion_dim=32,
                         attn_dim=args.hidden, **kw)

    tcfg = TrainConfig(batch_size=32, lr=0.5, max_epochs=args.epochs, patience=3,
                       seed=args.seed)
    print("pretraining the plain seq2seq ...")
    baseline = EcmModel(config(), seed=args.seed)
    train(baseline, train_ex, valid_ex, tcfg)
    baseline.save(wd / "pretrain.ckpt", vocab=vocab)

    print("training the four variants ...")
    reports = ablation_suite(
        train_ex, valid_ex, test_ex, unique_posts(test_p, cap=60),
        vocab, LexiconClassifier(lexicon), baseline,
        config(use_category_embedding=True, use_internal_memory=True,
               use_external_memory=True),
        tcfg)

    table = render_ablation_table(reports)
    (wd / "ablations.txt").write_text(table + "\n")
    print()
    print(table)


if __name__ == "__main__":
    main()
