#!/usr/bin/env python3
"""End-to-end desk experiment: synthesize a corpus, train the classifier,
annotate, pretrain the plain seq2seq, finetune the three model variants,
and print the comparison table.

    python3 scripts/run_pipeline.py --workdir runs/desk [--pairs 6000]
"""

import argparse
import json
import time
from pathlib import Path

from ecm.cli import main as cli


def sh(*argv):
    rc = cli(list(argv))
    if rc != 0:
        raise SystemExit(rc)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", default="runs/desk")
    ap.add_argument("--pairs", type=int, default=6000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--config", default=None)
    args = ap.parse_args()

    wd = Path(args.workdir)
    wd.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()

    corpus = wd / "corpus.jsonl"
    sh("gen-data", "--out", str(corpus), "--seed", str(args.seed),
       "--pairs", str(args.pairs), "--stats-out", str(wd / "corpus_stats.json"))

    clf = wd / "classifier.ckpt"
    cfg = ["--config", args.config] if args.config else []
    sh("train-classifier", "--corpus", str(corpus), "--out", str(clf), *cfg)

    annotated = wd / "annotated.jsonl"
    sh("annotate", "--corpus", str(corpus), "--classifier", str(clf),
       "--out", str(annotated), "--stats-out", str(wd / "annotation_stats.json"))

    pretrain = wd / "pretrain.ckpt"
    sh("pretrain", "--corpus", str(annotated), "--out", str(pretrain),
       "--log-csv", str(wd / "pretrain.csv"), "--vocab-out", str(wd / "vocab.json"),
       "--quiet", *cfg)

    variants = {
        "ecm": None,
        "emb": "emb",
        "seq2seq": "skip",
    }
    reports = {}
    for name, mechanisms in variants.items():
        if mechanisms == "skip":
            ckpt = pretrain
        else:
            ckpt = wd / f"{name}.ckpt"
            extra = ["--mechanisms", mechanisms] if mechanisms else []
            sh("train", "--corpus", str(annotated), "--init", str(pretrain),
               "--out", str(ckpt), "--log-csv", str(wd / f"{name}.csv"),
               "--quiet", *extra, *cfg)
        report = wd / f"report_{name}.json"
        sh("evaluate", "--model", str(ckpt), "--corpus", str(annotated),
           "--report-out", str(report), *cfg)
        reports[name] = json.loads(report.read_text())

    sh("eip", "--corpus", str(annotated), "--out-csv", str(wd / "eip.csv"),
       "--out-json", str(wd / "eip.json"))

    print(f"\n{'variant':<10s} {'perplexity':>10s} {'accuracy':>9s}")
    for name, rep in reports.items():
        print(f"{name:<10s} {rep['perplexity']:10.3f} {rep['emotion_accuracy']:9.3f}")
    print(f"\ntotal {time.perf_counter() - t0:.0f}s; artifacts in {wd}/")


if __name__ == "__main__":
    main()
