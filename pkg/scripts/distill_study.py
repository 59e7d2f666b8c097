#!/usr/bin/env python3
"""Distillation study: full-data teacher -> one-shot student.

Per seed: train an ALL-policy teacher on the full training split, then
train two one-shot students from the same text-initialized start — one
plain, one with the teacher's soft labels over the full (unlabeled)
training pool — and print teacher/plain/distilled accuracies.
"""

import argparse
from dataclasses import replace

import numpy as np

from cniprobe.benchmark import (
    BENCHMARK_SEEDS,
    DISTILL_TEMPERATURE,
    DISTILL_WEIGHT,
    default_train_config,
    make_benchmark,
)
from cniprobe.distill import distill_train
from cniprobe.headinit import HeadInitSpec, MODE_CNI, average_text_embeddings, init_head
from cniprobe.model import LossConfig, init_params
from cniprobe.train import train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shots", type=int, default=1)
    ap.add_argument("--weight", type=float, default=DISTILL_WEIGHT)
    ap.add_argument("--temperature", type=float, default=DISTILL_TEMPERATURE)
    ap.add_argument("--seeds", type=int, nargs="+",
                    default=list(BENCHMARK_SEEDS))
    args = ap.parse_args()

    rows = []
    for seed in args.seeds:
        train_ds, test_ds, bank = make_benchmark(seed)
        head = init_head(HeadInitSpec(mode=MODE_CNI),
                         average_text_embeddings(bank), bank.num_classes,
                         bank.dim)
        start = init_params(head)

        teacher, t_hist = train(
            start.copy(), train_ds, test_ds,
            default_train_config(MODE_CNI, seed, policy="ALL"))

        base = default_train_config(MODE_CNI, seed, shots=args.shots,
                                    policy="ALL")
        _, plain_hist = distill_train(
            teacher, start.copy(), train_ds, None, test_ds,
            replace(base, loss=LossConfig(distill_weight=0.0)))
        _, dist_hist = distill_train(
            teacher, start.copy(), train_ds, train_ds, test_ds,
            replace(base, loss=LossConfig(
                distill_weight=args.weight,
                distill_temperature=args.temperature)))
        row = (seed, t_hist.final.test_top1, plain_hist.final.test_top1,
               dist_hist.final.test_top1)
        rows.append(row)
        print(f"seed {row[0]}: teacher {row[1]:.4f}  plain {row[2]:.4f}  "
              f"distilled {row[3]:.4f}")

    teach, plain, dist = (np.mean([r[i] for r in rows]) for i in (1, 2, 3))
    wins = sum(r[3] > r[2] for r in rows)
    print(f"means: teacher {teach:.4f}  plain {plain:.4f}  distilled "
          f"{dist:.4f}  ({wins}/{len(rows)} distillation wins)")


if __name__ == "__main__":
    main()
