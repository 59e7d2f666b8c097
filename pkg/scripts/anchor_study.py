#!/usr/bin/env python3
"""Anchored-L2 study: accuracy with and without the proximal penalty.

For each shot count, trains the text-initialized head with
anchor_lambda in {0, lambda} across the benchmark seeds and prints the
per-seed accuracies plus the mean difference. On this benchmark the
text init is strong enough that the anchor tends to help (or at least
not hurt) at every shot count tried.
"""

import argparse

import numpy as np

from cniprobe.benchmark import BENCHMARK_SEEDS, default_train_config, make_benchmark
from cniprobe.headinit import HeadInitSpec, MODE_CNI, average_text_embeddings, init_head
from cniprobe.model import LossConfig, init_params
from cniprobe.train import train


def run(seed, shots, lam):
    train_ds, test_ds, bank = make_benchmark(seed)
    head = init_head(HeadInitSpec(mode=MODE_CNI),
                     average_text_embeddings(bank), bank.num_classes,
                     bank.dim)
    cfg = default_train_config(MODE_CNI, seed, shots=shots,
                               loss=LossConfig(anchor_lambda=lam))
    _, hist = train(init_params(head), train_ds, test_ds, cfg)
    return hist.final.test_top1


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shots", type=int, nargs="+", default=[1, 5])
    ap.add_argument("--lam", type=float, default=0.1)
    ap.add_argument("--seeds", type=int, nargs="+",
                    default=list(BENCHMARK_SEEDS))
    args = ap.parse_args()

    for shots in args.shots:
        plain = [run(s, shots, 0.0) for s in args.seeds]
        anchored = [run(s, shots, args.lam) for s in args.seeds]
        print(f"{shots}-shot  plain    {[f'{a:.3f}' for a in plain]} "
              f"mean {np.mean(plain):.4f}")
        print(f"{shots}-shot  anchored {[f'{a:.3f}' for a in anchored]} "
              f"mean {np.mean(anchored):.4f}  "
              f"delta {np.mean(anchored) - np.mean(plain):+.4f}")


if __name__ == "__main__":
    main()
