#!/usr/bin/env python3
"""Head-initialization comparison on the synthetic benchmark.

Trains cni / partial / random heads at several shot counts across the
benchmark seeds and prints mean/std test accuracy per cell, plus the
zero-shot reference row.
"""

import argparse

import numpy as np

from cniprobe.benchmark import BENCHMARK_SEEDS, default_train_config, make_benchmark
from cniprobe.evaluate import zero_shot
from cniprobe.headinit import HeadInitSpec, average_text_embeddings, init_head
from cniprobe.model import init_params
from cniprobe.train import train


def run_cell(mode, shots, seeds, fraction=None):
    accs = []
    for seed in seeds:
        train_ds, test_ds, bank = make_benchmark(seed)
        spec = HeadInitSpec(mode=mode, fraction=fraction, seed=seed)
        head = init_head(spec, average_text_embeddings(bank),
                         bank.num_classes, bank.dim)
        cfg = default_train_config(mode, seed, shots=shots)
        _, hist = train(init_params(head), train_ds, test_ds, cfg)
        accs.append(hist.final.test_top1)
    return np.mean(accs), np.std(accs)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shots", type=int, nargs="+", default=[1, 5])
    ap.add_argument("--seeds", type=int, nargs="+",
                    default=list(BENCHMARK_SEEDS))
    ap.add_argument("--fraction", type=float, default=0.5,
                    help="text fraction for the partial row")
    args = ap.parse_args()

    zs = [zero_shot(make_benchmark(s)[2], make_benchmark(s)[1]).top1
          for s in args.seeds]
    print(f"zero-shot reference: {np.mean(zs):.4f} +/- {np.std(zs):.4f}")
    header = "init".ljust(12) + "".join(f"{k}-shot".rjust(18)
                                        for k in args.shots)
    print(header)
    print("-" * len(header))
    rows = [("cni", None), (f"partial({args.fraction})", args.fraction),
            ("random", None)]
    for label, fraction in rows:
        mode = label.split("(")[0]
        cells = []
        for k in args.shots:
            mean, std = run_cell(mode, k, args.seeds, fraction=fraction)
            cells.append(f"{mean:.4f} +/- {std:.4f}")
        print(label.ljust(12) + "".join(c.rjust(18) for c in cells))


if __name__ == "__main__":
    main()
