"""The repo-pinned synthetic benchmark and its default run settings.

Every directional claim in the test suite is measured on this
configuration: 10 classes in a 32-dimensional embedding space, 4
tokens per image, image noise 0.35, text noise 0.15, 8 prompts, 50
train and 50 test examples per class, over five fixed seeds.

At this scale the geometry gives the text rows (prompt-averaged,
cosine ~0.96 to the true prototypes) more signal than a one-shot
estimate (~0.71) but less than a five-shot estimate blended with
them, which is what makes the initialization, anchoring, and
distillation effects measurable.
"""

from __future__ import annotations

from .dataset import EmbeddingDataset, ShotSpec, make_synthetic
from .headinit import MODE_CNI, MODE_PARTIAL, MODE_RANDOM, TextEmbeddingBank
from .train import TrainConfig

BENCH_CLASSES = 10
BENCH_DIM = 32
BENCH_TOKENS = 4
BENCH_IMG_NOISE = 0.35
BENCH_TXT_NOISE = 0.15
BENCH_PROMPTS = 8
BENCH_TRAIN_PER_CLASS = 50
BENCH_TEST_PER_CLASS = 50

BENCHMARK_SEEDS = (1, 2, 3, 4, 5)

# Default initial learning rates, keeping the 1:5 text-init : random
# ratio; magnitudes are re-derived for this benchmark's size (a
# one-shot run sees ~200 optimizer steps, so clipped Adafactor updates
# of RMS <= lr need lr ~ 1e-3 to move a unit-norm row meaningfully).
CNI_LR = 1e-3
RANDOM_LR = 5e-3

BENCH_EPOCHS = 200
BENCH_BATCH = 32

# Distillation-study defaults: unit weight, mildly softened targets.
DISTILL_WEIGHT = 1.0
DISTILL_TEMPERATURE = 2.0

_MODE_LR = {MODE_CNI: CNI_LR, MODE_RANDOM: RANDOM_LR, MODE_PARTIAL: CNI_LR}


def make_benchmark(seed: int) -> tuple[EmbeddingDataset, EmbeddingDataset, TextEmbeddingBank]:
    """Train split, test split, and text bank for one benchmark seed."""
    return make_synthetic(
        num_classes=BENCH_CLASSES,
        dim=BENCH_DIM,
        tokens_per_example=BENCH_TOKENS,
        train_per_class=BENCH_TRAIN_PER_CLASS,
        test_per_class=BENCH_TEST_PER_CLASS,
        num_prompts=BENCH_PROMPTS,
        img_noise=BENCH_IMG_NOISE,
        txt_noise=BENCH_TXT_NOISE,
        seed=seed,
    )


def default_lr(init_mode: str) -> float:
    """Benchmark default initial LR for a head-initialization mode."""
    return _MODE_LR.get(init_mode, CNI_LR)


def default_train_config(init_mode: str, seed: int, shots: int | None = None,
                         **overrides) -> TrainConfig:
    """Benchmark TrainConfig for an init mode, seed, and shot count.

    Keyword overrides replace individual fields (e.g. policy="ALL",
    loss=LossConfig(anchor_lambda=0.1)).
    """
    kwargs = dict(
        epochs=BENCH_EPOCHS,
        batch_size=BENCH_BATCH,
        base_lr=default_lr(init_mode),
        seed=seed,
        eval_every=10,
        shot_spec=None if shots is None else ShotSpec(k=shots, seed=seed),
    )
    kwargs.update(overrides)
    return TrainConfig(**kwargs)
