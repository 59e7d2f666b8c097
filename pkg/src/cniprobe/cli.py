"""Command-line experiment runner.

Subcommands: synth, init-head, sample-shots, train, distill, eval,
sweep. Every command takes an optional --config JSON file whose keys
mirror the flag names; explicit flags win, and the fully resolved
configuration is echoed into the output directory as config.json.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical error. Outputs are deterministic given flags and seeds;
the only timestamps live in summary metadata files, never in
metrics.csv or tensor files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import benchmark
from .dataset import EmbeddingDataset, ShotSpec, load_embedding_dataset, make_synthetic, sample_k_shot
from .distill import distill_train
from .errors import (
    CniProbeError,
    ConfigError,
    DataError,
    NumericalError,
    ParseError,
)
from .evaluate import top1, zero_shot
from .headinit import (
    Head,
    HeadInitSpec,
    MODE_CNI,
    MODE_PARTIAL,
    MODE_RANDOM,
    TextEmbeddingBank,
    average_text_embeddings,
    init_head,
)
from .model import LossConfig, ModelParams, init_params
from .tensorio import parse_dataset_manifest, read_tensor, write_json, write_tensor
from .train import SweepEntry, TrainConfig, sweep, train

_PARAM_NAMES = ("A", "a", "q", "W", "b")


def _timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def _merge_config(args: argparse.Namespace, parser_defaults: dict) -> None:
    """Fill in None-valued flags from --config, then from defaults."""
    cfg = _load_config_file(getattr(args, "config", None))
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if attr not in parser_defaults:
            raise ConfigError(f"unknown config key {key!r}")
        if getattr(args, attr, None) is None:
            setattr(args, attr, value)
    for attr, default in parser_defaults.items():
        if getattr(args, attr, None) is None:
            setattr(args, attr, default)


def _build_dataclass(cls, doc: dict, where: str):
    """Construct `cls` from a JSON dict, rejecting unknown keys cleanly."""
    known = {f.name for f in fields(cls)}
    for key in doc:
        if key not in known:
            raise ConfigError(f"{where}: unknown key {key!r}")
    return cls(**doc)


def _echo_config(out: Path, command: str, args: argparse.Namespace,
                 keys: list[str]) -> None:
    doc = {"command": command}
    for key in keys:
        doc[key] = getattr(args, key)
    write_json(out / "config.json", doc)


# --- experiment manifest ------------------------------------------------------

def load_experiment(manifest_path: str | Path):
    """Read an experiment manifest: train/test datasets plus the bank."""
    path = Path(manifest_path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise ParseError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("train", "test", "bank"):
        if key not in doc:
            raise ParseError(f"{path}: experiment manifest missing {key!r}")

    base = path.parent
    train_ds = load_embedding_dataset(parse_dataset_manifest(doc["train"], base))
    test_ds = load_embedding_dataset(parse_dataset_manifest(doc["test"], base))

    bank_doc = doc["bank"]
    if not isinstance(bank_doc, dict) or "embeddings" not in bank_doc:
        raise ParseError(f"{path}: bank section needs an 'embeddings' path")
    emb = read_tensor(base / str(bank_doc["embeddings"]))
    if emb.ndim != 3:
        raise ParseError(f"{path}: bank tensor must have shape (N, C, D)")
    bank = TextEmbeddingBank(
        embeddings=emb.astype(np.float64),
        prompt_templates=[str(s) for s in bank_doc.get("prompt_templates", [])],
        class_names=[str(s) for s in bank_doc.get("class_names", [])],
    )
    if bank.num_classes != train_ds.num_classes:
        raise ParseError(f"{path}: bank and train split disagree on C")
    return train_ds, test_ds, bank


def _write_params(out: Path, params: ModelParams) -> None:
    for name in _PARAM_NAMES:
        write_tensor(out / f"params_{name}.cnit", params.group(name))
    write_json(out / "model.json", {
        "dim": params.dim,
        "num_classes": params.num_classes,
        "logit_scale": params.logit_scale,
    })


def _read_params(path: str | Path) -> ModelParams:
    """Load model params from a train output dir, or lift a saved head."""
    d = Path(path)
    if (d / "params_W.cnit").exists():
        arrays = {n: read_tensor(d / f"params_{n}.cnit").astype(np.float64)
                  for n in _PARAM_NAMES}
        scale = 10.0
        model_doc = d / "model.json"
        if model_doc.exists():
            with open(model_doc, "r", encoding="utf-8") as f:
                scale = float(json.load(f).get("logit_scale", 10.0))
        return ModelParams(logit_scale=scale, **arrays)
    if (d / "head_W.cnit").exists():
        W = read_tensor(d / "head_W.cnit").astype(np.float64)
        b = read_tensor(d / "head_b.cnit").astype(np.float64)
        head = Head(W=W, b=b, init_provenance=[])
        return init_params(head)
    raise DataError(f"{d}: found neither params_*.cnit nor head_W.cnit")


def _head_spec(args) -> HeadInitSpec:
    fraction = getattr(args, "fraction", None)
    if args.init != MODE_PARTIAL:
        fraction = None
    return HeadInitSpec(mode=args.init, fraction=fraction,
                        seed=getattr(args, "init_seed", 0) or 0)


def _write_head(out: Path, head: Head, spec: HeadInitSpec) -> None:
    write_tensor(out / "head_W.cnit", head.W)
    write_tensor(out / "head_b.cnit", head.b)
    write_json(out / "head.json", {
        "mode": spec.mode,
        "fraction": spec.fraction,
        "seed": spec.seed,
        "num_text_rows": sum(1 for p in head.init_provenance if p == "text"),
        "provenance": head.init_provenance,
    })


# --- subcommands --------------------------------------------------------------

_SYNTH_DEFAULTS = dict(classes=benchmark.BENCH_CLASSES, dim=benchmark.BENCH_DIM,
                       tokens=benchmark.BENCH_TOKENS,
                       train_per_class=benchmark.BENCH_TRAIN_PER_CLASS,
                       test_per_class=benchmark.BENCH_TEST_PER_CLASS,
                       prompts=benchmark.BENCH_PROMPTS,
                       img_noise=benchmark.BENCH_IMG_NOISE,
                       txt_noise=benchmark.BENCH_TXT_NOISE, seed=1)


def cmd_synth(args) -> int:
    _merge_config(args, _SYNTH_DEFAULTS)
    out = _out_dir(args)
    train_ds, test_ds, bank = make_synthetic(
        num_classes=int(args.classes), dim=int(args.dim),
        tokens_per_example=int(args.tokens),
        train_per_class=int(args.train_per_class),
        test_per_class=int(args.test_per_class),
        num_prompts=int(args.prompts), img_noise=float(args.img_noise),
        txt_noise=float(args.txt_noise), seed=int(args.seed),
    )
    write_tensor(out / "train_tokens.cnit", train_ds.tokens)
    write_tensor(out / "train_labels.cnit", train_ds.labels)
    write_tensor(out / "test_tokens.cnit", test_ds.tokens)
    write_tensor(out / "test_labels.cnit", test_ds.labels)
    write_tensor(out / "bank.cnit", bank.embeddings)

    def split_doc(name: str, ds: EmbeddingDataset) -> dict:
        return {
            "name": name,
            "tokens": f"{name}_tokens.cnit",
            "labels": f"{name}_labels.cnit",
            "num_classes": ds.num_classes,
            "dim": ds.dim,
            "tokens_per_example": ds.tokens.shape[1],
            "class_names": bank.class_names,
        }

    write_json(out / "manifest.json", {
        "format": "cniprobe-experiment",
        "train": split_doc("train", train_ds),
        "test": split_doc("test", test_ds),
        "bank": {
            "embeddings": "bank.cnit",
            "prompt_templates": bank.prompt_templates,
            "class_names": bank.class_names,
        },
        "generator": {k: getattr(args, k) for k in sorted(_SYNTH_DEFAULTS)},
    })
    _echo_config(out, "synth", args, sorted(_SYNTH_DEFAULTS))
    print(f"wrote synthetic dataset to {out}")
    return 0


_INIT_HEAD_DEFAULTS = dict(init=MODE_CNI, fraction=None, init_seed=0)


def cmd_init_head(args) -> int:
    _merge_config(args, _INIT_HEAD_DEFAULTS)
    out = _out_dir(args)
    _, _, bank = load_experiment(args.manifest)
    spec = _head_spec(args)
    avg = average_text_embeddings(bank)
    head = init_head(spec, avg, bank.num_classes, bank.dim)
    _write_head(out, head, spec)
    _echo_config(out, "init-head", args, ["manifest"] + sorted(_INIT_HEAD_DEFAULTS))
    print(f"wrote head ({spec.mode}) to {out}")
    return 0


_SAMPLE_DEFAULTS = dict(k=None, fraction=None, seed=0)


def cmd_sample_shots(args) -> int:
    _merge_config(args, _SAMPLE_DEFAULTS)
    out = _out_dir(args)
    train_ds, _, _ = load_experiment(args.manifest)
    spec = ShotSpec(
        k=None if args.k is None else int(args.k),
        fraction=None if args.fraction is None else float(args.fraction),
        seed=int(args.seed),
    )
    indices = sample_k_shot(train_ds, spec)
    write_json(out / "shots.json", {
        "indices": indices,
        "k": spec.k,
        "fraction": spec.fraction,
        "seed": spec.seed,
        "num_classes": train_ds.num_classes,
    })
    _echo_config(out, "sample-shots", args, ["manifest"] + sorted(_SAMPLE_DEFAULTS))
    print(f"wrote {len(indices)} indices to {out / 'shots.json'}")
    return 0


_TRAIN_DEFAULTS = dict(
    init=MODE_CNI, fraction=None, init_seed=0, shots=None, train_fraction=None,
    policy="PL", epochs=benchmark.BENCH_EPOCHS, batch_size=benchmark.BENCH_BATCH,
    lr=None, warmup_steps=0, min_lr=0.0, label_smoothing=0.1, anchor_lambda=0.0,
    seed=0, eval_every=10,
)

_DISTILL_EXTRA = dict(distill_weight=benchmark.DISTILL_WEIGHT,
                      temperature=benchmark.DISTILL_TEMPERATURE)


def _train_config(args, distill: bool = False) -> TrainConfig:
    lr = args.lr if args.lr is not None else benchmark.default_lr(args.init)
    loss = LossConfig(
        label_smoothing=float(args.label_smoothing),
        anchor_lambda=float(args.anchor_lambda),
        distill_weight=float(args.distill_weight) if distill else 0.0,
        distill_temperature=float(args.temperature) if distill else 1.0,
    )
    shot_spec = None
    if args.shots is not None and args.train_fraction is not None:
        raise ConfigError("set at most one of --shots / --train-fraction")
    if args.shots is not None:
        shot_spec = ShotSpec(k=int(args.shots), seed=int(args.seed))
    elif args.train_fraction is not None:
        shot_spec = ShotSpec(fraction=float(args.train_fraction),
                             seed=int(args.seed))
    return TrainConfig(
        epochs=int(args.epochs), batch_size=int(args.batch_size),
        base_lr=float(lr), warmup_steps=int(args.warmup_steps),
        min_lr=float(args.min_lr), loss=loss, policy=str(args.policy),
        seed=int(args.seed), eval_every=int(args.eval_every),
        shot_spec=shot_spec,
    )


def _finish_run(out: Path, command: str, args, keys, params, history) -> int:
    (out / "metrics.csv").write_text(history.to_csv(), encoding="utf-8")
    write_json(out / "metrics.json", history.to_json_dict())
    _write_params(out, params)
    write_json(out / "summary.json", {
        "final_top1": history.final.test_top1,
        "final_epoch": history.final.epoch,
        "generated_at": _timestamp(),
    })
    _echo_config(out, command, args, keys)
    print(f"final_top1={history.final.test_top1!r}")
    return 0


def cmd_train(args) -> int:
    _merge_config(args, _TRAIN_DEFAULTS)
    out = _out_dir(args)
    train_ds, test_ds, bank = load_experiment(args.manifest)
    spec = _head_spec(args)
    avg = average_text_embeddings(bank)
    head = init_head(spec, avg, bank.num_classes, bank.dim)
    _write_head(out, head, spec)
    cfg = _train_config(args)
    args.lr = cfg.base_lr  # echo the resolved default, not the sentinel
    params, history = train(init_params(head), train_ds, test_ds, cfg)
    keys = ["manifest"] + sorted(_TRAIN_DEFAULTS)
    return _finish_run(out, "train", args, keys, params, history)


def cmd_distill(args) -> int:
    _merge_config(args, {**_TRAIN_DEFAULTS, **_DISTILL_EXTRA, "policy": "ALL"})
    out = _out_dir(args)
    train_ds, test_ds, bank = load_experiment(args.manifest)
    teacher = _read_params(args.teacher)
    spec = _head_spec(args)
    avg = average_text_embeddings(bank)
    head = init_head(spec, avg, bank.num_classes, bank.dim)
    _write_head(out, head, spec)
    cfg = _train_config(args, distill=True)
    args.lr = cfg.base_lr  # echo the resolved default, not the sentinel
    unlabeled = train_ds if cfg.loss.distill_weight > 0 else None
    params, history = distill_train(teacher, init_params(head), train_ds,
                                    unlabeled, test_ds, cfg)
    keys = ["manifest", "teacher"] + sorted({**_TRAIN_DEFAULTS, **_DISTILL_EXTRA})
    return _finish_run(out, "distill", args, keys, params, history)


_EVAL_DEFAULTS = dict(params=None, zero_shot=False, split="test")


def cmd_eval(args) -> int:
    _merge_config(args, _EVAL_DEFAULTS)
    out = _out_dir(args)
    train_ds, test_ds, bank = load_experiment(args.manifest)
    if args.split not in ("train", "test"):
        raise ConfigError(f"unknown split {args.split!r}")
    ds = test_ds if args.split == "test" else train_ds
    if bool(args.zero_shot) == (args.params is not None):
        raise ConfigError("choose exactly one of --zero-shot / --params")
    if args.zero_shot:
        report = zero_shot(bank, ds)
    else:
        report = top1(_read_params(args.params), ds)
    write_json(out / "eval.json", {
        "generated_at": _timestamp(),
        "report": report.to_json_dict(),
    })
    _echo_config(out, "eval", args, ["manifest"] + sorted(_EVAL_DEFAULTS))
    print(f"top1={report.top1!r}")
    return 0


def _default_sweep_entries(seed: int) -> list[dict]:
    entries = []
    for shots in (1, 5):
        for mode in (MODE_CNI, MODE_RANDOM):
            entries.append({
                "label": f"{mode}_{shots}shot",
                "init": {"mode": mode, "seed": seed},
                "train": {"shots": shots, "seed": seed},
            })
    return entries


def cmd_sweep(args) -> int:
    if args.seed is None:
        args.seed = 0
    out = _out_dir(args)
    train_ds, test_ds, bank = load_experiment(args.manifest)
    doc = _load_config_file(args.config) if args.config else {}
    entry_docs = doc.get("entries") or _default_sweep_entries(int(args.seed))

    entries = []
    for i, e in enumerate(entry_docs):
        if "label" not in e:
            raise ConfigError(f"sweep entry {i} missing 'label'")
        init_doc = dict(e.get("init", {}))
        for key in init_doc:
            if key not in ("mode", "fraction", "seed"):
                raise ConfigError(f"sweep entry {i} init: unknown key {key!r}")
        spec = HeadInitSpec(mode=init_doc.get("mode", MODE_CNI),
                            fraction=init_doc.get("fraction"),
                            seed=int(init_doc.get("seed", args.seed)))
        t = dict(e.get("train", {}))
        shots = t.pop("shots", None)
        t.setdefault("seed", int(args.seed))
        t.setdefault("base_lr", benchmark.default_lr(spec.mode))
        t.setdefault("epochs", benchmark.BENCH_EPOCHS)
        t.setdefault("batch_size", benchmark.BENCH_BATCH)
        if shots is not None:
            t["shot_spec"] = ShotSpec(k=int(shots), seed=int(t["seed"]))
        if "loss" in t:
            t["loss"] = _build_dataclass(LossConfig, t["loss"],
                                         f"sweep entry {i} loss")
        entries.append(SweepEntry(
            label=str(e["label"]), init=spec,
            cfg=_build_dataclass(TrainConfig, t, f"sweep entry {i} train")))

    rows = sweep(bank, train_ds, test_ds, entries)
    lines = ["label,final_top1,error"]
    for r in rows:
        acc = "" if r.final_top1 is None else repr(r.final_top1)
        err = r.error or ""
        lines.append(f"{r.label},{acc},{err.replace(',', ';')}")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_json(out / "summary.json", {
        "rows": [{"label": r.label, "final_top1": r.final_top1,
                  "error": r.error} for r in rows],
        "generated_at": _timestamp(),
    })
    for line in lines:
        print(line)
    return 0


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cniprobe",
        description="Few-shot adaptation experiments on frozen embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="JSON config file (flags override)")

    p = sub.add_parser("synth", help="generate a synthetic embedding dataset")
    add_common(p)
    p.add_argument("--classes", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--tokens", type=int)
    p.add_argument("--train-per-class", type=int)
    p.add_argument("--test-per-class", type=int)
    p.add_argument("--prompts", type=int)
    p.add_argument("--img-noise", type=float)
    p.add_argument("--txt-noise", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    def add_init_flags(p):
        p.add_argument("--init", choices=[MODE_CNI, MODE_RANDOM, MODE_PARTIAL])
        p.add_argument("--fraction", type=float,
                       help="text-row fraction for partial init")
        p.add_argument("--init-seed", type=int)

    p = sub.add_parser("init-head", help="build a head from the text bank")
    add_common(p)
    p.add_argument("--manifest", required=True)
    add_init_flags(p)
    p.set_defaults(func=cmd_init_head)

    p = sub.add_parser("sample-shots", help="sample a k-shot index subset")
    add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--fraction", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sample_shots)

    def add_train_flags(p):
        p.add_argument("--manifest", required=True)
        add_init_flags(p)
        p.add_argument("--shots", type=int)
        p.add_argument("--train-fraction", type=float)
        p.add_argument("--policy", choices=["L", "PL", "ALL"])
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--warmup-steps", type=int)
        p.add_argument("--min-lr", type=float)
        p.add_argument("--label-smoothing", type=float)
        p.add_argument("--anchor-lambda", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--eval-every", type=int)

    p = sub.add_parser("train", help="fine-tune from an initialized head")
    add_common(p)
    add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("distill", help="train a student against a teacher")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--teacher", required=True,
                   help="directory with the teacher's params_*.cnit")
    p.add_argument("--distill-weight", type=float)
    p.add_argument("--temperature", type=float)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("eval", help="evaluate a model or the zero-shot oracle")
    add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--params", help="directory with params or head tensors")
    p.add_argument("--zero-shot", action="store_true", default=None)
    p.add_argument("--split", choices=["train", "test"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a list of training configurations")
    add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CniProbeError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
