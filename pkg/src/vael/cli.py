"""Command-line surface: dataset build, training, evaluation, generation,
classification, and zero-retraining program swaps.

Every command reads a flat ``key = value`` config file, applies flag
overrides, and writes its outputs into a run directory together with a config
snapshot, the seed, and the dataset manifest hash it consumed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import data as vdata
from .evaluation import (
    ClassifierConfig,
    EvalReport,
    compute_m_class,
    compute_m_gen,
    compute_m_rec,
    train_eval_classifier,
)
from .logic import TASK_PROGRAMS
from .model import ModelConfig, VaelModel
from .training import TrainConfig, checkpoint_load, checkpoint_save, train, write_history


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# flat key = value config files
# ---------------------------------------------------------------------------

def _coerce(raw: str):
    text = raw.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", ""):
        return None
    if "," in text:
        return tuple(_coerce(part) for part in text.split(","))
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def read_config(path) -> dict:
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise CliError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        cfg[key.strip()] = _coerce(value)
    return cfg


def config_snapshot(cfg: dict) -> str:
    lines = []
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _digits_of(cfg) -> tuple:
    digits = cfg.get("digits", (0, 1, 2))
    if isinstance(digits, int):
        digits = (digits,)
    return tuple(sorted(int(d) for d in digits))


def model_config_from(cfg: dict) -> ModelConfig:
    kwargs = {}
    for name in ModelConfig.__dataclass_fields__:
        if name in cfg:
            kwargs[name] = cfg[name]
    if "conv_channels" in kwargs:
        kwargs["conv_channels"] = tuple(kwargs["conv_channels"])
    return ModelConfig(**kwargs)


def train_config_from(cfg: dict, out_dir: Path) -> TrainConfig:
    return TrainConfig(
        epochs=int(cfg.get("epochs", 50)),
        lr=float(cfg.get("lr", 1e-3)),
        batch_size=int(cfg.get("batch_size", 32)),
        seed=int(cfg.get("seed", 0)),
        supervised=bool(cfg.get("supervised", True)),
        eval_every=int(cfg.get("eval_every", 1)),
        patience=int(cfg.get("patience", 10)),
        checkpoint_path=str(out_dir / "checkpoint.vael"),
    )


def _manifest_sha(data_dir: Path) -> str:
    return hashlib.sha256((data_dir / "manifest.csv").read_bytes()).hexdigest()


def _write_run_files(out: Path, cfg: dict, extra: dict | None = None):
    out.mkdir(parents=True, exist_ok=True)
    merged = dict(cfg)
    if extra:
        merged.update(extra)
    (out / "config.txt").write_text(config_snapshot(merged))


def _load_sources(cfg) -> tuple:
    try:
        images = vdata.read_idx(cfg["source_images"])
        labels = vdata.read_idx(cfg["source_labels"])
    except KeyError as exc:
        raise CliError(f"config is missing the {exc.args[0]} key") from exc
    return images, labels


def _program_text(args, cfg, data_dir: Path | None) -> str:
    if getattr(args, "program", None):
        return Path(args.program).read_text()
    if cfg.get("program"):
        return Path(cfg["program"]).read_text()
    if data_dir is not None:
        default = data_dir / "programs" / "addition.plp"
        if default.exists():
            return default.read_text()
    raise CliError("no program given: pass --program or set `program` in the config")


def _data_dir(args, cfg) -> Path:
    raw = getattr(args, "data", None) or cfg.get("data_dir")
    if raw is None:
        raise CliError("config is missing the data_dir key")
    return Path(raw)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_make_data(args) -> int:
    cfg = read_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.digits is not None:
        cfg["digits"] = _coerce(args.digits)
    out = Path(args.out)
    digits = _digits_of(cfg)
    images, labels = _load_sources(cfg)
    count = int(cfg.get("count", 3000))
    seed = int(cfg.get("seed", 0))

    dataset = vdata.build_pairs(images, labels, count=count, digit_set=digits, seed=seed)
    dataset.mark_supervised(vdata.supervision_subset(dataset))
    vdata.save_pair_dataset(dataset, out)

    programs_dir = out / "programs"
    programs_dir.mkdir(parents=True, exist_ok=True)
    for task, builder in TASK_PROGRAMS.items():
        (programs_dir / f"{task}.plp").write_text(builder(digits))

    _write_run_files(out, cfg, {"digits": digits, "count": count, "seed": seed})
    print(f"wrote {len(dataset)} records and {len(TASK_PROGRAMS)} programs to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = read_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.per_pair is not None:
        cfg["per_pair"] = args.per_pair
    out = Path(args.out)
    data_dir = _data_dir(args, cfg)
    dataset = vdata.load_pair_dataset(data_dir)
    program_text = _program_text(args, cfg, data_dir)

    out.mkdir(parents=True, exist_ok=True)
    (out / "program.plp").write_text(program_text)
    model_cfg = model_config_from(cfg)
    train_cfg = train_config_from(cfg, out)

    train_indices = None
    if cfg.get("per_pair"):
        (train_indices,) = vdata.data_efficiency_splits(dataset, sizes=[int(cfg["per_pair"])])

    model = VaelModel(program_text, model_cfg, np.random.default_rng(train_cfg.seed))
    model, history = train(model, dataset, train_cfg, train_indices=train_indices)
    write_history(out / "history.csv", history)
    _write_run_files(out, cfg, {"manifest_sha256": _manifest_sha(data_dir)})
    final = [row["val_class_acc"] for row in history if row["val_class_acc"] != ""]
    print(f"trained {history[-1]['epoch']} epochs; best val accuracy {max(final) if final else 'n/a'}")
    print(f"checkpoint: {out / 'checkpoint.vael'}")
    return 0


def _load_model(args, cfg, data_dir):
    program_text = _program_text(args, cfg, data_dir)
    if not args.checkpoint:
        raise CliError("--checkpoint is required")
    model, state = checkpoint_load(args.checkpoint, program_text)
    return model, state


def _classifier_for(cfg, dataset, seed):
    images, labels = _load_sources(cfg)
    digits = dataset.digit_set
    gate = cfg.get("clf_gate", 0.98 if len(digits) == 3 else 0.95)
    clf_cfg = ClassifierConfig(
        epochs=int(cfg.get("clf_epochs", 15)),
        lr=float(cfg.get("clf_lr", 1e-2)),
        momentum=float(cfg.get("clf_momentum", 0.5)),
        seed=seed,
        accuracy_gate=float(gate),
    )
    return train_eval_classifier(images, labels, clf_cfg, digit_set=digits)


def cmd_eval(args) -> int:
    cfg = read_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = Path(args.out)
    data_dir = _data_dir(args, cfg)
    dataset = vdata.load_pair_dataset(data_dir)
    model, _ = _load_model(args, cfg, data_dir)

    m_class, n_class = compute_m_class(model, dataset, split="test")
    m_rec, n_rec = compute_m_rec(model, dataset, split="test")
    classifier = _classifier_for(cfg, dataset, seed)
    labels = None
    if args.labels:
        labels = tuple(int(v) for v in args.labels.split(","))
    n_per = int(args.n_samples) if args.n_samples else int(cfg.get("n_per_label", 20))
    m_gen, n_gen, skipped = compute_m_gen(
        model, classifier, np.random.default_rng(seed), labels=labels, n_per_label=n_per
    )

    report = EvalReport(m_rec, m_class, m_gen, n_rec, n_class, n_gen)
    out.mkdir(parents=True, exist_ok=True)
    text = report.render()
    text += f"classifier_holdout = {classifier.holdout_accuracy!r}\n"
    text += f"manifest_sha256 = {_manifest_sha(data_dir)}\n"
    if skipped:
        text += f"skipped_labels = {skipped}\n"
    (out / "report.txt").write_text(text)
    _write_run_files(out, cfg, {"seed": seed})
    print(text, end="")
    return 0


def cmd_classify(args) -> int:
    cfg = read_config(args.config)
    out = Path(args.out)
    data_dir = _data_dir(args, cfg)
    dataset = vdata.load_pair_dataset(data_dir)
    model, _ = _load_model(args, cfg, data_dir)
    idx = dataset.indices(args.split)
    res = model.classify(dataset.images[idx])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["offset", "true_label", "predicted_label"])
        for record, truth, pred in zip(idx, dataset.label[idx], res.predictions):
            writer.writerow([int(record), int(truth), int(pred)])
    acc = float(np.mean(res.predictions == dataset.label[idx]))
    (out / "report.txt").write_text(
        f"split = {args.split}\nn = {len(idx)}\naccuracy = {acc!r}\n"
        f"manifest_sha256 = {_manifest_sha(data_dir)}\n"
    )
    print(f"accuracy on {args.split}: {acc}")
    return 0


def cmd_generate(args) -> int:
    cfg = read_config(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = Path(args.out)
    model, _ = _load_model(args, cfg, None)
    rng = np.random.default_rng(seed)
    n = int(args.n_samples)

    samples_dir = out / "samples"
    samples_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    if args.evidence:
        generated = model.conditional_generate(args.evidence, rng, n=n)
        world_label = model._label_info()[3]
        entries = [(s.image, s.world, world_label[s.world.index]) for s in generated]
    else:
        generated = model.generate(rng, n=n)
        entries = [(s.image, s.world, s.label) for s in generated]
    for i, (image, world, label) in enumerate(entries):
        name = f"{i:04d}.pgm"
        vdata.write_pgm(image, samples_dir / name)
        rows.append((name, " ".join(str(c) for c in world.choices), label))
    with open(samples_dir / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "world_choice_vector", "label"])
        writer.writerows(rows)
    print(f"wrote {n} samples to {samples_dir}")
    return 0


def cmd_swap_eval(args) -> int:
    cfg = read_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = Path(args.out)
    data_dir = _data_dir(args, cfg)
    dataset = vdata.load_pair_dataset(data_dir)
    checkpoint_file = Path(args.checkpoint)
    before = checkpoint_file.read_bytes()
    model, state = _load_model(args, cfg, data_dir)

    # task ground truth recomputed from stored digit metadata, never from model output
    idx = dataset.indices("test")
    truth = np.array(
        [model.label_of_digits([int(l), int(r)]) for l, r in zip(dataset.left[idx], dataset.right[idx])]
    )
    preds = model.classify(dataset.images[idx]).predictions
    m_class = float(np.mean(preds == truth))

    classifier = _classifier_for(cfg, dataset, seed)
    n_per = int(args.n_samples) if args.n_samples else int(cfg.get("n_per_label", 20))
    m_gen, n_gen, skipped = compute_m_gen(
        model, classifier, np.random.default_rng(seed), n_per_label=n_per
    )

    out.mkdir(parents=True, exist_ok=True)
    text = (
        f"m_class = {m_class!r}\n"
        f"m_gen = {m_gen!r}\n"
        f"n_class = {len(idx)}\n"
        f"n_gen = {n_gen}\n"
        f"program = {args.program}\n"
        f"manifest_sha256 = {_manifest_sha(data_dir)}\n"
    )
    for note in state.notes:
        text += f"note = {note}\n"
    if skipped:
        text += f"skipped_labels = {skipped}\n"
    (out / "report.txt").write_text(text)
    assert checkpoint_file.read_bytes() == before  # read-only contract
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vael",
        description="two-digit generative reasoning: data, training, evaluation, generation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="flat key = value config file")
        p.add_argument("--out", required=True, help="run directory for outputs")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("make-data", help="build the paired-digit dataset and task programs")
    common(p)
    p.add_argument("--digits", default=None, help="comma-separated digit set, e.g. 0,1,2")
    p.set_defaults(fn=cmd_make_data)

    p = sub.add_parser("train", help="train a model on a built dataset")
    common(p)
    p.add_argument("--program", default=None, help="logic program file (.plp)")
    p.add_argument("--data", default=None, help="dataset directory (overrides config data_dir)")
    p.add_argument("--per-pair", dest="per_pair", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="held-out metrics: m_rec, m_class, m_gen")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--program", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--labels", default=None, help="conditioning labels for m_gen")
    p.add_argument("--n-samples", dest="n_samples", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("classify", help="write label predictions for a split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--program", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("generate", help="sample images (optionally conditioned on evidence)")
    common(p, config_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--program", default=None)
    p.add_argument("--evidence", default=None, help='e.g. "add(img,2)"')
    p.add_argument("--n-samples", dest="n_samples", default=8)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("swap-eval", help="evaluate a checkpoint under a swapped program")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--program", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--n-samples", dest="n_samples", default=None)
    p.set_defaults(fn=cmd_swap_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # structured nonzero exit on any module error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
