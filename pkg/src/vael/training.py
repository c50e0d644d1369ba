"""Optimization loop with deterministic shuffling/noise, metric history,
checkpointing, and exact resumption.

Shuffles and noise streams are pure functions of (seed, epoch), so a run is
reproducible from its config alone and a checkpoint written at an epoch
boundary resumes the identical trajectory.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import read_container, write_container
from .data import PairDataset, supervision_subset
from .model import ModelConfig, VaelModel

log = logging.getLogger(__name__)

_SHUFFLE_SALT = 0x51
_NOISE_SALT = 0xA5

HISTORY_FIELDS = ("epoch", "step", "l_rec", "l_q", "kl", "l_digits", "val_class_acc")


class TrainingError(Exception):
    pass


class NonFiniteLossError(TrainingError):
    def __init__(self, message, breakdown=None):
        super().__init__(message if breakdown is None else f"{message}; terms: {breakdown}")
        self.breakdown = breakdown


class CheckpointFormatError(TrainingError):
    pass


@dataclass
class TrainConfig:
    epochs: int
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    supervised: bool = False
    eval_every: int = 1  # validation cadence in epochs
    patience: int = 10  # evaluations without improvement before stopping
    checkpoint_path: str | None = None
    checkpoint_every: int = 0  # epochs between saves; 0 = final epoch only

    def __post_init__(self):
        # lr = 0 is allowed: a zero-rate step must leave parameters unchanged
        if self.epochs < 1 or self.lr < 0 or self.batch_size < 1 or self.eval_every < 1:
            raise TrainingError(f"invalid training configuration: {self}")


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0  # epochs completed
    best_val: float = -np.inf
    evals_since_best: int = 0
    history: list = field(default_factory=list)
    rng_state: dict | None = None
    notes: list = field(default_factory=list)


def _epoch_rngs(seed: int, epoch: int):
    shuffle_rng = np.random.default_rng([seed, _SHUFFLE_SALT, epoch])
    noise_rng = np.random.default_rng([seed, _NOISE_SALT, epoch])
    return shuffle_rng, noise_rng


def _validation_accuracy(model, dataset, idx, chunk=256) -> float:
    if len(idx) == 0:
        return float("nan")
    hits = 0
    for start in range(0, len(idx), chunk):
        part = idx[start : start + chunk]
        res = model.classify(dataset.images[part])
        hits += int((res.predictions == dataset.label[part]).sum())
    return hits / len(idx)


def train(
    model: VaelModel,
    dataset: PairDataset,
    config: TrainConfig,
    train_indices=None,
    resume_state: TrainState | None = None,
):
    """Run the optimization loop; returns (model, history rows).

    One step: batch -> posterior -> reparametrized latent -> fact
    probabilities -> relaxed world -> decoded mean -> weighted objective ->
    backward -> Adam update.  History rows carry per-epoch term means and the
    validation label accuracy at the evaluation cadence.
    """
    train_idx = dataset.indices("train") if train_indices is None else np.asarray(train_indices)
    if len(train_idx) == 0:
        raise TrainingError("empty training split")
    val_idx = dataset.indices("val")

    y_digits_all = None
    if config.supervised:
        sup_idx = set(supervision_subset(dataset, within=train_idx).tolist())
        y_digits_all = np.full((len(dataset), 2), -1, dtype=np.int64)
        for i in sup_idx:
            y_digits_all[i] = (dataset.left[i], dataset.right[i])

    state = resume_state if resume_state is not None else TrainState()
    mn = model.config.m + model.config.n

    for epoch in range(state.epoch, config.epochs):
        shuffle_rng, noise_rng = _epoch_rngs(config.seed, epoch)
        perm = shuffle_rng.permutation(len(train_idx))
        order = train_idx[perm]
        sums = {"l_rec": 0.0, "l_q": 0.0, "kl": 0.0, "l_digits": 0.0}
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            bsz = len(batch)
            eps = noise_rng.standard_normal((bsz, mn))
            gumbel = noise_rng.gumbel(size=(bsz, model.J))
            x = dataset.images[batch]
            y = dataset.label[batch]
            y_digits = y_digits_all[batch] if y_digits_all is not None else None
            try:
                loss, breakdown = model.elbo(x, y, y_digits=y_digits, eps=eps, gumbel=gumbel)
            except ad.NonFiniteError as exc:
                raise NonFiniteLossError(f"non-finite loss at step {state.step}: {exc}") from exc
            if not np.isfinite(loss.item()):
                raise NonFiniteLossError(
                    f"non-finite loss at step {state.step}", breakdown=breakdown
                )
            ad.zero_grad(model.params)
            ad.backward(loss)
            state.step += 1
            ad.adam_step(model.params, t=state.step, lr=config.lr)
            for k in sums:
                sums[k] += breakdown[k]
            n_batches += 1

        state.epoch = epoch + 1
        row = {
            "epoch": state.epoch,
            "step": state.step,
            "l_rec": sums["l_rec"] / n_batches,
            "l_q": sums["l_q"] / n_batches,
            "kl": sums["kl"] / n_batches,
            "l_digits": sums["l_digits"] / n_batches,
            "val_class_acc": "",
        }

        stop = False
        if state.epoch % config.eval_every == 0:
            acc = _validation_accuracy(model, dataset, val_idx)
            row["val_class_acc"] = acc
            if acc > state.best_val:
                state.best_val = acc
                state.evals_since_best = 0
            else:
                state.evals_since_best += 1
                if state.evals_since_best >= config.patience:
                    stop = True
        state.history.append(row)
        state.rng_state = {"seed": config.seed, "next_epoch": state.epoch}

        if config.checkpoint_path and (
            stop
            or state.epoch == config.epochs
            or (config.checkpoint_every and state.epoch % config.checkpoint_every == 0)
        ):
            checkpoint_save(model, state, config.checkpoint_path, train_config=config)
        if stop:
            log.info("early stop at epoch %d (no improvement for %d evals)", state.epoch, config.patience)
            break

    return model, state.history


# ---------------------------------------------------------------------------
# history serialization (comma-separated text)
# ---------------------------------------------------------------------------

def history_to_csv(history) -> str:
    lines = [",".join(HISTORY_FIELDS)]
    for row in history:
        lines.append(
            ",".join(
                str(row[k]) if not isinstance(row[k], float) else repr(row[k])
                for k in HISTORY_FIELDS
            )
        )
    return "\n".join(lines) + "\n"


def write_history(path, history):
    with open(path, "w") as fh:
        fh.write(history_to_csv(history))


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def checkpoint_save(model: VaelModel, state: TrainState | None, path, train_config=None):
    """Parameters + Adam moments + metadata (program hash, dims, train state)."""
    entries = {}
    for p in model.params:
        entries[p.name] = p.data
    if state is not None:
        for p in model.params:
            entries[f"adam.m.{p.name}"] = p.m
            entries[f"adam.v.{p.name}"] = p.v
    meta = model.metadata()
    if state is not None:
        meta["train"] = {
            "step": state.step,
            "epoch": state.epoch,
            "best_val": None if state.best_val == -np.inf else state.best_val,
            "evals_since_best": state.evals_since_best,
            "history": state.history,
            "rng_state": state.rng_state,
        }
    if train_config is not None:
        meta["train_config"] = asdict(train_config)
    write_container(path, entries, metadata=meta)


def checkpoint_load(path, program_text: str):
    """Rebuild (model, state) from a checkpoint and the program source.

    A hash mismatch between the stored and supplied program is recorded as a
    note and a warning, not an error: swapping programs over a trained
    checkpoint is a supported workflow.
    """
    entries, meta = read_container(path)
    if meta is None or "model" not in meta:
        raise CheckpointFormatError(f"{path} has no model metadata block")
    config = ModelConfig.from_metadata(meta["model"])
    model = VaelModel(program_text, config, np.random.default_rng(0))

    state = TrainState()
    import hashlib

    supplied_hash = hashlib.sha256(program_text.encode("utf-8")).hexdigest()
    if supplied_hash != meta.get("program_sha256"):
        note = (
            "program hash mismatch: checkpoint was trained with a different program "
            f"({meta.get('program_sha256', '?')[:12]}... vs {supplied_hash[:12]}...)"
        )
        state.notes.append(note)
        log.warning(note)

    expected = {p.name for p in model.params}
    provided = {n for n in entries if not n.startswith("adam.")}
    if expected != provided:
        raise CheckpointFormatError(
            f"parameter names differ: missing {sorted(expected - provided)}, "
            f"unexpected {sorted(provided - expected)}"
        )
    for p in model.params:
        if entries[p.name].shape != p.data.shape:
            raise CheckpointFormatError(
                f"shape mismatch for {p.name}: {entries[p.name].shape} vs {p.data.shape}"
            )
        p.data = entries[p.name].copy()
        if f"adam.m.{p.name}" in entries:
            p.m = entries[f"adam.m.{p.name}"].copy()
            p.v = entries[f"adam.v.{p.name}"].copy()

    train_meta = meta.get("train")
    if train_meta:
        state.step = train_meta["step"]
        state.epoch = train_meta["epoch"]
        state.best_val = -np.inf if train_meta["best_val"] is None else train_meta["best_val"]
        state.evals_since_best = train_meta.get("evals_since_best", 0)
        state.history = train_meta.get("history", [])
        state.rng_state = train_meta.get("rng_state")
    return model, state
