"""Training loop: optional augmentation gate, Adam, plateau decay, best-checkpoint retention."""

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import grad
from .augment import AugmentationPipeline, apply_pipeline
from .data import make_batches, stratified_split
from .errors import ConfigError, ContractError, DivergenceError, EmptyInputError
from .features import compute_dataset_stats
from .model import Checkpoint, bind, build_model, model_forward, save_checkpoint

log = logging.getLogger(__name__)

PUBLIC_BATCH_SIZES = {"esc50": 45, "us8k": 64, "scv2": 128}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    lr0: float = 1e-3
    lr_factor: float = 0.3
    plateau_epochs: int = 8
    pipeline: AugmentationPipeline = field(default_factory=AugmentationPipeline)
    seed: int = 0
    precision: str = "float32"

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 < self.lr_factor < 1:
            raise ConfigError("lr_factor must lie in (0, 1)")
        if self.plateau_epochs < 1:
            raise ConfigError("plateau_epochs must be >= 1")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        return self

    @property
    def dtype(self):
        return np.dtype(self.precision)


def amazon_preset(**overrides):
    """80 epochs, batch 128, plateau decay."""
    return TrainConfig(**{"epochs": 80, "batch_size": 128, **overrides})


def public_preset(dataset, **overrides):
    """300 epochs with best-validation checkpointing, dataset-specific batch size."""
    return TrainConfig(**{"epochs": 300, "batch_size": PUBLIC_BATCH_SIZES[dataset], **overrides})


# -- Adam ------------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params, grads, state, lr):
    """In-place bias-corrected Adam update; returns ``(params, state)``."""
    missing = [name for name in params if name not in grads]
    if missing:
        raise ContractError(f"no gradient for parameter(s) {missing}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return params, state


# -- learning-rate schedule ------------------------------------------------------------

class PlateauSchedule:
    """Multiply the rate by ``factor`` after ``patience`` epochs without a new minimum."""

    def __init__(self, lr0, factor=0.3, patience=8):
        self.lr = lr0
        self.factor = factor
        self.patience = patience
        self.best = np.inf
        self.stale = 0
        self.decays = 0

    def step(self, val_loss):
        if val_loss < self.best:
            self.best = val_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr *= self.factor
                self.decays += 1
                self.stale = 0
        return self.lr


def lr_plateau_update(history, config):
    """Learning rate after observing the validation-loss ``history`` from the start."""
    if not history:
        raise EmptyInputError("empty validation history")
    sched = PlateauSchedule(config.lr0, config.lr_factor, config.plateau_epochs)
    for loss in history:
        sched.step(loss)
    return sched.lr


# -- loop ------------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    lr: float
    seconds: float
    augmented_batches: int
    steps: int

    def log_line(self):
        return "\t".join([str(self.epoch), repr(self.train_loss), repr(self.val_loss),
                          repr(self.val_acc), repr(self.lr), f"{self.seconds:.3f}",
                          str(self.augmented_batches)])


LOG_HEADER = "epoch\ttrain_loss\tval_loss\tval_acc\tlr\tseconds\taugmented_batches"


@dataclass
class TrainReport:
    epochs: list
    best_epoch: int
    checkpoint_path: str = None

    @property
    def augmented_batches(self):
        return sum(e.augmented_batches for e in self.epochs)

    @property
    def steps(self):
        return sum(e.steps for e in self.epochs)

    @property
    def best(self):
        return next(e for e in self.epochs if e.epoch == self.best_epoch)


def evaluate(config, params, x, y, batch_size=256):
    """(mean cross-entropy, accuracy, probabilities) without recording a tape."""
    probs = []
    for start in range(0, len(x), batch_size):
        logits = model_forward(config, params, x[start:start + batch_size])
        probs.append(grad.softmax(logits).data)
    probs = np.concatenate(probs, axis=0)
    loss = float(grad.cross_entropy(probs, np.asarray(y)).data)
    acc = float(np.mean(probs.argmax(axis=1) == np.asarray(y)))
    return loss, acc, probs


def train(train_x, train_y, val_x, val_y, model_config, config, params=None, out_dir=None):
    """Run the augmented training loop; returns ``(TrainReport, Checkpoint)``.

    ``params`` defaults to a fresh model seeded with ``config.seed``. The
    checkpoint holds the parameters of the epoch with the best validation
    accuracy (earliest on ties).
    """
    config.validate()
    if len(train_x) == 0 or len(val_x) == 0:
        raise EmptyInputError("training and validation splits must be non-empty")
    dtype = config.dtype
    train_x = np.asarray(train_x, dtype=dtype)
    val_x = np.asarray(val_x, dtype=dtype)
    train_y = np.asarray(train_y, dtype=np.int64)
    val_y = np.asarray(val_y, dtype=np.int64)
    n_classes = model_config.n_classes
    if params is None:
        params = build_model(model_config, config.seed)
    params = {name: np.array(p, dtype=dtype) for name, p in params.items()}

    aug_rng = np.random.default_rng([config.seed, 1])
    adam = AdamState()
    sched = PlateauSchedule(config.lr0, config.lr_factor, config.plateau_epochs)
    records = []
    best_acc, best_epoch, best_params = -1.0, 0, None
    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_fh = open(os.path.join(out_dir, "epochs.log"), "w", encoding="utf-8")
        log_fh.write(LOG_HEADER + "\n")
    try:
        for epoch in range(1, config.epochs + 1):
            lr = sched.lr
            loss_sum, seen, augmented, steps = 0.0, 0, 0, 0
            start = time.perf_counter()
            for step, idx in enumerate(make_batches(np.arange(len(train_x)), config.batch_size,
                                                    config.seed, epoch)):
                xb = train_x[idx]
                yb = grad.label_matrix(train_y[idx], n_classes, dtype)
                xb, yb, applied = apply_pipeline(config.pipeline, xb, yb, model_config,
                                                 params, aug_rng)
                augmented += applied
                tape = grad.Tape()
                leaves = bind(tape, params)
                logits = model_forward(model_config, leaves, tape.data(xb, dtype=dtype))
                loss = grad.cross_entropy(grad.softmax(logits), yb)
                value = loss.item()
                if not np.isfinite(value):
                    raise DivergenceError(epoch, step, value)
                gmap = tape.backward(loss, list(leaves.values()))
                adam_step(params, {n: gmap[t] for n, t in leaves.items()}, adam, lr)
                loss_sum += value * len(idx)
                seen += len(idx)
                steps += 1
            seconds = time.perf_counter() - start
            val_loss, val_acc, _ = evaluate(model_config, params, val_x, val_y)
            if not np.isfinite(val_loss):
                raise DivergenceError(epoch, steps, val_loss)
            record = EpochRecord(epoch, loss_sum / seen, val_loss, val_acc, lr, seconds,
                                 augmented, steps)
            records.append(record)
            if log_fh:
                log_fh.write(record.log_line() + "\n")
                log_fh.flush()
            log.info("epoch %d: train %.4f val %.4f acc %.3f (%.1fs)",
                     epoch, record.train_loss, val_loss, val_acc, seconds)
            if val_acc > best_acc:
                best_acc, best_epoch = val_acc, epoch
                best_params = {n: p.astype(np.float32) for n, p in params.items()}
            sched.step(val_loss)
    finally:
        if log_fh:
            log_fh.close()

    ckpt = Checkpoint(model_config, best_params, best_epoch, best_acc, config.seed)
    report = TrainReport(records, best_epoch)
    if out_dir is not None:
        report.checkpoint_path = os.path.join(out_dir, "best.ckpt")
        save_checkpoint(ckpt, report.checkpoint_path)
    return report, ckpt


def make_fold_runner(model_config, config, val_fraction=0.1):
    """``fit_predict`` for :func:`ateaug.metrics.kfold_cross_validate`.

    Each fold normalises with its own training statistics, holds out a
    stratified validation split for checkpoint selection, and predicts with
    the best checkpoint.
    """
    def fit_predict(train_x, train_y, test_x, fold):
        stats = compute_dataset_stats([train_x])
        std = stats.std if stats.std > 0 else 1.0
        cfg = model_config.with_normalization(stats.mean, std)
        norm = lambda a: ((a - stats.mean) / std).astype(np.float32)
        tr, va = stratified_split(train_y, val_fraction, config.seed + fold)
        fold_config = TrainConfig(**{**config.__dict__, "seed": config.seed + fold})
        _, ckpt = train(norm(train_x[tr]), train_y[tr], norm(train_x[va]), train_y[va],
                        cfg, fold_config)
        _, _, probs = evaluate(cfg, ckpt.params, norm(test_x), np.zeros(len(test_x), int))
        return probs.argmax(axis=1)

    return fit_predict
