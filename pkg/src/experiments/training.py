"""
Training loop for pairwise relation models.

Each epoch draws ``batches_per_epoch`` age-balanced pair batches, minimizes
the relation loss with Adam under the halving schedule, then reports the
per-relation MAE on a fixed set of validation pairs. A checkpoint is written
after every epoch; batch sampling is seeded per epoch, so a resumed run
follows the same trajectory as an uninterrupted one.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from data_processing.folds import split_fold
from data_processing.sampler import DEFAULT_BATCH_SIZE, AgeGroupSampler
from numerics.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from numerics.errors import ConfigError, NumericalError
from numerics.optim import Adam
from numerics.tensor import Tensor, no_grad
from model.configs import AGE_TARGET
from relations.algebra import check_ages, relation_targets

from .losses import relation_loss
from .predictor import build_model_for, checkpoint_name, make_predictor

logger = logging.getLogger(__name__)

DESK_EPOCHS = 30
DESK_HALF_PERIOD = 15
DESK_BASE_LR = 1e-3
VALIDATION_PAIRS = 200
# Entropy slot separating the validation draw from per-epoch batch draws
_VALIDATION_STREAM = 1_000_003


@dataclass
class TrainingConfig:
    """
    Attributes:
        epochs (int): Training epochs
        half_period (int): Epochs between learning-rate halvings
        base_lr (float): Learning rate of the first period
        batch_size (int): Pairs per batch
        batches_per_epoch (int): Batches per epoch; ``ceil(n_train / batch_size)`` if unset
        allow_self_pairs (bool): Allow x == y in training pairs
        validation_pairs (int): Held-out pairs scored after each epoch
        dtype (str): Parameter dtype
    """

    epochs: int = DESK_EPOCHS
    half_period: int = DESK_HALF_PERIOD
    base_lr: float = DESK_BASE_LR
    batch_size: int = DEFAULT_BATCH_SIZE
    batches_per_epoch: int = None
    allow_self_pairs: bool = False
    validation_pairs: int = VALIDATION_PAIRS
    dtype: str = "float32"

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("training.epochs and training.batch_size must be positive")
        if self.half_period < 1:
            raise ConfigError(f"training.half_period must be >= 1, got {self.half_period}")
        if self.base_lr <= 0:
            raise ConfigError(f"training.base_lr must be positive, got {self.base_lr}")
        if self.batches_per_epoch is not None and self.batches_per_epoch < 1:
            raise ConfigError("training.batches_per_epoch must be positive when set")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"training.dtype must be float32 or float64, got {self.dtype!r}")
        return self

    def steps_per_epoch(self, n_train):
        return self.batches_per_epoch or max(1, math.ceil(n_train / self.batch_size))


@dataclass
class TrainingResult:
    subset: list
    history: pd.DataFrame
    checkpoint_path: Path = None
    resumed_from: int = 0
    extra: dict = field(default_factory=dict)


def training_targets(subset, tau_x, tau_y, max_age):
    """
    Targets of a batch: relations of ``(tau_x, tau_y)`` or, for the
    single-image regressor, ``tau_x`` itself.

    Returns:
        np.ndarray: ``(N, len(subset))`` targets
    """
    if list(subset) == [AGE_TARGET]:
        return check_ages(tau_x, max_age, "tau_x")[:, None]
    return relation_targets(tau_x, tau_y, max_age, subset)


def _validation_pairs(n_val, count, rng):
    if n_val < 2:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    x = rng.integers(n_val, size=count)
    y = (x + rng.integers(1, n_val, size=count)) % n_val
    return x, y


def validation_mae(model, images, ages, x_index, y_index, max_age, batch_size=256):
    """Per-relation MAE of ``model`` on fixed validation pairs."""
    subset = model.relation_subset
    if len(x_index) == 0:
        return {name: float("nan") for name in subset}
    model.eval()
    errors = []
    with no_grad():
        for start in range(0, len(x_index), batch_size):
            xs, ys = x_index[start:start + batch_size], y_index[start:start + batch_size]
            pred = model(Tensor(images[xs], dtype=model.parameters()[0].dtype),
                         Tensor(images[ys], dtype=model.parameters()[0].dtype)).data
            errors.append(np.abs(pred - training_targets(subset, ages[xs], ages[ys], max_age)))
    model.train()
    return dict(zip(subset, np.concatenate(errors).mean(axis=0).tolist()))


def train_model(model, train_images, train_ages, val_images, val_ages, training, max_age,
                seed_key, checkpoint_path=None, config_hash="", resume=False):
    """
    Train one relation model.

    Args:
        model (PairwiseRelationModel): Model to train in place
        train_images, val_images (np.ndarray): ``(N, C, *spatial)`` images
        train_ages, val_ages (np.ndarray): Ages in years
        training (TrainingConfig): Schedule and batching
        max_age (float): Maximum age A
        seed_key (tuple): ``(seed, fold, model index)`` entropy for all draws
        checkpoint_path (Path): Per-epoch checkpoint destination
        config_hash (str): Stored with checkpoints, checked on resume
        resume (bool): Continue from ``checkpoint_path`` if it exists

    Returns:
        TrainingResult: Loss and validation history

    Raises:
        NumericalError: If a batch loss is not finite
        ConfigError: If a resumed checkpoint belongs to a different config
    """
    subset = model.relation_subset
    seed_key = [int(v) for v in seed_key]
    sampler = AgeGroupSampler(train_ages, max_age, allow_self_pairs=training.allow_self_pairs)
    optimizer = Adam(model.named_parameters(), base_lr=training.base_lr, half_period=training.half_period)
    val_x, val_y = _validation_pairs(
        len(val_ages), training.validation_pairs, np.random.default_rng(seed_key + [_VALIDATION_STREAM])
    )
    dtype = model.parameters()[0].dtype
    steps = training.steps_per_epoch(len(train_ages))

    records, start_epoch = [], 0
    if resume and checkpoint_path is not None and Path(checkpoint_path).exists():
        checkpoint = load_checkpoint(checkpoint_path)
        if checkpoint.config_hash != config_hash:
            raise ConfigError(f"cannot resume {checkpoint_path}: it was trained under a different config")
        model.load_state_dict(checkpoint.model_state)
        optimizer.load_state_dict(checkpoint.optimizer_state)
        records = list(checkpoint.extra.get("history", []))
        start_epoch = checkpoint.epoch
        logger.info("Resuming %s from epoch %d", "-".join(subset), start_epoch)

    model.train()
    for epoch in range(start_epoch, training.epochs):
        rng = np.random.default_rng(seed_key + [epoch])
        losses = []
        for batch in range(steps):
            xs, ys = sampler.sample_indices(training.batch_size, rng)
            targets = training_targets(subset, train_ages[xs], train_ages[ys], max_age)
            pred = model(Tensor(train_images[xs], dtype=dtype), Tensor(train_images[ys], dtype=dtype))
            loss = relation_loss(pred, targets)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericalError(
                    f"non-finite loss {value} at epoch {epoch} batch {batch} "
                    f"(relations {'-'.join(subset)}, lr {optimizer.lr(epoch):.3g})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step(epoch)
            losses.append(value)
            logger.debug("epoch %d batch %d loss %.4f", epoch, batch, value)

        val = validation_mae(model, val_images, val_ages, val_x, val_y, max_age)
        record = {"epoch": epoch, "loss": float(np.mean(losses)), "lr": optimizer.lr(epoch)}
        record.update({f"val_mae_{name}": mae for name, mae in val.items()})
        records.append(record)
        logger.info(
            "[%s] epoch %d/%d loss %.3f lr %.2e val MAE %s",
            "-".join(subset), epoch + 1, training.epochs, record["loss"], record["lr"],
            " ".join(f"{name}={mae:.2f}" for name, mae in val.items()),
        )
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, Checkpoint(
                config_hash=config_hash,
                epoch=epoch + 1,
                model_state=model.state_dict(),
                optimizer_state=optimizer.state_dict(),
                extra={"history": records, "relations": subset},
            ))

    return TrainingResult(subset=subset, history=pd.DataFrame(records), checkpoint_path=checkpoint_path,
                          resumed_from=start_epoch)


def train_fold(config, manifest, images, fold, output_dir, resume=False):
    """
    Train every model of the configured learning mode on one fold.

    Args:
        config (RunConfig): Run configuration
        manifest (pd.DataFrame): Full cohort manifest
        images (np.ndarray): Images aligned with ``manifest`` rows
        fold (int): Held-out fold
        output_dir (Path): Run directory; checkpoints go to ``fold_<k>/``
        resume (bool): Continue from existing checkpoints

    Returns:
        tuple: ``(RelationPredictor or AgePredictor, pd.DataFrame training curves)``
    """
    fold_dir = Path(output_dir) / f"fold_{fold}"
    fold_dir.mkdir(parents=True, exist_ok=True)
    train_rows, held_rows = split_fold(manifest, fold)
    held_out = (manifest["fold"] == fold).to_numpy()
    train_ages = train_rows["tau_years"].to_numpy(dtype=np.float64)
    val_ages = held_rows["tau_years"].to_numpy(dtype=np.float64)
    config_hash = config.config_hash()

    models, curves = [], []
    for index, subset in enumerate(config.loss.model_subsets()):
        model = build_model_for(config, subset, seed=[config.seed, fold, index])
        result = train_model(
            model, images[~held_out], train_ages, images[held_out], val_ages,
            config.training, config.generator.max_age,
            seed_key=(config.seed, fold, index),
            checkpoint_path=fold_dir / checkpoint_name(subset),
            config_hash=config_hash,
            resume=resume,
        )
        models.append((subset, model))
        curves.append(result.history.assign(fold=fold, model="-".join(subset)))
    logger.info("Fold %d: trained %d model(s)", fold, len(models))
    return make_predictor(models, config), pd.concat(curves, ignore_index=True)
