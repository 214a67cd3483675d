"""
Frozen predictors over the trained models of one fold: relation models are
merged into full relation vectors (r1, r2, r3, r4); the direct baseline
predicts ages.
"""

import logging
from pathlib import Path

import numpy as np

from model.configs import RELATION_ORDER
from model.pairwise import build_model
from numerics.checkpoint import load_checkpoint
from numerics.errors import ConfigError
from numerics.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

DEFAULT_BATCH = 256


def checkpoint_name(subset):
    """File name of the checkpoint of the model predicting ``subset``."""
    return f"model_{'-'.join(subset)}.npz"


class RelationPredictor:
    """
    Frozen models whose relation subsets together cover r1..r4.

    Features are computed once per image and model; heads are then applied
    to any pairing of cached features.
    """

    def __init__(self, models, batch_size=DEFAULT_BATCH):
        """
        Args:
            models (list): ``(subset, PairwiseRelationModel)`` tuples
            batch_size (int): Images or pairs per inference batch
        """
        covered = [name for subset, _ in models for name in subset]
        if sorted(covered) != sorted(RELATION_ORDER):
            raise ConfigError(f"models cover {covered}; a predictor needs each of {RELATION_ORDER} exactly once")
        self.models = [(list(subset), model.eval()) for subset, model in models]
        self.batch_size = batch_size
        self._columns = [RELATION_ORDER.index(name) for subset, _ in self.models for name in subset]

    def features(self, images, slot="x"):
        """
        Backbone features of ``images`` for every model.

        Returns:
            list: One ``(N, d, *spatial)`` array per model
        """
        outputs = []
        with no_grad():
            for _, model in self.models:
                chunks = [
                    model.features(Tensor(images[start:start + self.batch_size], dtype=model_dtype(model)), slot).data
                    for start in range(0, len(images), self.batch_size)
                ]
                outputs.append(np.concatenate(chunks))
        return outputs

    def relate(self, features_x, features_y, x_index, y_index):
        """
        Relations of the pairs ``(x_index[i], y_index[i])``.

        Args:
            features_x (list): Per-model features of the x pool
            features_y (list): Per-model features of the y pool
            x_index, y_index (array-like): Rows into the two pools

        Returns:
            np.ndarray: ``(P, 4)`` relations in r1..r4 order
        """
        x_index = np.asarray(x_index, dtype=np.int64)
        y_index = np.asarray(y_index, dtype=np.int64)
        merged = np.empty((len(x_index), len(RELATION_ORDER)))
        parts = []
        with no_grad():
            for (_, model), fx, fy in zip(self.models, features_x, features_y):
                chunks = []
                for start in range(0, len(x_index), self.batch_size):
                    stop = start + self.batch_size
                    out = model.relate(Tensor(fx[x_index[start:stop]]), Tensor(fy[y_index[start:stop]]))
                    chunks.append(out.data)
                parts.append(np.concatenate(chunks) if chunks else np.empty((0, model.head_config.num_relations)))
        merged[:, self._columns] = np.concatenate(parts, axis=1)
        return merged

    def predict(self, images_x, images_y):
        """Relations of aligned image batches, ``(N, 4)``."""
        n = len(images_x)
        index = np.arange(n)
        return self.relate(self.features(images_x, "x"), self.features(images_y, "y"), index, index)

    @classmethod
    def from_checkpoints(cls, directory, config, expected_hash=None):
        """
        Rebuild the models of ``config.loss.mode`` from a fold directory.

        Raises:
            FileNotFoundError: If a checkpoint is missing
            ConfigError: If a checkpoint was trained under a different config hash
        """
        return cls(load_models(directory, config, expected_hash), batch_size=config.evaluation.batch_size)


class AgePredictor:
    """A frozen single-image age regressor, trained without relation learning."""

    def __init__(self, model, batch_size=DEFAULT_BATCH):
        if not model.direct:
            raise ConfigError(f"an age predictor needs a single-image model, got relations {model.relation_subset}")
        self.model = model.eval()
        self.batch_size = batch_size

    def predict_ages(self, images):
        """``(N,)`` estimated ages of ``images``."""
        chunks = []
        with no_grad():
            for start in range(0, len(images), self.batch_size):
                batch = Tensor(images[start:start + self.batch_size], dtype=model_dtype(self.model))
                chunks.append(self.model(batch).data[:, 0])
        return np.concatenate(chunks) if chunks else np.empty(0)

    @classmethod
    def from_checkpoints(cls, directory, config, expected_hash=None):
        [(_, model)] = load_models(directory, config, expected_hash)
        return cls(model, batch_size=config.evaluation.batch_size)


def load_models(directory, config, expected_hash=None):
    """
    ``(subset, model)`` for every model of ``config.loss.mode``, restored from
    the checkpoints in ``directory``.

    Raises:
        FileNotFoundError: If a checkpoint is missing
        ConfigError: If a checkpoint was trained under a different config hash
    """
    directory = Path(directory)
    expected_hash = expected_hash or config.config_hash()
    models = []
    for subset in config.loss.model_subsets():
        path = directory / checkpoint_name(subset)
        if not path.exists():
            raise FileNotFoundError(f"missing checkpoint {path}; train this fold first")
        checkpoint = load_checkpoint(path)
        if checkpoint.config_hash != expected_hash:
            raise ConfigError(
                f"checkpoint {path} was trained with config hash {checkpoint.config_hash[:12]}, "
                f"current config hashes to {expected_hash[:12]}"
            )
        model = build_model_for(config, subset, seed=0)
        model.load_state_dict(checkpoint.model_state)
        models.append((subset, model))
    logger.debug("Loaded %d models from %s", len(models), directory)
    return models


def make_predictor(models, config):
    """Predictor over trained ``(subset, model)`` tuples of one fold."""
    if config.loss.direct:
        [(_, model)] = models
        return AgePredictor(model, batch_size=config.evaluation.batch_size)
    return RelationPredictor(models, batch_size=config.evaluation.batch_size)


def load_predictor(directory, config, expected_hash=None):
    """Predictor of the configured learning mode, restored from a fold directory."""
    return make_predictor(load_models(directory, config, expected_hash), config)


def model_dtype(model):
    return model.parameters()[0].dtype


def build_model_for(config, subset, seed):
    """Model for one relation subset under a run config."""
    head = config.head_for(subset)
    return build_model(
        config.backbone, head, seed,
        input_extents=config.generator.extents,
        max_age=config.generator.max_age,
        dtype=np.dtype(config.training.dtype),
    )
