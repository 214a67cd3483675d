"""
Age-group balanced pair sampling.

Training subjects are binned into equal-width age groups over [0, A]. Each
pair element is drawn by choosing a non-empty group uniformly, then a subject
uniformly within it, so rare ages are seen as often as common ones.
"""

import logging

import numpy as np

logger = logging.getLogger(__name__)

NUM_AGE_GROUPS = 100
DEFAULT_BATCH_SIZE = 20


def age_groups(ages, max_age, num_groups=NUM_AGE_GROUPS):
    """Group index of each age; age A falls in the last group."""
    ages = np.asarray(ages, dtype=np.float64)
    groups = np.floor(ages / max_age * num_groups).astype(np.int64)
    return np.clip(groups, 0, num_groups - 1)


class AgeGroupSampler:
    def __init__(self, ages, max_age, num_groups=NUM_AGE_GROUPS, allow_self_pairs=False):
        """
        Args:
            ages (array-like): Ages of the training subjects
            max_age (float): Maximum age A
            num_groups (int): Equal-width age groups
            allow_self_pairs (bool): Whether x and y may be the same subject

        Raises:
            ValueError: If there are no subjects, or only one and self pairs are off
        """
        ages = np.asarray(ages, dtype=np.float64)
        if ages.size == 0:
            raise ValueError("cannot sample pairs from an empty training set")
        if ages.size == 1 and not allow_self_pairs:
            raise ValueError("need at least two training subjects when self pairs are disabled")
        self.allow_self_pairs = allow_self_pairs
        groups = age_groups(ages, max_age, num_groups)
        self.members = [np.flatnonzero(groups == g) for g in np.unique(groups)]
        logger.debug("Pair sampler over %d subjects in %d non-empty groups", ages.size, len(self.members))

    @property
    def num_nonempty_groups(self):
        return len(self.members)

    def draw(self, size, rng):
        """Subject indices drawn group-first, shape ``(size,)``."""
        chosen = rng.integers(len(self.members), size=size)
        picks = np.empty(size, dtype=np.int64)
        for position, group in enumerate(chosen):
            members = self.members[group]
            picks[position] = members[rng.integers(len(members))]
        return picks

    def sample_indices(self, batch_size, rng):
        """
        Returns:
            tuple: ``(x indices, y indices)``, each of shape ``(batch_size,)``
        """
        x = self.draw(batch_size, rng)
        y = self.draw(batch_size, rng)
        if not self.allow_self_pairs:
            clash = x == y
            while clash.any():
                y[clash] = self.draw(int(clash.sum()), rng)
                clash = x == y
        return x, y


def sample_pair_batch(train_subjects, batch_size=DEFAULT_BATCH_SIZE, max_age=100.0, seed=0,
                      allow_self_pairs=False):
    """
    Draw a batch of training pairs.

    Args:
        train_subjects (list): Subjects with a ``tau`` attribute
        batch_size (int): Pairs to draw
        max_age (float): Maximum age A
        seed: Seed or ``np.random.Generator``

    Returns:
        list: ``batch_size`` tuples ``(subject_x, subject_y)``
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sampler = AgeGroupSampler([s.tau for s in train_subjects], max_age, allow_self_pairs=allow_self_pairs)
    x, y = sampler.sample_indices(batch_size, rng)
    return [(train_subjects[i], train_subjects[j]) for i, j in zip(x, y)]
