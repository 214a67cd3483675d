"""
Procedural two-channel images whose content is a monotone function of age.

Channel 1 is structural: a disk (or sphere) centred in the field of view with
radius ``max_radius * tau / A`` and a one-voxel anti-aliased edge. Channel 2
is an intensity ramp along the first spatial axis, scaled by ``tau / A`` and
shifted by a per-cohort site offset. Both channels get zero-mean Gaussian
noise with std ``noise_sigma``.

Every subject's randomness derives from (seed, subject id), so subjects can
be rendered in any order or in parallel with identical results.
"""

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from numerics.errors import ConfigError

from .subjects import Subject, subject_id

logger = logging.getLogger(__name__)

AGE_DISTRIBUTIONS = ("uniform", "mixture")
DEFAULT_POOLS = 5

# Coordinate grids per extents, shared by all renders
_grid_cache = {}


@dataclass
class GeneratorConfig:
    """
    Attributes:
        max_age (float): Maximum age A in years
        n_subjects (int): Subjects to generate
        extents (list): Spatial extents (2 or 3 axes)
        noise_sigma (float): Std of the additive Gaussian noise
        age_distribution (str): "uniform" over [0, A] or "mixture" of Gaussians
        mixture_means, mixture_stds, mixture_weights (list): Mixture components
        cohorts (list): Site labels assigned uniformly at random
        cohort_offsets (list): Channel-2 intensity offset of each site
        max_radius_fraction (float): Disk radius at age A over the smallest half-extent
        min_pools (int): Halvings the extents must survive
    """

    max_age: float = 100.0
    n_subjects: int = 2000
    extents: list = field(default_factory=lambda: [32, 32])
    noise_sigma: float = 0.05
    age_distribution: str = "uniform"
    mixture_means: list = field(default_factory=lambda: [22.0, 50.0, 75.0])
    mixture_stds: list = field(default_factory=lambda: [5.0, 12.0, 8.0])
    mixture_weights: list = field(default_factory=lambda: [0.5, 0.3, 0.2])
    cohorts: list = field(default_factory=lambda: ["site-a", "site-b", "site-c"])
    cohort_offsets: list = field(default_factory=lambda: [0.0, 0.03, -0.03])
    max_radius_fraction: float = 0.9
    min_pools: int = DEFAULT_POOLS

    def validate(self):
        if self.max_age <= 0:
            raise ConfigError(f"generator.max_age must be positive, got {self.max_age}")
        if self.n_subjects < 1:
            raise ConfigError(f"generator.n_subjects must be positive, got {self.n_subjects}")
        if self.noise_sigma < 0:
            raise ConfigError(f"generator.noise_sigma must be non-negative, got {self.noise_sigma}")
        if len(self.extents) not in (2, 3):
            raise ConfigError(f"generator.extents needs 2 or 3 axes, got {self.extents}")
        smallest = 2 ** self.min_pools
        if any(int(e) < smallest for e in self.extents):
            raise ConfigError(
                f"generator.extents {list(self.extents)} cannot be halved {self.min_pools} times; "
                f"every axis needs at least {smallest} voxels"
            )
        if self.age_distribution not in AGE_DISTRIBUTIONS:
            raise ConfigError(
                f"generator.age_distribution must be one of {AGE_DISTRIBUTIONS}, got {self.age_distribution!r}"
            )
        sizes = {len(self.mixture_means), len(self.mixture_stds), len(self.mixture_weights)}
        if len(sizes) != 1 or not self.mixture_means:
            raise ConfigError("generator mixture means, stds and weights must have the same non-zero length")
        if any(w < 0 for w in self.mixture_weights) or sum(self.mixture_weights) <= 0:
            raise ConfigError("generator.mixture_weights must be non-negative with a positive sum")
        if not self.cohorts or len(self.cohorts) != len(self.cohort_offsets):
            raise ConfigError("generator.cohorts and generator.cohort_offsets must be non-empty and aligned")
        if not 0 < self.max_radius_fraction <= 1:
            raise ConfigError(f"generator.max_radius_fraction must be in (0, 1], got {self.max_radius_fraction}")
        return self

    @property
    def max_radius(self):
        return self.max_radius_fraction * min(self.extents) / 2.0


def subject_rng(seed, sid):
    """Generator seeded from the run seed and a digest of the subject id."""
    digest = int.from_bytes(hashlib.sha256(sid.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), digest]))


def _grids(extents):
    key = tuple(int(e) for e in extents)
    if key not in _grid_cache:
        axes = [np.arange(e, dtype=np.float64) - (e - 1) / 2.0 for e in key]
        mesh = np.meshgrid(*axes, indexing="ij")
        distance = np.sqrt(sum(m * m for m in mesh))
        ramp = 0.5 + 0.5 * (mesh[0] - mesh[0].min()) / max(mesh[0].max() - mesh[0].min(), 1.0)
        _grid_cache[key] = (distance, ramp)
    return _grid_cache[key]


def disk_radius(tau, config):
    """Radius in voxels of the structural disk at age ``tau``."""
    return config.max_radius * tau / config.max_age


def render_channels(tau, config, cohort_offset=0.0):
    """Noise-free ``(2, *extents)`` image for age ``tau``."""
    distance, ramp = _grids(config.extents)
    fraction = tau / config.max_age
    radius = disk_radius(tau, config)
    structure = np.clip(radius - distance + 0.5, 0.0, 1.0)
    intensity = fraction * ramp + cohort_offset
    return np.stack([structure, intensity])


def generate_subject(tau, config, seed, sid=None, cohort=None):
    """
    Render one subject.

    Args:
        tau (float): Age in years
        config (GeneratorConfig): Generator settings
        seed (int): Run seed
        sid (str): Subject id; defaults to the first generated id
        cohort (str): Site label; defaults to the first configured cohort

    Returns:
        Subject: Subject with a float32 image

    Raises:
        ValueError: If ``tau`` is outside [0, A]
    """
    if not 0.0 <= tau <= config.max_age:
        raise ValueError(f"age {tau} outside [0, {config.max_age}]")
    sid = sid or subject_id(0)
    cohort = cohort or config.cohorts[0]
    offset = config.cohort_offsets[config.cohorts.index(cohort)] if cohort in config.cohorts else 0.0
    image = render_channels(float(tau), config, offset)
    if config.noise_sigma > 0:
        image = image + subject_rng(seed, sid).normal(0.0, config.noise_sigma, size=image.shape)
    return Subject(id=sid, tau=float(tau), image=image.astype(np.float32), cohort=cohort)


def draw_ages(config, rng):
    """Ages of ``config.n_subjects`` subjects, in [0, A]."""
    n = config.n_subjects
    if config.age_distribution == "uniform":
        return rng.uniform(0.0, config.max_age, size=n)
    weights = np.asarray(config.mixture_weights, dtype=np.float64)
    component = rng.choice(len(weights), size=n, p=weights / weights.sum())
    ages = rng.normal(np.asarray(config.mixture_means)[component], np.asarray(config.mixture_stds)[component])
    return np.clip(ages, 0.0, config.max_age)


def draw_cohort(config, seed):
    """
    Ages and cohort labels for the whole synthetic population.

    Returns:
        list: ``(id, tau, cohort)`` tuples in id order
    """
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    ages = draw_ages(config, rng)
    cohorts = rng.choice(len(config.cohorts), size=config.n_subjects)
    logger.debug("Drew %d ages (%s)", config.n_subjects, config.age_distribution)
    return [(subject_id(i), float(ages[i]), config.cohorts[cohorts[i]]) for i in range(config.n_subjects)]
