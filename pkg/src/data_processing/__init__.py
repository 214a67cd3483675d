"""
Synthetic cohorts: procedural image generation, manifests, folds and the
age-group pair sampler.
"""

from .data_processor import CohortDataProcessor, read_raster, write_raster
from .folds import fold_sizes, make_folds, split_fold
from .sampler import NUM_AGE_GROUPS, AgeGroupSampler, age_groups, sample_pair_batch
from .subjects import MANIFEST_COLUMNS, Subject, subject_id
from .synthetic import GeneratorConfig, disk_radius, draw_ages, draw_cohort, generate_subject, render_channels

__all__ = [
    "MANIFEST_COLUMNS",
    "NUM_AGE_GROUPS",
    "AgeGroupSampler",
    "CohortDataProcessor",
    "GeneratorConfig",
    "Subject",
    "age_groups",
    "disk_radius",
    "draw_ages",
    "draw_cohort",
    "fold_sizes",
    "generate_subject",
    "make_folds",
    "read_raster",
    "render_channels",
    "sample_pair_batch",
    "split_fold",
    "subject_id",
    "write_raster",
]
