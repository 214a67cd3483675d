import numpy as np
import pytest

from config import load_config
from data_processing.data_processor import CohortDataProcessor


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


@pytest.fixture()
def smoke_config(tmp_path):
    """Tiny run configuration writing into a temporary directory."""
    return load_config(preset="smoke", extra={"output_dir": str(tmp_path / "run")})


@pytest.fixture()
def smoke_cohort(smoke_config):
    """The smoke cohort rendered to disk: ``(manifest, images)``."""
    processor = CohortDataProcessor(smoke_config.data_dir)
    manifest = processor.generate(smoke_config.generator, smoke_config.seed, k=smoke_config.cv.k)
    return manifest, processor.load_images(manifest)
