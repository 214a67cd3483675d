"""
Module for writing and reading synthetic cohorts on disk.

A cohort directory holds ``manifest.csv`` (one row per subject) and one
``.npy`` raster per subject under ``images/``. Rasters are stored as
little-endian float32; the ``.npy`` header carries the format version,
dtype and extents.
"""

import logging
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from . import synthetic
from .folds import DEFAULT_FOLDS, make_folds
from .subjects import MANIFEST_COLUMNS

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
IMAGE_DIR = "images"
RASTER_DTYPE = np.dtype("<f4")


class CohortDataProcessor:
    """
    Class for generating, storing and loading subject images.
    """

    def __init__(self, data_dir):
        """
        Initialize the data processor.

        Args:
            data_dir (str): Cohort directory holding the manifest and images
        """
        self.data_dir = Path(data_dir)
        self._image_cache = {}

    @property
    def manifest_path(self):
        return self.data_dir / MANIFEST_NAME

    def generate(self, config, seed, k=DEFAULT_FOLDS):
        """
        Render every subject, assign folds and write the cohort to disk.

        Re-running with the same config and seed rewrites identical files.

        Args:
            config (GeneratorConfig): Generator settings
            seed (int): Run seed
            k (int): Number of cross-validation folds

        Returns:
            pd.DataFrame: The manifest that was written
        """
        config.validate()
        image_dir = self.data_dir / IMAGE_DIR
        image_dir.mkdir(parents=True, exist_ok=True)

        population = synthetic.draw_cohort(config, seed)
        folds = make_folds([sid for sid, _, _ in population], k=k, seed=seed)
        rows = []
        for index, (sid, tau, cohort) in enumerate(population):
            subject = synthetic.generate_subject(tau, config, seed, sid=sid, cohort=cohort)
            relative = f"{IMAGE_DIR}/{sid}.npy"
            write_raster(self.data_dir / relative, subject.image)
            rows.append((sid, tau, cohort, int(folds[sid]), relative))
            if (index + 1) % 500 == 0:
                logger.info("Rendered %d/%d subjects", index + 1, config.n_subjects)

        manifest = pd.DataFrame(rows, columns=MANIFEST_COLUMNS)
        self.write_manifest(manifest)
        logger.info("Wrote %d subjects to %s", len(manifest), self.data_dir)
        return manifest

    def write_manifest(self, manifest):
        manifest[MANIFEST_COLUMNS].to_csv(self.manifest_path, index=False, float_format="%.6f")

    def read_manifest(self):
        """
        Load and validate the manifest.

        Returns:
            pd.DataFrame: Manifest rows in file order

        Raises:
            FileNotFoundError: If the manifest does not exist
            ValueError: If columns are missing or ids repeat
        """
        if not self.manifest_path.exists():
            raise FileNotFoundError(f"no manifest at {self.manifest_path}; run 'generate' first")
        manifest = pd.read_csv(self.manifest_path, dtype={"id": str, "cohort": str, "image_path": str})
        missing = [c for c in MANIFEST_COLUMNS if c not in manifest.columns]
        if missing:
            raise ValueError(f"manifest {self.manifest_path} is missing columns {missing}")
        if manifest["id"].duplicated().any():
            raise ValueError(f"manifest {self.manifest_path} has duplicate subject ids")
        return manifest

    def load_image(self, row):
        """Image of one manifest row, cached by subject id."""
        sid = row["id"]
        if sid not in self._image_cache:
            self._image_cache[sid] = read_raster(self.data_dir / row["image_path"])
        return self._image_cache[sid]

    def load_images(self, manifest):
        """
        Stack the images of ``manifest`` rows in order.

        Returns:
            np.ndarray: ``(N, channels, *spatial)`` float32 array
        """
        return np.stack([self.load_image(row) for _, row in manifest.iterrows()])

    def age_histogram(self, manifest, bin_width=5.0, max_age=None):
        """
        Count subjects per age bin and cohort.

        Returns:
            pd.DataFrame: Rows are bin left edges, columns cohorts
        """
        max_age = max_age or float(np.ceil(manifest["tau_years"].max()))
        edges = np.arange(0.0, np.floor(max_age / bin_width) * bin_width + 2 * bin_width, bin_width)
        bins = pd.cut(manifest["tau_years"], edges, right=False, include_lowest=True, labels=edges[:-1])
        table = manifest.assign(bin=bins).pivot_table(
            index="bin", columns="cohort", values="id", aggfunc="count", fill_value=0, observed=False
        )
        table.columns.name = None
        return table

    def plot_age_histogram(self, manifest, output_file=None, bin_width=5.0):
        """
        Plot the age distribution stacked by cohort.

        Args:
            manifest (pd.DataFrame): Cohort manifest
            output_file (str): Path to save the plot image
            bin_width (float): Bin width in years

        Returns:
            matplotlib.figure.Figure: The created figure
        """
        table = self.age_histogram(manifest, bin_width)
        fig, ax = plt.subplots(figsize=(10, 5))
        bottom = np.zeros(len(table))
        for cohort in table.columns:
            ax.bar(table.index.astype(float), table[cohort], width=bin_width, bottom=bottom,
                   align="edge", alpha=0.7, label=cohort)
            bottom += table[cohort].to_numpy()
        ax.set_xlabel("Age (years)")
        ax.set_ylabel("Subjects")
        ax.set_title("Age distribution")
        ax.legend()
        ax.grid(True, alpha=0.3)
        plt.tight_layout()

        if output_file:
            plt.savefig(output_file, dpi=100)
            logger.info("Age histogram saved to %s", output_file)
        return fig


def write_raster(path, image):
    """Write a float32 little-endian ``.npy`` raster atomically."""
    path = Path(path)
    tmp_path = path.with_suffix(".tmp")
    with open(tmp_path, "wb") as handle:
        np.save(handle, np.ascontiguousarray(image, dtype=RASTER_DTYPE))
    os.replace(tmp_path, path)


def read_raster(path):
    """
    Raises:
        FileNotFoundError: If ``path`` does not exist
    """
    return np.load(path, allow_pickle=False).astype(np.float32, copy=False)
