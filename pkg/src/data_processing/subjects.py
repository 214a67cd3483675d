"""
Subjects and the dataset manifest that lists them.
"""

from dataclasses import dataclass

import numpy as np

MANIFEST_COLUMNS = ["id", "tau_years", "cohort", "fold", "image_path"]
UNASSIGNED_FOLD = -1


def subject_id(index):
    """Stable id of the ``index``-th generated subject."""
    return f"sub-{index:05d}"


@dataclass
class Subject:
    """
    Attributes:
        id (str): Unique identifier
        tau (float): Age in years
        image (np.ndarray): ``(channels, *spatial)`` image
        cohort (str): Acquisition site label
        fold (int): Cross-validation fold, -1 until assigned
    """

    id: str
    tau: float
    image: np.ndarray
    cohort: str = "site-a"
    fold: int = UNASSIGNED_FOLD
