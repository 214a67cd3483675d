"""
CSV import/export of relation predictions, so recovery can run standalone on
predictions produced elsewhere.

Required columns: pair_id, x_id, y_id, r1_hat, r2_hat, r3_hat, r4_hat.
Optional columns: ``mode`` (paired / reference / self) and ``y_tau_years``
(known age of a reference y).
"""

import logging

import pandas as pd

logger = logging.getLogger(__name__)

PREDICTION_COLUMNS = ["pair_id", "x_id", "y_id", "r1_hat", "r2_hat", "r3_hat", "r4_hat"]
RELATION_HAT_COLUMNS = PREDICTION_COLUMNS[3:]
OPTIONAL_COLUMNS = ["mode", "y_tau_years"]


def validate_predictions(frame):
    """
    Raises:
        ValueError: If required columns are missing or relations are non-numeric
    """
    missing = [c for c in PREDICTION_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"relation predictions are missing columns {missing}; expected {PREDICTION_COLUMNS}")
    for column in RELATION_HAT_COLUMNS:
        if not pd.api.types.is_numeric_dtype(frame[column]):
            raise ValueError(f"column {column} must be numeric")
    return frame


def write_predictions(frame, path):
    """Write predictions with the required columns first."""
    validate_predictions(frame)
    extra = [c for c in OPTIONAL_COLUMNS if c in frame.columns]
    frame[PREDICTION_COLUMNS + extra].to_csv(path, index=False, float_format="%.6f")
    logger.debug("Wrote %d relation predictions to %s", len(frame), path)


def read_predictions(path):
    """
    Read a predictions CSV.

    Raises:
        FileNotFoundError: If ``path`` does not exist
        ValueError: If the header is incomplete
    """
    frame = pd.read_csv(path, dtype={"pair_id": str, "x_id": str, "y_id": str})
    return validate_predictions(frame)
