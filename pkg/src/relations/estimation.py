"""
Turn a table of relation predictions into per-subject age estimates.

Each prediction row is handled according to how its pair was formed: a self
pair (x_id == y_id), a reference pair (the age of y is known) or a paired
test pair (both ages unknown). A subject that appears in several rows gets
the mean over its appearances for every strategy.
"""

import logging

import numpy as np
import pandas as pd

from .io import RELATION_HAT_COLUMNS, validate_predictions
from .order import DEFAULT_THRESHOLD, age_grid_for, mc_estimates
from .recovery import ALL_STRATEGIES, clamp_estimates, recover_pair, recover_self, recover_with_reference

logger = logging.getLogger(__name__)

MODES = ("paired", "reference", "self")


def infer_modes(frame, reference_ages=None):
    """
    Mode of every prediction row.

    An explicit ``mode`` column wins. Otherwise self pairs are detected by id
    and rows whose y has a known age (``y_tau_years`` or ``reference_ages``)
    are reference pairs.
    """
    if "mode" in frame.columns:
        modes = frame["mode"].astype(str)
        unknown = sorted(set(modes) - set(MODES))
        if unknown:
            raise ValueError(f"unknown prediction modes {unknown}; expected {MODES}")
        return modes
    modes = pd.Series("paired", index=frame.index)
    known = _reference_ages(frame, reference_ages).notna()
    modes[known] = "reference"
    modes[frame["x_id"] == frame["y_id"]] = "self"
    return modes


def _reference_ages(frame, reference_ages):
    if "y_tau_years" in frame.columns:
        ages = frame["y_tau_years"].astype(float)
    else:
        ages = pd.Series(np.nan, index=frame.index)
    if reference_ages:
        ages = ages.fillna(frame["y_id"].map(reference_ages))
    return ages


def _long(ids, estimates):
    return [pd.DataFrame({"id": ids, "strategy": name, "estimate": np.atleast_1d(values)})
            for name, values in estimates.items()]


def _mc_rows(rows, tau_y, t, grid):
    r2_hat = rows["r2_hat"].to_numpy()
    records = [
        (subject, float(mc_estimates(tau_y[positions], r2_hat[positions], t, age_grid=grid)[0]))
        for subject, positions in rows.groupby("x_id").indices.items()
    ]
    return pd.DataFrame(records, columns=["id", "estimate"]).assign(strategy="S4")


def estimate_subjects(predictions, reference_ages=None, max_age=100.0, threshold=DEFAULT_THRESHOLD,
                      strategies=None, clamp=False, age_grid=None):
    """
    Per-subject estimates for every applicable strategy.

    Args:
        predictions (pd.DataFrame): Relation predictions (see ``relations.io``)
        reference_ages (dict): Optional id -> age for reference subjects
        max_age (float): Maximum age A
        threshold (float): MC threshold t for S4
        strategies (list): Strategy names to keep; all by default
        clamp (bool): Clip estimates to [0, A]
        age_grid (array-like): MC candidate ages; integers 0..A by default

    Returns:
        pd.DataFrame: Index ``id``, one column per strategy (NaN where a
        subject was not evaluated in that strategy's mode)
    """
    validate_predictions(predictions)
    frame = predictions.reset_index(drop=True)
    frame[["x_id", "y_id"]] = frame[["x_id", "y_id"]].astype(str)
    modes = infer_modes(frame, reference_ages)
    relations = frame[RELATION_HAT_COLUMNS].to_numpy(dtype=np.float64)
    parts = []

    paired = (modes == "paired").to_numpy()
    if paired.any():
        rows = frame[paired]
        for name, (tau_x, tau_y) in recover_pair(relations[paired]).items():
            parts.extend(_long(rows["x_id"].to_numpy(), {name: tau_x}))
            parts.extend(_long(rows["y_id"].to_numpy(), {name: tau_y}))

    reference = (modes == "reference").to_numpy()
    if reference.any():
        rows = frame[reference]
        tau_y = _reference_ages(frame, reference_ages)[reference].to_numpy()
        if np.isnan(tau_y).any():
            raise ValueError("reference pairs need the age of y (y_tau_years or reference ages)")
        parts.extend(_long(rows["x_id"].to_numpy(), recover_with_reference(relations[reference], tau_y)))
        grid = np.sort(age_grid_for(max_age) if age_grid is None else np.asarray(age_grid, dtype=np.float64))
        parts.append(_mc_rows(rows.reset_index(drop=True), tau_y, threshold, grid))

    own = (modes == "self").to_numpy()
    if own.any():
        parts.extend(_long(frame[own]["x_id"].to_numpy(), recover_self(relations[own])))

    if not parts:
        raise ValueError("no relation predictions to estimate from")
    long = pd.concat(parts, ignore_index=True)
    table = long.pivot_table(index="id", columns="strategy", values="estimate", aggfunc="mean")
    columns = [s for s in ALL_STRATEGIES if s in table.columns and (strategies is None or s in strategies)]
    table = table[columns]
    table.columns.name = None
    if clamp:
        table = table.apply(lambda column: clamp_estimates(column, max_age))
    logger.debug("Estimated %d subjects over %d strategies", len(table), len(columns))
    return table
