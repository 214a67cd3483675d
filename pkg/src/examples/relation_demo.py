"""
Example script demonstrating relation algebra, age recovery and a tiny
pairwise model on synthetic subjects.
"""

import logging
import os
import sys
import tempfile

# Add the parent directory to the path so we can import our modules
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np

from config import load_config
from data_processing.data_processor import CohortDataProcessor
from experiments.predictor import build_model_for
from numerics.tensor import Tensor, no_grad
from relations.algebra import ground_truth_relations
from relations.order import binarize_relation, mc_estimate
from relations.recovery import recover_pair, recover_self, recover_with_reference


def main():
    """
    Run a demonstration of relations, recovery strategies and the model.
    """
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    print("PairAge - Relation Demo")
    print("=======================")

    tau_x, tau_y = 70.0, 30.0
    truth = ground_truth_relations(tau_x, tau_y, max_age=100.0)
    print(f"\nRelations of ({tau_x}, {tau_y}):")
    for name, value in zip(("r1", "r2", "r3", "r4"), truth.as_array()):
        print(f"  {name}: {value:.1f}")

    print("\nRecovered ages from exact relations:")
    for strategy, (x, y) in recover_pair(truth.as_array()).items():
        print(f"  {strategy}: x={x:.1f} y={y:.1f}")
    for strategy, x in recover_with_reference(truth.as_array(), tau_y).items():
        print(f"  {strategy}: x={x:.1f}")
    self_pair = ground_truth_relations(tau_x, tau_x, max_age=100.0).as_array()
    print("  " + ", ".join(f"{s}={v:.1f}" for s, v in recover_self(self_pair).items()))

    references = [20.0, 40.0, 60.0, 68.0, 80.0]
    comparisons = [(ref, binarize_relation(tau_x - ref)) for ref in references]
    print(f"\nMC estimate from {len(references)} references: {mc_estimate(comparisons):.0f}")

    config = load_config(preset="smoke", overrides=["generator.n_subjects=6"])
    with tempfile.TemporaryDirectory() as data_dir:
        processor = CohortDataProcessor(data_dir)
        manifest = processor.generate(config.generator, seed=config.seed, k=2)
        images = processor.load_images(manifest)

    model = build_model_for(config, config.loss.model_subsets()[0], seed=config.seed).eval()
    with no_grad():
        out = model(Tensor(images[:3]), Tensor(images[3:6])).data
    print(f"\nUntrained model relations for 3 pairs (subset {model.relation_subset}):")
    for row, (_, x), (_, y) in zip(out, manifest.iloc[:3].iterrows(), manifest.iloc[3:6].iterrows()):
        print(f"  {x['id']} ({x['tau_years']:.1f}) vs {y['id']} ({y['tau_years']:.1f}): "
              + " ".join(f"{v:7.2f}" for v in row))
    print(f"\nModel parameters: {model.num_parameters()}")
    print(f"Image batch shape: {np.shape(images)}")


if __name__ == "__main__":
    main()
