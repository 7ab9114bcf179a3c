"""
Equality Experiment
Description: Particle envelopes of sampled Gaussians against W2^2/(1-delta) below and above the threshold
"""

import json
import sys
import time
from pathlib import Path

import numpy as np
from tabulate import tabulate
from tqdm import tqdm

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from moreau_w2.core.envelope import equality_sweep, equality_threshold
from moreau_w2.core.measures import GaussianSpec
from moreau_w2.utils.metrics import MetricsCollector

N_POINTS = 500
SEEDS = range(5)

PAIRS = {
    "1d scale": (
        GaussianSpec(mean=[0.0], covariance=[[1.0]]),
        GaussianSpec(mean=[0.0], covariance=[[4.0]]),
    ),
    "1d shift+scale": (
        GaussianSpec(mean=[0.0], covariance=[[1.0]]),
        GaussianSpec(mean=[1.0], covariance=[[4.0]]),
    ),
    "2d anisotropic": (
        GaussianSpec(mean=[0.0, 0.0], covariance=np.eye(2)),
        GaussianSpec(mean=[0.0, 0.0], covariance=np.diag([4.0, 1.0])),
    ),
}


def run_pair(name: str, g_mu: GaussianSpec, g_nu: GaussianSpec, collector: MetricsCollector) -> dict:
    """
    Sweep delta on both sides of the threshold for one Gaussian pair

    Args:
        name: Pair label
        g_mu: Base Gaussian
        g_nu: Target Gaussian
        collector: Metrics collector

    Returns:
        Dictionary with per-delta deviations averaged over seeds
    """
    threshold = equality_threshold(g_mu, g_nu)
    deltas = sorted({0.25 * threshold, 0.5 * threshold, 0.8 * threshold, threshold,
                     min(0.95, 1.5 * threshold), min(0.98, 2.0 * threshold)})

    print(f"\n{'=' * 60}")
    print(f"Pair: {name} (threshold {threshold:.4f})")
    print(f"{'=' * 60}\n")

    deviations = {delta: [] for delta in deltas}
    discretization = []
    for seed in tqdm(SEEDS, desc=name):
        t0 = time.perf_counter()
        rows = equality_sweep(g_mu, g_nu, N_POINTS, seed, deltas)
        elapsed = time.perf_counter() - t0
        for row in rows:
            collector.record_solve(0, row.gap, row.converged, elapsed / len(rows))
            deviations[row.delta].append(row.rel_deviation)
        discretization.append(rows[0].discretization_error)

    table = [
        [f"{delta:.4f}", "yes" if delta <= threshold else "no", f"{np.mean(v):.2e}", f"{np.max(v):.2e}"]
        for delta, v in deviations.items()
    ]
    print(tabulate(table, headers=["delta", "below", "mean rel dev", "max rel dev"], tablefmt="github"))

    return {
        "threshold": threshold,
        "mean_discretization_error": float(np.mean(discretization)),
        "rows": [
            {
                "delta": delta,
                "below_threshold": bool(delta <= threshold),
                "mean_rel_deviation": float(np.mean(v)),
                "max_rel_deviation": float(np.max(v)),
            }
            for delta, v in deviations.items()
        ],
    }


def main():
    """Run the equality experiment"""
    print("\n" + "=" * 60)
    print("EQUALITY EXPERIMENT - Moreau-W2")
    print("=" * 60)

    collector = MetricsCollector()
    collector.start_timer("experiment")
    results = {name: run_pair(name, *pair, collector) for name, pair in PAIRS.items()}
    collector.stop_timer("experiment")

    print("\n" + "=" * 60)
    print("RESULTS SUMMARY")
    print("=" * 60)
    for name, data in results.items():
        below = [r["max_rel_deviation"] for r in data["rows"] if r["below_threshold"]]
        print(f"\n{name}:")
        print(f"  Threshold:                 {data['threshold']:.4f}")
        print(f"  Max deviation below:       {max(below):.2e}")
        print(f"  Discretization error W2^2: {data['mean_discretization_error']:.2e}")

    results["metrics"] = collector.get_all_metrics()

    Path("data/results").mkdir(parents=True, exist_ok=True)
    with open("data/results/equality_experiment.json", "w") as f:
        json.dump(results, f, indent=2)

    collector.save_metrics(Path("data/results/equality_metrics.json"))

    print("\n✅ Results saved to: data/results/equality_experiment.json")
    print("✅ Metrics saved to: data/results/equality_metrics.json")
    print("=" * 60 + "\n")


if __name__ == "__main__":
    main()
