"""
Sandwich Experiment
Description: Check W2^2 <= Phi_delta <= W2^2/(1-delta) on seeded random clouds
"""

import json
import sys
import time
from pathlib import Path

import numpy as np
from tqdm import tqdm

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from moreau_w2.core.envelope import sandwich_sweep
from moreau_w2.core.measures import EmpiricalCloud
from moreau_w2.utils.metrics import MetricsCollector

DELTAS = [0.05, 0.1, 0.25, 0.5, 0.9]
INSTANCES = 100


def main():
    """Run the sandwich experiment"""
    print("\n" + "=" * 60)
    print("SANDWICH EXPERIMENT - Moreau-W2")
    print("=" * 60)

    collector = MetricsCollector()
    rng = np.random.default_rng(0)
    violations = []
    worst_gap = 0.0
    by_delta = {delta: [] for delta in DELTAS}

    start = time.perf_counter()
    for instance in tqdm(range(INSTANCES), desc="Instances"):
        n = int(rng.integers(1, 51))
        d = int(rng.integers(1, 4))
        x = EmpiricalCloud(points=rng.standard_normal((n, d)))
        nu = EmpiricalCloud(points=1.5 * rng.standard_normal((n, d)) + 1.0)

        t0 = time.perf_counter()
        rows = sandwich_sweep(x, nu, DELTAS)
        elapsed = time.perf_counter() - t0

        for row in rows:
            collector.record_solve(row.iterations, row.gap, row.converged, elapsed / len(rows))
            worst_gap = max(worst_gap, row.gap)
            if row.w2 > 0:
                # position inside the sandwich: 0 at W2^2, 1 at W2^2/(1-delta)
                by_delta[row.delta].append((row.value - row.w2) / (row.upper_bound - row.w2))
            if not (row.lower_ok and row.upper_ok):
                violations.append({"instance": instance, "n": n, "d": d, "delta": row.delta})

    total_time = time.perf_counter() - start
    collector.record_sweep(INSTANCES * len(DELTAS), len(violations), 1, total_time)

    # Display results
    print("\n" + "=" * 60)
    print("RESULTS SUMMARY")
    print("=" * 60)
    print(f"\nInstances:        {INSTANCES}")
    print(f"Violations:       {len(violations)}")
    print(f"Largest gap:      {worst_gap:.3e}")
    print("\nMean position inside the sandwich:")
    for delta, positions in by_delta.items():
        print(f"  delta={delta:<5} {np.mean(positions):.4f}")
    print("\n" + collector.generate_report())

    results = {
        "deltas": DELTAS,
        "instances": INSTANCES,
        "violations": violations,
        "max_gap": worst_gap,
        "mean_position": {str(k): float(np.mean(v)) for k, v in by_delta.items()},
        "metrics": collector.get_all_metrics(),
    }

    Path("data/results").mkdir(parents=True, exist_ok=True)
    with open("data/results/sandwich_experiment.json", "w") as f:
        json.dump(results, f, indent=2)

    collector.save_metrics(Path("data/results/sandwich_metrics.json"))

    print("\n✅ Results saved to: data/results/sandwich_experiment.json")
    print("✅ Metrics saved to: data/results/sandwich_metrics.json")
    print("=" * 60 + "\n")


if __name__ == "__main__":
    main()
