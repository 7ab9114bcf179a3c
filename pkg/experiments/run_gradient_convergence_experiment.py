"""
Gradient Convergence Experiment
Description: Convergence of envelope gradients to the Wasserstein gradient as delta -> 0
"""

import json
import sys
from pathlib import Path

import numpy as np
from tqdm import tqdm

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from moreau_w2.core.differentials import dirac_gradient_error, gradient_convergence_experiment, w2_gradient
from moreau_w2.core.measures import EmpiricalCloud, lifted_norm, validate_cloud
from moreau_w2.utils.metrics import MetricsCollector

DELTAS = [0.5, 0.25, 0.1, 0.05, 0.02, 0.01, 0.005, 0.001]
SEEDS = range(5)


def dirac_check() -> dict:
    """Zero-radius Dirac pair against the closed form 2|a-b| delta/(1-delta)"""
    print("\n[1/2] Dirac pair {0} -> {3}...")
    rows = gradient_convergence_experiment(validate_cloud([0.0]), validate_cloud([3.0]), DELTAS, radius=0.0)
    worst = 0.0
    for row in rows:
        expected = dirac_gradient_error(0.0, 3.0, row.delta)
        worst = max(worst, abs(row.error - expected) / expected)
        print(f"  delta={row.delta:<6} error={row.error:.6f} expected={expected:.6f}")
    return {"max_relative_mismatch": worst}


def random_clouds(collector: MetricsCollector) -> dict:
    """Seeded 20-point clouds in the plane with perturbation radius delta^2"""
    print("\n[2/2] Seeded clouds (n=20, d=2)...")
    rng = np.random.default_rng(7)
    x0 = EmpiricalCloud(points=rng.standard_normal((20, 2)))
    nu = EmpiricalCloud(points=2.0 * x0.points + np.array([1.0, 0.0]) + 0.05 * rng.standard_normal((20, 2)))
    reference = lifted_norm(w2_gradient(x0, nu).vectors)

    errors = {delta: [] for delta in DELTAS}
    bound_failures = 0
    collector.start_timer("clouds")
    for seed in tqdm(SEEDS, desc="Seeds"):
        for row in gradient_convergence_experiment(x0, nu, DELTAS, seed=seed):
            collector.record_solve(0, row.envelope_gap, row.converged)
            errors[row.delta].append(row.error / reference)
            bound_failures += int(not row.norm_bound_holds)
    collector.stop_timer("clouds")

    for delta, values in errors.items():
        print(f"  delta={delta:<6} relative error={np.mean(values):.3e}")

    # slope of log error against log delta over the smaller half of the grid
    small = sorted(DELTAS)[: len(DELTAS) // 2]
    slope = np.polyfit(np.log(small), np.log([np.mean(errors[d]) for d in small]), 1)[0]
    print(f"  empirical rate: error ~ delta^{slope:.2f}")

    return {
        "reference_norm": reference,
        "mean_relative_error": {str(d): float(np.mean(v)) for d, v in errors.items()},
        "rate": float(slope),
        "norm_bound_failures": bound_failures,
    }


def main():
    """Run the gradient convergence experiment"""
    print("\n" + "=" * 60)
    print("GRADIENT CONVERGENCE EXPERIMENT - Moreau-W2")
    print("=" * 60)

    collector = MetricsCollector()
    results = {
        "dirac": dirac_check(),
        "clouds": random_clouds(collector),
    }

    print("\n" + "=" * 60)
    print("RESULTS SUMMARY")
    print("=" * 60)
    print(f"\nDirac closed-form mismatch: {results['dirac']['max_relative_mismatch']:.2e}")
    print(f"Cloud convergence rate:     {results['clouds']['rate']:.2f}")
    print(f"Norm bound failures:        {results['clouds']['norm_bound_failures']}")

    results["metrics"] = collector.get_all_metrics()

    Path("data/results").mkdir(parents=True, exist_ok=True)
    with open("data/results/gradient_convergence_experiment.json", "w") as f:
        json.dump(results, f, indent=2)

    collector.save_metrics(Path("data/results/gradient_convergence_metrics.json"))

    print("\n✅ Results saved to: data/results/gradient_convergence_experiment.json")
    print("✅ Metrics saved to: data/results/gradient_convergence_metrics.json")
    print("=" * 60 + "\n")


if __name__ == "__main__":
    main()
