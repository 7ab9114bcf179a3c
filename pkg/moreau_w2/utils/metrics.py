"""
Moreau-W2 - Metrics
Description: Solver and sweep metrics, timers, and run metadata reporting
"""

import platform
import time
from dataclasses import dataclass
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional

from tabulate import tabulate

from moreau_w2.utils.config import get_config
from moreau_w2.utils.io import write_json

TRACKED_PACKAGES = ("moreau-w2", "numpy", "scipy", "pot", "pydantic")


@dataclass
class SolverMetrics:
    """Metrics for envelope / transport solves"""
    solves: int = 0
    converged: int = 0
    total_iterations: int = 0
    max_gap: float = 0.0
    solve_time: float = 0.0

    @property
    def convergence_rate(self) -> float:
        """Percentage of solves that met their tolerance"""
        if self.solves == 0:
            return 0.0
        return (self.converged / self.solves) * 100

    def to_dict(self) -> Dict:
        return {
            "solves": self.solves,
            "converged": self.converged,
            "convergence_rate": round(self.convergence_rate, 2),
            "total_iterations": self.total_iterations,
            "max_gap": self.max_gap,
            "solve_time": round(self.solve_time, 4),
        }


@dataclass
class SweepMetrics:
    """Metrics for a parameter sweep"""
    rows: int = 0
    flagged_rows: int = 0
    workers: int = 1
    sweep_time: float = 0.0

    def to_dict(self) -> Dict:
        return {
            "rows": self.rows,
            "flagged_rows": self.flagged_rows,
            "workers": self.workers,
            "sweep_time": round(self.sweep_time, 4),
        }


def package_versions() -> Dict[str, Optional[str]]:
    """Installed versions of the packages that affect numerical output"""
    versions = {"python": platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


class MetricsCollector:
    """Collects timings and solver statistics for one run"""

    def __init__(self):
        self.solver_metrics = SolverMetrics()
        self.sweep_metrics = SweepMetrics()
        self.timestamps: List[Dict] = []
        self._started: Dict[str, float] = {}

    def start_timer(self, label: str = "operation"):
        """Start timing an operation"""
        self._started[label] = time.perf_counter()
        self.timestamps.append({"label": label, "start": datetime.now().isoformat()})

    def stop_timer(self, label: str = "operation") -> float:
        """Stop the named timer and return elapsed seconds"""
        start = self._started.pop(label, None)
        if start is None:
            return 0.0

        elapsed = time.perf_counter() - start
        for entry in reversed(self.timestamps):
            if entry["label"] == label and "end" not in entry:
                entry["end"] = datetime.now().isoformat()
                entry["duration"] = elapsed
                break
        return elapsed

    def record_solve(self, iterations: int, gap: float, converged: bool, time_taken: float = 0.0):
        """Record one envelope or transport solve"""
        self.solver_metrics.solves += 1
        self.solver_metrics.converged += int(converged)
        self.solver_metrics.total_iterations += iterations
        self.solver_metrics.max_gap = max(self.solver_metrics.max_gap, float(gap))
        self.solver_metrics.solve_time += time_taken

    def record_sweep(self, rows: int, flagged: int, workers: int, time_taken: float):
        """Record sweep metrics"""
        self.sweep_metrics.rows = rows
        self.sweep_metrics.flagged_rows = flagged
        self.sweep_metrics.workers = workers
        self.sweep_metrics.sweep_time = time_taken

    @property
    def wall_time(self) -> float:
        """Longest finished timer (timers may nest)"""
        return max((entry.get("duration", 0.0) for entry in self.timestamps), default=0.0)

    def get_all_metrics(self) -> Dict:
        """Get all metrics as dictionary"""
        return {
            "solver": self.solver_metrics.to_dict(),
            "sweep": self.sweep_metrics.to_dict(),
            "timestamps": self.timestamps,
        }

    def run_metadata(self, command: str, inputs: Dict, seed: Optional[int] = None, **extra) -> Dict:
        """
        Metadata written next to every CSV artifact.

        Args:
            command: CLI subcommand
            inputs: Input description (paths, Gaussian specs, deltas...)
            seed: Seed used, if any
            **extra: Additional command specific fields

        Returns:
            JSON-serialisable dictionary
        """
        data = {
            "command": command,
            "inputs": inputs,
            "seed": seed,
            "versions": package_versions(),
            "tolerances": get_config().to_dict(),
            "wall_time": round(self.wall_time, 6),
            "metrics": self.get_all_metrics(),
        }
        data.update(extra)
        return data

    def save_metrics(self, filepath: Path):
        """Save metrics to JSON file"""
        write_json(Path(filepath), self.get_all_metrics())

    def generate_report(self) -> str:
        """Generate human-readable metrics report"""
        solver = self.solver_metrics
        sweep = self.sweep_metrics
        rows = [
            ["Solves", solver.solves],
            ["Converged", f"{solver.converged} ({solver.convergence_rate:.1f}%)"],
            ["Iterations", solver.total_iterations],
            ["Largest gap", f"{solver.max_gap:.3e}"],
            ["Solve time (s)", f"{solver.solve_time:.3f}"],
            ["Sweep rows", sweep.rows],
            ["Flagged rows", sweep.flagged_rows],
            ["Workers", sweep.workers],
            ["Sweep time (s)", f"{sweep.sweep_time:.3f}"],
        ]
        return "MOREAU-W2 METRICS REPORT\n" + tabulate(rows, headers=["Metric", "Value"], tablefmt="github")


if __name__ == "__main__":
    # Example usage
    collector = MetricsCollector()
    collector.start_timer("demo")
    collector.record_solve(iterations=12, gap=3.2e-10, converged=True, time_taken=0.05)
    collector.record_sweep(rows=5, flagged=0, workers=2, time_taken=0.3)
    collector.stop_timer("demo")
    print(collector.generate_report())
