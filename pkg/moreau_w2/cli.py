"""
Moreau-W2 - Command line
Description: Batch experiment runner writing CSV tables, JSON metadata and optional SVG plots
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pydantic
import yaml

from moreau_w2.core.differentials import gradient_convergence_experiment, norm_identity_check, w2_gradient
from moreau_w2.core.envelope import envelope_value, equality_sweep, equality_threshold, sandwich_sweep
from moreau_w2.core.functionals import displacement_convexity_check, functional_report
from moreau_w2.core.measures import (
    AffineMap,
    EmpiricalCloud,
    GaussianSpec,
    WeightedMeasure,
    as_weighted,
    load_gaussian_json,
    load_measure,
)
from moreau_w2.core.ot_exact import gaussian_map, gaussian_w2, w2_assignment, w2_general
from moreau_w2.utils.config import COMMANDS, ExperimentConfig, worker_count
from moreau_w2.utils.errors import ArtifactIOError, MoreauW2Error, NoConvergence, ValidationError
from moreau_w2.utils.io import write_csv_table, write_json
from moreau_w2.utils.metrics import MetricsCollector
from moreau_w2.utils.plotting import line_chart_svg
from moreau_w2.utils.sweep import table

logger = logging.getLogger(__name__)

# dilation grid used by the `functionals` convexity table
CONVEXITY_GRID = [-0.25, -0.2, -0.15, -0.1, -0.05, 0.0, 0.05, 0.1, 0.15, 0.2, 0.25]


class _Run:
    """Artifacts and bookkeeping for one command invocation"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.out = Path(config.out)
        self.collector = MetricsCollector()
        self.flagged = False

    def path(self, suffix: str) -> Path:
        return self.out / f"{self.config.command}{suffix}"

    def inputs(self) -> Dict:
        c = self.config
        data = {
            "a": str(c.a) if c.a else None,
            "b": str(c.b) if c.b else None,
            "gauss_a": c.gauss_a,
            "gauss_b": c.gauss_b,
            "delta": c.delta,
            "deltas": c.deltas,
            "n": c.n,
            "seeds": c.seed_list,
            "tol": c.tol,
            "max_iter": c.max_iter,
            "radius_power": c.radius_power,
        }
        return {k: v for k, v in data.items() if v is not None}

    def record_rows(self, rows, elapsed: float):
        flagged = sum(not r.converged for r in rows)
        self.flagged |= flagged > 0
        self.collector.record_sweep(len(rows), flagged, worker_count(), elapsed)

    def finish(self, **extra):
        self.collector.stop_timer("run")
        meta = self.collector.run_metadata(
            self.config.command,
            self.inputs(),
            seed=self.config.seed_list[0],
            flagged=self.flagged,
            threads=worker_count(),
            **extra,
        )
        write_json(self.path(".json"), meta)


def _clouds(config: ExperimentConfig):
    if config.a is None or config.b is None:
        raise ValidationError(f"`{config.command}` needs --a and --b")
    return load_measure(config.a), load_measure(config.b)


def _uniform_pair(config: ExperimentConfig) -> Tuple[EmpiricalCloud, EmpiricalCloud]:
    a, b = _clouds(config)
    if not (isinstance(a, EmpiricalCloud) and isinstance(b, EmpiricalCloud)):
        raise ValidationError(f"`{config.command}` needs uniform clouds (no weight column)")
    return a, b


def _gaussians(config: ExperimentConfig, both: bool = True) -> Tuple[GaussianSpec, Optional[GaussianSpec]]:
    if config.gauss_a is None or (both and config.gauss_b is None):
        flags = "--gauss-a and --gauss-b" if both else "--gauss-a"
        raise ValidationError(f"`{config.command}` needs {flags}")
    g_a = load_gaussian_json(config.gauss_a)
    g_b = load_gaussian_json(config.gauss_b) if config.gauss_b is not None else None
    return g_a, g_b


def _coord_names(prefix: str, d: int) -> List[str]:
    return [f"{prefix}{k}" for k in range(d)]


def _cmd_w2(run: _Run) -> Dict:
    config = run.config
    if config.gauss_a is not None:
        g_a, g_b = _gaussians(config)
        cost = gaussian_w2(g_a, g_b)
        t = gaussian_map(g_a, g_b)
        write_csv_table(run.path(".csv"), ["method", "cost", "n_source", "n_target"], [["gaussian", cost, 0, 0]])
        return {"map": {"matrix": t.matrix.tolist(), "shift": t.shift.tolist()}}

    a, b = _clouds(config)
    if isinstance(a, EmpiricalCloud) and isinstance(b, EmpiricalCloud) and a.n == b.n:
        plan = w2_assignment(a, b)
        method, m, k = "assignment", a.n, b.n
    else:
        wa = a if isinstance(a, WeightedMeasure) else as_weighted(a)
        wb = b if isinstance(b, WeightedMeasure) else as_weighted(b)
        plan = w2_general(wa, wb)
        method, m, k = "network_simplex", wa.m, wb.m
    write_csv_table(run.path(".csv"), ["method", "cost", "n_source", "n_target"], [[method, plan.cost, m, k]])
    write_csv_table(run.path("_plan.csv"), ["source", "target", "mass"], plan.pairs())
    return {"max_violation": plan.max_violation}


def _cmd_grad(run: _Run) -> Dict:
    mu, nu = _uniform_pair(run.config)
    field = w2_gradient(mu, nu)
    header = ["atom"] + _coord_names("x", mu.d) + _coord_names("g", mu.d) + ["target"]
    rows = [
        [i] + mu.points[i].tolist() + field.vectors[i].tolist() + [int(field.plan.permutation[i])]
        for i in range(mu.n)
    ]
    write_csv_table(run.path(".csv"), header, rows)
    extra = {"assignment_gap": field.assignment_gap, "degenerate": field.degenerate, "w2": field.plan.cost}
    if field.degenerate:
        run.flagged = True
    else:
        lhs, rhs, rel_err = norm_identity_check(mu, nu)
        extra.update({"norm_lhs": lhs, "norm_rhs": rhs, "norm_rel_err": rel_err})
    return extra


def _cmd_envelope(run: _Run) -> Dict:
    config = run.config
    if config.delta is None:
        raise ValidationError("`envelope` needs --delta")
    x, nu = _uniform_pair(config)
    try:
        result = envelope_value(x, nu, config.delta, tol=config.tol, max_iter=config.max_iter)
    except NoConvergence as e:
        result = e.partial
        run.flagged = True
    run.collector.record_solve(result.iterations, result.gap, result.converged)

    header = ["atom"] + _coord_names("x", x.d) + _coord_names("xstar", x.d) + _coord_names("grad", x.d)
    rows = [
        [i] + x.points[i].tolist() + result.maximizer.points[i].tolist() + result.gradient[i].tolist()
        for i in range(x.n)
    ]
    write_csv_table(run.path(".csv"), header, rows)
    summary = result.to_dict()
    write_csv_table(run.path("_summary.csv"), list(summary), [list(summary.values())])
    return {"result": summary}


def _cmd_bounds(run: _Run) -> Dict:
    x, nu = _uniform_pair(run.config)
    run.collector.start_timer("sweep")
    rows = sandwich_sweep(x, nu, run.config.deltas, tol=run.config.tol)
    run.record_rows(rows, run.collector.stop_timer("sweep"))
    for r in rows:
        run.collector.record_solve(r.iterations, r.gap, r.converged)
    header, values = table(rows)
    write_csv_table(run.path(".csv"), header, values)
    if run.config.emit_svg:
        line_chart_svg(
            run.path(".svg"),
            [r.delta for r in rows],
            {"envelope": [r.value for r in rows], "W2^2/(1-delta)": [r.upper_bound for r in rows]},
            xlabel="delta",
            ylabel="value",
            title="Sandwich bounds",
        )
    return {"violations": sum(not (r.lower_ok and r.upper_ok) for r in rows)}


def _cmd_equality(run: _Run) -> Dict:
    config = run.config
    g_mu, g_nu = _gaussians(config)
    header: List[str] = []
    values = []
    every = []
    run.collector.start_timer("sweep")
    for seed in config.seed_list:
        rows = equality_sweep(g_mu, g_nu, config.n, seed, config.deltas, tol=config.tol)
        header, body = table(rows)
        values.extend((seed,) + row for row in body)
        every.extend(rows)
    run.record_rows(every, run.collector.stop_timer("sweep"))
    values.sort(key=lambda row: (row[1], row[0]))
    write_csv_table(run.path(".csv"), ["seed"] + header, values)
    if config.emit_svg:
        first = [row for row in values if row[0] == config.seed_list[0]]
        line_chart_svg(
            run.path(".svg"),
            [row[1] for row in first],
            {"relative deviation": [row[5] for row in first]},
            xlabel="delta",
            ylabel="|value - W2^2/(1-delta)| / (W2^2/(1-delta))",
            title="Equality sweep",
        )
    return {"threshold": equality_threshold(g_mu, g_nu)}


def _cmd_converge(run: _Run) -> Dict:
    config = run.config
    x0, nu = _uniform_pair(config)
    header: List[str] = []
    values = []
    every = []
    met = True
    run.collector.start_timer("sweep")
    for seed in config.seed_list:
        rows = gradient_convergence_experiment(
            x0, nu, config.deltas, seed=seed, tol=config.tol, radius_power=config.radius_power
        )
        header, body = table(rows)
        values.extend((seed,) + row for row in body)
        every.extend(rows)
        met = met and rows[-1].below_error_tol
    run.record_rows(every, run.collector.stop_timer("sweep"))
    values.sort(key=lambda row: (-row[1], row[0]))
    write_csv_table(run.path(".csv"), ["seed"] + header, values)
    if config.emit_svg:
        first = [row for row in values if row[0] == config.seed_list[0]]
        line_chart_svg(
            run.path(".svg"),
            [row[1] for row in first],
            {"gradient error": [row[4] for row in first]},
            xlabel="delta",
            ylabel="lifted gradient error",
            title="Envelope gradient convergence",
            loglog=True,
        )
    return {
        "reference_norm": float(np.sqrt(4.0 * w2_assignment(x0, nu, tie_break=False).cost)),
        "error_tol_met": met,
    }


def _cmd_functionals(run: _Run) -> Dict:
    g, _ = _gaussians(run.config, both=False)
    report = functional_report(g)
    write_csv_table(run.path(".csv"), ["d", "entropy", "fisher"], [[g.d, report.entropy, report.fisher]])
    convexity = displacement_convexity_check(g, AffineMap.identity(g.d), CONVEXITY_GRID)
    write_csv_table(run.path("_convexity.csv"), ["h", "entropy"], [[r.h, r.entropy] for r in convexity.rows])
    return {"convex": convexity.convex}


HANDLERS = {
    "w2": _cmd_w2,
    "grad": _cmd_grad,
    "envelope": _cmd_envelope,
    "bounds-check": _cmd_bounds,
    "equality-sweep": _cmd_equality,
    "grad-converge": _cmd_converge,
    "functionals": _cmd_functionals,
}


def _report_error(error: MoreauW2Error) -> int:
    print(json.dumps(error.to_dict(), sort_keys=True), file=sys.stderr)
    return error.exit_code


def run(config: ExperimentConfig) -> int:
    """
    Execute one command and write its artifacts.

    Args:
        config: Validated experiment configuration

    Returns:
        Exit code: 0 success, 1 validation error, 2 solver did not converge, 3 I/O error
    """
    current = _Run(config)
    current.collector.start_timer("run")
    logger.info(f"Running `{config.command}` -> {current.out}")
    try:
        extra = HANDLERS[config.command](current)
        current.finish(**extra)
    except MoreauW2Error as e:
        logger.error(f"`{config.command}` failed: {e.message}")
        return _report_error(e)

    if current.flagged and config.command != "grad":
        return _report_error(NoConvergence(f"`{config.command}` has rows that did not converge"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML file with default settings")
    common.add_argument("--a", type=Path, help="Source cloud CSV (x0,..,x{d-1}[,w])")
    common.add_argument("--b", type=Path, help="Target cloud CSV")
    common.add_argument("--gauss-a", dest="gauss_a", help="Gaussian JSON (inline or file)")
    common.add_argument("--gauss-b", dest="gauss_b", help="Gaussian JSON (inline or file)")
    common.add_argument("--delta", type=float, help="Envelope parameter in (0, 1)")
    common.add_argument("--deltas", type=float, nargs="+", help="Delta grid for sweeps")
    common.add_argument("--n", type=int, help="Sample size for Gaussian discretisation")
    common.add_argument("--seed", type=int, help="Seed")
    common.add_argument("--seeds", type=int, nargs="+", help="Several seeds (one row block each)")
    common.add_argument("--tol", type=float, help="Envelope certificate tolerance")
    common.add_argument("--max-iter", dest="max_iter", type=int, help="Envelope iteration cap")
    common.add_argument("--radius-power", dest="radius_power", type=float, help="Perturbation radius delta**p")
    common.add_argument("--out", type=Path, help="Output directory")
    common.add_argument("--emit-svg", dest="emit_svg", action="store_true", default=None, help="Also write an SVG plot")
    common.add_argument("--verbose", action="store_true", default=None, help="Debug logging")

    parser = argparse.ArgumentParser(
        prog="moreau-w2",
        description="Sup-convolution envelopes of the squared Wasserstein distance on particle clouds",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = vars(build_parser().parse_args(argv))
    config_path = args.pop("config")
    overrides = {k: v for k, v in args.items() if v is not None}
    try:
        if config_path is not None:
            config = ExperimentConfig.from_yaml(config_path, **overrides)
        else:
            config = ExperimentConfig(**overrides)
    except pydantic.ValidationError as e:
        return _report_error(ValidationError("invalid configuration", errors=json.loads(e.json())))
    except OSError as e:
        return _report_error(ArtifactIOError(f"cannot read configuration: {e}"))
    except yaml.YAMLError as e:
        return _report_error(ValidationError(f"malformed configuration: {e}"))

    logging.basicConfig(
        level=logging.DEBUG if config.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
