"""
Moreau-W2 - Differentials
Description: Wasserstein gradient of W2^2(., nu) on clouds and convergence of envelope gradients
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from moreau_w2.core.envelope import EnvelopeResult, check_delta, envelope_value
from moreau_w2.core.measures import EmpiricalCloud, lifted_inner, lifted_norm
from moreau_w2.core.ot_exact import TransportPlan, check_same_size, second_best_gap, w2_assignment
from moreau_w2.utils.errors import Degenerate, NoConvergence
from moreau_w2.utils.sweep import run_rows

logger = logging.getLogger(__name__)

DEGENERACY_GAP = 1e-12

RadiusScheme = Union[float, Callable[[float], float]]


@dataclass(frozen=True, eq=False)
class GradientField:
    """D_mu W2^2(mu, nu) evaluated at the atoms of mu"""
    base: EmpiricalCloud
    vectors: np.ndarray
    assignment_gap: float
    plan: TransportPlan

    @property
    def degenerate(self) -> bool:
        """True when the optimal matching is not unique (no gradient)"""
        return self.assignment_gap < DEGENERACY_GAP

    def mean_square(self) -> float:
        return lifted_norm(self.vectors) ** 2


def w2_gradient(mu: EmpiricalCloud, nu: EmpiricalCloud) -> GradientField:
    """
    Gradient field 2 (x - T(x)) with T the optimal matching.

    A zero assignment gap is reported through ``GradientField.degenerate``
    rather than raised, so sweeps can skip such points.

    Args:
        mu: Cloud where the gradient is taken
        nu: Target cloud (same n)

    Returns:
        GradientField
    """
    check_same_size(mu, nu)
    plan = w2_assignment(mu, nu)
    vectors = 2.0 * (mu.points - nu.points[plan.permutation])
    gap = second_best_gap(mu, nu, plan)
    field = GradientField(base=mu, vectors=vectors, assignment_gap=gap, plan=plan)
    if field.degenerate:
        logger.warning(f"Optimal matching is not unique (gap {gap:.2e}); gradient undefined")
    return field


def norm_identity_check(mu: EmpiricalCloud, nu: EmpiricalCloud) -> Tuple[float, float, float]:
    """
    Compare E|D_mu W2^2|^2 with 4 W2^2(mu, nu).

    Returns:
        (lhs, rhs, rel_err) with rel_err = |lhs - rhs| / (1 + rhs)

    Raises:
        Degenerate: the optimal matching is not unique
    """
    field = w2_gradient(mu, nu)
    if field.degenerate:
        raise Degenerate("gradient undefined at a tied matching", assignment_gap=field.assignment_gap)
    lhs = field.mean_square()
    rhs = 4.0 * field.plan.cost
    return lhs, rhs, abs(lhs - rhs) / (1.0 + rhs)


@dataclass
class SuperdifferentialResult:
    increment: float
    linear_term: float
    remainder: float
    bound: float
    holds: bool


def superdifferential_check(mu: EmpiricalCloud, nu: EmpiricalCloud, h: np.ndarray) -> SuperdifferentialResult:
    """
    First-order expansion along the identity coupling with the 1-semi-concavity remainder.

    W2^2(mu + H) - W2^2(mu) - E[grad . H] <= E|H|^2 must hold for every H.
    """
    check_same_size(mu, nu)
    h = np.asarray(h, dtype=float).reshape(mu.points.shape)
    field = w2_gradient(mu, nu)
    moved = w2_assignment(EmpiricalCloud(points=mu.points + h), nu, tie_break=False).cost
    increment = moved - field.plan.cost
    linear = lifted_inner(field.vectors, h)
    bound = lifted_norm(h) ** 2
    remainder = increment - linear
    return SuperdifferentialResult(
        increment=increment,
        linear_term=linear,
        remainder=remainder,
        bound=bound,
        holds=bool(remainder <= bound + 1e-12 * (1.0 + abs(increment))),
    )


@dataclass
class ConvergenceRow:
    delta: float
    radius: float
    displacement: float
    error: float
    envelope_gap: float
    assignment_gap: float
    grad_norm: float
    norm_bound: float
    norm_bound_holds: bool
    converged: bool
    below_error_tol: bool


def dirac_gradient_error(a: float, b: float, delta: float) -> float:
    """Closed-form |grad U_delta - grad U| for the Dirac pair {a}, {b}: 2|a - b| delta/(1 - delta)"""
    return 2.0 * abs(a - b) * delta / (1.0 - delta)


def _radius_function(radius: Optional[RadiusScheme], power: float) -> Callable[[float], float]:
    if radius is None:
        return lambda delta: delta ** power
    if callable(radius):
        return radius
    return lambda delta: float(radius)


def _unit_direction(seed: np.random.SeedSequence, shape: Tuple[int, int]) -> np.ndarray:
    """Seeded Gaussian atom noise scaled to unit lifted norm"""
    direction = np.random.Generator(np.random.Philox(seed)).standard_normal(shape)
    norm = lifted_norm(direction)
    return direction / norm if norm > 0 else direction


def _perturb(x0: EmpiricalCloud, nu: EmpiricalCloud, direction: np.ndarray, radius: float,
             perm: np.ndarray) -> Tuple[EmpiricalCloud, float]:
    """X0 + r E, halving r until the optimal matching of X0 is kept"""
    for _ in range(60):
        if radius == 0.0:
            break
        moved = EmpiricalCloud(points=x0.points + radius * direction)
        if np.array_equal(w2_assignment(moved, nu, tie_break=False).permutation, perm):
            return moved, radius
        radius *= 0.5
    return x0, 0.0


def gradient_convergence_experiment(
        x0: EmpiricalCloud,
        nu: EmpiricalCloud,
        deltas: Sequence[float],
        radius: Optional[RadiusScheme] = None,
        seed: int = 0,
        tol: Optional[float] = None,
        radius_power: float = 2.0,
        workers: Optional[int] = None,
        error_tol: Optional[float] = None,
) -> List[ConvergenceRow]:
    """
    Track grad U_delta(X_delta) -> grad U(X0) as delta -> 0.

    X_delta = X0 + r(delta) E_delta, where every delta draws its own seeded
    Gaussian atom noise E_delta of unit lifted norm and r is shrunk (halved)
    until X_delta keeps the optimal matching of X0. Distances between fields
    use the lifted norm over the shared atom index, i.e. the identity
    coupling between X0 and X_delta.

    Args:
        x0: Base cloud (must have a unique optimal matching)
        nu: Target cloud
        deltas: Delta grid
        radius: Constant radius or function of delta; default delta ** radius_power
        seed: Root seed of the per-delta perturbations
        tol: Envelope tolerance
        radius_power: Exponent of the default radius scheme
        workers: Worker cap
        error_tol: Gradient error the smallest delta must reach; default 5% of |grad U(X0)|

    Returns:
        Rows sorted by decreasing delta

    Raises:
        Degenerate: x0 has a tied optimal matching
    """
    reference = w2_gradient(x0, nu)
    if reference.degenerate:
        raise Degenerate("base cloud is not a differentiability point", assignment_gap=reference.assignment_gap)
    deltas = sorted((check_delta(d) for d in deltas), reverse=True)
    radius_of = _radius_function(radius, radius_power)

    streams = np.random.SeedSequence(seed).spawn(len(deltas))
    directions = {delta: _unit_direction(s, x0.points.shape) for delta, s in zip(deltas, streams)}
    perm = np.asarray(reference.plan.permutation)
    if error_tol is None:
        error_tol = 0.05 * lifted_norm(reference.vectors)

    def row(delta: float) -> ConvergenceRow:
        moved, used = _perturb(x0, nu, directions[delta], float(radius_of(delta)), perm)
        try:
            result: EnvelopeResult = envelope_value(moved, nu, delta, tol=tol)
        except NoConvergence as e:
            logger.warning(f"delta={delta}: envelope not converged, row flagged")
            result = e.partial
        error = lifted_norm(result.gradient - reference.vectors)
        grad_norm = lifted_norm(result.gradient)
        # strong concavity of the sup objective bounds how far the returned maximizer can be
        spread = math.sqrt(max(result.gap, 0.0) * delta / (1.0 - delta))
        slack = (2.0 / delta + 2.0) * spread + 1e-9 * (1.0 + grad_norm)
        norm_bound = 2.0 * math.sqrt(max(result.plan_at_opt.cost, 0.0))
        return ConvergenceRow(
            delta=delta,
            radius=used,
            displacement=lifted_norm(moved.points - x0.points),
            error=error,
            envelope_gap=result.gap,
            assignment_gap=reference.assignment_gap,
            grad_norm=grad_norm,
            norm_bound=norm_bound,
            norm_bound_holds=bool(grad_norm <= norm_bound + slack),
            converged=result.converged,
            below_error_tol=bool(error <= error_tol),
        )

    rows = run_rows(row, deltas, workers)
    for r in rows:
        logger.info(f"delta={r.delta:g}: error={r.error:.4e}, displacement={r.displacement:.2e}")
    if rows and not rows[-1].below_error_tol:
        logger.warning(f"Gradient error {rows[-1].error:.3e} at delta={rows[-1].delta:g} is above {error_tol:.3e}")
    return rows
