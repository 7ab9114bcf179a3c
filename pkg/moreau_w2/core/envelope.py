"""
Moreau-W2 - Envelope
Description: Particle-level sup-convolution of W2^2(., nu), its maximizer and gradient
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import isotonic_regression, nnls

from moreau_w2.core.measures import EmpiricalCloud, GaussianSpec, lifted_norm, sample_gaussian
from moreau_w2.core.ot_exact import (
    TransportPlan,
    check_same_size,
    gaussian_map,
    gaussian_w2,
    map_eigen_range,
    w2_assignment,
)
from moreau_w2.utils.config import get_config
from moreau_w2.utils.errors import (
    BadDelta,
    DimensionMismatch,
    GridOutOfBand,
    NoConvergence,
    NonSPD,
    TooLarge,
    ValidationError,
)
from moreau_w2.utils.sweep import run_rows

logger = logging.getLogger(__name__)

# largest full grid envelope_bruteforce enumerates before zooming in
FULL_GRID_LIMIT = 2_000_000
ZOOM_POINTS = 21
GRID_BATCH = 20_000
EPS = float(np.finfo(float).eps)


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    """
    Outcome of one envelope evaluation.

    ``value`` is a certified lower bound of the envelope attained at
    ``maximizer``; the true envelope lies in [value, value + gap].
    """
    value: float
    maximizer: EmpiricalCloud
    gradient: np.ndarray
    iterations: int
    gap: float
    plan_at_opt: TransportPlan
    delta: float
    w2: float
    upper: float
    converged: bool = True
    trace: Tuple[Tuple[int, float, float], ...] = ()

    def to_dict(self) -> Dict:
        return {
            "value": self.value,
            "upper": self.upper,
            "gap": self.gap,
            "delta": self.delta,
            "w2": self.w2,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def check_delta(delta: float) -> float:
    """Accept delta in [band, 1 - band]"""
    band = get_config().delta_band
    if not (isinstance(delta, (int, float, np.floating)) and math.isfinite(delta)):
        raise BadDelta("delta must be a finite number", delta=delta)
    if not band <= delta <= 1.0 - band:
        raise BadDelta(f"delta must lie in [{band}, {1.0 - band}]", delta=delta)
    return float(delta)


def sup_objective(x: EmpiricalCloud, nu: EmpiricalCloud, delta: float, x_prime: np.ndarray) -> float:
    """
    g(X') = W2^2(X', nu) - (1/delta) E|X - X'|^2, the concave function whose sup is the envelope.

    Args:
        x: Base cloud X
        nu: Target cloud
        delta: Envelope parameter
        x_prime: Candidate configuration, same shape as x.points

    Returns:
        g(X')
    """
    candidate = EmpiricalCloud(points=x_prime)
    check_same_size(x, candidate)
    plan = w2_assignment(candidate, nu, tie_break=False)
    return plan.cost - float(np.sum((x.points - candidate.points) ** 2)) / (x.n * delta)


class _HullProjector:
    """
    Fully corrective projection of the origin onto the convex hull of collected vertices.

    Vertices are flattened vectors already shifted so that the point to
    project is the origin. Each vertex carries a hashable key. After every
    new vertex the weights are re-optimised over the whole collection by
    nonnegative least squares on

        min |A mu / s|^2 + (1^T mu - 1)^2,  mu >= 0

    whose minimizer, divided by its sum, is the minimum-norm convex
    combination (s only rescales A). Vertices that keep a zero weight are
    pruned once the collection outgrows ``capacity``.
    """

    def __init__(self, key, vertex: np.ndarray, capacity: int):
        self.keys = [key]
        self.vertices = [vertex]
        self.weights = np.ones(1)
        self.point = vertex.copy()
        self.capacity = capacity

    def add(self, key, vertex: np.ndarray) -> bool:
        if key in self.keys:
            return False
        self.keys.append(key)
        self.vertices.append(vertex)
        self.weights = np.append(self.weights, 0.0)
        return True

    def settle(self) -> bool:
        """Re-optimise the weights; False when the squared norm did not decrease"""
        stack = np.asarray(self.vertices)
        scale = float(np.max(np.linalg.norm(stack, axis=1)))
        if scale == 0.0:
            self.point = np.zeros(stack.shape[1])
            return False
        system = np.vstack([stack.T / scale, np.ones((1, len(stack)))])
        rhs = np.zeros(system.shape[0])
        rhs[-1] = 1.0
        try:
            mu, _ = nnls(system, rhs, maxiter=50 * system.shape[1])
        except RuntimeError as e:
            logger.debug(f"Weight update failed: {e}")
            return False
        total = float(mu.sum())
        if not total > 0:
            return False

        weights = mu / total
        point = weights @ stack
        improved = float(point @ point) < float(self.point @ self.point)
        if improved:
            self.weights, self.point = weights, point
            if len(self.vertices) > self.capacity:
                keep = np.flatnonzero(weights > 0)
                self.keys = [self.keys[i] for i in keep]
                self.vertices = [self.vertices[i] for i in keep]
                self.weights = weights[keep]
        return improved


def _rounding_slack(X: np.ndarray, V: np.ndarray, x_prime: np.ndarray, delta: float, value: float) -> float:
    """Floating-point allowance on a gap, scaled to the magnitudes entering g and the dual bound"""
    n = X.shape[0]
    moved = float(np.sum(x_prime ** 2))
    magnitude = abs(value) + (
        float(np.sum(V ** 2)) + moved + (float(np.sum(X ** 2)) + moved) / delta
    ) / (n * (1.0 - delta))
    return 8.0 * EPS * magnitude


def envelope_value(
        x: EmpiricalCloud,
        nu: EmpiricalCloud,
        delta: float,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
) -> EnvelopeResult:
    """
    Sup-convolution Phi_delta at the law of x, with certificate.

    Every iteration assigns the current X' to nu (step i), reads off the
    frozen-assignment maximizer C = (X - delta nu o pi)/(1 - delta) (step ii)
    and bounds the optimum between g(X') and the smallest upper envelope
    member seen (step iii). The next X' comes from the exact dual: the sup
    equals the squared distance from X/delta to the convex hull of the
    permutations of nu, projected with a fully corrective Frank-Wolfe
    scheme whose vertices are the assignments found along the way. The
    reported gap adds a rounding allowance, so value <= Phi_delta <= value + gap
    holds in floating point too.

    Args:
        x: Base cloud X
        nu: Target cloud (same n and d)
        delta: Envelope parameter in (0, 1)
        tol: Certified gap to reach; default 1e-8 (1 + W2^2)
        max_iter: Iteration cap; default 10 n + 100

    Returns:
        EnvelopeResult

    Raises:
        BadDelta: delta outside the admissible band
        SizeMismatch: clouds of different sizes
        NoConvergence: cap reached; ``partial`` holds the best result
    """
    delta = check_delta(delta)
    check_same_size(x, nu)
    n = x.n
    X = x.points
    V = nu.points

    base = w2_assignment(x, nu, tie_break=False)
    w2 = base.cost
    tol = 1e-8 * (1.0 + w2) if tol is None else float(tol)
    if not tol > 0:
        raise ValidationError("tol must be positive", tol=tol)
    max_iter = 10 * n + 100 if max_iter is None else int(max_iter)

    Z = X / delta
    ratio = delta / (1.0 - delta)
    constant = float(np.sum(V ** 2)) - float(np.sum(X ** 2)) / delta

    def dual_value(Y: np.ndarray) -> float:
        return (ratio * float(np.sum((Y - Z) ** 2)) + constant) / n

    # X' = X is feasible with g(X) = W2^2
    best_lower, best_x = w2, X
    best_upper = w2 / (1.0 - delta)
    key = tuple(int(j) for j in base.permutation)
    projector = _HullProjector(key, (V[base.permutation] - Z).ravel(), capacity=2 * (n * x.d + 1))

    logger.debug(f"Envelope solve: n={n}, d={x.d}, delta={delta}, W2^2={w2:.6g}, tol={tol:.2e}")
    trace = [(0, best_lower, best_upper)]
    iterations = 0
    converged = best_upper - best_lower + 2.0 * _rounding_slack(X, V, best_x, delta, best_lower) <= tol

    while not converged and iterations < max_iter:
        iterations += 1
        Y = Z + projector.point.reshape(X.shape)
        x_prime = (X - delta * Y) / (1.0 - delta)
        plan = w2_assignment(EmpiricalCloud(points=x_prime), nu, tie_break=False)
        lower = plan.cost - float(np.sum((X - x_prime) ** 2)) / (n * delta)
        frozen_upper = float(np.sum((X - V[plan.permutation]) ** 2)) / (n * (1.0 - delta))

        if lower > best_lower:
            best_lower, best_x = lower, x_prime
        best_upper = min(best_upper, dual_value(Y), frozen_upper)
        trace.append((iterations, best_lower, best_upper))
        logger.debug(f"iter {iterations}: lower={best_lower:.12g} upper={best_upper:.12g}")

        if best_upper - best_lower + 2.0 * _rounding_slack(X, V, best_x, delta, best_lower) <= tol:
            converged = True
            break
        key = tuple(int(j) for j in plan.permutation)
        if not projector.add(key, (V[plan.permutation] - Z).ravel()):
            logger.debug("Linear oracle returned an active vertex; no further progress possible")
            break
        if not projector.settle():
            logger.debug("Weight update made no progress; stopping")
            break

    maximizer = EmpiricalCloud(points=best_x)
    plan_at_opt = w2_assignment(maximizer, nu)
    # the certified lower bound itself; plan_at_opt may differ from its plan only on a cost tie
    value = best_lower
    gap = max(best_upper - value, 0.0) + _rounding_slack(X, V, best_x, delta, value)
    converged = converged or gap <= tol
    result = EnvelopeResult(
        value=value,
        maximizer=maximizer,
        gradient=(2.0 / delta) * (maximizer.points - X),
        iterations=iterations,
        gap=gap,
        plan_at_opt=plan_at_opt,
        delta=delta,
        w2=w2,
        upper=value + gap,
        converged=converged,
        trace=tuple(trace),
    )
    if not converged:
        logger.warning(f"Envelope did not converge: gap {gap:.3e} > tol {tol:.3e} after {iterations} iterations")
        raise NoConvergence(
            "envelope solver stopped before reaching the tolerance",
            partial=result,
            gap=gap,
            tol=tol,
            iterations=iterations,
        )
    return result


def lifted_value(x: EmpiricalCloud, nu: EmpiricalCloud, delta: float, tol: Optional[float] = None) -> float:
    """U_delta(X) = Phi_delta(law of X)"""
    return envelope_value(x, nu, delta, tol=tol).value


def envelope_exact_1d(x: EmpiricalCloud, nu: EmpiricalCloud, delta: float) -> EnvelopeResult:
    """
    Exact envelope on the real line.

    The dual minimizer is the Euclidean projection of X/delta onto the
    permutahedron of nu, which reduces to a decreasing isotonic regression
    after sorting.

    Raises:
        DimensionMismatch: d != 1
    """
    delta = check_delta(delta)
    check_same_size(x, nu)
    if x.d != 1:
        raise DimensionMismatch("exact envelope is only available in one dimension", d=x.d)
    n = x.n
    X = x.points[:, 0]
    z = X / delta
    order = np.argsort(-z, kind="stable")
    targets = np.sort(nu.points[:, 0])[::-1]
    shifted = z[order] - targets
    v = isotonic_regression(shifted, increasing=False).x
    Y = np.empty(n)
    Y[order] = z[order] - v

    x_star = ((X - delta * Y) / (1.0 - delta)).reshape(-1, 1)
    maximizer = EmpiricalCloud(points=x_star)
    plan = w2_assignment(maximizer, nu)
    value = plan.cost - float(np.sum((X - x_star[:, 0]) ** 2)) / (n * delta)
    upper = (
        (delta / (1.0 - delta)) * float(np.sum((Y - z) ** 2))
        + float(np.sum(nu.points ** 2))
        - float(np.sum(X ** 2)) / delta
    ) / n
    w2 = w2_assignment(x, nu, tie_break=False).cost
    gap = max(upper - value, 0.0) + _rounding_slack(x.points, nu.points, x_star, delta, value)
    return EnvelopeResult(
        value=value,
        maximizer=maximizer,
        gradient=(2.0 / delta) * (x_star - x.points),
        iterations=1,
        gap=gap,
        plan_at_opt=plan,
        delta=delta,
        w2=w2,
        upper=value + gap,
    )


def _grid_objective(X: np.ndarray, targets: np.ndarray, delta: float, flat: np.ndarray) -> np.ndarray:
    """g on a batch of flattened configurations, minimizing over all permutations"""
    n = X.shape[0]
    points = flat.reshape(flat.shape[0], *X.shape)
    transport = ((points[:, None] - targets[None]) ** 2).sum(axis=(2, 3)).min(axis=1) / n
    penalty = ((points - X) ** 2).sum(axis=(1, 2)) / (n * delta)
    return transport - penalty


def _grid_max(X, targets, delta, center: np.ndarray, halfwidth: float, points: int) -> Tuple[float, np.ndarray]:
    axis = np.linspace(-halfwidth, halfwidth, points)
    dims = center.size
    total = points ** dims
    best_value, best_point = -np.inf, center
    for start in range(0, total, GRID_BATCH):
        idx = np.arange(start, min(start + GRID_BATCH, total))
        offsets = axis[np.stack(np.unravel_index(idx, (points,) * dims), axis=1)]
        flat = center + offsets
        values = _grid_objective(X, targets, delta, flat)
        k = int(np.argmax(values))
        if values[k] > best_value:
            best_value, best_point = float(values[k]), flat[k]
    return best_value, best_point


def envelope_bruteforce(
        x: EmpiricalCloud,
        nu: EmpiricalCloud,
        delta: float,
        grid_halfwidth: float,
        grid_step: float,
) -> float:
    """
    Grid-search lower bound of the envelope for tiny problems (n d <= 4).

    The full grid centred at X is enumerated when it holds at most
    FULL_GRID_LIMIT points; larger grids are searched coarse to fine with
    ZOOM_POINTS per axis until the spacing reaches grid_step.

    Raises:
        TooLarge: n d > 4
        GridOutOfBand: a frozen-assignment maximizer lies outside the box
    """
    delta = check_delta(delta)
    check_same_size(x, nu)
    if x.n * x.d > 4:
        raise TooLarge("grid oracle limited to n*d <= 4", n=x.n, d=x.d)
    if not (grid_step > 0 and grid_halfwidth > 0):
        raise GridOutOfBand("grid step and halfwidth must be positive", step=grid_step, halfwidth=grid_halfwidth)

    X = x.points
    perms = np.array(list(itertools.permutations(range(x.n))), dtype=int)
    targets = nu.points[perms]
    candidates = (X[None] - delta * targets) / (1.0 - delta)
    reach = float(np.max(np.abs(candidates - X[None])))
    if reach > grid_halfwidth:
        raise GridOutOfBand(
            "grid does not cover every frozen-assignment maximizer",
            required_halfwidth=reach,
            halfwidth=grid_halfwidth,
        )

    center = X.ravel().copy()
    dims = center.size
    points = int(round(2.0 * grid_halfwidth / grid_step)) + 1
    if points ** dims <= FULL_GRID_LIMIT:
        value, _ = _grid_max(X, targets, delta, center, grid_halfwidth, points)
        return value

    halfwidth = grid_halfwidth
    step = 2.0 * halfwidth / (ZOOM_POINTS - 1)
    value = -np.inf
    while True:
        level_value, center = _grid_max(X, targets, delta, center, halfwidth, ZOOM_POINTS)
        value = max(value, level_value)
        if step <= grid_step * (1.0 + 1e-9):
            break
        halfwidth = max(4.0 * step, 0.5 * (ZOOM_POINTS - 1) * grid_step)
        step = 2.0 * halfwidth / (ZOOM_POINTS - 1)
    logger.debug(f"Grid oracle value {value:.9g} after zooming to step {step:.3g}")
    return value


def equality_threshold(g_mu: GaussianSpec, g_nu: GaussianSpec) -> float:
    """
    Largest delta for which Phi_delta(mu) = W2^2(mu, nu) / (1 - delta) between Gaussians.

    Returns:
        max(smallest eigenvalue of T', 1 / largest eigenvalue of T) with
        T: mu -> nu and T': nu -> mu the optimal maps

    Raises:
        NonSPD: the two terms differ by more than 1e-8 (they coincide for Gaussians)
    """
    forward = gaussian_map(g_mu, g_nu)
    backward = gaussian_map(g_nu, g_mu)
    low_back, _ = map_eigen_range(backward)
    _, high_fwd = map_eigen_range(forward)
    inverse_high = 1.0 / high_fwd
    mismatch = abs(low_back - inverse_high)
    if mismatch > 1e-8 * max(1.0, inverse_high):
        raise NonSPD(
            "threshold terms disagree; covariances too ill-conditioned",
            smallest_backward=low_back,
            inverse_largest_forward=inverse_high,
            mismatch=mismatch,
        )
    return max(low_back, inverse_high)


@dataclass
class SandwichRow:
    delta: float
    w2: float
    value: float
    upper_bound: float
    gap: float
    lower_ok: bool
    upper_ok: bool
    iterations: int
    converged: bool


@dataclass
class EqualityRow:
    delta: float
    value: float
    w2_particle: float
    predicted: float
    rel_deviation: float
    w2_gaussian: float
    predicted_gaussian: float
    discretization_error: float
    below_threshold: bool
    gap: float
    converged: bool


@dataclass
class ProbeResult:
    second_difference: float
    lower_bound: float
    upper_bound: float
    holds: bool
    gaps: List[float] = field(default_factory=list)


def _solve_flagged(x: EmpiricalCloud, nu: EmpiricalCloud, delta: float, tol: Optional[float]) -> EnvelopeResult:
    """Envelope result, keeping the partial answer of a non-converged solve"""
    try:
        return envelope_value(x, nu, delta, tol=tol)
    except NoConvergence as e:
        logger.warning(f"delta={delta}: row flagged as not converged")
        return e.partial


def sandwich_sweep(
        x: EmpiricalCloud,
        nu: EmpiricalCloud,
        deltas: Sequence[float],
        tol: Optional[float] = None,
        workers: Optional[int] = None,
) -> List[SandwichRow]:
    """
    Check W2^2 - gap <= Phi_delta <= W2^2/(1 - delta) + gap over a delta grid.

    Returns:
        One row per delta, sorted by delta
    """
    deltas = sorted(check_delta(d) for d in deltas)
    check_same_size(x, nu)

    def row(delta: float) -> SandwichRow:
        result = _solve_flagged(x, nu, delta, tol)
        upper_bound = result.w2 / (1.0 - delta)
        return SandwichRow(
            delta=delta,
            w2=result.w2,
            value=result.value,
            upper_bound=upper_bound,
            gap=result.gap,
            lower_ok=bool(result.value >= result.w2 - result.gap),
            upper_ok=bool(result.value <= upper_bound + result.gap),
            iterations=result.iterations,
            converged=result.converged,
        )

    rows = run_rows(row, deltas, workers)
    logger.info(f"Sandwich sweep: {len(rows)} rows, {sum(not (r.lower_ok and r.upper_ok) for r in rows)} violations")
    return rows


def equality_sweep(
        g_mu: GaussianSpec,
        g_nu: GaussianSpec,
        n: int,
        seed: int,
        deltas: Sequence[float],
        tol: Optional[float] = None,
        paired: bool = True,
        workers: Optional[int] = None,
) -> List[EqualityRow]:
    """
    Compare particle envelopes of sampled Gaussians with W2^2/(1 - delta).

    Args:
        g_mu: Base Gaussian
        g_nu: Target Gaussian
        n: Points per cloud
        seed: Sampling seed
        deltas: Delta grid
        tol: Envelope tolerance
        paired: Sample both Gaussians from the same normal draws (else seed and seed + 1)
        workers: Worker cap

    Returns:
        One row per delta, sorted by delta
    """
    if g_mu.d != g_nu.d:
        raise DimensionMismatch("Gaussians live in different dimensions", g_mu=g_mu.d, g_nu=g_nu.d)
    deltas = sorted(check_delta(d) for d in deltas)
    threshold = equality_threshold(g_mu, g_nu)
    x = sample_gaussian(g_mu, n, seed)
    nu = sample_gaussian(g_nu, n, seed if paired else seed + 1)
    w2_gauss = gaussian_w2(g_mu, g_nu)
    w2_particle = w2_assignment(x, nu, tie_break=False).cost
    discretization = abs(w2_particle - w2_gauss) / w2_gauss if w2_gauss > 0 else w2_particle
    logger.info(f"Equality sweep: n={n}, seed={seed}, threshold={threshold:.6g}, W2^2 particle={w2_particle:.6g}")

    def row(delta: float) -> EqualityRow:
        result = _solve_flagged(x, nu, delta, tol)
        predicted = w2_particle / (1.0 - delta)
        deviation = abs(result.value - predicted) / predicted if predicted > 0 else abs(result.value)
        return EqualityRow(
            delta=delta,
            value=result.value,
            w2_particle=w2_particle,
            predicted=predicted,
            rel_deviation=deviation,
            w2_gaussian=w2_gauss,
            predicted_gaussian=w2_gauss / (1.0 - delta),
            discretization_error=discretization,
            below_threshold=bool(delta <= threshold),
            gap=result.gap,
            converged=result.converged,
        )

    return run_rows(row, deltas, workers)


def second_difference_probe(
        x: EmpiricalCloud,
        nu: EmpiricalCloud,
        h: np.ndarray,
        t: float,
        delta: float,
        tol: Optional[float] = None,
) -> ProbeResult:
    """
    Centred second difference of U_delta along H against its C^{1,1} band.

    U(X+tH) + U(X-tH) - 2U(X) must lie in
    [-(2/delta) t^2 |H|^2 - 4 gap, (2/(1-delta)) t^2 |H|^2 + 4 gap]
    with |H| the lifted norm.
    """
    delta = check_delta(delta)
    h = np.asarray(h, dtype=float).reshape(x.points.shape)
    results = [
        envelope_value(EmpiricalCloud(points=x.points + s * t * h), nu, delta, tol=tol)
        for s in (1.0, -1.0, 0.0)
    ]
    second = results[0].value + results[1].value - 2.0 * results[2].value
    gap = max(r.gap for r in results)
    sq = t * t * lifted_norm(h) ** 2
    lower = -(2.0 / delta) * sq - 4.0 * gap
    upper = (2.0 / (1.0 - delta)) * sq + 4.0 * gap
    return ProbeResult(
        second_difference=second,
        lower_bound=lower,
        upper_bound=upper,
        holds=bool(lower <= second <= upper),
        gaps=[r.gap for r in results],
    )
