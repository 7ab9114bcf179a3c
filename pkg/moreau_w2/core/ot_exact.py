"""
Moreau-W2 - Exact optimal transport
Description: Quadratic-cost optimal transport between clouds, weighted measures and Gaussians
"""

import itertools
import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import ot
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import NegativeCycleError, bellman_ford, csgraph_from_dense, dijkstra
from scipy.spatial.distance import cdist

from moreau_w2.core.measures import AffineMap, EmpiricalCloud, GaussianSpec, WeightedMeasure
from moreau_w2.utils.config import get_config
from moreau_w2.utils.errors import (
    DimensionMismatch,
    NonMonotoneMap,
    NonSPD,
    SizeMismatch,
    SolverStall,
    TooLarge,
)
from moreau_w2.utils.linalg import check_symmetric, sqrtm_spd, sqrtm_spd_pair, symmetrize

logger = logging.getLogger(__name__)


class PlanKind(Enum):
    """Representation of a transport plan"""
    PERMUTATION = "permutation"
    COUPLING = "coupling"


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """
    Optimal coupling between two measures.

    ``cost`` is W2^2 with probability-normalised mass: for a permutation each
    pair carries 1/n. Dual potentials are kept when the solver produced them.
    """
    kind: PlanKind
    cost: float
    permutation: Optional[np.ndarray] = None
    coupling: Tuple[Tuple[int, int, float], ...] = ()
    dual_u: Optional[np.ndarray] = None
    dual_v: Optional[np.ndarray] = None
    max_violation: Optional[float] = None

    def pairs(self) -> List[Tuple[int, int, float]]:
        """(source, target, mass) triples, whatever the representation"""
        if self.kind is PlanKind.PERMUTATION:
            n = len(self.permutation)
            return [(i, int(j), 1.0 / n) for i, j in enumerate(self.permutation)]
        return list(self.coupling)

    def recompute_cost(self, source: np.ndarray, target: np.ndarray) -> float:
        """Sum of mass * |x_i - y_j|^2 rebuilt from the plan itself"""
        source = np.atleast_2d(source)
        target = np.atleast_2d(target)
        return float(sum(m * np.sum((source[i] - target[j]) ** 2) for i, j, m in self.pairs()))

    def as_matrix(self, m: int, k: int) -> np.ndarray:
        matrix = np.zeros((m, k))
        for i, j, mass in self.pairs():
            matrix[i, j] += mass
        return matrix


def squared_cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise |a_i - b_j|^2"""
    return cdist(np.atleast_2d(a), np.atleast_2d(b), metric="sqeuclidean")


def check_same_size(a: EmpiricalCloud, b: EmpiricalCloud):
    """Raise unless both clouds share n and d"""
    if a.d != b.d:
        raise DimensionMismatch("clouds live in different dimensions", a=a.d, b=b.d)
    if a.n != b.n:
        raise SizeMismatch("clouds must have the same number of points", a=a.n, b=b.n)


def _tie_tolerance(cost: np.ndarray) -> float:
    """Tie threshold in summed-cost units, relative to the largest pairwise cost"""
    n = cost.shape[0]
    return get_config().tie_tol * n * max(1.0, float(cost.max()))


def _exchange_graph(cost: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """W[i, k] = cost of row i trading its column for the column of row k"""
    n = len(perm)
    return cost[:, perm] - cost[np.arange(n), perm][:, None]


def _potentials(cost: np.ndarray, perm: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Kantorovich potentials (u, v) certifying an optimal permutation.

    Shortest distances in the exchange graph from a virtual source give row
    potentials; every edge is lifted by tol/n so rounding-level zero cycles
    (ties) never show up as negative cycles.
    """
    n = len(perm)
    tol = _tie_tolerance(cost)
    weights = np.full((n + 1, n + 1), np.inf)
    weights[:n, :n] = _exchange_graph(cost, perm) + tol / n
    np.fill_diagonal(weights, np.inf)
    weights[n, :n] = 0.0
    graph = csgraph_from_dense(weights, null_value=np.inf)
    try:
        phi = bellman_ford(graph, directed=True, indices=n)[:n]
    except NegativeCycleError:
        raise SolverStall("assignment is not optimal: improving cycle found in the exchange graph")
    v = np.empty(n)
    v[perm] = phi
    u = cost[np.arange(n), perm] - phi
    return u, v


def _reduced_costs(cost: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return cost - u[:, None] - v[None, :]


def _lexicographic_optimum(cost: np.ndarray, perm: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Smallest optimal permutation in lexicographic order among cost ties"""
    n = len(perm)
    threshold = _tie_tolerance(cost)
    reduced = _reduced_costs(cost, u, v)
    tight = [np.flatnonzero(reduced[i] <= threshold) for i in range(n)]
    if all(len(cols) == 1 for cols in tight):
        return perm

    col_of = perm.copy()
    row_of = np.empty(n, dtype=int)
    row_of[perm] = np.arange(n)
    locked = np.zeros(n, dtype=bool)

    for i in range(n):
        for j in tight[i]:
            if j >= col_of[i]:
                break
            if locked[j]:
                continue
            if _reroute(i, j, tight, col_of, row_of, locked):
                break
        locked[col_of[i]] = True

    return col_of


def _reroute(i: int, j: int, tight, col_of: np.ndarray, row_of: np.ndarray, locked: np.ndarray) -> bool:
    """Give column j to row i through an alternating path of tight edges, if one exists"""
    target = col_of[i]
    start = row_of[j]
    via = {}
    seen = {start}
    queue = deque([start])
    found = False
    while queue and not found:
        r = queue.popleft()
        for c in tight[r]:
            if locked[c] or c == j or c in via:
                continue
            via[c] = r
            if c == target:
                found = True
                break
            nxt = row_of[c]
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    if not found:
        return False

    c = target
    while True:
        r = via[c]
        previous = col_of[r]
        col_of[r] = c
        row_of[c] = r
        if r == start:
            break
        c = previous
    col_of[i] = j
    row_of[j] = i
    return True


def w2_assignment(a: EmpiricalCloud, b: EmpiricalCloud, tie_break: bool = True) -> TransportPlan:
    """
    Exact W2^2 between two equal-size uniform clouds.

    Solves the linear assignment problem on the squared-distance matrix with
    scipy's shortest-augmenting-path solver.

    Args:
        a: Source cloud
        b: Target cloud (same n and d)
        tie_break: Return the lexicographically smallest optimal permutation
            (costs a dual computation; solvers that only need the cost pass False)

    Returns:
        Permutation plan; plan.permutation[i] is the target index of source atom i
    """
    check_same_size(a, b)
    cost = squared_cost_matrix(a.points, b.points)
    _, perm = linear_sum_assignment(cost)
    perm = perm.astype(int)
    u = v = None

    if tie_break and a.n > 1:
        u, v = _potentials(cost, perm)
        perm = _lexicographic_optimum(cost, perm, u, v)
        # potentials stay valid: every tight permutation is optimal for the same duals

    value = float(cost[np.arange(a.n), perm].mean())
    perm.setflags(write=False)
    return TransportPlan(
        kind=PlanKind.PERMUTATION,
        cost=value,
        permutation=perm,
        dual_u=None if u is None else u / a.n,
        dual_v=None if v is None else v / a.n,
    )


def second_best_gap(a: EmpiricalCloud, b: EmpiricalCloud, plan: Optional[TransportPlan] = None) -> float:
    """
    Cost of the best permutation different from the optimal one, minus the optimum.

    Any other permutation differs by alternating cycles, and with reduced
    costs (nonnegative, zero on the matching) the cheapest single cycle is a
    shortest-path problem on the row exchange graph.

    Returns:
        Gap in W2^2 units; +inf when n = 1 (only one permutation exists)
    """
    check_same_size(a, b)
    if a.n == 1:
        return float("inf")
    plan = plan or w2_assignment(a, b)
    cost = squared_cost_matrix(a.points, b.points)
    perm = np.asarray(plan.permutation)
    u, v = _potentials(cost, perm)
    reduced = np.maximum(_reduced_costs(cost, u, v), 0.0)[:, perm]
    np.fill_diagonal(reduced, np.inf)
    graph = csgraph_from_dense(reduced, null_value=np.inf)
    paths, pred = dijkstra(graph, directed=True, return_predecessors=True)
    cycles = reduced + paths.T
    i, k = np.unravel_index(int(np.argmin(cycles)), cycles.shape)

    # price the cheapest cycle i -> k -> ... -> i with the unshifted exchange weights
    exchange = _exchange_graph(cost, perm)
    total = exchange[i, k]
    node = i
    while node != k:
        prev = pred[k, node]
        total += exchange[prev, node]
        node = prev
    gap = float(total) / a.n
    logger.debug(f"Second-best assignment gap: {gap:.3e}")
    return max(gap, 0.0)


def dual_potentials(a: EmpiricalCloud, b: EmpiricalCloud, plan: TransportPlan) -> Tuple[np.ndarray, np.ndarray]:
    """Potentials (u, v) with u_i + v_j <= |a_i - b_j|^2 / n, equality on the plan"""
    check_same_size(a, b)
    cost = squared_cost_matrix(a.points, b.points)
    u, v = _potentials(cost, np.asarray(plan.permutation))
    return u / a.n, v / a.n


def _bruteforce_permutation(cost: np.ndarray) -> Tuple[float, np.ndarray]:
    n = cost.shape[0]
    perms = np.array(list(itertools.permutations(range(n))), dtype=int)
    totals = cost[np.arange(n), perms].sum(axis=1)
    best = totals.min()
    # permutations() enumerates in lexicographic order, so the first tie wins
    index = int(np.flatnonzero(totals <= best + _tie_tolerance(cost))[0])
    return float(totals[index]) / n, perms[index]


def w2_bruteforce(a: EmpiricalCloud, b: EmpiricalCloud) -> float:
    """Exact minimum over all n! permutations (testing oracle, n <= 8)"""
    check_same_size(a, b)
    limit = get_config().bruteforce_max_n
    if a.n > limit:
        raise TooLarge(f"brute force limited to n <= {limit}", n=a.n)
    value, _ = _bruteforce_permutation(squared_cost_matrix(a.points, b.points))
    return value


def w2_general(a: WeightedMeasure, b: WeightedMeasure) -> TransportPlan:
    """
    Exact W2^2 between weighted discrete measures with POT's network simplex.

    Optimality is certified by complementary slackness on the returned dual
    potentials; the largest violation is stored on the plan.
    """
    if a.d != b.d:
        raise DimensionMismatch("measures live in different dimensions", a=a.d, b=b.d)
    cfg = get_config()
    cost = squared_cost_matrix(a.points, b.points)
    wa = np.array(a.weights, dtype=np.float64)
    wb = np.array(b.weights, dtype=np.float64)

    logger.debug(f"Network simplex on {a.m} x {b.m} problem")
    coupling, log = ot.emd(wa, wb, cost, numItermax=cfg.network_simplex_max_iter, log=True)
    if log.get("warning"):
        raise SolverStall(f"network simplex did not certify optimality: {log['warning']}")

    u = np.asarray(log["u"], dtype=float)
    v = np.asarray(log["v"], dtype=float)
    slack = cost - u[:, None] - v[None, :]
    support = coupling > 0
    scale = max(1.0, float(cost.max()))
    violation = max(
        float(np.max(-slack, initial=0.0)),
        float(np.max(np.abs(slack[support]), initial=0.0)),
    ) / scale
    if violation > cfg.certificate_tol:
        raise SolverStall("complementary slackness violated", max_violation=violation)

    row_err = float(np.max(np.abs(coupling.sum(axis=1) - wa)))
    col_err = float(np.max(np.abs(coupling.sum(axis=0) - wb)))
    if max(row_err, col_err) > cfg.marginal_tol:
        raise SolverStall("coupling marginals do not match", row_error=row_err, col_error=col_err)

    rows, cols = np.nonzero(support)
    pairs = tuple((int(i), int(j), float(coupling[i, j])) for i, j in zip(rows, cols))
    value = float(np.sum(coupling * cost))
    logger.debug(f"Network simplex cost {value:.6g}, slackness violation {violation:.2e}")
    return TransportPlan(
        kind=PlanKind.COUPLING,
        cost=value,
        coupling=pairs,
        dual_u=u,
        dual_v=v,
        max_violation=violation,
    )


def _check_same_dimension(g1: GaussianSpec, g2: GaussianSpec):
    if g1.d != g2.d:
        raise DimensionMismatch("Gaussians live in different dimensions", g1=g1.d, g2=g2.d)


def gaussian_w2(g1: GaussianSpec, g2: GaussianSpec) -> float:
    """Bures-Wasserstein closed form |m1-m2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)"""
    _check_same_dimension(g1, g2)
    root1 = sqrtm_spd(g1.covariance, name="covariance")
    cross = sqrtm_spd(symmetrize(root1 @ g2.covariance @ root1), name="cross covariance")
    bures = np.trace(g1.covariance + g2.covariance - 2.0 * cross)
    shift = float(np.sum((g1.mean - g2.mean) ** 2))
    return shift + max(float(bures), 0.0)


def gaussian_map(g1: GaussianSpec, g2: GaussianSpec) -> AffineMap:
    """
    Optimal (Brenier) map from g1 to g2: T(x) = A (x - m1) + m2 with A SPD.

    Raises:
        NonSPD: a covariance is not SPD, or A S1 A misses S2 by more than 1e-8
    """
    _check_same_dimension(g1, g2)
    root1, inv_root1 = sqrtm_spd_pair(g1.covariance, name="covariance")
    cross = sqrtm_spd(symmetrize(root1 @ g2.covariance @ root1), name="cross covariance")
    matrix = symmetrize(inv_root1 @ cross @ inv_root1)

    pushed = matrix @ g1.covariance @ matrix.T
    scale = max(1.0, float(np.max(np.abs(g2.covariance))))
    mismatch = float(np.max(np.abs(pushed - g2.covariance))) / scale
    if mismatch > 1e-8:
        raise NonSPD("covariances too ill-conditioned for an accurate transport map", mismatch=mismatch)

    return AffineMap(matrix=matrix, shift=g2.mean - matrix @ g1.mean)


def map_eigen_range(t: AffineMap) -> Tuple[float, float]:
    """
    Smallest and largest eigenvalue of the (constant) Jacobian of a monotone map.

    Raises:
        NonMonotoneMap: the matrix is not symmetric positive semidefinite
    """
    tol = get_config().monotone_tol
    try:
        sym = check_symmetric(t.matrix, tol=tol, name="map matrix")
    except NonSPD as e:
        raise NonMonotoneMap("map matrix is not symmetric", **e.details)
    eigvals = np.linalg.eigvalsh(sym)
    if eigvals[0] < -tol:
        raise NonMonotoneMap("map matrix has a negative eigenvalue", smallest_eigenvalue=float(eigvals[0]))
    return max(float(eigvals[0]), 0.0), float(eigvals[-1])
