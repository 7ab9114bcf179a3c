"""
Moreau-W2 - Measures
Description: Particle clouds, weighted discrete measures, Gaussians and affine maps
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from moreau_w2.utils.config import get_config
from moreau_w2.utils.errors import (
    ArtifactIOError,
    DimensionMismatch,
    EmptyInput,
    InvalidWeights,
    NonFiniteEntry,
)
from moreau_w2.utils.io import read_csv_table, read_json, write_csv_table
from moreau_w2.utils.linalg import check_symmetric, spd_eigh, sqrtm_spd

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def _as_point_matrix(raw, name: str) -> np.ndarray:
    points = np.asarray(raw, dtype=float)
    if points.size == 0:
        raise EmptyInput(f"{name} has no points")
    if points.ndim == 1:
        # a flat list is read as n points on the real line
        points = points.reshape(-1, 1)
    if points.ndim != 2:
        raise DimensionMismatch(f"{name} must be an n x d matrix", shape=points.shape)
    bad = np.argwhere(~np.isfinite(points))
    if len(bad):
        row, col = (int(v) for v in bad[0])
        raise NonFiniteEntry(
            f"{name} has a non-finite entry at row {row}, column {col}",
            row=row,
            col=col,
        )
    return points


@dataclass(frozen=True, eq=False)
class EmpiricalCloud:
    """
    n points in R^d carrying mass 1/n each.

    The same object is read as the law of a random variable on an n-atom
    uniform probability space: row i is the value taken on atom i.
    """
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(_as_point_matrix(self.points, "cloud")))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"EmpiricalCloud(n={self.n}, d={self.d})"


@dataclass(frozen=True, eq=False)
class WeightedMeasure:
    """Discrete probability measure with explicit nonnegative weights"""
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = _as_point_matrix(self.points, "measure")
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if weights.shape[0] != points.shape[0]:
            raise DimensionMismatch(
                "weights and points disagree in length",
                points=points.shape[0],
                weights=weights.shape[0],
            )
        if not np.all(np.isfinite(weights)):
            raise NonFiniteEntry("weights contain non-finite values")
        if np.any(weights < 0):
            raise InvalidWeights("weights must be nonnegative", min_weight=float(weights.min()))
        total = float(weights.sum())
        tol = get_config().weight_sum_tol
        if abs(total - 1.0) > tol:
            raise InvalidWeights("weights must sum to 1", total=total, tol=tol)
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "weights", _frozen(weights))

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __repr__(self) -> str:
        return f"WeightedMeasure(m={self.m}, d={self.d})"


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Gaussian N(mean, covariance) with SPD covariance"""
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        if mean.size == 0:
            raise EmptyInput("Gaussian mean is empty")
        if not np.all(np.isfinite(mean)):
            raise NonFiniteEntry("Gaussian mean has non-finite entries")
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                "covariance shape does not match the mean",
                mean=mean.size,
                covariance=cov.shape,
            )
        cov = check_symmetric(cov, name="covariance")
        spd_eigh(cov, name="covariance")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "covariance", _frozen(cov))

    @property
    def d(self) -> int:
        return self.mean.size

    @classmethod
    def isotropic(cls, d: int, variance: float = 1.0, mean=None) -> "GaussianSpec":
        mean = np.zeros(d) if mean is None else mean
        return cls(mean=mean, covariance=variance * np.eye(d))

    def to_dict(self):
        return {"mean": self.mean.tolist(), "cov": self.covariance.tolist()}


@dataclass(frozen=True, eq=False)
class AffineMap:
    """x -> matrix @ x + shift"""
    matrix: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        shift = np.asarray(self.shift, dtype=float).reshape(-1)
        if matrix.shape != (shift.size, shift.size):
            raise DimensionMismatch(
                "affine map needs a square matrix matching the shift",
                matrix=matrix.shape,
                shift=shift.size,
            )
        if not (np.all(np.isfinite(matrix)) and np.all(np.isfinite(shift))):
            raise NonFiniteEntry("affine map has non-finite entries")
        object.__setattr__(self, "matrix", _frozen(matrix))
        object.__setattr__(self, "shift", _frozen(shift))

    @property
    def d(self) -> int:
        return self.shift.size

    @classmethod
    def identity(cls, d: int) -> "AffineMap":
        return cls(matrix=np.eye(d), shift=np.zeros(d))

    @classmethod
    def translation(cls, shift) -> "AffineMap":
        """Constant field x -> shift (Id + h f is then a translation by h shift)"""
        shift = np.asarray(shift, dtype=float).reshape(-1)
        return cls(matrix=np.zeros((shift.size, shift.size)), shift=shift)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.d:
            raise DimensionMismatch("point dimension does not match the map", points=points.shape[1], map=self.d)
        return points @ self.matrix.T + self.shift

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """self after inner"""
        if inner.d != self.d:
            raise DimensionMismatch("cannot compose maps of different dimension", outer=self.d, inner=inner.d)
        return AffineMap(matrix=self.matrix @ inner.matrix, shift=self.matrix @ inner.shift + self.shift)


Measure = Union[EmpiricalCloud, WeightedMeasure]


def validate_cloud(raw) -> EmpiricalCloud:
    """
    Build a cloud from an n x d matrix.

    Args:
        raw: n x d array-like (a flat list is read as d = 1)

    Returns:
        Validated EmpiricalCloud

    Raises:
        EmptyInput: no points
        NonFiniteEntry: NaN or infinite coordinate (row/col reported)
    """
    return EmpiricalCloud(points=raw)


def as_weighted(cloud: EmpiricalCloud) -> WeightedMeasure:
    """Uniform cloud as an explicit weighted measure"""
    weights = np.full(cloud.n, 1.0 / cloud.n)
    # absorb the rounding of 1/n into the last atom so the sum is exact
    weights[-1] = 1.0 - weights[:-1].sum()
    return WeightedMeasure(points=cloud.points, weights=weights)


def second_moment(measure: Measure) -> float:
    """M2 = integral of |x|^2 against the measure"""
    sq = np.einsum("ij,ij->i", measure.points, measure.points)
    if isinstance(measure, WeightedMeasure):
        return float(np.dot(measure.weights, sq))
    return float(sq.mean())


def mean(measure: Measure) -> np.ndarray:
    if isinstance(measure, WeightedMeasure):
        return measure.weights @ measure.points
    return measure.points.mean(axis=0)


def lifted_inner(a: np.ndarray, b: np.ndarray) -> float:
    """E[A . B] for random variables given atom-wise on the uniform n-atom space"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch("lifted variables must share a shape", a=a.shape, b=b.shape)
    return float(np.sum(a * b) / a.shape[0])


def lifted_norm(a: np.ndarray) -> float:
    return float(np.sqrt(max(lifted_inner(a, a), 0.0)))


def sample_gaussian(g: GaussianSpec, n: int, seed: int) -> EmpiricalCloud:
    """
    Draw n i.i.d. points from a Gaussian.

    The generator is Philox (counter based) keyed by ``seed``, and points are
    mean + covariance^{1/2} z with the symmetric square root, so two Gaussians
    sampled with the same seed are paired atom by atom through their linear
    transport map whenever their covariances commute.

    Args:
        g: Gaussian to sample
        n: number of points (>= 1)
        seed: nonnegative integer seed

    Returns:
        Cloud with n points
    """
    if n < 1:
        raise EmptyInput("sample size must be at least 1", n=n)
    rng = np.random.Generator(np.random.Philox(seed))
    z = rng.standard_normal((n, g.d))
    root = sqrtm_spd(g.covariance, name="covariance")
    return EmpiricalCloud(points=g.mean + z @ root)


def monte_carlo_tolerance(g: GaussianSpec, n: int) -> float:
    """Three standard errors of the empirical mean along the widest direction"""
    return 3.0 * float(np.sqrt(np.max(np.linalg.eigvalsh(g.covariance)) / n))


def push_forward(cloud: EmpiricalCloud, f: AffineMap, h: float) -> EmpiricalCloud:
    """(Id + h f)_# cloud: each x becomes x + h (A x + b)"""
    if f.d != cloud.d:
        raise DimensionMismatch("map and cloud dimensions differ", map=f.d, cloud=cloud.d)
    return EmpiricalCloud(points=cloud.points + h * f(cloud.points))


def load_cloud_csv(path: Path) -> EmpiricalCloud:
    """Read a cloud written with header x0,...,x{d-1}"""
    header, values = read_csv_table(path)
    expected = [f"x{k}" for k in range(len(header))]
    if header != expected:
        raise ArtifactIOError(f"{path}: header must be {','.join(expected)}", header=header)
    if values.shape[0] == 0:
        raise EmptyInput(f"{path} has no points", path=str(path))
    return validate_cloud(values)


def load_weighted_csv(path: Path) -> WeightedMeasure:
    """Read a weighted measure: coordinate columns x0.. followed by a trailing w column"""
    header, values = read_csv_table(path)
    if len(header) < 2 or header[-1] != "w":
        raise ArtifactIOError(f"{path}: the last column must be 'w'", header=header)
    expected = [f"x{k}" for k in range(len(header) - 1)]
    if header[:-1] != expected:
        raise ArtifactIOError(f"{path}: coordinate columns must be {','.join(expected)}", header=header)
    if values.shape[0] == 0:
        raise EmptyInput(f"{path} has no points", path=str(path))
    return WeightedMeasure(points=values[:, :-1], weights=values[:, -1])


def save_cloud_csv(cloud: Measure, path: Path):
    header = [f"x{k}" for k in range(cloud.d)]
    rows = cloud.points.tolist()
    if isinstance(cloud, WeightedMeasure):
        header.append("w")
        rows = [row + [w] for row, w in zip(rows, cloud.weights.tolist())]
    write_csv_table(path, header, rows)


def load_gaussian_json(source: str) -> GaussianSpec:
    """Parse {"mean": [...], "cov": [[...], ...]} from inline text or a file path"""
    data = read_json(source)
    if "mean" not in data or "cov" not in data:
        raise ArtifactIOError("Gaussian JSON needs 'mean' and 'cov' keys", keys=sorted(data))
    try:
        return GaussianSpec(mean=data["mean"], covariance=data["cov"])
    except (TypeError, ValueError) as e:
        raise ArtifactIOError(f"Malformed Gaussian JSON: {e}")


def load_measure(path: Path) -> Measure:
    """Cloud or weighted measure, depending on whether the CSV has a w column"""
    header, _ = read_csv_table(path)
    if header and header[-1] == "w":
        return load_weighted_csv(path)
    return load_cloud_csv(path)


__all__ = [
    "EmpiricalCloud",
    "WeightedMeasure",
    "GaussianSpec",
    "AffineMap",
    "Measure",
    "validate_cloud",
    "as_weighted",
    "second_moment",
    "mean",
    "lifted_inner",
    "lifted_norm",
    "sample_gaussian",
    "monte_carlo_tolerance",
    "push_forward",
    "load_cloud_csv",
    "load_weighted_csv",
    "save_cloud_csv",
    "load_gaussian_json",
    "load_measure",
]
