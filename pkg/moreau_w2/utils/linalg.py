"""
Moreau-W2 - Linear algebra helpers
Description: Symmetric positive definite square roots by eigendecomposition
"""

from typing import Tuple

import numpy as np
from scipy.linalg import eigh

from moreau_w2.utils.config import get_config
from moreau_w2.utils.errors import NonSPD


def check_symmetric(matrix: np.ndarray, tol: float = None, name: str = "matrix") -> np.ndarray:
    """Return the symmetrized matrix, or raise NonSPD if it is not symmetric within tol"""
    tol = get_config().symmetry_tol if tol is None else tol
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise NonSPD(f"{name} must be square", shape=matrix.shape)
    if not np.all(np.isfinite(matrix)):
        raise NonSPD(f"{name} has non-finite entries")
    asym = float(np.max(np.abs(matrix - matrix.T))) if matrix.size else 0.0
    if asym > tol:
        raise NonSPD(f"{name} is not symmetric", asymmetry=asym)
    return 0.5 * (matrix + matrix.T)


def spd_eigh(matrix: np.ndarray, name: str = "matrix") -> Tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of an SPD matrix; eigenvalues below the floor raise NonSPD"""
    sym = check_symmetric(matrix, name=name)
    eigvals, eigvecs = eigh(sym)
    floor = get_config().spd_floor
    if eigvals[0] < floor:
        raise NonSPD(
            f"{name} is not positive definite",
            smallest_eigenvalue=float(eigvals[0]),
            floor=floor,
        )
    return eigvals, eigvecs


def sqrtm_spd(matrix: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Unique SPD square root"""
    eigvals, eigvecs = spd_eigh(matrix, name=name)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def sqrtm_spd_pair(matrix: np.ndarray, name: str = "matrix") -> Tuple[np.ndarray, np.ndarray]:
    """Square root and inverse square root from a single eigendecomposition"""
    eigvals, eigvecs = spd_eigh(matrix, name=name)
    root = np.sqrt(eigvals)
    return (eigvecs * root) @ eigvecs.T, (eigvecs / root) @ eigvecs.T


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)
