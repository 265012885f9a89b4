"""Point-set geometry and equilibrium-unit weight solving.

An equilibrium unit is a point list (r_0, r_1, ..., r_M) whose apex r_0
can be written as an affine combination of the other points with all
coefficients nonzero.  The dual statement used here: the displacements
z_j = r_0 - r_j admit a one-dimensional space of coefficient vectors h
with sum_j h_j z_j = 0 and sum_j h_j != 0.  Normalizing sum_j h_j = 1
fixes the free scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class DegenerateUnitError(ValueError):
    """Raised when a point set admits no valid equilibrium-unit weights."""


@dataclass(frozen=True)
class Tolerances:
    """Numeric thresholds shared across the library.

    tau_rank is relative (scaled by the largest singular value of the
    matrix being ranked); tau_zero and tau_res are absolute.
    """

    tau_rank: float = 1e-9
    tau_zero: float = 1e-10
    tau_res: float = 1e-9

    def __post_init__(self) -> None:
        for name in ("tau_rank", "tau_zero", "tau_res"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


DEFAULT_TOL = Tolerances()


@dataclass
class PointSet:
    """Ordered points in R^d; by convention index 0 is the unit apex."""

    dim: int
    points: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must be a 2-D array-like")
        if pts.shape[1] != self.dim:
            raise ValueError(
                f"points have dimension {pts.shape[1]}, expected {self.dim}"
            )
        if pts.shape[0] == 0:
            raise ValueError("point set is empty")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    def drop(self, index: int) -> "PointSet":
        """Return the point set with one point removed."""
        return PointSet(self.dim, np.delete(self.points, index, axis=0))


@dataclass(frozen=True)
class UnitWeights:
    """Solved equilibrium-unit coefficients, normalized to sum to one."""

    weights: np.ndarray
    weight_sum: float


def homogeneous_rows(points: np.ndarray) -> np.ndarray:
    """Stack points as rows [p^T, 1], the affine-dependence test matrix."""
    pts = np.asarray(points, dtype=float)
    return np.hstack([pts, np.ones((pts.shape[0], 1))])


def _rank(matrix: np.ndarray, tau_rank: float) -> int:
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv > tau_rank * sv[0]))


def affinely_independent(ps: PointSet, tol: Tolerances = DEFAULT_TOL) -> bool:
    """True when no point is an affine combination of the others.

    Equivalent to the homogeneous matrix [p_i^T, 1] having full row rank.
    More than dim+1 points are always affinely dependent.
    """
    if len(ps) > ps.dim + 1:
        return False
    return _rank(homogeneous_rows(ps.points), tol.tau_rank) == len(ps)


def displacements(ps: PointSet) -> np.ndarray:
    """Apex displacements z_j = r_0 - r_j, stacked as rows (M x d)."""
    if len(ps) < 2:
        raise ValueError("need an apex and at least one more point")
    return ps.points[0] - ps.points[1:]


def is_equilibrium_unit(ps: PointSet, tol: Tolerances = DEFAULT_TOL) -> bool:
    """Check the two equilibrium-unit conditions.

    (1) every subset that drops one point is affinely independent, and
    (2) the displacement rows have rank exactly M-1 (linearly dependent,
        but only just).

    Raises ValueError when the neighbor count M is outside [2, dim+1].
    """
    m = len(ps) - 1
    if not 2 <= m <= ps.dim + 1:
        raise ValueError(
            f"unit needs between 2 and dim+1 = {ps.dim + 1} non-apex points, got {m}"
        )
    for j in range(len(ps)):
        if not affinely_independent(ps.drop(j), tol):
            return False
    return _rank(displacements(ps), tol.tau_rank) == m - 1


def solve_unit_weights(ps: PointSet, tol: Tolerances = DEFAULT_TOL) -> UnitWeights:
    """Solve sum_j h_j (r_0 - r_j) = 0 with the normalization sum_j h_j = 1.

    The coefficient space is the kernel of the d x M matrix whose columns
    are the displacements.  Raises DegenerateUnitError when that kernel is
    not one-dimensional or when the kernel vector's component sum is too
    close to zero to normalize.
    """
    z = displacements(ps)
    kernel = scipy.linalg.null_space(z.T, rcond=tol.tau_rank)
    if kernel.shape[1] != 1:
        raise DegenerateUnitError(
            f"weight space has dimension {kernel.shape[1]}, expected 1"
        )
    h = kernel[:, 0]
    total = float(h.sum())
    if abs(total) <= tol.tau_zero:
        raise DegenerateUnitError("weight components sum to zero; cannot normalize")
    h = h / total
    residual = float(np.linalg.norm(z.T @ h))
    if residual > tol.tau_res:
        raise DegenerateUnitError(
            f"normalized weights leave residual {residual:.3e} > {tol.tau_res:.1e}"
        )
    return UnitWeights(weights=h, weight_sum=float(h.sum()))
