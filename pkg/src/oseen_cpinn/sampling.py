"""Collocation point sets on the unit square."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist


def _on_boundary(points: np.ndarray) -> np.ndarray:
    return np.any((points == 0.0) | (points == 1.0), axis=1)


@dataclass(frozen=True, eq=False)
class CollocationSet:
    """Interior sites, boundary sites and the boundary distance matrix.

    Arrays are read-only so a set can be shared freely between runs.
    """

    interior: np.ndarray
    boundary: np.ndarray
    boundary_dist: np.ndarray

    @classmethod
    def from_points(cls, interior, boundary) -> "CollocationSet":
        interior = np.asarray(interior, dtype=np.float64).reshape(-1, 2)
        boundary = np.asarray(boundary, dtype=np.float64).reshape(-1, 2)
        if interior.size and not np.all((interior > 0.0) & (interior < 1.0)):
            raise ValueError("interior points must lie strictly inside (0,1)^2")
        if boundary.size:
            in_box = np.all((boundary >= 0.0) & (boundary <= 1.0), axis=1)
            if not np.all(in_box & _on_boundary(boundary)):
                raise ValueError("boundary points must lie on the boundary of the unit square")
        dist = cdist(boundary, boundary)
        off = ~np.eye(len(boundary), dtype=bool)
        if np.any(dist[off] <= 0.0):
            raise ValueError("boundary points must be pairwise distinct")
        for a in (interior, boundary, dist):
            a.setflags(write=False)
        return cls(interior, boundary, dist)

    @classmethod
    def from_grids(cls, n_interior: int, n_boundary: int) -> "CollocationSet":
        """Interior sites of one tensor grid combined with boundary sites of another."""
        return cls.from_points(tensor_grid(n_interior).interior, tensor_grid(n_boundary).boundary)

    @property
    def m_interior(self) -> int:
        return len(self.interior)

    @property
    def m_boundary(self) -> int:
        return len(self.boundary)

    def permuted(self, rng: np.random.Generator) -> "CollocationSet":
        return CollocationSet.from_points(
            self.interior[rng.permutation(self.m_interior)],
            self.boundary[rng.permutation(self.m_boundary)],
        )


def uniform_grid(n: int) -> np.ndarray:
    """All ``n x n`` nodes ``(i/(n-1), j/(n-1))``, x varying fastest."""
    # i/(n-1) is correctly rounded, so nested grids share bitwise-equal nodes
    t = np.arange(n, dtype=np.float64) / (n - 1)
    xx, yy = np.meshgrid(t, t, indexing="xy")
    return np.column_stack([xx.ravel(), yy.ravel()])


def tensor_grid(N: int) -> CollocationSet:
    """Split the ``N x N`` uniform grid into interior and boundary sites.

    Corners appear once, in the boundary set.
    """
    if N < 2:
        raise ValueError(f"tensor grid needs N >= 2, got {N}")
    pts = uniform_grid(N)
    on_b = _on_boundary(pts)
    return CollocationSet.from_points(pts[~on_b], pts[on_b])


def dyadic_grid(k: int, r: int) -> np.ndarray:
    """Union of ``r x r`` tensor grids over the dyadic cubes of side ``2**-k``.

    Shared faces are deduplicated, leaving ``(2**k (r-1) + 1)**2`` points.
    """
    if k < 0:
        raise ValueError(f"refinement level must be >= 0, got {k}")
    if r < 2:
        raise ValueError(f"need at least 2 nodes per axis, got r={r}")
    return uniform_grid(2**k * (r - 1) + 1)
