"""Piecewise Lagrange interpolation on dyadic Kuhn triangulations of the unit square.

Each dyadic cube of side ``h = 2**-k`` is split along its main diagonal into
two triangles; on each triangle the interpolant is the Lagrange polynomial of
total degree ``r - 1`` at the principal lattice nodes. Those nodes all lie on
``dyadic_grid(k, r)``, so ``f`` is sampled once per grid node and neighbouring
triangles share nodal values, which makes the interpolant continuous.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .sampling import dyadic_grid

# local (xi, eta) vertices of the two Kuhn triangles of the unit cube;
# both contain the diagonal (0,0)-(1,1), so neighbouring cubes match
KUHN_TRIANGLES = (
    np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]),  # xi >= eta
    np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),  # eta >= xi
)


@dataclass(frozen=True)
class DyadicSimplicialPartition:
    k: int
    cubes: np.ndarray  # (n_cubes, 2) lower-left corners
    simplices: np.ndarray  # (n_cubes * 2, 3, 2) vertex coordinates

    @property
    def h(self) -> float:
        return 2.0**-self.k

    @property
    def n_per_axis(self) -> int:
        return 2**self.k


def build_partition(k: int) -> DyadicSimplicialPartition:
    if k < 0:
        raise ValueError(f"refinement level must be >= 0, got {k}")
    n = 2**k
    h = 1.0 / n
    iy, ix = np.divmod(np.arange(n * n), n)
    cubes = np.column_stack([ix, iy]).astype(np.float64) * h
    simplices = np.stack([cubes[:, None, :] + h * t[None] for t in KUHN_TRIANGLES], axis=1)
    return DyadicSimplicialPartition(k, cubes, simplices.reshape(-1, 3, 2))


def _exponents(n: int) -> np.ndarray:
    return np.array([(a, b) for a in range(n + 1) for b in range(n + 1 - a)], dtype=int)


@lru_cache(maxsize=None)
def _reference_basis(n: int):
    """Lattice nodes ``(s, t)`` with ``s + t <= n`` and monomial coefficients of their Lagrange basis.

    Reference triangle has vertices (0,0), (1,0), (0,1); returns
    ``(lattice, exps, coeff)`` with ``phi_j = sum_m coeff[m, j] s^a_m t^b_m``.
    """
    lattice = np.array([(i, j) for j in range(n + 1) for i in range(n + 1 - j)], dtype=int)
    exps = _exponents(n)
    nodes = lattice / max(n, 1)
    vander = np.prod(nodes[:, None, :] ** exps[None, :, :], axis=-1)
    coeff = np.linalg.inv(vander)
    return lattice, exps, coeff


def _monomials(st: np.ndarray, exps: np.ndarray):
    """Monomials and their (s, t) derivatives at reference points ``st``."""
    s, t = st[:, 0:1], st[:, 1:2]
    a, b = exps[:, 0][None], exps[:, 1][None]
    val = s**a * t**b
    ds = np.where(a > 0, a * s ** np.maximum(a - 1, 0) * t**b, 0.0)
    dt = np.where(b > 0, b * s**a * t ** np.maximum(b - 1, 0), 0.0)
    return val, ds, dt


@dataclass(frozen=True)
class PiecewiseLagrangeInterpolant:
    """``S_k^*(f)``: continuous piecewise polynomial of total degree ``< r``.

    ``nodal_values`` has shape ``(n_simplices, n_basis, n_components)``.
    """

    partition: DyadicSimplicialPartition
    r: int
    nodal_values: np.ndarray
    vector: bool

    @property
    def degree(self) -> int:
        return self.r - 1

    def locate(self, points) -> np.ndarray:
        """Index of a simplex containing each point (ties resolved consistently)."""
        pts = np.asarray(points, dtype=np.float64)
        n = self.partition.n_per_axis
        cell = np.clip(np.floor(pts * n).astype(int), 0, n - 1)
        local = pts * n - cell
        tri = (local[:, 1] > local[:, 0]).astype(int)
        return (cell[:, 1] * n + cell[:, 0]) * 2 + tri

    def _reference_coords(self, simplex_ids, pts):
        verts = self.partition.simplices[simplex_ids]
        e1 = verts[:, 1] - verts[:, 0]
        e2 = verts[:, 2] - verts[:, 0]
        jac = np.stack([e1, e2], axis=-1)  # columns map (s, t) to x
        inv = np.linalg.inv(jac)
        st = np.einsum("nij,nj->ni", inv, pts - verts[:, 0])
        return st, inv

    def evaluate_in(self, simplex_ids, points, gradient: bool = False):
        """Evaluate the polynomial of the given simplices (no containment check).

        Returns values ``(n, c)`` and, with ``gradient=True``, also ``(n, c, 2)``.
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        ids = np.broadcast_to(np.asarray(simplex_ids, dtype=int), (len(pts),))
        _, exps, coeff = _reference_basis(self.degree)
        st, inv = self._reference_coords(ids, pts)
        mono, ds, dt = _monomials(st, exps)
        vals = self.nodal_values[ids]  # (n, nb, c)
        phi = mono @ coeff
        out = np.einsum("nb,nbc->nc", phi, vals)
        if not gradient:
            return out
        dphi_st = np.stack([ds @ coeff, dt @ coeff], axis=-1)  # (n, nb, 2) in (s, t)
        dphi_x = np.einsum("nbk,nkj->nbj", dphi_st, inv)
        return out, np.einsum("nbj,nbc->ncj", dphi_x, vals)

    def __call__(self, points, gradient: bool = False):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        res = self.evaluate_in(self.locate(pts), pts, gradient)
        if self.vector:
            return res
        if gradient:
            return res[0][:, 0], res[1][:, 0]
        return res[:, 0]


def interpolate(f: Callable, k: int, r: int) -> PiecewiseLagrangeInterpolant:
    """Interpolate ``f`` (``(n, 2) -> (n,)`` or ``(n, c)``) on the dyadic mesh of level ``k``."""
    if r < 2:
        raise ValueError(f"need r >= 2 (polynomial degree r-1 >= 1), got {r}")
    part = build_partition(k)
    n = r - 1
    grid = dyadic_grid(k, r)
    values = np.asarray(f(grid), dtype=np.float64)
    vector = values.ndim == 2
    values = values.reshape(len(grid), -1)
    n_axis = 2**k * n + 1

    lattice, _, _ = _reference_basis(n)
    # reference (s, t) -> local triangle vertices v0 + s (v1 - v0) + t (v2 - v0), in units of h/n
    ids = []
    for tri in KUHN_TRIANGLES:
        e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
        local = tri[0][None] * n + lattice[:, 0:1] * e1[None] + lattice[:, 1:2] * e2[None]
        ids.append(np.rint(local).astype(int))
    ids = np.stack(ids)  # (2, nb, 2) integer offsets inside a cube

    cubes = np.rint(part.cubes * 2**k).astype(int) * n  # (n_cubes, 2) node offsets
    gi = cubes[:, None, None, :] + ids[None]  # (n_cubes, 2, nb, 2)
    flat = gi[..., 1] * n_axis + gi[..., 0]
    nodal = values[flat.reshape(-1, flat.shape[-1])]
    return PiecewiseLagrangeInterpolant(part, r, nodal, vector)


def _refined_centroids(m: int) -> tuple[np.ndarray, float]:
    """Centroids of the ``m**2`` congruent sub-triangles of the reference triangle."""
    pts = []
    for i in range(m):
        for j in range(m - i):
            pts.append(((i + 1 / 3) / m, (j + 1 / 3) / m))  # upright
            if i + j < m - 1:
                pts.append(((i + 2 / 3) / m, (j + 2 / 3) / m))  # inverted
    return np.array(pts), 1.0 / m**2


def h1_error(interp: PiecewiseLagrangeInterpolant, f: Callable, grad_f: Callable,
             refine: int = 4) -> float:
    """``H^1`` norm of ``f - S_k^*(f)`` by composite midpoint quadrature.

    Each triangle is cut into ``refine**2`` sub-triangles whose centroids
    serve as quadrature points, so no point sits on an element interface.
    ``f`` returns ``(n,)`` or ``(n, c)``; ``grad_f`` returns ``(n, 2)`` or ``(n, c, 2)``.
    """
    ref, frac = _refined_centroids(refine)
    simp = interp.partition.simplices
    n_s = len(simp)
    e1 = simp[:, 1] - simp[:, 0]
    e2 = simp[:, 2] - simp[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = simp[:, None, 0] + ref[None, :, 0:1] * e1[:, None] + ref[None, :, 1:2] * e2[:, None]
    ids = np.repeat(np.arange(n_s), len(ref))
    pts = pts.reshape(-1, 2)
    val, grad = interp.evaluate_in(ids, pts, gradient=True)
    fv = np.asarray(f(pts), dtype=np.float64).reshape(len(pts), -1)
    fg = np.asarray(grad_f(pts), dtype=np.float64).reshape(len(pts), -1, 2)
    w = np.repeat(area * frac, len(ref))
    sq = np.sum((fv - val) ** 2, axis=1) + np.sum((fg - grad) ** 2, axis=(1, 2))
    return float(np.sqrt(np.sum(w * sq)))


def fit_rate(sizes, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(size)``."""
    m = np.asarray(sizes, dtype=np.float64)
    e = np.asarray(errors, dtype=np.float64)
    if m.shape != e.shape or m.size < 3:
        raise ValueError("need at least three (size, error) pairs of equal length")
    if np.any(m <= 0) or np.any(e <= 0):
        raise ValueError("sizes and errors must be positive")
    slope, _ = np.polyfit(np.log(m), np.log(e), 1)
    return float(slope)


def rate_study(f: Callable, grad_f: Callable, r: int, ks) -> tuple[list[dict], float]:
    """H^1 interpolation errors over levels ``ks`` and the slope against ``2**k``.

    Against mesh width ``h = 2**-k`` the error behaves like ``h**(r-1)``, so
    the slope reported here (against ``1/h``) should approach ``-(r-1)``.
    """
    rows = []
    for k in ks:
        err = h1_error(interpolate(f, k, r), f, grad_f)
        rows.append({"k": int(k), "m": int((2**k * (r - 1) + 1) ** 2), "error": err})
    slope = fit_rate([2.0 ** row["k"] for row in rows], [row["error"] for row in rows])
    return rows, slope
