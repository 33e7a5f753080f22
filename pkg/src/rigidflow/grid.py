"""Uniform Cartesian grids over a box container, with finite-difference calculus.

Collocated (cell-centered) sampling is used by the flow-map, operator and
diagnostics layers; the staggered MAC arrangement lives in the solver module
and is bridged to cell centers there.  All spatial derivatives are
second-order central in the interior with second-order one-sided stencils at
the container wall (this is what ``numpy.gradient`` provides), so every
discrete identity in the toolkit carries one consistent truncation order.

Vector fields are stored as ``(nx, ny, nz, 3)`` arrays; vector gradients as
``(nx, ny, nz, 3, 3)`` with ``grad[..., i, j] = d u_i / d x_j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Axis-aligned box divided into ``n`` uniform cells per axis."""

    lo: np.ndarray
    hi: np.ndarray
    n: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "n", tuple(int(k) for k in self.n))
        if np.any(self.hi <= self.lo) or any(k < 2 for k in self.n):
            raise ValueError("grid needs hi > lo and at least 2 cells per axis")

    @classmethod
    def cube(cls, n: int, side: float = 1.0) -> "Grid":
        return cls(np.zeros(3), np.full(3, float(side)), (n, n, n))

    @property
    def h(self) -> np.ndarray:
        return (self.hi - self.lo) / np.asarray(self.n, dtype=float)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def extent(self) -> float:
        """Diameter-like length scale of the box (max side)."""
        return float(np.max(self.hi - self.lo))

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        h = self.h
        return tuple(
            self.lo[d] + (np.arange(self.n[d]) + 0.5) * h[d] for d in range(3)
        )

    def centers(self) -> np.ndarray:
        """Cell-center coordinates, shape (nx, ny, nz, 3)."""
        ax = self.axes()
        xx, yy, zz = np.meshgrid(*ax, indexing="ij")
        return np.stack([xx, yy, zz], axis=-1)

    def compatible(self, other: "Grid") -> bool:
        return (
            self.n == other.n
            and np.allclose(self.lo, other.lo)
            and np.allclose(self.hi, other.hi)
        )


@dataclass
class GridField:
    """Scalar or vector field sampled at cell centers, with optional body mask."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = tuple(self.grid.n)
        if self.values.shape[:3] != expected:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {expected}"
            )

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == 4

    def copy(self) -> "GridField":
        m = None if self.mask is None else self.mask.copy()
        return GridField(self.grid, self.values.copy(), m)


# ---------------------------------------------------------------------------
# finite-difference calculus on cell-centered arrays


def deriv(values: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    """Second-order derivative along one axis (one-sided at the wall)."""
    return np.gradient(values, spacing, axis=axis)


def grad_scalar(values: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Gradient of a scalar array, shape (..., 3)."""
    parts = [deriv(values, d, h[d]) for d in range(3)]
    return np.stack(parts, axis=-1)


def grad_vector(values: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Gradient of a vector array, shape (..., 3, 3); [..., i, j] = d_j u_i."""
    parts = [deriv(values, d, h[d]) for d in range(3)]
    return np.stack(parts, axis=-1)


def divergence(values: np.ndarray, h: np.ndarray) -> np.ndarray:
    return sum(deriv(values[..., d], d, h[d]) for d in range(3))


def curl(values: np.ndarray, h: np.ndarray) -> np.ndarray:
    d = [
        [deriv(values[..., c], ax, h[ax]) for ax in range(3)] for c in range(3)
    ]
    return np.stack(
        [d[2][1] - d[1][2], d[0][2] - d[2][0], d[1][0] - d[0][1]], axis=-1
    )


def laplacian(values: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Gradient-of-gradient Laplacian, matching the operator-layer stencils."""
    return sum(deriv(deriv(values, d, h[d]), d, h[d]) for d in range(3))


def sym_grad(values: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Deformation-rate tensor D u = (grad u + grad u^T) / 2."""
    g = grad_vector(values, h)
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def integral(grid: Grid, values: np.ndarray) -> float:
    """Midpoint-rule integral of a scalar array over the box."""
    return float(np.sum(values)) * grid.cell_volume


def l2_norm(grid: Grid, values: np.ndarray) -> float:
    """L2 norm over the box; vector fields use the pointwise Euclidean norm."""
    sq = values**2
    if values.ndim == 4:
        sq = sq.sum(axis=-1)
    return float(np.sqrt(np.sum(sq) * grid.cell_volume))


def lp_norm(grid: Grid, values: np.ndarray, p: float) -> float:
    """Discrete L^p(Omega) norm by cell quadrature; p = inf gives the max norm."""
    mag = np.abs(values) if values.ndim == 3 else np.sqrt((values**2).sum(axis=-1))
    if np.isinf(p):
        return float(mag.max())
    return float((np.sum(mag**p) * grid.cell_volume) ** (1.0 / p))


# ---------------------------------------------------------------------------
# interpolation


def _trilinear_flat(grid: Grid, values: np.ndarray, pts: np.ndarray,
                    want_jacobian: bool):
    """Trilinear evaluation at flat points (N, 3) with optional Jacobian.

    Extrapolates linearly beyond the outermost cell centers, so the half-cell
    band at the wall stays consistent with the one-sided wall stencils.  The
    Jacobian is the interpolant's own (piecewise-constant per cell per axis),
    which is what a Newton solve on the interpolant needs.
    """
    h = grid.h
    n = grid.n
    comp = values.reshape(n + (-1,))
    ncomp = comp.shape[-1]

    u = (pts - grid.lo) / h - 0.5
    base = np.clip(np.floor(u).astype(int), 0, np.asarray(n) - 2)
    f = u - base  # may leave [0, 1] when extrapolating

    i0, j0, k0 = base[:, 0], base[:, 1], base[:, 2]
    fx, fy, fz = (f[:, d, None] for d in range(3))
    c = [[comp[i0 + a, j0 + b, k0 + cc] for cc in (0, 1)] for a in (0, 1) for b in (0, 1)]
    c000, c001, c010, c011, c100, c101, c110, c111 = (
        c[0][0], c[0][1], c[1][0], c[1][1], c[2][0], c[2][1], c[3][0], c[3][1]
    )

    c00 = c000 * (1 - fz) + c001 * fz
    c01 = c010 * (1 - fz) + c011 * fz
    c10 = c100 * (1 - fz) + c101 * fz
    c11 = c110 * (1 - fz) + c111 * fz
    c0 = c00 * (1 - fy) + c01 * fy
    c1 = c10 * (1 - fy) + c11 * fy
    val = c0 * (1 - fx) + c1 * fx
    if not want_jacobian:
        return val, None

    dx = (c1 - c0) / h[0]
    dy = ((c01 - c00) * (1 - fx) + (c11 - c10) * fx) / h[1]
    dz0 = c001 - c000
    dz1 = c011 - c010
    dz2 = c101 - c100
    dz3 = c111 - c110
    dz = (((dz0 * (1 - fy) + dz1 * fy) * (1 - fx)) + ((dz2 * (1 - fy) + dz3 * fy) * fx)) / h[2]
    jac = np.stack([dx, dy, dz], axis=-1).reshape(len(pts), ncomp, 3)
    return val, jac


def sample(grid: Grid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trilinear sample of a (possibly vector/tensor) array at points (..., 3)."""
    pts = np.asarray(points, dtype=float)
    flat = np.ascontiguousarray(pts.reshape(-1, 3))
    val, _ = _trilinear_flat(grid, values, flat, want_jacobian=False)
    return val.reshape(pts.shape[:-1] + values.shape[3:])


def sample_with_jacobian(grid: Grid, values: np.ndarray, points: np.ndarray):
    """Trilinear sample and the interpolant's Jacobian at flat points (N, 3)."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
    val, jac = _trilinear_flat(grid, values, pts, want_jacobian=True)
    return val, jac


def interpolator(grid: Grid, values: np.ndarray):
    """Callable trilinear interpolator for flat point arrays (N, 3)."""

    def _eval(pts: np.ndarray) -> np.ndarray:
        val, _ = _trilinear_flat(grid, values, np.asarray(pts, dtype=float), False)
        return val.reshape(len(pts), *values.shape[3:]) if values.ndim > 3 else val.reshape(len(pts))

    return _eval
