"""Staggered (MAC) grid on a rectangle and the discrete calculus on it.

Scalars live at cell centers, vector components on cell faces. Faces on the
boundary of the rectangle carry the homogeneous Dirichlet condition and are
pinned to zero, so only interior faces are degrees of freedom. With uniform
cell weights ``hx*hy`` the discrete gradient is exactly minus the adjoint of
the discrete divergence.

Array layout: ``ScalarField.values[i, j]`` is cell ``(i, j)`` with ``i`` along
x. ``VectorField.ux`` has shape ``(nx+1, ny)`` (x-face ``i`` sits at
``x = i*hx``), ``VectorField.uy`` has shape ``(nx, ny+1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("cell counts must be integers")
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"need nx, ny >= 2, got ({self.nx}, {self.ny})")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError(f"side lengths must be positive, got ({self.lx}, {self.ly})")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "lx", float(self.lx))
        object.__setattr__(self, "ly", float(self.ly))

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_count(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def n_xfaces(self) -> int:
        return (self.nx - 1) * self.ny

    @property
    def n_yfaces(self) -> int:
        return self.nx * (self.ny - 1)

    @property
    def face_count(self) -> int:
        """Number of interior (free) faces."""
        return self.n_xfaces + self.n_yfaces

    @property
    def aspect(self) -> float:
        return max(self.lx, self.ly) / min(self.lx, self.ly)

    # -- masks and coordinates ------------------------------------------------

    @cached_property
    def xface_mask(self) -> np.ndarray:
        """True on interior x-faces."""
        m = np.zeros((self.nx + 1, self.ny), dtype=bool)
        m[1:-1, :] = True
        m.flags.writeable = False
        return m

    @cached_property
    def yface_mask(self) -> np.ndarray:
        m = np.zeros((self.nx, self.ny + 1), dtype=bool)
        m[:, 1:-1] = True
        m.flags.writeable = False
        return m

    def cell_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def xface_centers(self):
        x = np.arange(self.nx + 1) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def yface_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def node_coords(self):
        """Interior nodes, shape (nx-1, ny-1)."""
        x = np.arange(1, self.nx) * self.hx
        y = np.arange(1, self.ny) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def contains(self, point) -> bool:
        x, y = point
        return 0.0 <= x <= self.lx and 0.0 <= y <= self.ly

    # -- packing between face arrays and the interior-face vector ---------------

    def pack(self, ux: np.ndarray, uy: np.ndarray) -> np.ndarray:
        return np.concatenate([ux[1:-1, :].ravel(), uy[:, 1:-1].ravel()])

    def unpack(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.face_count,):
            raise ValueError(f"expected {self.face_count} face values, got {vec.shape}")
        ux = np.zeros((self.nx + 1, self.ny))
        uy = np.zeros((self.nx, self.ny + 1))
        ux[1:-1, :] = vec[: self.n_xfaces].reshape(self.nx - 1, self.ny)
        uy[:, 1:-1] = vec[self.n_xfaces:].reshape(self.nx, self.ny - 1)
        return ux, uy

    # -- sparse operators on flat vectors ----------------------------------------

    @cached_property
    def _diff_x(self):
        # (nx, nx-1): cell i sees faces i (col i-1) and i+1 (col i)
        return sp.diags([-np.ones(self.nx - 1), np.ones(self.nx - 1)], [-1, 0],
                        shape=(self.nx, self.nx - 1)) / self.hx

    @cached_property
    def _diff_y(self):
        return sp.diags([-np.ones(self.ny - 1), np.ones(self.ny - 1)], [-1, 0],
                        shape=(self.ny, self.ny - 1)) / self.hy

    @cached_property
    def div_matrix(self) -> sp.csr_matrix:
        """Cells x interior faces."""
        dx = sp.kron(self._diff_x, sp.identity(self.ny))
        dy = sp.kron(sp.identity(self.nx), self._diff_y)
        return sp.hstack([dx, dy]).tocsr()

    @cached_property
    def grad_matrix(self) -> sp.csr_matrix:
        return (-self.div_matrix.T).tocsr()

    @cached_property
    def curl_matrix(self) -> sp.csr_matrix:
        """Interior nodes x interior faces: d(uy)/dx - d(ux)/dy."""
        gx = -self._diff_x.T  # (nx-1, nx): (p[k+1] - p[k]) / hx at node k+1
        gy = -self._diff_y.T
        c_ux = -sp.kron(sp.identity(self.nx - 1), gy)
        c_uy = sp.kron(gx, sp.identity(self.ny - 1))
        return sp.hstack([c_ux, c_uy]).tocsr()

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """SPD H1-seminorm matrix on interior faces (Dirichlet walls).

        Tangential differences against a wall half a cell away use the
        mirror-ghost weight ``2/h**2``.
        """
        def wall_diff(n, h):
            # (n+1, n): wall, interior differences, wall
            rows = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))
            top = sp.csr_matrix(([np.sqrt(2.0)], ([0], [0])), shape=(1, n))
            bot = sp.csr_matrix(([-np.sqrt(2.0)], ([0], [n - 1])), shape=(1, n))
            return sp.vstack([top, rows, bot]) / h

        dxx = self._diff_x  # normal direction of ux, zero ends built in
        dyy = self._diff_y
        wy = wall_diff(self.ny, self.hy)
        wx = wall_diff(self.nx, self.hx)
        lx = sp.kron(dxx.T @ dxx, sp.identity(self.ny)) + sp.kron(sp.identity(self.nx - 1), wy.T @ wy)
        ly = sp.kron(wx.T @ wx, sp.identity(self.ny - 1)) + sp.kron(sp.identity(self.nx), dyy.T @ dyy)
        return sp.block_diag([lx, ly]).tocsr()


def build_grid(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> Grid:
    return Grid(nx, ny, lx, ly)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(f"scalar field shape {v.shape} does not match grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field has non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.nx, grid.ny)))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full((grid.nx, grid.ny), float(c)))

    @classmethod
    def from_flat(cls, grid, vec):
        return cls(grid, np.asarray(vec, dtype=float).reshape(grid.nx, grid.ny))

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def _check(self, other):
        if not isinstance(other, ScalarField) or other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    ux: np.ndarray
    uy: np.ndarray

    def __post_init__(self):
        g = self.grid
        ux, uy = _frozen(self.ux), _frozen(self.uy)
        if ux.shape != (g.nx + 1, g.ny) or uy.shape != (g.nx, g.ny + 1):
            raise ValueError("vector field shapes do not match grid")
        if not (np.all(np.isfinite(ux)) and np.all(np.isfinite(uy))):
            raise ValueError("vector field has non-finite values")
        if np.any(ux[~g.xface_mask] != 0.0) or np.any(uy[~g.yface_mask] != 0.0):
            raise ValueError("boundary faces must be exactly zero")
        object.__setattr__(self, "ux", ux)
        object.__setattr__(self, "uy", uy)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.nx + 1, grid.ny)), np.zeros((grid.nx, grid.ny + 1)))

    @classmethod
    def from_flat(cls, grid, vec):
        return cls(grid, *grid.unpack(vec))

    @classmethod
    def masked(cls, grid, ux, uy):
        """Build from raw face samples, zeroing the boundary faces."""
        ux = np.where(grid.xface_mask, ux, 0.0)
        uy = np.where(grid.yface_mask, uy, 0.0)
        return cls(grid, ux, uy)

    def flat(self) -> np.ndarray:
        return self.grid.pack(self.ux, self.uy)

    def _check(self, other):
        if not isinstance(other, VectorField) or other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return VectorField(self.grid, self.ux + other.ux, self.uy + other.uy)

    def __sub__(self, other):
        self._check(other)
        return VectorField(self.grid, self.ux - other.ux, self.uy - other.uy)

    def __mul__(self, c):
        return VectorField(self.grid, self.ux * float(c), self.uy * float(c))

    __rmul__ = __mul__


def discrete_div(u: VectorField) -> ScalarField:
    g = u.grid
    return ScalarField.from_flat(g, g.div_matrix @ u.flat())


def discrete_grad(p: ScalarField) -> VectorField:
    g = p.grid
    return VectorField.from_flat(g, g.grad_matrix @ p.flat())


def discrete_curl(a: VectorField) -> np.ndarray:
    """Scalar curl at interior nodes, shape ``(nx-1, ny-1)``."""
    g = a.grid
    return (g.curl_matrix @ a.flat()).reshape(g.nx - 1, g.ny - 1)


def mean(f: ScalarField) -> float:
    return float(f.values.mean())


def inner(f: ScalarField, g: ScalarField) -> float:
    f._check(g)
    return float(np.dot(f.flat(), g.flat()) * f.grid.cell_area)


def face_inner(u: VectorField, v: VectorField) -> float:
    u._check(v)
    return float(np.dot(u.flat(), v.flat()) * u.grid.cell_area)


def l2_norm(f) -> float:
    """Area-weighted L2 norm of a scalar or vector field."""
    return float(np.linalg.norm(f.flat()) * np.sqrt(f.grid.cell_area))


def h1_seminorm(u: VectorField) -> float:
    v = u.flat()
    return float(np.sqrt(v @ (u.grid.laplacian_matrix @ v) * u.grid.cell_area))
