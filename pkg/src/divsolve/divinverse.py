"""Right inverses of the discrete divergence with homogeneous face data.

Two constructions share one contract (``div(apply(f)) == f`` for mean-zero
``f``):

* ``"minnorm"``: the face field of smallest discrete H1 seminorm with the
  prescribed divergence, from a sparse saddle-point factorization.
* ``"bogovskii"``: quadrature of the Bogovskii integral kernel for a domain
  star-shaped with respect to the centered ball, followed by one defect
  correction through the min-norm solver.
"""

from __future__ import annotations

import logging
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BackendRejected, DivSolveError
from .grid import Grid, ScalarField, VectorField, discrete_div

log = logging.getLogger(__name__)

BACKENDS = ("minnorm", "bogovskii")
SOLVER_RTOL = 1e-12
DEGRADED_RTOL = 1e-10
MAX_ASPECT = 10.0
GAUSS_ORDER = 4


class DivInverseOperator:
    """Discrete S0. Build with :func:`build_s0`; treat as read-only."""

    def __init__(self, grid: Grid, backend: str = "minnorm"):
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
        if backend == "bogovskii" and grid.aspect > MAX_ASPECT:
            raise BackendRejected(
                f"aspect ratio {grid.aspect:g} > {MAX_ASPECT:g}: centered-ball mollifier too thin")
        self.grid = grid
        self.backend = backend
        self._lu = self._factorize()
        if backend == "bogovskii":
            self._quad = bogovskii_quadrature_matrix(grid)

    def _factorize(self):
        g = self.grid
        D = g.div_matrix
        L = g.laplacian_matrix
        n, m = g.cell_count, g.face_count
        ones = sp.csr_matrix(np.ones((n, 1)))
        kkt = sp.bmat([
            [L, D.T, None],
            [D, None, ones],
            [None, ones.T, None],
        ], format="csc")
        try:
            lu = spla.splu(kkt)
        except RuntimeError as exc:  # singular factor: not expected on a valid grid
            raise DivSolveError(f"saddle-point assembly is singular: {exc}") from exc
        self._kkt = kkt
        self._sizes = (m, n)
        return lu

    def _minnorm(self, rhs: np.ndarray) -> np.ndarray:
        m, n = self._sizes
        rhs = np.asarray(rhs, dtype=float)
        batch = rhs.ndim == 2
        full = np.zeros((m + n + 1,) + rhs.shape[1:])
        full[m:m + n] = rhs
        sol = self._lu.solve(full)
        # one refinement sweep keeps the residual at the 1e-12 level on finer grids
        res = full - self._kkt @ sol
        sol += self._lu.solve(res)
        out = sol[:m]
        return out if batch else out.ravel()

    def apply_flat(self, f: np.ndarray) -> np.ndarray:
        """Face vector(s) for cell vector(s) ``f`` of shape (N,) or (N, k).

        Any mean is removed first, so this is S0 applied to ``f - mean(f)``.
        """
        f = np.asarray(f, dtype=float)
        f = f - f.mean(axis=0)
        if self.backend == "minnorm":
            return self._minnorm(f)
        u0 = self._quad @ f
        defect = f - self.grid.div_matrix @ u0
        return u0 + self._minnorm(defect)

    def apply(self, f: ScalarField) -> VectorField:
        if f.grid != self.grid:
            raise ValueError("field lives on a different grid")
        u = VectorField.from_flat(self.grid, self.apply_flat(f.flat()))
        res = self.residual(f, u)
        if res > DEGRADED_RTOL:
            log.warning("S0 residual %.3e exceeds %.0e (degraded)", res, DEGRADED_RTOL)
        return u

    def residual(self, f: ScalarField, u: VectorField) -> float:
        """Relative residual of ``div u = f - mean(f)``."""
        target = f.values - f.values.mean()
        scale = np.linalg.norm(target)
        r = np.linalg.norm(discrete_div(u).values - target)
        return float(r / scale) if scale > 0 else float(r)

    def raw_quadrature(self, f: ScalarField) -> VectorField:
        """Bogovskii quadrature output before defect correction."""
        if self.backend != "bogovskii":
            raise ValueError("raw quadrature only exists for the bogovskii backend")
        v = f.flat() - f.flat().mean()
        return VectorField.from_flat(self.grid, self._quad @ v)

    @cached_property
    def dense(self) -> np.ndarray:
        """Matrix of S = S0 o (I - mean), shape (faces, cells)."""
        return self.apply_flat(np.eye(self.grid.cell_count))


@lru_cache(maxsize=32)
def build_s0(grid: Grid, backend: str = "minnorm") -> DivInverseOperator:
    return DivInverseOperator(grid, backend)


def apply_s(op: DivInverseOperator, f: ScalarField) -> VectorField:
    """S(f) = S0(f - mean f)."""
    return op.apply(f - ScalarField.constant(f.grid, f.values.mean()))


# -- Bogovskii kernel quadrature ------------------------------------------------


def _radial_tail(rho, b, c, radius):
    """int_rho^inf omega(y + r e) r dr for omega = C(1 - |z-z0|^2/R^2)^2.

    ``b = e.(y - z0)`` and ``c = |y - z0|^2``; along the ray the bump is a
    polynomial in r, so the tail integral is exact.
    """
    r2 = radius * radius
    disc = b * b - c + r2
    ok = disc > 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    lo = np.maximum(rho, -b - sq)
    hi = -b + sq
    ok &= hi > lo
    beta = 2.0 * b
    gamma = c - r2

    def prim(r):
        return (r**6 / 6 + 2 * beta * r**5 / 5 + (beta**2 + 2 * gamma) * r**4 / 4
                + 2 * beta * gamma * r**3 / 3 + gamma**2 * r**2 / 2)

    norm = 3.0 / (np.pi * r2)
    val = norm / (r2 * r2) * (prim(hi) - prim(lo))
    return np.where(ok, val, 0.0)


def bogovskii_quadrature_matrix(grid: Grid, chunk: int = 64) -> np.ndarray:
    """Dense (faces x cells) matrix of the kernel integrated per source cell."""
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_ORDER)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    xc = np.arange(grid.nx) * grid.hx
    yc = np.arange(grid.ny) * grid.hy
    # source points: (cells, q) in cell-major order matching ScalarField.flat()
    cx = xc[:, None, None, None] + grid.hx * nodes[None, None, :, None]
    cy = yc[None, :, None, None] + grid.hy * nodes[None, None, None, :]
    sx = np.broadcast_to(cx, (grid.nx, grid.ny, GAUSS_ORDER, GAUSS_ORDER)).reshape(grid.cell_count, -1)
    sy = np.broadcast_to(cy, (grid.nx, grid.ny, GAUSS_ORDER, GAUSS_ORDER)).reshape(grid.cell_count, -1)
    sw = (np.outer(weights, weights).ravel() * grid.cell_area)[None, :]

    z0 = np.array([grid.lx / 2, grid.ly / 2])
    radius = 0.5 * min(grid.lx, grid.ly)
    dyx, dyy = sx - z0[0], sy - z0[1]
    c_all = dyx**2 + dyy**2

    fx, fy = grid.xface_centers()
    gx, gy = grid.yface_centers()
    targets = [
        (fx[1:-1, :].ravel(), fy[1:-1, :].ravel(), 0),
        (gx[:, 1:-1].ravel(), gy[:, 1:-1].ravel(), 1),
    ]
    rows = []
    for tx_all, ty_all, comp in targets:
        for start in range(0, tx_all.size, chunk):
            tx = tx_all[start:start + chunk, None, None]
            ty = ty_all[start:start + chunk, None, None]
            vx, vy = tx - sx[None], ty - sy[None]
            rho = np.hypot(vx, vy)
            ex, ey = vx / rho, vy / rho
            b = ex * dyx[None] + ey * dyy[None]
            tail = _radial_tail(rho, b, c_all[None], radius)
            comp_v = vx if comp == 0 else vy
            kern = comp_v / rho**2 * tail
            rows.append((kern * sw[None]).sum(axis=2))
    return np.vstack(rows)


def amplification_samples(op: DivInverseOperator, count: int, rng) -> np.ndarray:
    """Ratios ||S0 f||_H1 / ||f||_L2 over random mean-zero ``f``."""
    g = op.grid
    f = rng.standard_normal((g.cell_count, count))
    f -= f.mean(axis=0)
    u = op.apply_flat(f)
    lap = g.laplacian_matrix
    h1 = np.sqrt(np.einsum("ik,ik->k", u, lap @ u) * g.cell_area)
    l2 = np.linalg.norm(f, axis=0) * np.sqrt(g.cell_area)
    return h1 / l2


def amplification_bound(op: DivInverseOperator, iters: int = 200, seed: int = 0) -> float:
    """Operator norm of S0 from mean-zero L2 into H1 by power iteration on the dense map."""
    g = op.grid
    S = op.dense
    lap = g.laplacian_matrix
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(g.cell_count)
    v -= v.mean()
    lam = 0.0
    for _ in range(iters):
        w = S.T @ (lap @ (S @ v))
        w -= w.mean()
        lam_new = float(np.linalg.norm(w) / np.linalg.norm(v))
        v = w / np.linalg.norm(w)
        if abs(lam_new - lam) <= 1e-12 * lam_new:
            lam = lam_new
            break
        lam = lam_new
    # S^T L S carries face weight hx*hy / cell weight hx*hy; the ratio cancels
    return float(np.sqrt(lam))

