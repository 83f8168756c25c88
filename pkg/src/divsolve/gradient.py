"""Gradient coefficients: detection, the weighted transfer solve, left kernels.

For ``a = grad A`` the operator is not onto: ``e^A`` annihilates its range,
and ``T_a u = f`` is solvable only when ``int e^A f = 0``. The solve goes
through ``div(w u) = e^A f``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

from .divinverse import DivInverseOperator
from .errors import GradientFieldIncompatible, SizeLimitExceeded
from .grid import ScalarField, VectorField, discrete_curl
from .perturbation import PerturbedOperator

LEFT_KERNEL_MAX_CELLS = 256


@dataclass(frozen=True)
class GradientDecision:
    is_gradient: bool
    potential: ScalarField | None
    relative_curl: float
    fit_residual: float

    def to_text(self) -> str:
        return (f"is_gradient = {str(self.is_gradient).lower()}\n"
                f"fit_residual = {self.fit_residual:.6e}\n"
                f"relative_curl = {self.relative_curl:.6e}\n")


def _potential_fit(a: VectorField):
    """Least-squares A with ``grad A ~ a`` and sum(A) = 0."""
    g = a.grid
    G = g.grad_matrix
    n = g.cell_count
    ones = sp.csr_matrix(np.ones((n, 1)))
    M = sp.bmat([[G.T @ G, ones], [ones.T, None]], format="csc")
    rhs = np.concatenate([G.T @ a.flat(), [0.0]])
    sol = spla.spsolve(M, rhs)
    return sol[:n]


def relative_curl(a: VectorField) -> float:
    g = a.grid
    an = np.linalg.norm(a.flat())
    if an == 0:
        return 0.0
    return float(np.linalg.norm(discrete_curl(a)) / an)


def is_gradient(a: VectorField, grad_tol: float = 1e-8) -> GradientDecision:
    g = a.grid
    an = np.linalg.norm(a.flat())
    if an == 0:
        return GradientDecision(True, ScalarField.zeros(g), 0.0, 0.0)
    A = _potential_fit(a)
    fit = float(np.linalg.norm(g.grad_matrix @ A - a.flat()) / an)
    ok = fit <= grad_tol
    pot = ScalarField.from_flat(g, A) if ok else None
    return GradientDecision(ok, pot, relative_curl(a), fit)


def transfer_weights(A: ScalarField, coupling: str = "fitted") -> np.ndarray:
    """Face weights w with ``e^A T_{grad A}(u) = div(w u)``.

    Fitted coupling: harmonic mean of e^A over the two cells (exact).
    Average coupling: exp of the face-averaged potential (O(h^2)).
    """
    v = A.values
    pairs = [(v[:-1, :], v[1:, :]), (v[:, :-1], v[:, 1:])]
    out = []
    for left, right in pairs:
        if coupling == "fitted":
            w = 2.0 / (np.exp(-left) + np.exp(-right))
        else:
            w = np.exp(0.5 * (left + right))
        out.append(w.ravel())
    return np.concatenate(out)


def compatibility(A: ScalarField, f: ScalarField) -> tuple[float, float]:
    """Midpoint ``int e^A f`` and ``||e^A f||_1``."""
    g = np.exp(A.values) * f.values
    area = A.grid.cell_area
    return float(g.sum() * area), float(np.abs(g).sum() * area)


def gradient_case_solve(A: ScalarField, f: ScalarField, s0: DivInverseOperator,
                        compat_tol: float = 1e-10, coupling: str = "fitted"):
    """u with ``T_{grad A} u = f``; returns ``(u, int e^A f)``."""
    compat, l1 = compatibility(A, f)
    if abs(compat) > compat_tol * l1:
        raise GradientFieldIncompatible(
            f"a = grad A and int e^A f = {compat:.12g} != 0 (tolerance "
            f"{compat_tol:g} * {l1:.6g}): no solution exists", compat)
    v = s0.apply_flat((np.exp(A.values) * f.values).ravel())
    u = v / transfer_weights(A, coupling)
    return VectorField.from_flat(A.grid, u), compat


def compatibilized_rhs(A: ScalarField, f: ScalarField) -> tuple[ScalarField, float]:
    """``f - c e^{-A}`` with c fixed by the discrete quadrature so ``int e^A f = 0``."""
    compat, _ = compatibility(A, f)
    c = compat / A.grid.area
    return ScalarField(A.grid, f.values - c * np.exp(-A.values)), c


@dataclass(frozen=True)
class LeftKernel:
    dim: int
    representative: ScalarField | None
    alignment: float | None
    singular_values: np.ndarray


def left_kernel_check(a: VectorField, svd_tol: float = 1e-10, coupling: str = "fitted",
                      grad_tol: float = 1e-8) -> LeftKernel:
    """Left null space of the dense T_a; alignment with e^A when a = grad A."""
    g = a.grid
    if g.cell_count > LEFT_KERNEL_MAX_CELLS:
        raise SizeLimitExceeded(f"{g.cell_count} cells > {LEFT_KERNEL_MAX_CELLS} for a dense T_a")
    T = PerturbedOperator(g, a, coupling=coupling).dense_ta()
    U, s, _ = np.linalg.svd(T, full_matrices=False)
    dim = int(np.sum(s <= svd_tol * s[0]))
    if dim == 0:
        return LeftKernel(0, None, None, s)
    rep = U[:, -1]
    if rep.sum() < 0:
        rep = -rep
    rep_field = ScalarField.from_flat(g, rep)
    alignment = None
    dec = is_gradient(a, grad_tol)
    if dec.is_gradient:
        e = np.exp(dec.potential.flat())
        basis = U[:, len(s) - dim:]
        # cosine between e^A and the left null space
        alignment = float(np.linalg.norm(basis.T @ e) / np.linalg.norm(e))
    return LeftKernel(dim, rep_field, alignment, s)


def _face_interpolators(a: VectorField):
    g = a.grid
    xs = np.arange(1, g.nx) * g.hx
    yc = (np.arange(g.ny) + 0.5) * g.hy
    xc = (np.arange(g.nx) + 0.5) * g.hx
    ys = np.arange(1, g.ny) * g.hy
    ix = RegularGridInterpolator((xs, yc), a.ux[1:-1, :], bounds_error=False, fill_value=None)
    iy = RegularGridInterpolator((xc, ys), a.uy[:, 1:-1], bounds_error=False, fill_value=None)
    return ix, iy


def path_exponent(a: VectorField, x, y, alternate: bool = False, nodes: int | None = None) -> float:
    """Line integral of a along an axis-parallel two-leg path from x to y.

    Default: ``int_{x1}^{y1} a1(t, y2) dt + int_{x2}^{y2} a2(x1, t) dt``.
    ``alternate=True`` swaps the legs: ``a1(t, x2)`` and ``a2(y1, t)``.
    """
    g = a.grid
    for p in (x, y):
        if not g.contains(p):
            raise ValueError(f"point {tuple(p)} lies outside the domain")
    m = nodes or 2 * max(g.nx, g.ny) + 1
    ix, iy = _face_interpolators(a)
    t1 = np.linspace(x[0], y[0], m)
    t2 = np.linspace(x[1], y[1], m)
    h_at = x[1] if alternate else y[1]
    v_at = y[0] if alternate else x[0]
    leg1 = ix(np.column_stack([t1, np.full(m, h_at)]))
    leg2 = iy(np.column_stack([np.full(m, v_at), t2]))
    return float(trapezoid(leg1, t1) + trapezoid(leg2, t2))
