"""The perturbed operator ``T_a(u) = div u + <a, u>`` and its compact defect K.

``T_a o S = I + K`` with ``K(f) = -mean(f) + <a, S(f)>`` holds exactly at
the matrix level because K is assembled from the same coupling matrix that
defines T_a.

Two couplings for ``<a, u>`` are available:

``"fitted"`` (default)
    Face-wise exponentially fitted. A face with normal component ``a_f`` and
    spacing ``h`` contributes ``c_f * u_f / 2`` to both adjacent cells with
    ``c_f = (2/h) tanh(h a_f / 2) = a_f + O(h^2)``. When ``a`` is the discrete
    gradient of a cell potential ``A``, ``e^A`` is then an exact left null
    vector of ``T_a``, and ``e^A T_a(u) = div(w u)`` with positive face
    weights ``w``.
``"average"``
    Both factors averaged to cell centers before the dot product. Linear in
    ``a`` but without the exact null-vector structure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .divinverse import DivInverseOperator, build_s0
from .errors import SizeLimitExceeded
from .grid import Grid, ScalarField, VectorField, l2_norm

DENSE_LIMIT = 4096
COUPLINGS = ("fitted", "average")


class LinearMap:
    """A linear map between cell fields and/or face fields on one grid."""

    def __init__(self, grid: Grid, domain: str, codomain: str, matvec, rmatvec=None, dense=None):
        self.grid = grid
        self.domain = domain
        self.codomain = codomain
        self._matvec = matvec
        self._rmatvec = rmatvec
        self._dense = dense

    def _wrap(self, kind, vec):
        if kind == "cell":
            return ScalarField.from_flat(self.grid, vec)
        return VectorField.from_flat(self.grid, vec)

    def apply(self, x):
        return self._wrap(self.codomain, self._matvec(x.flat()))

    def adjoint_apply(self, y):
        """Adjoint w.r.t. the grid inner products (uniform weights: transpose)."""
        if self._rmatvec is None:
            return self._wrap(self.domain, self.dense().T @ y.flat())
        return self._wrap(self.domain, self._rmatvec(y.flat()))

    def dense(self) -> np.ndarray:
        n = self.grid.cell_count
        if n > DENSE_LIMIT:
            raise SizeLimitExceeded(f"{n} cells exceeds the dense limit {DENSE_LIMIT}")
        if self._dense is None:
            size = n if self.domain == "cell" else self.grid.face_count
            self._dense = self._matvec(np.eye(size))
        return self._dense


def coupling_coefficients(a: VectorField, kind: str = "fitted", scale: float = 1.0,
                          derivative: bool = False) -> np.ndarray:
    """Per-interior-face coefficient of ``scale * a`` (or its d/dscale)."""
    g = a.grid
    af = a.flat()
    h = np.concatenate([np.full(g.n_xfaces, g.hx), np.full(g.n_yfaces, g.hy)])
    if kind != "fitted":
        raise ValueError("face coefficients are only defined for the fitted coupling")
    z = 0.5 * h * scale * af
    if derivative:
        return af / np.cosh(z) ** 2
    return (2.0 / h) * np.tanh(z)


def coupling_matrix(a: VectorField, kind: str = "fitted", scale: float = 1.0,
                    derivative: bool = False) -> sp.csr_matrix:
    """Sparse (cells x interior faces) matrix of ``u -> <scale*a, u>``."""
    if kind not in COUPLINGS:
        raise ValueError(f"unknown coupling {kind!r}")
    g = a.grid
    # each interior face touches exactly the two cells with nonzero div entries
    D = g.div_matrix.tocoo()
    if kind == "fitted":
        c = coupling_coefficients(a, kind, scale, derivative)
        vals = 0.5 * c[D.col]
    else:
        ax_bar = 0.5 * (a.ux[:-1, :] + a.ux[1:, :]).ravel()
        ay_bar = 0.5 * (a.uy[:, :-1] + a.uy[:, 1:]).ravel()
        is_x = D.col < g.n_xfaces
        cell_a = np.where(is_x, ax_bar[D.row], ay_bar[D.row])
        vals = 0.5 * cell_a * (1.0 if derivative else scale)
    return sp.csr_matrix((vals, (D.row, D.col)), shape=D.shape)


class PerturbedOperator:
    """T_a on a grid together with the K built from a given S0."""

    def __init__(self, grid: Grid, a: VectorField, s0: DivInverseOperator | None = None,
                 coupling: str = "fitted"):
        if a.grid != grid:
            raise ValueError("coefficient field lives on a different grid")
        if s0 is not None and s0.grid != grid:
            raise ValueError("S0 was built for a different grid")
        self.grid = grid
        self.a = a
        self.coupling = coupling
        self._s0 = s0
        self.coupling_matrix = coupling_matrix(a, coupling)
        self.ta_matrix = (grid.div_matrix + self.coupling_matrix).tocsr()

    @property
    def s0(self) -> DivInverseOperator:
        if self._s0 is None:
            self._s0 = build_s0(self.grid)
        return self._s0

    def scaled(self, t: float) -> "PerturbedOperator":
        return PerturbedOperator(self.grid, self.a * t, self._s0, self.coupling)

    def apply_s_flat(self, f):
        return self.s0.apply_flat(f)

    def apply_k_flat(self, f):
        f = np.asarray(f, dtype=float)
        return -f.mean(axis=0) + self.coupling_matrix @ self.apply_s_flat(f)

    @cached_property
    def dense_k(self) -> np.ndarray:
        n = self.grid.cell_count
        if n > DENSE_LIMIT:
            raise SizeLimitExceeded(f"{n} cells exceeds the dense limit {DENSE_LIMIT}")
        return -np.full((n, n), 1.0 / n) + self.coupling_matrix @ self.s0.dense

    def dense_ta(self) -> np.ndarray:
        if self.grid.cell_count > DENSE_LIMIT:
            raise SizeLimitExceeded("grid too large for a dense T_a")
        return self.ta_matrix.toarray()

    def dense_i_plus_k(self) -> np.ndarray:
        return np.eye(self.grid.cell_count) + self.dense_k


def apply_ta(op: PerturbedOperator, u: VectorField) -> ScalarField:
    if u.grid != op.grid:
        raise ValueError("field lives on a different grid")
    return ScalarField.from_flat(op.grid, op.ta_matrix @ u.flat())


def apply_k(op: PerturbedOperator, f: ScalarField) -> ScalarField:
    return ScalarField.from_flat(op.grid, op.apply_k_flat(f.flat()))


def build_k(op: PerturbedOperator) -> LinearMap:
    dense = op.dense_k if op.grid.cell_count <= DENSE_LIMIT else None
    return LinearMap(op.grid, "cell", "cell", op.apply_k_flat, dense=dense)


def verify_ts_identity(op: PerturbedOperator, f: ScalarField) -> float:
    """L2 norm of ``T_a(S f) - (I + K) f``."""
    u = op.apply_s_flat(f.flat())
    lhs = op.ta_matrix @ u
    rhs = f.flat() + op.apply_k_flat(f.flat())
    return float(np.linalg.norm(lhs - rhs) * np.sqrt(op.grid.cell_area))


@dataclass(frozen=True)
class DecayReport:
    singular_values: np.ndarray
    thresholds: tuple
    counts: tuple

    def count_above(self, rel: float) -> int:
        return int(np.sum(self.singular_values > rel * self.singular_values[0]))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "sigma"])
            for k, s in enumerate(self.singular_values):
                w.writerow([k, f"{s:.17g}"])


def singular_decay_report(op: PerturbedOperator, thresholds=(1e-1, 1e-2, 1e-3)) -> DecayReport:
    s = np.linalg.svd(op.dense_k, compute_uv=False)
    s = np.sort(s)[::-1]
    counts = tuple(int(np.sum(s > t * s[0])) for t in thresholds)
    return DecayReport(s, tuple(thresholds), counts)


def relative_residual(op: PerturbedOperator, u: VectorField, f: ScalarField) -> float:
    r = apply_ta(op, u) - f
    scale = l2_norm(f)
    return l2_norm(r) / scale if scale > 0 else l2_norm(r)
