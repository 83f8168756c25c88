"""Fredholm correction for ``T_a u = f``: kernel N, complement Z, right inverse S_a.

With ``A = I + K`` the right inverse is

    S_a(f) = S(V(Q f)) + sum_alpha e*_alpha(zeta f) ebar_alpha

where ``zeta`` projects onto Z along range(A), ``Q = I - zeta`` and V inverts
A from its range onto X, the orthogonal complement of N. Constants always lie
in N (``K(1) = -1``), so for this K a generic field has dim N = 1.

V o Q and zeta come out of one LU of the bordered matrix

    [[A, Z], [N^T, 0]] [x; gamma] = [f; 0]

which gives ``A x + Z gamma = f`` with ``x`` orthogonal to N, hence
``x = V Q f`` and ``zeta f = Z gamma``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
from scipy.optimize import minimize_scalar

from .divinverse import build_s0
from .errors import (FailedTransversality, GradientFieldDetected, IllConditioned,
                     NoRealSingularScaling)
from .grid import Grid, ScalarField, VectorField
from .perturbation import LinearMap, PerturbedOperator, coupling_matrix

log = logging.getLogger(__name__)

SVD_TOL = 1e-10
PAIRING_MAX_COND = 1e6
RESTRICTED_MAX_COND = 1e12
BUMP_RADIUS_FRACTION = 0.2
REGULAR_RTOL = 1e-8
CORRECTED_RTOL = 1e-6


@dataclass(frozen=True)
class SolverOptions:
    svd_tol: float = SVD_TOL
    grad_tol: float = 1e-8
    compat_tol: float = 1e-10
    seed: int = 0
    bump_margin: int = 10
    backend: str = "minnorm"
    coupling: str = "fitted"
    method: str = "auto"  # "auto" | "svd"
    delegate_gradient: bool = False


# -- kernel ---------------------------------------------------------------------


@dataclass(frozen=True)
class KernelData:
    """Orthonormal kernel basis of I+K and the left-deficient directions."""

    basis: np.ndarray
    left: np.ndarray
    singular_values: np.ndarray
    svd_tol: float

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def sigma_ratio(self) -> float:
        s = self.singular_values
        return float(s[-1] / s[0]) if s[0] > 0 else 0.0

    def fields(self, grid: Grid) -> list[ScalarField]:
        return [ScalarField.from_flat(grid, v) for v in self.basis.T]


def _i_plus_k(K) -> np.ndarray:
    if isinstance(K, PerturbedOperator):
        return K.dense_i_plus_k()
    if isinstance(K, LinearMap):
        K = K.dense()
    K = np.asarray(K, dtype=float)
    return np.eye(K.shape[0]) + K


def compute_kernel(K, svd_tol: float = SVD_TOL, weights=None) -> KernelData:
    """Kernel of I+K by thresholded SVD.

    ``K`` is a PerturbedOperator, a LinearMap or a dense matrix. With cell
    ``weights`` the SVD is taken in the weighted inner product; the returned
    basis is orthonormalized in the plain one and ``left`` holds functionals
    (plain dot products) that annihilate the range.
    """
    A = _i_plus_k(K)
    if weights is None:
        U, s, Vt = np.linalg.svd(A)
        d = int(np.sum(s <= svd_tol * s[0]))
        n = A.shape[0]
        return KernelData(Vt[n - d:].T.copy(), U[:, n - d:].copy(), s, svd_tol)
    ws = np.sqrt(np.asarray(weights, dtype=float).ravel())
    U, s, Vt = np.linalg.svd(ws[:, None] * A / ws[None, :])
    d = int(np.sum(s <= svd_tol * s[0]))
    n = A.shape[0]
    basis = Vt[n - d:].T / ws[:, None]
    if d:
        basis, _ = np.linalg.qr(basis)
    left = ws[:, None] * U[:, n - d:]
    return KernelData(basis, left, s, svd_tol)


# -- complement from bump images ------------------------------------------------


def bump_field(grid: Grid, center, angle: float, radius: float) -> VectorField:
    """Polynomial bump ``(1-s_x^2)^2 (1-s_y^2)^2`` times a unit direction."""

    def profile(x, y):
        sx = (x - center[0]) / radius
        sy = (y - center[1]) / radius
        inside = (np.abs(sx) < 1) & (np.abs(sy) < 1)
        return np.where(inside, (1 - sx**2) ** 2 * (1 - sy**2) ** 2, 0.0)

    xx, xy = grid.xface_centers()
    yx, yy = grid.yface_centers()
    return VectorField.masked(grid, np.cos(angle) * profile(xx, xy),
                              np.sin(angle) * profile(yx, yy))


def bump_candidates(grid: Grid, count: int, seed: int):
    """Deterministic (center, angle) pairs with the support inside the domain."""
    rng = np.random.default_rng(seed)
    r = BUMP_RADIUS_FRACTION * min(grid.lx, grid.ly)
    out = []
    for _ in range(count):
        c = (rng.uniform(r, grid.lx - r), rng.uniform(r, grid.ly - r))
        out.append((c, rng.uniform(0.0, 2.0 * np.pi)))
    return out, r


def pairing_condition(left: np.ndarray, z: np.ndarray) -> float:
    """1/sigma_min of U0^T Zhat (orthonormalized U0, unit-norm columns of Z)."""
    if z.shape[1] == 0:
        return 1.0
    zn = z / np.linalg.norm(z, axis=0)
    u0, _ = np.linalg.qr(left)
    s = np.linalg.svd(u0.T @ zn, compute_uv=False)
    return float(np.inf) if s[-1] == 0 else float(1.0 / s[-1])


def build_complement_Z(op: PerturbedOperator, kernel: KernelData, bump_count_margin: int = 10,
                       rng_seed: int = 0):
    """Greedy choice of dim N bump images transversal to range(I+K).

    Returns ``(Z, preimages, info)`` with Z of shape (cells, d) and preimages
    of shape (faces, d); ``info`` records centers, angles and the pairing
    condition.
    """
    g = op.grid
    d = kernel.dim
    info = {"centers": [], "angles": [], "pairing_condition": 1.0, "tried": 0}
    if d == 0:
        return np.zeros((g.cell_count, 0)), np.zeros((g.face_count, 0)), info
    cands, radius = bump_candidates(g, d + bump_count_margin, rng_seed)
    left = kernel.left
    zs, es = [], []
    for k, (c, ang) in enumerate(cands):
        e = bump_field(g, c, ang, radius).flat()
        z = op.ta_matrix @ e
        trial = np.column_stack(zs + [z])
        cond = pairing_condition(left, trial)  # k <= d columns: full column rank needed
        info["tried"] = k + 1
        if cond <= PAIRING_MAX_COND:
            zs.append(z)
            es.append(e)
            info["centers"].append(c)
            info["angles"].append(ang)
            info["pairing_condition"] = cond
            if len(zs) == d:
                break
    if len(zs) < d:
        raise FailedTransversality(
            f"only {len(zs)} of {d} transversal bump images among "
            f"{len(cands)} candidates (seed {rng_seed}); retry with another seed")
    Z = np.column_stack(zs)
    E = np.column_stack(es)
    # augmented-rank view: [range basis | Z] square and full rank iff U0^T Z invertible
    info["pairing_condition"] = pairing_condition(left, Z)
    return Z, E, info


# -- decomposition ----------------------------------------------------------------


@dataclass
class FredholmDecomposition:
    grid: Grid
    kernel: np.ndarray
    left: np.ndarray
    z: np.ndarray
    preimages: np.ndarray
    duals: np.ndarray
    condition: float
    pairing_condition: float
    method: str
    svd_tol: float
    bump_centers: list = field(default_factory=list)
    bump_angles: list = field(default_factory=list)
    singular_values: np.ndarray | None = None
    _lu: tuple | None = None
    _bordered: np.ndarray | None = None

    @property
    def dim_n(self) -> int:
        return self.kernel.shape[1]

    @property
    def dim_z(self) -> int:
        return self.z.shape[1]

    @property
    def branch(self) -> str:
        return "regular" if self.dim_n == 0 else "corrected"

    def kernel_fields(self):
        return [ScalarField.from_flat(self.grid, v) for v in self.kernel.T]

    def z_fields(self):
        return [ScalarField.from_flat(self.grid, v) for v in self.z.T]

    def preimage_fields(self):
        return [VectorField.from_flat(self.grid, v) for v in self.preimages.T]

    def bordered_solve(self, f: np.ndarray):
        """``(V Q f, gamma)`` with ``zeta f = Z gamma``; f may be (n,) or (n, k)."""
        f = np.asarray(f, dtype=float)
        n, d = self.grid.cell_count, self.dim_n
        rhs = np.zeros((n + d,) + f.shape[1:])
        rhs[:n] = f
        sol = sl.lu_solve(self._lu, rhs)
        if self._bordered is not None:
            # one refinement step; the bordered matrix can be cond ~ 1e7 near t*
            sol += sl.lu_solve(self._lu, rhs - self._bordered @ sol)
        return sol[:n], sol[n:]

    def zeta(self, f):
        return self.z @ self.bordered_solve(f)[1]

    def q(self, f):
        return np.asarray(f, dtype=float) - self.zeta(f)

    def v_of_q(self, f):
        """V(Q f)."""
        return self.bordered_solve(f)[0]

    def dual_apply(self, g):
        """Coefficients ``e*_alpha(g) = inner(d_alpha, g)``."""
        return self.duals.T @ np.asarray(g, dtype=float) * self.grid.cell_area

    def summary(self) -> str:
        lines = [
            f"method = {self.method}",
            f"dim_N = {self.dim_n}",
            f"dim_Z = {self.dim_z}",
            f"branch = {self.branch}",
            f"restricted_condition = {self.condition:.6e}",
            f"pairing_condition = {self.pairing_condition:.6e}",
        ]
        if self.singular_values is not None:
            s = self.singular_values
            lines.append(f"sigma_min_over_sigma_1 = {s[-1] / s[0]:.6e}")
        for k, (c, ang) in enumerate(zip(self.bump_centers, self.bump_angles)):
            lines.append(f"bump_{k} = center ({c[0]:.17g}, {c[1]:.17g}) angle {ang:.17g}")
        return "\n".join(lines) + "\n"


def _bordered_factor(A, N, Z):
    n, d = A.shape[0], N.shape[1]
    M = np.zeros((n + d, n + d))
    M[:n, :n] = A
    M[:n, n:] = Z
    M[n:, :n] = N.T
    lu = sl.lu_factor(M, check_finite=False)
    anorm = np.linalg.norm(M, 1)
    rcond, info = sl.lapack.dgecon(lu[0], anorm, norm="1")
    return lu, M, float(rcond)


def _duals(grid, Z):
    if Z.shape[1] == 0:
        return Z.copy()
    return Z @ np.linalg.inv(Z.T @ Z) / grid.cell_area


def _fast_structural(op, A, svd_tol, margin, seed):
    """Try N = span{1}; certify dim N = 1 from the bordered LU alone."""
    g = op.grid
    n = g.cell_count
    ones = np.full((n, 1), 1.0 / np.sqrt(n))
    col_norms = np.linalg.norm(A, axis=0)
    sigma1_lo = col_norms.max()
    if np.linalg.norm(A @ ones) > svd_tol * sigma1_lo:
        return None
    sigma1_hi = np.sqrt(np.linalg.norm(A, 1) * np.linalg.norm(A, np.inf))
    cands, radius = bump_candidates(g, 1 + margin, seed)
    for k, (c, ang) in enumerate(cands):
        e = bump_field(g, c, ang, radius).flat()
        z = (op.ta_matrix @ e)[:, None]
        lu, M, rcond = _bordered_factor(A, ones, z)
        if rcond == 0:
            continue
        m = n + 1
        # sigma_{n-1}(A) >= sigma_min(M) >= 1 / (sqrt(m) ||M^-1||_1) by interlacing
        sig_lo = rcond * np.linalg.norm(M, 1) / np.sqrt(m)
        if sig_lo / sigma1_hi <= svd_tol:
            continue
        # left-deficient direction: M^T [psi; s] = [0; 1] gives A^T psi = 0, z.psi = 1
        rhs = np.zeros(m)
        rhs[-1] = 1.0
        psi = sl.lu_solve(lu, rhs, trans=1)[:n]
        left = (psi / np.linalg.norm(psi))[:, None]
        pc = pairing_condition(left, z)
        if pc > PAIRING_MAX_COND:
            continue
        return dict(kernel=ones, left=left, z=z, preimages=e[:, None], lu=lu, m=M,
                    rcond=rcond, pairing=pc, centers=[c], angles=[ang])
    return None


def build_decomposition(op: PerturbedOperator, svd_tol: float = SVD_TOL, bump_margin: int = 10,
                        seed: int = 0, method: str = "auto") -> FredholmDecomposition:
    """Kernel, complement, duals and the factorized restricted inverse."""
    if method not in ("auto", "svd"):
        raise ValueError(f"unknown decomposition method {method!r}")
    A = op.dense_i_plus_k()
    g = op.grid
    fast = _fast_structural(op, A, svd_tol, bump_margin, seed) if method == "auto" else None
    if fast is not None:
        Z = fast["z"]
        dec = FredholmDecomposition(
            grid=g, kernel=fast["kernel"], left=fast["left"], z=Z, preimages=fast["preimages"],
            duals=_duals(g, Z), condition=1.0 / fast["rcond"], pairing_condition=fast["pairing"],
            method="bordered", svd_tol=svd_tol, bump_centers=fast["centers"],
            bump_angles=fast["angles"], _lu=fast["lu"], _bordered=fast["m"])
    else:
        kern = compute_kernel(A - np.eye(A.shape[0]), svd_tol)
        Z, E, info = build_complement_Z(op, kern, bump_margin, seed)
        lu, M, rcond = _bordered_factor(A, kern.basis, Z)
        dec = FredholmDecomposition(
            grid=g, kernel=kern.basis, left=kern.left, z=Z, preimages=E, duals=_duals(g, Z),
            condition=np.inf if rcond == 0 else 1.0 / rcond,
            pairing_condition=info["pairing_condition"], method="svd", svd_tol=svd_tol,
            bump_centers=info["centers"], bump_angles=info["angles"],
            singular_values=kern.singular_values, _lu=lu, _bordered=M)
    if not dec.condition <= RESTRICTED_MAX_COND:
        raise IllConditioned(
            f"restricted (I+K) condition estimate {dec.condition:.3e} > {RESTRICTED_MAX_COND:.0e}",
            dec.condition)
    return dec


def _sigma_max(A, iters=50, seed=0):
    # power iteration: a lower estimate, which keeps the kernel check conservative
    v = np.random.default_rng(seed).standard_normal(A.shape[1])
    for _ in range(iters):
        w = A.T @ (A @ v)
        v = w / np.linalg.norm(w)
    return float(np.linalg.norm(A @ v))


def check_invariants(op: PerturbedOperator, dec: FredholmDecomposition, samples: int = 5,
                     seed: int = 1) -> dict:
    """Each invariant as ``name -> (value, tolerance, ok)``."""
    A = op.dense_i_plus_k()
    n = op.grid.cell_count
    out = {}
    out["dim_n_equals_dim_z"] = (abs(dec.dim_n - dec.dim_z), 0, dec.dim_n == dec.dim_z)
    s1 = _sigma_max(A)
    kres = float(np.linalg.norm(A @ dec.kernel, axis=0).max()) if dec.dim_n else 0.0
    out["kernel_residual"] = (kres, dec.svd_tol * s1, kres <= dec.svd_tol * s1)
    pre = float(np.abs(op.ta_matrix @ dec.preimages - dec.z).max(initial=0.0))
    out["preimage_residual"] = (pre, 1e-10, pre <= 1e-10)
    dual = float(np.abs(dec.dual_apply(dec.z) - np.eye(dec.dim_z)).max(initial=0.0))
    out["dual_basis"] = (dual, 1e-10, dual <= 1e-10)
    f = np.random.default_rng(seed).standard_normal((n, samples))
    fn = np.linalg.norm(f, axis=0)
    qf, zf = dec.q(f), dec.zeta(f)
    split = float((np.linalg.norm(f - qf - zf, axis=0) / fn).max())
    out["q_plus_zeta"] = (split, 1e-10, split <= 1e-10)
    zq = float((np.linalg.norm(dec.zeta(qf), axis=0) / fn).max())
    out["zeta_q_zero"] = (zq, 1e-10, zq <= 1e-10)
    qq = float((np.linalg.norm(dec.q(qf) - qf, axis=0) / fn).max())
    out["q_idempotent"] = (qq, 1e-10, qq <= 1e-10)
    # Q f lies in range(I+K): A (V Q f) = Q f
    rng_res = float((np.linalg.norm(A @ dec.v_of_q(f) - qf, axis=0) / fn).max())
    out["v_inverts_on_range"] = (rng_res, 1e-10, rng_res <= 1e-10)
    pc = dec.pairing_condition
    out["transversality"] = (pc, PAIRING_MAX_COND, pc <= PAIRING_MAX_COND)
    return out


# -- right inverse and solve -----------------------------------------------------


def build_right_inverse(op: PerturbedOperator, dec: FredholmDecomposition) -> LinearMap:
    """S_a as a cell -> face LinearMap."""

    def matvec(f):
        f = np.asarray(f, dtype=float)
        x, gamma = dec.bordered_solve(f)
        coeff = dec.dual_apply(dec.z @ gamma)
        return op.apply_s_flat(x) + dec.preimages @ coeff

    return LinearMap(op.grid, "cell", "face", matvec)


@dataclass(frozen=True)
class SolveCertificate:
    residual: float
    branch: str
    dim_n: int
    condition: float
    tolerance: float
    dim_z: int = 0
    compatibility: float | None = None

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.residual) and self.residual <= self.tolerance)

    def to_text(self) -> str:
        lines = [
            f"residual = {self.residual:.17g}",
            f"tolerance = {self.tolerance:.3g}",
            f"ok = {str(self.ok).lower()}",
            f"branch = {self.branch}",
            f"dim_N = {self.dim_n}",
            f"dim_Z = {self.dim_z}",
            f"condition = {self.condition:.6e}",
        ]
        if self.compatibility is not None:
            lines.append(f"compatibility = {self.compatibility:.17g}")
        return "\n".join(lines) + "\n"


def residual_ratio(op, u_flat, f_flat):
    r = np.linalg.norm(op.ta_matrix @ u_flat - f_flat)
    s = np.linalg.norm(f_flat)
    return float(r / s) if s > 0 else float(r)


def solve(a: VectorField, f: ScalarField, opts: SolverOptions | None = None, s0=None):
    """Solve ``div u + <a, u> = f`` with zero boundary faces.

    Returns ``(u, certificate, extras)``; ``extras`` carries the gradient
    decision and, off the gradient case, the decomposition.
    """
    from .gradient import gradient_case_solve, is_gradient

    opts = opts or SolverOptions()
    g = a.grid
    s0 = s0 or build_s0(g, opts.backend)
    decision = is_gradient(a, opts.grad_tol)
    if decision.is_gradient:
        if not opts.delegate_gradient:
            raise GradientFieldDetected(
                f"a is a discrete gradient (fit residual {decision.fit_residual:.3e}); "
                "use the gradient-case solve", decision)
        u, compat = gradient_case_solve(decision.potential, f, s0, opts.compat_tol, opts.coupling)
        op = PerturbedOperator(g, a, s0, opts.coupling)
        res = residual_ratio(op, u.flat(), f.flat())
        cert = SolveCertificate(res, "gradient", 0, 1.0, CORRECTED_RTOL, compatibility=compat)
        return u, cert, {"decision": decision, "decomposition": None}
    op = PerturbedOperator(g, a, s0, opts.coupling)
    dec = build_decomposition(op, opts.svd_tol, opts.bump_margin, opts.seed, opts.method)
    sa = build_right_inverse(op, dec)
    u = sa.apply(f)
    res = residual_ratio(op, u.flat(), f.flat())
    tol = REGULAR_RTOL if dec.branch == "regular" else CORRECTED_RTOL
    cert = SolveCertificate(res, dec.branch, dec.dim_n, dec.condition, tol, dec.dim_z)
    if not cert.ok:
        log.warning("solve residual %.3e above %.0e", res, tol)
    return u, cert, {"decision": decision, "decomposition": dec, "operator": op}


# -- singular scalings -------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    t: float
    sigma_min_ratio: float
    sigma_excess_ratio: float
    dim_n: int


def structural_dim(grid: Grid, svd_tol: float = SVD_TOL) -> int:
    """dim N at a = 0, where I+K = I - mean (constants only)."""
    n = grid.cell_count
    s = np.linalg.svd(np.eye(n) - np.full((n, n), 1.0 / n), compute_uv=False)
    return int(np.sum(s <= svd_tol * s[0]))


def sweep_point(base: PerturbedOperator, t: float, d0: int, svd_tol: float = SVD_TOL) -> SweepPoint:
    s = np.linalg.svd(base.scaled(t).dense_i_plus_k(), compute_uv=False)
    dim = int(np.sum(s <= svd_tol * s[0]))
    excess = s[-(d0 + 1)] / s[0]
    return SweepPoint(float(t), float(s[-1] / s[0]), float(excess), dim)


def singular_scan(a0: VectorField, ts, s0=None, coupling: str = "fitted",
                  svd_tol: float = SVD_TOL) -> list[SweepPoint]:
    g = a0.grid
    base = PerturbedOperator(g, a0, s0 or build_s0(g), coupling)
    d0 = structural_dim(g, svd_tol)
    return [sweep_point(base, t, d0, svd_tol) for t in ts]


def pencil_candidates(a0: VectorField, s0=None, coupling: str = "fitted", t_max: float = np.inf,
                      mean_tol: float = 1e-6) -> list[float]:
    """Real t = -1/lambda from eigenpairs of B = P'_{a0} S with mean-zero eigenvector.

    Exact for the linear coupling; for the fitted one B is the linearization at
    t = 0 and the candidates only seed the refinement.
    """
    g = a0.grid
    s0 = s0 or build_s0(g)
    B = coupling_matrix(a0, coupling, scale=0.0, derivative=True) @ s0.dense
    lam, vec = sl.eig(B)
    scale = np.abs(lam).max(initial=0.0)
    out = []
    for l, v in zip(lam, vec.T):
        if scale == 0 or abs(l.imag) > 1e-9 * scale or l.real >= -1e-14 * scale:
            continue
        v = v.real
        if abs(v.mean()) * np.sqrt(v.size) / np.linalg.norm(v) > mean_tol:
            continue
        t = -1.0 / l.real
        if t <= t_max:
            out.append(float(t))
    return sorted(out)


@dataclass(frozen=True)
class SingularScaling:
    t: float
    sigma_excess_ratio: float
    dim_n: int
    sigma_min_ratio: float = 0.0
    scan: tuple = ()


def _polish_v(objective, x, rounds=3):
    """Sharpen a minimizer of ``m |t - t*|`` by intersecting the two secant lines.

    Bounded Brent stops near sqrt(eps) |t|, which leaves sigma_excess around
    1e-13; two or three rounds here reach the SVD noise floor.
    """
    best_x, best_f = x, objective(x)
    delta = max(10 * np.sqrt(np.finfo(float).eps) * abs(x), 1e-9)
    for _ in range(rounds):
        xl, xr = x - delta, x + delta
        fl1, fl2 = objective(xl - delta), objective(xl)
        fr1, fr2 = objective(xr), objective(xr + delta)
        ml, mr = (fl2 - fl1) / delta, (fr2 - fr1) / delta
        if not (ml < 0 < mr):
            break
        t = (fr1 - fl2 + ml * xl - mr * xr) / (ml - mr)
        if not xl - delta <= t <= xr + delta:
            break
        ft = objective(t)
        if ft < best_f:
            best_x, best_f = t, ft
        x = t
        delta = max(abs(t - best_x), delta * 1e-3, 1e-14 * max(abs(t), 1.0))
    return best_x


def find_singular_scaling(a0: VectorField, grid: Grid | None = None, t_min: float = 0.0,
                          t_max: float = 20.0, steps: int = 200, s0=None, coupling: str = "fitted",
                          svd_tol: float = SVD_TOL, confirm_tol: float = 1e-8,
                          scan: list | None = None) -> SingularScaling:
    """Smallest t in [t_min, t_max], t > 0, where dim ker(I + K(t a0)) exceeds its value at t = 0.

    Raises NoRealSingularScaling when no such real t is confirmed; the
    message carries the closest approach.
    """
    g = grid or a0.grid
    if a0.grid != g:
        raise ValueError("field lives on a different grid")
    if not np.any(a0.flat()):
        raise NoRealSingularScaling("a0 = 0: the perturbation vanishes, no finite singular scaling")
    s0 = s0 or build_s0(g)
    base = PerturbedOperator(g, a0, s0, coupling)
    d0 = structural_dim(g, svd_tol)
    if scan is None:
        ts = np.linspace(t_min, t_max, steps + 1)
        scan = [sweep_point(base, t, d0, svd_tol) for t in ts]
    ts = np.array([p.t for p in scan])
    vals = np.array([p.sigma_excess_ratio for p in scan])

    def objective(t):
        return sweep_point(base, t, d0, svd_tol).sigma_excess_ratio

    brackets = []
    for k in range(1, len(ts) - 1):
        if vals[k] <= vals[k - 1] and vals[k] <= vals[k + 1]:
            brackets.append((ts[k - 1], ts[k + 1]))
    if len(ts) > 1 and vals[-1] < vals[-2]:
        brackets.append((ts[-2], ts[-1]))
    step = (ts[-1] - ts[0]) / max(len(ts) - 1, 1)
    for t in pencil_candidates(a0, s0, coupling, t_max):
        if t >= t_min:
            brackets.append((max(t - step, t_min, 1e-12), min(t + step, t_max)))

    best = (np.inf, None)
    hits = []
    for lo, hi in sorted(brackets):
        if hi <= 0:
            continue
        lo = max(lo, 1e-12)
        r = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-13 * max(1.0, hi)})
        val = float(r.fun)
        if val < best[0]:
            best = (val, float(r.x))
        if val <= confirm_tol:
            hits.append(float(r.x))
    hits = [_polish_v(objective, t) for t in hits]
    if not hits:
        where = "none" if best[1] is None else f"{best[0]:.3e} at t = {best[1]:.6g}"
        raise NoRealSingularScaling(
            f"no real t in [{t_min:g}, {t_max:g}] enlarges ker(I+K) beyond dim {d0}; "
            f"closest sigma_excess/sigma_1: {where}")
    t_star = min(hits)
    p = sweep_point(base, t_star, d0, svd_tol)
    return SingularScaling(t_star, p.sigma_excess_ratio, p.dim_n, p.sigma_min_ratio, tuple(scan))


# -- universality -----------------------------------------------------------------


def _weighted_apply(op, dec, f, weights):
    """S_a(f) with every analysis step done in the ``weights`` inner product.

    X (= N-perp in the plain inner product) is held fixed.
    """
    A = op.dense_i_plus_k()
    w = np.asarray(weights, dtype=float).ravel()
    ws = np.sqrt(w)
    kern = compute_kernel(A - np.eye(A.shape[0]), dec.svd_tol, weights=w)
    if kern.dim != dec.dim_n:
        raise IllConditioned(f"weighted threshold changed dim N: {kern.dim} vs {dec.dim_n}", np.inf)
    Z, E = dec.z, dec.preimages
    phi = kern.left
    beta = np.linalg.solve(phi.T @ Z, phi.T @ f) if dec.dim_n else np.zeros(0)
    zf = Z @ beta
    qf = f - zf
    # basis of X = N-perp, then weighted least squares for V(Q f)
    q_full, _ = np.linalg.qr(np.column_stack([dec.kernel, np.eye(A.shape[0])]))
    X = q_full[:, dec.dim_n:]
    coef, *_ = np.linalg.lstsq(ws[:, None] * (A @ X), ws * qf, rcond=None)
    x = X @ coef
    if dec.dim_n:
        W = w * op.grid.cell_area
        duals = Z @ np.linalg.inv(Z.T @ (W[:, None] * Z))
        c = duals.T @ (W * zf)
    else:
        c = np.zeros(0)
    return op.apply_s_flat(x) + E @ c


def universality_check(op: PerturbedOperator, dec: FredholmDecomposition, f: ScalarField,
                       weight_variants) -> float:
    """Max-norm spread of S_a(f) assembled under different analysis weights."""
    us = [_weighted_apply(op, dec, f.flat(), w) for w in weight_variants]
    if not us:
        return 0.0
    return float(max(np.abs(u - us[0]).max() for u in us))

