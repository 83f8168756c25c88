import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from divsolve.config import PRESETS
from divsolve.divinverse import build_s0
from divsolve.errors import FailedTransversality, GradientFieldDetected, NoRealSingularScaling
from divsolve.fieldexpr import sample_scalar, sample_vector
from divsolve.fredholm import (
    KernelData, SolverOptions, bump_candidates, bump_field, build_complement_Z, build_decomposition, build_right_inverse,
    check_invariants, compute_kernel, find_singular_scaling, pairing_condition, singular_scan,
    solve, structural_dim, universality_check,
)
from divsolve.grid import ScalarField, VectorField, build_grid
from divsolve.perturbation import PerturbedOperator, build_k

from helpers import random_gradient_field, random_scalar, random_vector_field, rotation


def _ta_residual(op, u, f):
    return np.linalg.norm(op.ta_matrix @ u.flat() - f.flat()) / np.linalg.norm(f.flat())


@pytest.fixture(scope="module")
def singular_case():
    g = build_grid(12, 12)
    a0 = sample_vector(*PRESETS["odd_shear"], g)
    hit = find_singular_scaling(a0, t_max=20.0, steps=200)
    op = PerturbedOperator(g, a0 * hit.t, build_s0(g))
    return a0, hit, op


def test_kernel_at_zero_is_constants():
    g = build_grid(6, 6)
    kern = compute_kernel(PerturbedOperator(g, VectorField.zeros(g)))
    assert kern.dim == 1
    v = kern.basis[:, 0]
    assert np.abs(np.abs(v) - 1 / np.sqrt(g.cell_count)).max() <= 1e-12


def test_kernel_accepts_every_representation():
    g = build_grid(5, 5)
    op = PerturbedOperator(g, rotation(g))
    dims = {compute_kernel(k).dim for k in (op, build_k(op), op.dense_k)}
    assert dims == {1}


def test_rotation_kernel_has_no_excess():
    # constants are always in the kernel; beyond them the rotation is nonsingular
    g = build_grid(12, 12)
    kern = compute_kernel(PerturbedOperator(g, rotation(g)))
    assert kern.dim == 1
    s = kern.singular_values
    assert s[-2] / s[0] > 1e-6
    assert np.ptp(kern.basis[:, 0]) <= 1e-10


def test_generic_fields_have_only_the_structural_kernel(rng):
    g = build_grid(12, 12)
    s0 = build_s0(g)
    dims = []
    for _ in range(100):
        a = random_vector_field(g, rng, amplitude=rng.uniform(0.5, 5.0))
        dims.append(compute_kernel(PerturbedOperator(g, a, s0)).dim)
    assert dims.count(1) >= 95
    assert structural_dim(g) == 1


def test_empty_kernel_draws_no_bumps():
    g = build_grid(6, 6)
    op = PerturbedOperator(g, rotation(g))
    n = g.cell_count
    empty = KernelData(np.zeros((n, 0)), np.zeros((n, 0)), np.ones(n), 1e-10)
    Z, E, info = build_complement_Z(op, empty)
    assert Z.shape == (n, 0) and E.shape == (g.face_count, 0) and info["tried"] == 0


def test_transversality_failure_is_reported():
    g = build_grid(6, 6)
    op = PerturbedOperator(g, rotation(g))
    kern = compute_kernel(op)
    # with no margin only one candidate is drawn; hide the deficiency from it
    (center, angle), = bump_candidates(g, 1, 0)[0]
    z = op.ta_matrix @ bump_field(g, center, angle, 0.2).flat()
    psi = np.random.default_rng(0).standard_normal(g.cell_count)
    psi -= (psi @ z) / (z @ z) * z
    fake = KernelData(kern.basis, psi[:, None], kern.singular_values, 1e-10)
    with pytest.raises(FailedTransversality):
        build_complement_Z(op, fake, bump_count_margin=0, rng_seed=0)


@pytest.mark.parametrize("method", ["auto", "svd"])
def test_invariants_rotation(method):
    g = build_grid(12, 12)
    op = PerturbedOperator(g, rotation(g))
    dec = build_decomposition(op, method=method)
    assert dec.dim_n == dec.dim_z == 1
    assert dec.branch == "corrected"
    bad = {k: v for k, v in check_invariants(op, dec).items() if not v[2]}
    assert not bad


def test_auto_and_svd_routes_agree(rng):
    g = build_grid(10, 10)
    op = PerturbedOperator(g, rotation(g))
    f = random_scalar(g, rng)
    d1 = build_decomposition(op, method="auto")
    d2 = build_decomposition(op, method="svd")
    assert (d1.method, d2.method) == ("bordered", "svd")
    u1 = build_right_inverse(op, d1).apply(f).flat()
    u2 = build_right_inverse(op, d2).apply(f).flat()
    assert np.abs(u1 - u2).max() <= 1e-9 * np.abs(u2).max()


def test_singular_scaling_found(singular_case):
    a0, hit, op = singular_case
    assert 0 < hit.t <= 20
    assert hit.sigma_excess_ratio <= 1e-8
    assert hit.dim_n >= 2


def test_singular_scaling_is_a_strict_minimum(singular_case):
    a0, hit, _ = singular_case
    near = singular_scan(a0, [0.99 * hit.t, hit.t])
    assert near[0].sigma_excess_ratio > near[1].sigma_excess_ratio


def test_invariants_at_singular_scaling(singular_case):
    _, _, op = singular_case
    dec = build_decomposition(op, method="auto")
    assert dec.method == "svd"  # the cheap certificate must refuse dim N = 1 here
    assert dec.dim_n == dec.dim_z == 2
    bad = {k: v for k, v in check_invariants(op, dec).items() if not v[2]}
    assert not bad


def test_complement_is_transversal_at_singular_scaling(singular_case):
    _, _, op = singular_case
    dec = build_decomposition(op, method="svd")
    A = op.dense_i_plus_k()
    U, s, _ = np.linalg.svd(A)
    n, d = A.shape[0], dec.dim_n
    aug = np.column_stack([U[:, :n - d], dec.z / np.linalg.norm(dec.z, axis=0)])
    assert np.linalg.matrix_rank(aug, tol=1e-8) == n
    assert pairing_condition(dec.left, dec.z) <= 1e6


def test_corrected_solve_at_singular_scaling(singular_case, rng):
    _, _, op = singular_case
    dec = build_decomposition(op, method="svd")
    sa = build_right_inverse(op, dec)
    for _ in range(5):
        f = random_scalar(op.grid, rng)
        assert _ta_residual(op, sa.apply(f), f) <= 1e-6


def test_complement_element_maps_to_its_preimage(singular_case):
    _, _, op = singular_case
    dec = build_decomposition(op, method="svd")
    sa = build_right_inverse(op, dec)
    for k in range(dec.dim_z):
        e = ScalarField.from_flat(op.grid, dec.z[:, k])
        assert np.linalg.norm(dec.q(dec.z[:, k])) <= 1e-8 * np.linalg.norm(dec.z[:, k])
        u = sa.apply(e).flat()
        pre = dec.preimages[:, k]
        assert np.linalg.norm(u - pre) <= 1e-8 * np.linalg.norm(pre)
        assert _ta_residual(op, VectorField.from_flat(op.grid, u), e) <= 1e-8


def test_seeds_change_bumps_not_the_contract(singular_case):
    _, _, op = singular_case
    f = sample_scalar("sin(3*x)*cos(2*y) + 1", op.grid)
    decs = [build_decomposition(op, seed=s, method="svd") for s in (0, 1)]
    assert decs[0].dim_z == decs[1].dim_z
    assert decs[0].bump_centers != decs[1].bump_centers
    for dec in decs:
        assert _ta_residual(op, build_right_inverse(op, dec).apply(f), f) <= 1e-8


def test_zero_rhs_gives_zero():
    g = build_grid(8, 8)
    op = PerturbedOperator(g, rotation(g))
    u = build_right_inverse(op, build_decomposition(op)).apply(ScalarField.zeros(g))
    assert not u.flat().any()


def test_solve_rotation_32(rng):
    g = build_grid(32, 32)
    f = sample_scalar("sin(2*pi*x)*cos(pi*y) + 0.3", g)
    u, cert, extras = solve(rotation(g), f)
    assert cert.residual <= 1e-8
    assert cert.dim_n == cert.dim_z == 1
    assert np.isfinite(cert.condition)
    assert not u.ux[0].any() and not u.uy[:, -1].any()


def test_solve_rejects_gradients():
    g = build_grid(8, 8)
    with pytest.raises(GradientFieldDetected):
        solve(sample_vector("1", "0", g), ScalarField.constant(g, 1.0))
    with pytest.raises(GradientFieldDetected):
        solve(VectorField.zeros(g), ScalarField.constant(g, 1.0))


def test_solve_delegates_gradients_when_asked(rng):
    g = build_grid(10, 10)
    a, A = random_gradient_field(g, rng)
    f = random_scalar(g, rng)
    f = ScalarField(g, f.values - np.sum(np.exp(A.values) * f.values) / np.sum(np.exp(A.values)))
    u, cert, _ = solve(a, f, SolverOptions(delegate_gradient=True))
    assert cert.branch == "gradient" and cert.ok


def test_linearity_with_shared_decomposition(rng):
    g = build_grid(16, 16)
    op = PerturbedOperator(g, random_vector_field(g, rng))
    sa = build_right_inverse(op, build_decomposition(op))
    f1, f2 = random_scalar(g, rng), random_scalar(g, rng)
    lhs = sa.apply(f1 + f2).flat()
    rhs = sa.apply(f1).flat() + sa.apply(f2).flat()
    assert np.abs(lhs - rhs).max() <= 1e-9


@settings(max_examples=15)
@given(n=st.integers(3, 10), seed=st.integers(0, 2**32 - 1), amp=st.floats(0.2, 8.0))
def test_matches_dense_pseudo_inverse(n, seed, amp):
    g = build_grid(n, n)
    r = np.random.default_rng(seed)
    op = PerturbedOperator(g, random_vector_field(g, r, amp))
    f = random_scalar(g, r)
    u = build_right_inverse(op, build_decomposition(op)).apply(f)
    T = op.dense_ta()
    res_ours = np.linalg.norm(T @ u.flat() - f.flat())
    res_pinv = np.linalg.norm(T @ (np.linalg.pinv(T) @ f.flat()) - f.flat())
    assert abs(res_ours - res_pinv) <= 1e-8


def test_no_singular_scaling_for_zero_field():
    g = build_grid(6, 6)
    with pytest.raises(NoRealSingularScaling):
        find_singular_scaling(VectorField.zeros(g))


def test_universality(rng):
    g = build_grid(12, 12)
    op = PerturbedOperator(g, rotation(g))
    dec = build_decomposition(op)
    f = random_scalar(g, rng)
    x, y = g.cell_centers()
    variants = [np.ones(g.cell_count), (1 + x + y).ravel(), np.exp(np.sin(5 * x) * y).ravel()]
    assert universality_check(op, dec, f, variants) <= 1e-9
    assert universality_check(op, dec, f, [variants[1], variants[1]]) == 0.0


def test_universality_at_singular_scaling(singular_case, rng):
    _, _, op = singular_case
    dec = build_decomposition(op, method="svd")
    g = op.grid
    x, y = g.cell_centers()
    variants = [np.ones(g.cell_count), (2 - x * y).ravel(), (0.5 + x ** 2).ravel()]
    assert universality_check(op, dec, random_scalar(g, rng), variants) <= 1e-9


def test_summary_lists_bumps(singular_case):
    _, _, op = singular_case
    text = build_decomposition(op, method="svd").summary()
    assert "dim_N = 2" in text and "bump_1" in text
