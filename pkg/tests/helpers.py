"""Field factories shared by the test modules."""

import numpy as np

from divsolve.grid import ScalarField, VectorField, discrete_grad


def smooth_samples(x, y, coeffs):
    out = np.zeros_like(x)
    for c, kx, ky, phase in coeffs:
        out += c * np.sin(np.pi * kx * x + phase) * np.cos(np.pi * ky * y + 0.5 * phase)
    return out


def _coeffs(rng, terms):
    return [(rng.normal(), rng.integers(0, 3), rng.integers(0, 3), rng.uniform(0, 2 * np.pi))
            for _ in range(terms)]


def random_vector_field(grid, rng, amplitude=1.0, terms=4):
    """Smooth face field with independent random components (a.s. not a gradient)."""
    xx, xy = grid.xface_centers()
    yx, yy = grid.yface_centers()
    ux = amplitude * smooth_samples(xx, xy, _coeffs(rng, terms))
    uy = amplitude * smooth_samples(yx, yy, _coeffs(rng, terms))
    # a rotational part keeps the curl away from zero
    w = rng.uniform(0.5, 1.5) * amplitude
    ux = ux - w * (xy - 0.5 * grid.ly)
    uy = uy + w * (yx - 0.5 * grid.lx)
    return VectorField.masked(grid, ux, uy)


def random_potential(grid, rng, amplitude=1.0, terms=4):
    x, y = grid.cell_centers()
    lin = rng.normal(size=2)
    v = amplitude * (smooth_samples(x, y, _coeffs(rng, terms)) + lin[0] * x + lin[1] * y)
    return ScalarField(grid, v)


def random_gradient_field(grid, rng, amplitude=1.0):
    """Discrete gradient of a random smooth potential, with the potential."""
    A = random_potential(grid, rng, amplitude)
    return discrete_grad(A), A


def random_scalar(grid, rng):
    return ScalarField(grid, rng.standard_normal((grid.nx, grid.ny)))


def rotation(grid, scale=1.0):
    xx, xy = grid.xface_centers()
    yx, yy = grid.yface_centers()
    return VectorField.masked(grid, -scale * xy, scale * yx)
