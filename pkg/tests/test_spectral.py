import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calderon.spectral import (Ball, Shell, ScalarField, apply_fourier_multiplier, create_grid,
                               dump_field, evaluate_points, fourier_coefficient, gradient, h1_ball_norm, integrate,
                               l2_norm, laplacian, lattice_index, load_field, sobolev_norm)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_field(grid, seed, real=False):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=grid.shape)
    if not real:
        v = v + 1j * rng.normal(size=grid.shape)
    return ScalarField(grid, v)


def gaussian(grid, w=0.5):
    return ScalarField.from_function(grid, lambda x, y, z: np.exp(-(x * x + y * y + z * z) / (2 * w * w)))


# -- grid ---------------------------------------------------------------------

def test_grid_lattice_small():
    g = create_grid(3, 4, math.pi)
    assert np.allclose(np.sort(g.freq_axis), [-2, -1, 0, 1])


def test_grid_spacing():
    g = create_grid(3, 8, 2 * math.pi)
    assert g.dxi == pytest.approx(0.5)
    assert g.dx == pytest.approx(math.pi / 2)


@pytest.mark.parametrize("args", [(3, 7, 1.0), (3, 2, 1.0), (4, 8, 1.0), (3, 8, 0.0)])
def test_grid_rejects(args):
    with pytest.raises(ValueError):
        create_grid(*args)


# -- multipliers --------------------------------------------------------------

def test_identity_multiplier(grid16):
    f = random_field(grid16, 0)
    out = apply_fourier_multiplier(f, 1.0)
    assert np.max(np.abs(out.values - f.values)) <= 1e-12 * np.max(np.abs(f.values))


def test_plane_wave_derivative(grid16):
    xi0 = np.array([2, -1, 3]) * grid16.dxi
    f = ScalarField.from_function(grid16, lambda x, y, z: np.exp(1j * (xi0[0] * x + xi0[1] * y + xi0[2] * z)))
    out = apply_fourier_multiplier(f, lambda a, b, c: 1j * a)
    assert np.allclose(out.values, 1j * xi0[0] * f.values, atol=1e-12)


def test_laplacian_matches_finite_difference():
    # error of the 7-point stencil against the spectral Laplacian is O(dx^2)
    errs = []
    for N in (32, 64):
        g = create_grid(3, N, 3.0)
        f = gaussian(g)
        spec = np.real(laplacian(f).values)
        v = np.real(f.values)
        fd = sum(np.roll(v, 1, a) + np.roll(v, -1, a) - 2 * v for a in range(3)) / g.dx**2
        errs.append(np.max(np.abs(fd - spec)))
    assert errs[1] < errs[0] / 3.5


def test_multiplier_non_finite_rejected(grid16):
    with pytest.raises(ValueError):
        apply_fourier_multiplier(random_field(grid16, 0), np.full(grid16.shape, np.inf))


# -- integration --------------------------------------------------------------

def test_volume(grid16):
    one = ScalarField(grid16, np.ones(grid16.shape))
    assert integrate(one, one).real == pytest.approx((2 * grid16.L) ** 3, rel=1e-14)


def test_mode_orthogonality(grid16):
    d = grid16.dxi
    a = ScalarField.from_function(grid16, lambda x, y, z: np.exp(1j * d * x))
    b = ScalarField.from_function(grid16, lambda x, y, z: np.exp(1j * 2 * d * y))
    assert abs(integrate(a, b)) <= 1e-12


def test_ball_volume_converges():
    # voxel counts fluctuate with N (lattice points in a ball), so the
    # observed order is a least-squares slope over a refinement sweep
    Ns = [16, 20, 24, 32, 40, 48, 64, 80, 96, 128]
    errs = []
    for N in Ns:
        g = create_grid(3, N, 3.0)
        one = ScalarField(g, np.ones(g.shape))
        errs.append(abs(integrate(one, region=Ball(1.0)).real - 4 * math.pi / 3))
    rate = np.polyfit(np.log([6.0 / N for N in Ns]), np.log(errs), 1)[0]
    assert rate >= 1.0
    assert errs[-1] < 0.01


def test_shell_splits_ball(grid16):
    one = ScalarField(grid16, np.ones(grid16.shape))
    whole = integrate(one, region=Ball(2.0))
    parts = integrate(one, region=Ball(1.0)) + integrate(one, region=Shell(1.0, 2.0))
    assert whole == pytest.approx(parts)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_integrate_conjugate_symmetric(seed):
    g = create_grid(3, 8, 2.0)
    f, h = random_field(g, seed), random_field(g, seed + 1)
    assert integrate(f, h) == pytest.approx(np.conj(integrate(h.conj(), f.conj())), rel=1e-13)


# -- norms --------------------------------------------------------------------

def test_sobolev_single_mode(grid16):
    xi0 = np.array([1, 2, 0]) * grid16.dxi
    a = 0.7 - 0.2j
    f = ScalarField.from_function(grid16, lambda x, y, z: a * np.exp(1j * (xi0[0] * x + xi0[1] * y)))
    for s in (-1.0, 0.5, 2.0):
        # one-term sum: the L^2 mass of a e^{i xi0 x} is |a| (2L)^{n/2}
        expected = abs(a) * (1 + xi0 @ xi0) ** (s / 2) * (2 * grid16.L) ** 1.5
        assert sobolev_norm(f, s) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_parseval(seed):
    g = create_grid(3, 8, 2.0)
    f = random_field(g, seed)
    assert sobolev_norm(f, 0) == pytest.approx(l2_norm(f), rel=1e-12)
    assert sobolev_norm(f, 0) == pytest.approx(math.sqrt(integrate(f, f.conj()).real), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_roundtrip(seed):
    g = create_grid(3, 8, 2.0)
    f = random_field(g, seed)
    back = f.to_frequency().to_space()
    assert np.max(np.abs(back.values - f.values)) <= 1e-12 * np.max(np.abs(f.values))


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_multiplier_composition(seed):
    g = create_grid(3, 8, 2.0)
    rng = np.random.default_rng(seed)
    f = random_field(g, seed)
    m1 = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    m2 = rng.normal(size=g.shape)
    a = apply_fourier_multiplier(apply_fourier_multiplier(f, m1), m2)
    b = apply_fourier_multiplier(f, m1 * m2)
    assert np.max(np.abs(a.values - b.values)) <= 1e-12 * max(1.0, np.max(np.abs(b.values)))


def test_sobolev_minus_one_dense_oracle(grid16):
    f = gaussian(grid16)
    # brute-force DFT sum, independent of the FFT path
    x = grid16.axis
    m = np.fft.fftfreq(16, d=1.0 / 16)
    E = np.exp(-1j * np.outer(m * grid16.dxi, x))
    coef = np.einsum("ai,bj,ck,ijk->abc", E, E, E, np.real(f.values)) * grid16.cell_volume
    xi2 = (m[:, None, None] ** 2 + m[None, :, None] ** 2 + m[None, None, :] ** 2) * grid16.dxi**2
    oracle = math.sqrt(np.sum(np.abs(coef) ** 2 / (1 + xi2)) / (2 * grid16.L) ** 3)
    assert sobolev_norm(f, -1) == pytest.approx(oracle, rel=1e-12)


def test_h1_ball_constant():
    g = create_grid(3, 64, 3.0)
    f = ScalarField(g, np.full(g.shape, 2.0))
    assert h1_ball_norm(f, 1.0) == pytest.approx(2 * math.sqrt(4 * math.pi / 3), rel=0.02)


def test_h1_ball_linear():
    g = create_grid(3, 64, 3.0)
    # x1 times a smooth cutoff equal to 1 on |x| < 1.5
    cut = 0.5 * (1 - np.tanh((g.radius - 2.2) / 0.15))
    f = ScalarField(g, g.coords[0] * cut)
    exact = math.sqrt(4 * math.pi / 3 + 4 * math.pi / 15)  # int_B 1 + x1^2
    assert h1_ball_norm(f, 1.0) == pytest.approx(exact, rel=0.02)


def test_h1_ball_zero(grid16):
    assert h1_ball_norm(ScalarField.zeros(grid16), 1.0) == 0.0


# -- lattice helpers and dumps -------------------------------------------------

def test_lattice_index_rejects_off_lattice(grid16):
    with pytest.raises(ValueError):
        lattice_index(grid16, [0.3, 0.0, 0.0])


def test_fourier_coefficient_plane_wave(grid16):
    k = np.array([1, -2, 3]) * grid16.dxi
    f = ScalarField.from_function(grid16, lambda x, y, z: np.exp(1j * (k[0] * x + k[1] * y + k[2] * z)))
    assert fourier_coefficient(f, k) == pytest.approx((2 * grid16.L) ** 3, rel=1e-12)
    assert abs(fourier_coefficient(f, -k)) <= 1e-10


def test_dump_roundtrip(tmp_path, grid16):
    f = random_field(grid16, 3)
    path = dump_field(f, tmp_path / "f.f64", "f")
    g = load_field(path)
    assert g.grid == grid16
    assert np.array_equal(g.values, f.values)
    assert path.stat().st_size == 16**3 * 16


def test_gradient_of_linear_mode(grid16):
    k = np.array([0, 1, 0]) * grid16.dxi
    f = ScalarField.from_function(grid16, lambda x, y, z: np.sin(k[1] * y))
    g = gradient(f)
    assert np.allclose(g[1].values, k[1] * np.cos(k[1] * grid16.coords[1]) * np.ones(grid16.shape), atol=1e-12)
    assert np.max(np.abs(g[0].values)) <= 1e-12


def test_evaluate_points_on_grid_and_plane_wave(grid16):
    f = random_field(grid16, 9)
    idx = np.random.default_rng(0).integers(0, grid16.size, 50)
    pts = grid16.points.reshape(-1, 3)[idx]
    assert np.allclose(evaluate_points(f, pts), f.values.ravel()[idx], atol=1e-12)
    k = np.array([1, -2, 3]) * grid16.dxi
    w = ScalarField.from_function(grid16, lambda x, y, z: np.exp(1j * (k[0] * x + k[1] * y + k[2] * z)))
    off = np.random.default_rng(1).uniform(-2, 2, size=(40, 3))
    assert np.allclose(evaluate_points(w, off), np.exp(1j * off @ k), atol=1e-12)
