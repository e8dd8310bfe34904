from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calderon.conductivity import gaussian_bump, radial_polynomial
from calderon.dtn import (DtnBlowupError, DtnSpectrum, dtn_gap, dtn_of_model, dump_spectrum,
                          gap_terms, load_spectrum, radial_dtn, two_layer_reference)


def const(c):
    return (lambda r: c + 0 * np.asarray(r, dtype=float), lambda r: 0 * np.asarray(r, dtype=float))


def matching_oracle(a, rho, l):
    # unknowns (B, C) for f = B r^l + C r^(-l-1) outside, f = r^l inside
    M = np.array([[rho**l, rho ** (-l - 1)],
                  [l * rho ** (l - 1), -(l + 1) * rho ** (-l - 2)]], dtype=float)
    rhs = np.array([rho**l, a * l * rho ** (l - 1) if l else 0.0])
    B, C = np.linalg.solve(M, rhs)
    return (l * B - (l + 1) * C) / (B + C)


def test_unit_is_identity_degree():
    spec = radial_dtn(const(1.0), 32)
    assert np.max(np.abs(spec.mu - np.arange(33))) <= 1e-8


def test_constant_scales():
    spec = radial_dtn(const(2.5), 16)
    assert np.allclose(spec.mu, 2.5 * np.arange(17), atol=1e-8)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 10.0))
def test_scaling_invariance(c):
    m = gaussian_bump(0.3, w=0.4)
    gam, dgam = m.radial_profile()
    a = radial_dtn((gam, dgam), 16, 400)
    b = radial_dtn((lambda r: c * gam(r), lambda r: c * dgam(r)), 16, 400)
    assert np.allclose(b.mu, c * a.mu, rtol=1e-10, atol=1e-10)


def test_fourth_order_convergence():
    prof = gaussian_bump(0.3, w=0.4).radial_profile()
    ref = radial_dtn(prof, 8, 12800).mu
    errs = [np.max(np.abs(radial_dtn(prof, 8, n).mu - ref)) for n in (200, 400, 800)]
    rates = [np.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(3.5 < r < 4.5 for r in rates)


def test_monotone_in_degree():
    for m in (gaussian_bump(0.3, w=0.4), radial_polynomial([1.0, 0.05])):
        mu = dtn_of_model(m, 32).mu
        assert mu[0] >= -1e-12
        assert np.all(np.diff(mu) > 0)


# -- two-layer reference -------------------------------------------------------------

def test_two_layer_homogeneous():
    for l in range(10):
        assert two_layer_reference(1.0, 0.5, l) == pytest.approx(l, abs=1e-14)


def test_two_layer_l0():
    assert two_layer_reference(2.0, 0.5, 0) == 0.0


def test_two_layer_hand_value():
    # l = 1, a = 2, rho = 1/2: D = -1/3, B = 4/3, C = -1/24
    assert two_layer_reference(2.0, 0.5, 1) == pytest.approx(float(Fraction(34, 31)), rel=1e-15)


@pytest.mark.parametrize("a,rho", [(2.0, 0.5), (0.3, 0.7), (5.0, 0.2)])
def test_two_layer_matches_linear_solve(a, rho):
    for l in range(0, 12):
        assert two_layer_reference(a, rho, l) == pytest.approx(matching_oracle(a, rho, l), rel=1e-12, abs=1e-14)


def test_two_layer_rejects():
    with pytest.raises(ValueError):
        two_layer_reference(2.0, 1.5, 1)


# -- gap -----------------------------------------------------------------------------

def test_gap_identical_zero():
    s = radial_dtn(const(1.0), 8)
    assert dtn_gap(s, s) == 0.0


def test_gap_single_degree():
    mu = np.arange(9, dtype=float)
    other = mu.copy()
    other[3] += 0.7
    g = dtn_gap(DtnSpectrum(mu, 0), DtnSpectrum(other, 0))
    assert g == pytest.approx(0.7 / np.sqrt(13), rel=1e-15)


def test_gap_tail_term():
    a = dtn_of_model(gaussian_bump(0.3, w=0.4), 16)
    b = radial_dtn(const(1.0), 16)
    gap, tail = dtn_gap(a, b, with_tail=True)
    assert tail == gap_terms(a, b)[-1]
    assert tail <= gap


def test_gap_mismatch():
    with pytest.raises(ValueError):
        dtn_gap(DtnSpectrum(np.zeros(5), 0), DtnSpectrum(np.zeros(6), 0))


# -- io and errors -------------------------------------------------------------------

def test_csv_roundtrip(tmp_path):
    spec = dtn_of_model(gaussian_bump(0.3, w=0.4), 8)
    path = dump_spectrum(spec, tmp_path / "mu.csv")
    assert path.read_text().splitlines()[0] == "l,mu"
    assert np.array_equal(load_spectrum(path).mu, spec.mu)


def test_nonpositive_profile():
    with pytest.raises(ValueError):
        radial_dtn((lambda r: 1.0 - 2 * np.asarray(r), lambda r: -2.0 + 0 * np.asarray(r)), 4)


def test_too_few_steps_rejected():
    with pytest.raises(ValueError):
        radial_dtn(const(1.0), 32, ode_steps=2)


def test_blowup_reported():
    # gamma = e^{50 r^2}: the drift r gamma'/gamma = 100 r^2 is stiff near r = 1
    prof = (lambda r: np.exp(50 * np.asarray(r, dtype=float) ** 2),
            lambda r: 100 * np.asarray(r, dtype=float) * np.exp(50 * np.asarray(r, dtype=float) ** 2))
    with pytest.raises(DtnBlowupError) as info:
        radial_dtn(prof, 4, ode_steps=30)
    assert 0 <= info.value.l <= 4 and 0 < info.value.r <= 1
