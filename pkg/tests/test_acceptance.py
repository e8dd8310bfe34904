"""Acceptance criteria 1-12, each at its stated tolerance.

Test names carry the criterion number; ``conftest.py`` prints one PASS/FAIL
line per criterion at the end of the run.
"""
import math
import subprocess
import sys

import numpy as np
import pytest
import scipy.linalg

from calderon.bourgain import (excluded_modes, invert_conjugated_laplacian, make_zeta,
                               p_on_grid, x_norm)
from calderon.cgo import (assemble_cgo, average_q_norm, cutoff_norm_check, sample_zeta_pair,
                          solve_remainder)
from calderon.conductivity import mollified_two_layer, shipped_models, unit
from calderon.config import ExperimentConfig
from calderon.dtn import dtn_gap, dtn_of_model, two_layer_reference
from calderon.extension import (boundary_difference_bound, extend, extend_pair,
                                outside_difference)
from calderon.potential import mq_norm_estimate
from calderon.spectral import ScalarField
from calderon.stability import fit_constant, fourier_probe, run_pipeline

PROBE_MODES = [(0, 0, 0), (2, 1, 0), (3, 0, 0), (2, 2, 1)]


# -- 1 ------------------------------------------------------------------------

def test_criterion_01_isometry(grid64):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(10):
        k = rng.integers(-4, 5, size=3) * grid64.dxi
        s = rng.uniform(max(1.0, np.linalg.norm(k) / 2), 40.0)
        zeta = make_zeta(k, s, rng.uniform(0, 2 * np.pi))
        for _ in range(100):
            f = ScalarField(grid64, rng.normal(size=grid64.shape) + 1j * rng.normal(size=grid64.shape))
            a = x_norm(invert_conjugated_laplacian(f, zeta), zeta, 0.5)
            b = x_norm(f, zeta, -0.5)
            worst = max(worst, abs(a - b) / b)
    print(f"criterion 1: worst relative isometry defect {worst:.2e}")
    assert worst <= 1e-12


# -- 2 ------------------------------------------------------------------------

def test_criterion_02_zeta_algebra():
    rng = np.random.default_rng(2)
    worst = [0.0, 0.0, 0.0]
    for _ in range(1000):
        k = rng.uniform(-10, 10, size=3)
        s = rng.uniform(max(1.0, np.linalg.norm(k) / 2), 100.0)
        z1, z2 = sample_zeta_pair(k, s, rng.uniform(0, 2 * np.pi))
        v = z1.vector
        worst[0] = max(worst[0], abs(np.dot(v, v)) / s**2)
        worst[1] = max(worst[1], abs(np.vdot(v, v).real - 2 * s**2) / s**2)
        worst[2] = max(worst[2], np.max(np.abs(z1.vector + z2.vector - 1j * k)) / s)
    print(f"criterion 2: zeta.zeta {worst[0]:.1e}, |zeta|^2 {worst[1]:.1e}, pair sum {worst[2]:.1e}")
    assert max(worst) <= 1e-12


# -- 3 ------------------------------------------------------------------------

def test_criterion_03_cgo_trivial(grid64):
    sigma = extend(unit(), grid64)
    zeta = make_zeta(np.array([2, 1, 0]) * grid64.dxi, 8.0, 0.4)
    sol = solve_remainder(sigma, zeta)
    asm = assemble_cgo(sigma, sol)
    exact = np.exp(grid64.points[asm.mask] @ zeta.vector)
    rel = np.max(np.abs(asm.u - exact)) / np.max(np.abs(exact))
    print(f"criterion 3: max|r| {sol.r.max_abs():.1e}, u error {rel:.1e}, "
          f"Laplace residual {asm.laplace_residual:.1e}")
    assert sol.r.max_abs() == 0.0
    assert rel <= 1e-12
    assert asm.laplace_residual <= 1e-6


# -- 4 ------------------------------------------------------------------------

@pytest.mark.parametrize("s", [8.0, 16.0, 32.0])
def test_criterion_04_neumann_contraction(gauss_ext64, s):
    zeta = make_zeta([0.0, 0.0, 0.0], s)
    kappa = mq_norm_estimate(gauss_ext64, zeta).kappa
    sol = solve_remainder(gauss_ext64, zeta)
    ratios = sol.ratios
    print(f"criterion 4: s={s} kappa={kappa:.4f} iters={sol.iterations} "
          f"max ratio={max(ratios, default=0):.4f} r={sol.r_norm:.4e} "
          f"q/(1-kappa)={sol.q_norm / (1 - kappa):.4e}")
    assert kappa < 1
    assert all(r <= kappa + 0.05 for r in ratios)
    assert sol.r_norm <= sol.q_norm / (1 - kappa)


# -- 5 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def probes(gauss_pair32, gauss_pair64):
    out = {}
    for label, (e1, e2) in (("32", gauss_pair32), ("64", gauss_pair64)):
        g = e1.grid
        out[label] = [fourier_probe(e1, e2, np.array(m) * g.dxi, 16.0) for m in PROBE_MODES]
    return out


def test_criterion_05_probe_residual(probes):
    res = [p.residual for p in probes["64"]]
    print("criterion 5: N=64 residuals", ", ".join(f"{r:.2e}" for r in res))
    assert max(res) <= 1e-3


def test_criterion_05_probe_refinement(probes):
    shrink = [a.residual / b.residual for a, b in zip(probes["32"], probes["64"])]
    print("criterion 5: N=32 -> 64 shrink factors", ", ".join(f"{s:.2f}" for s in shrink))
    assert min(shrink) >= 4.0


def test_criterion_05_t0_direct(probes):
    err = max(abs(p.T0 - p.T0_direct) for p in probes["64"])
    print(f"criterion 5: |T0 - direct| = {err:.1e}")
    assert err <= 1e-8


# -- 6 ------------------------------------------------------------------------

LAMBDAS = [8.0, 16.0, 32.0, 64.0]


@pytest.fixture(scope="module")
def decay(gauss_ext64):
    k = np.array([2, 1, 0]) * gauss_ext64.grid.dxi
    return [average_q_norm(gauss_ext64, k, lam, eps=0.5) for lam in LAMBDAS]


def test_criterion_06_averaged_decay(decay):
    fit = fit_constant([d.lhs for d in decay], [d.rhs for d in decay])
    print("criterion 6: lhs/rhs", ", ".join(f"{r:.4f}" for r in fit["ratios"]), f"C={fit['C']:.4f}")
    assert fit["passed"]


def test_criterion_06_first_term_rate(decay):
    # the h-dependent term is ||d log sigma||^2 / (h^2 lambda) with h = lambda^(-1/3)
    terms = [d.terms[1] for d in decay]
    ratios = [b / a for a, b in zip(terms, terms[1:])]
    print("criterion 6: term ratios per doubling", ratios)
    assert np.allclose(ratios, 2 ** (-1 / 3), rtol=1e-12, atol=0)


# -- 7 ------------------------------------------------------------------------

def test_criterion_07_dtn_unit():
    spec = dtn_of_model(unit(), 32)
    err = float(np.max(np.abs(spec.mu - np.arange(33))))
    print(f"criterion 7: unit spectrum error {err:.1e}")
    assert err <= 1e-8


def test_criterion_07_two_layer_limit():
    spec = dtn_of_model(mollified_two_layer(2.0, 0.5, 5e-4), 32, ode_steps=60000)
    ref = np.array([two_layer_reference(2.0, 0.5, l) for l in range(33)])
    err = float(np.max(np.abs(spec.mu - ref)))
    print(f"criterion 7: two-layer (w=5e-4) max deviation {err:.2e}")
    assert err <= 1e-4


def _rayleigh_gap(mu1, mu2, seed=0):
    # expand each degree l into its 2l+1 harmonics and rotate to a random basis
    L = len(mu1) - 1
    deg = np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])
    w = 1.0 + deg * (deg + 1.0)
    d = (np.asarray(mu1) - np.asarray(mu2))[deg]
    Q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(len(deg), len(deg))))
    A = Q.T @ np.diag(d * d / np.sqrt(w)) @ Q
    B = Q.T @ np.diag(np.sqrt(w)) @ Q
    return math.sqrt(max(scipy.linalg.eigh(A, B, eigvals_only=True)[-1], 0.0))


def test_criterion_07_gap_oracle():
    models = shipped_models()
    s1 = dtn_of_model(models["unit"], 16)
    for name in ("gaussian", "radial_polynomial", "two_layer"):
        s2 = dtn_of_model(models[name], 16)
        gap = dtn_gap(s1, s2)
        oracle = _rayleigh_gap(s1.mu, s2.mu)
        print(f"criterion 7: gap {name} {gap:.12e} oracle {oracle:.12e}")
        assert abs(gap - oracle) <= 1e-10


# -- 8 ------------------------------------------------------------------------

def test_criterion_08_cutoff_multiplier(grid64):
    # |k| in {0, 1, 2, 4, 8, 16} rounded to lattice multiples of pi/L along e1
    modes = [int(round(v / grid64.dxi)) for v in (0, 1, 2, 4, 8, 16)]
    rng = np.random.default_rng(8)
    noise = [rng.normal(size=grid64.shape) + 1j * rng.normal(size=grid64.shape) for _ in range(20)]
    rows = []
    for m in modes:
        k = np.array([m, 0, 0]) * grid64.dxi
        zeta = make_zeta(k, 16.0)
        p = np.abs(p_on_grid(zeta, grid64))
        keep = ~excluded_modes(zeta, grid64)
        wt = np.zeros(grid64.shape)
        wt[keep] = p[keep] ** -0.5
        # white noise in the homogeneous 1/2 space
        vals = [cutoff_norm_check(ScalarField(grid64, np.fft.fftn(f) * wt, "frequency").to_space(),
                                  zeta, k) for f in noise]
        rows.append(max(v["ratio"] / v["bracket_sqrt"] for v in vals))
    fit = fit_constant(rows, np.ones(len(rows)))
    print("criterion 8: max ratio / <k>^(1/2) per |k|:", ", ".join(f"{r:.4f}" for r in rows))
    assert fit["passed"]


# -- 9 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def shipped_extensions(grid64):
    return {name: extend(m, grid64) for name, m in shipped_models().items()}


def test_criterion_09_extension_models(grid64, shipped_extensions):
    r = grid64.radius
    inside = r <= 1.0
    for name, e in shipped_extensions.items():
        m = e.model
        agree = np.max(np.abs(e.values[inside] - m.value(grid64.points[inside])))
        outside = np.max(np.abs(e.values[r >= e.diagnostics["R"]] - 1.0))
        shell = (r > 1.0) & (r < 1.0 + e.eps0)
        pou = e.cover.partition_of_unity(grid64.points[shell])
        pou_err = np.max(np.abs(pou[pou > 0] - 1.0))
        print(f"criterion 9: {name}: agree {agree:.1e} outside {outside:.1e} "
              f"min {e.min():.4f} (>= {e.gamma0 / 2}) pou {pou_err:.1e}")
        assert agree <= 1e-10
        assert outside == 0.0
        assert e.min() >= e.gamma0 / 2
        assert pou_err <= 1e-10


def test_criterion_09_outside_control(grid64):
    models = shipped_models()
    names = sorted(models)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            e1, e2 = extend_pair(models[a], models[b], grid64)
            anchors = np.concatenate([e1.diagnostics["anchors"], e2.diagnostics["anchors"]])
            lhs = outside_difference(e1, e2)
            rhs = boundary_difference_bound(models[a], models[b], anchors)
            assert rhs - lhs >= 0, (a, b, lhs, rhs)


# -- 10, 11 -------------------------------------------------------------------

@pytest.fixture(scope="module")
def report():
    cfg = ExperimentConfig().validate()
    return run_pipeline(cfg)


def test_criterion_10_theorem_bound(report):
    for row in report.rows:
        print(f"criterion 10: tau={row['tau']:.0e} gap={row['dtn_gap']:.3e} "
              f"C0delta={row['gamma_c0delta']:.3e} rhs={row['theorem_rhs']:.6f}")
    assert [r["tau"] for r in report.rows] == [1e-1, 1e-2, 1e-3, 1e-4]
    assert all(r["status"] == "ok" for r in report.rows)
    assert report.fits["theorem"]["passed"]
    assert report.exponents == {"t": "1/13", "lambda": "10", "theta": "1/216", "hm1": "1/60"}


def test_criterion_11_forward_and_boundary(report):
    fwd, bnd = report.fits["forward"], report.fits["boundary"]
    print("criterion 11: forward ratios", fwd["ratios"], "boundary ratios", bnd["ratios"])
    assert fwd["passed"] and bnd["passed"]


# -- 12 -----------------------------------------------------------------------

def test_criterion_12_determinism(tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        proc = subprocess.run([sys.executable, "-m", "calderon", "pipeline", "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stdout + proc.stderr
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert set(outs[0]) == {"pipeline.json", "pipeline_report.csv", "pipeline_report.json"}
    assert outs[0] == outs[1]
