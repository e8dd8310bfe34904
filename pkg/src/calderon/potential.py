"""The Schrödinger potential of a conductivity and its multiplier.

For a smooth conductivity ``sigma`` the potential is
``q = sigma^(-1/2) Delta sigma^(1/2) = |grad log sigma|^2 / 4 + Delta log sigma / 2``,
and ``m_q`` is multiplication by ``q``.  The weak form of ``m_q`` is kept as
an independent oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bourgain import Zeta, excluded_modes, p_on_grid
from .conductivity import LowerBoundError, modulus_of_continuity
from .extension import _smooth_step
from .spectral import Grid, ScalarField, gradient, integrate

__all__ = [
    "Potential",
    "compute_q",
    "apply_mq",
    "weak_mq_pairing",
    "leibniz_mq_pairing",
    "q_pairing_split",
    "cutoff",
    "mollifier_kernel",
    "mollify",
    "MqNormEstimate",
    "mq_norm_estimate",
    "mq_theory_bound",
    "weighted_mq_matrix",
]


def cutoff(grid: Grid, R: Optional[float] = None) -> ScalarField:
    """Radial smooth cutoff: 1 on ``|x| <= R``, 0 on ``|x| >= 0.9 L``."""
    R = grid.L / 2 if R is None else R
    outer = 0.9 * grid.L
    if not R < outer:
        raise ValueError(f"cutoff radius {R} must be below 0.9 L = {outer}")
    t = (outer - grid.radius) / (outer - R)
    return ScalarField(grid, _smooth_step(t))


@dataclass(frozen=True, eq=False)
class Potential:
    """``q`` together with ``d_j log sigma`` and the cutoff ``phi``."""

    q: ScalarField
    log_grad: tuple
    phi: ScalarField
    sigma: object

    @property
    def grid(self) -> Grid:
        return self.q.grid

    def log_grad_sup(self) -> np.ndarray:
        return np.array([g.max_abs() for g in self.log_grad])


def _sigma_values(sigma) -> np.ndarray:
    return np.real(sigma.sigma.space_values())


def compute_q(sigma, R: Optional[float] = None) -> Potential:
    """Potential of a sampled conductivity (``ConductivityField`` or ``ExtendedConductivity``).

    ``log sigma`` is differentiated spectrally (Nyquist row dropped, so the
    Laplacian is ``sum_j D_j D_j``).
    """
    if isinstance(sigma, Potential):
        return sigma
    vals = _sigma_values(sigma)
    if np.min(vals) < sigma.gamma0 / 2:
        raise LowerBoundError(f"min sigma {np.min(vals):.4g} below gamma0/2 = {sigma.gamma0 / 2}")
    grid = sigma.sigma.grid
    logs = ScalarField(grid, np.log(vals))
    lg = gradient(logs)
    lap = np.zeros(grid.shape)
    sq = np.zeros(grid.shape)
    for j, g in enumerate(lg):
        lap += np.real(gradient(g)[j].values)
        sq += np.real(g.values) ** 2
    q = 0.25 * sq + 0.5 * lap
    lg = tuple(ScalarField(grid, np.real(g.values)) for g in lg)
    return Potential(ScalarField(grid, q), lg, cutoff(grid, R), sigma)


def apply_mq(sigma, v: ScalarField) -> ScalarField:
    """``m_q v = q v`` for the shipped smooth conductivities."""
    pot = compute_q(sigma)
    return pot.q * v


def _half_powers(sigma):
    grid = sigma.sigma.grid
    vals = _sigma_values(sigma)
    return ScalarField(grid, np.sqrt(vals)), ScalarField(grid, 1.0 / np.sqrt(vals))


def weak_mq_pairing(sigma, v: ScalarField, psi: ScalarField) -> complex:
    """``-int grad sigma^(1/2) . grad(sigma^(-1/2) v psi)`` with spectral gradients."""
    if isinstance(sigma, Potential):
        sigma = sigma.sigma
    sp, sm = _half_powers(sigma)
    a = gradient(sp)
    b = gradient(sm * v * psi)
    return -sum(integrate(a[j], b[j]) for j in range(len(a)))


def leibniz_mq_pairing(sigma, v: ScalarField, psi: ScalarField) -> complex:
    """Same pairing regrouped by the product rule:
    ``-int grad s^(1/2) . grad s^(-1/2) v psi - int s^(-1/2) grad s^(1/2) . grad(v psi)``.
    """
    if isinstance(sigma, Potential):
        sigma = sigma.sigma
    sp, sm = _half_powers(sigma)
    a = gradient(sp)
    c = gradient(sm)
    w = v * psi
    dw = gradient(w)
    first = sum(integrate(a[j] * c[j], w) for j in range(len(a)))
    second = sum(integrate(sm * a[j], dw[j]) for j in range(len(a)))
    return -first - second


def q_pairing_split(sigma, v: ScalarField) -> complex:
    """``<q, v> = 1/4 int |grad log s|^2 v - 1/2 int grad log s . grad v``."""
    pot = compute_q(sigma)
    sq = sum(g * g for g in pot.log_grad)
    dv = gradient(v)
    return 0.25 * integrate(sq, v) - 0.5 * sum(
        integrate(pot.log_grad[j], dv[j]) for j in range(len(dv)))


def mollifier_kernel(grid: Grid, h: float) -> np.ndarray:
    """Grid samples of ``psi_h`` at offsets in FFT ordering, normalized to unit mass."""
    if not 0 < h <= grid.L / 4:
        raise ValueError(f"h must lie in (0, L/4] = (0, {grid.L / 4}], got {h}")
    off = grid.dx * np.fft.fftfreq(grid.N, d=1.0 / grid.N)
    mesh = np.meshgrid(*([off] * grid.n), indexing="ij", sparse=True)
    r2 = sum(m * m for m in mesh) / h**2
    ker = np.where(r2 < 1, (1 - r2) ** 4, 0.0)
    ker = np.broadcast_to(ker, grid.shape)
    return ker / (np.sum(ker) * grid.cell_volume)


def mollify(f: ScalarField, h: float) -> ScalarField:
    """``psi_h * f`` by FFT, with ``psi`` the normalized bump ``(1 - |x|^2)^4``."""
    grid = f.grid
    ker = mollifier_kernel(grid, h)
    kh = np.fft.fftn(ker) * grid.cell_volume
    out = ScalarField(grid, f.to_frequency().values * kh, "frequency").to_space()
    if np.isrealobj(f.space_values()):
        out = ScalarField(grid, np.real(out.values))
    return out


@dataclass
class MqNormEstimate:
    kappa: float
    bound: float
    converged: bool
    iterations: int
    last_ratio: float
    terms: tuple

    def to_json(self) -> dict:
        return {"kappa": self.kappa, "bound": self.bound, "converged": self.converged,
                "iterations": self.iterations, "terms": list(self.terms)}


def _weighted_operator(q: np.ndarray, zeta: Zeta, grid: Grid):
    # A = D F q F^-1 D with D = |p|^(-1/2) off the excluded modes
    p = np.abs(p_on_grid(zeta, grid))
    D = np.zeros(grid.shape)
    keep = ~excluded_modes(zeta, grid)
    D[keep] = p[keep] ** -0.5

    def A(w):
        x = np.fft.ifftn(D * w, norm="ortho")
        return D * np.fft.fftn(q * x, norm="ortho")

    def AH(w):
        x = np.fft.ifftn(D * w, norm="ortho")
        return D * np.fft.fftn(np.conj(q) * x, norm="ortho")

    return A, AH


def weighted_mq_matrix(q: ScalarField, zeta: Zeta) -> np.ndarray:
    """Dense matrix of the weighted multiplication operator (small grids only)."""
    grid = q.grid
    if grid.size > 4096:
        raise ValueError("dense matrix requested on a large grid")
    qv = q.space_values()
    A, _ = _weighted_operator(qv, zeta, grid)
    cols = []
    for i in range(grid.size):
        e = np.zeros(grid.size, dtype=complex)
        e[i] = 1.0
        cols.append(A(e.reshape(grid.shape)).ravel())
    return np.stack(cols, axis=1)


def mq_theory_bound(pot: Potential, zeta_norm: float, eps: float,
                    direction_samples: int = 26) -> tuple:
    """Three terms of the m_q bound with ``h = |zeta|^(-1/(1+eps))``."""
    sup = pot.log_grad_sup()
    h = zeta_norm ** (-1.0 / (1.0 + eps))
    t1 = np.sum(sup**2) / zeta_norm
    t2 = zeta_norm ** (-eps / (1.0 + eps)) * np.sum(sup)
    t3 = sum(modulus_of_continuity(g, np.inf, h, direction_samples) for g in pot.log_grad)
    return float(t1), float(t2), float(t3)


def mq_norm_estimate(sigma, zeta: Zeta, iters: int = 200, tol: float = 1e-10,
                     eps: Optional[float] = None, seed: int = 0) -> MqNormEstimate:
    """Power-iteration estimate of ``||m_q||`` from the homogeneous 1/2 to -1/2 space.

    Non-convergence within ``iters`` steps is reported through ``converged``
    and ``last_ratio`` rather than raised.
    """
    pot = compute_q(sigma)
    grid = pot.grid
    if zeta.norm < 1:
        raise ValueError("|zeta| must be at least 1")
    eps = getattr(pot.sigma, "eps", 0.5) if eps is None else eps
    terms = mq_theory_bound(pot, zeta.norm, eps)
    qv = pot.q.space_values()
    if not np.any(qv):
        return MqNormEstimate(0.0, sum(terms), True, 0, 0.0, terms)
    A, AH = _weighted_operator(qv, zeta, grid)
    rng = np.random.default_rng(seed)
    w = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    w /= np.linalg.norm(w)
    est = 0.0
    ratio = math.inf
    converged = False
    it = 0
    for it in range(1, iters + 1):
        y = AH(A(w))
        lam = float(np.real(np.vdot(w, y)))
        ny = np.linalg.norm(y)
        if ny == 0:
            est, converged = 0.0, True
            break
        w = y / ny
        new = math.sqrt(max(lam, 0.0))
        ratio = abs(new - est) / max(new, 1e-300)
        est = new
        if ratio < tol:
            converged = True
            break
    return MqNormEstimate(est, float(sum(terms)), converged, it, ratio, terms)
