"""Complex geometrical optics solutions and the averaged decay of ``q``.

The remainder ``r`` solves ``(-Delta - 2 zeta . grad) r + q r = -q`` on the
torus; it is built by the Neumann iteration ``r <- P^-1 (-q - q r)`` where
``P^-1`` is the symbol ``1/p_zeta``.  The exponential ``e^{zeta.x}`` is only
evaluated pointwise on a ball, never on the torus.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bourgain import (Zeta, excluded_modes, invert_conjugated_laplacian, make_zeta,
                       p_on_grid, x_norm)
from .conductivity import modulus_of_continuity
from .potential import Potential, compute_q, cutoff, mq_norm_estimate
from .spectral import Ball, ScalarField, gradient, l2_norm, lattice_index

__all__ = [
    "DivergenceError",
    "ConvergenceError",
    "CgoSolution",
    "solve_remainder",
    "remainder_residual",
    "CgoAssembly",
    "assemble_cgo",
    "sample_zeta_pair",
    "AverageDecay",
    "average_q_norm",
    "average_rhs",
    "cutoff_norm_check",
    "bracket",
]


class DivergenceError(ArithmeticError):
    """The Neumann iteration stopped contracting."""

    def __init__(self, msg, record=None):
        super().__init__(msg)
        self.record = record or {}


class ConvergenceError(ArithmeticError):
    """The Neumann iteration hit ``max_iter`` before meeting the tolerance."""

    def __init__(self, msg, record=None):
        super().__init__(msg)
        self.record = record or {}


def bracket(k) -> float:
    """Japanese bracket ``(1 + |k|^2)^(1/2)``."""
    k = np.asarray(k, dtype=float)
    return math.sqrt(1.0 + float(np.dot(k, k)))


@dataclass
class CgoSolution:
    zeta: Zeta
    r: ScalarField
    iterations: int
    kappa: Optional[float]
    r_norm: float
    q_norm: float
    residual: float
    diffs: list = field(default_factory=list)
    dropped: float = 0.0

    @property
    def ratios(self) -> list:
        d = self.diffs
        return [d[i] / d[i - 1] for i in range(1, len(d)) if d[i - 1] > 0]

    def to_json(self) -> dict:
        z = self.zeta
        return {"k": list(z.k), "s": z.s, "theta": z.theta, "iters": self.iterations,
                "kappa": self.kappa, "q_norm": self.q_norm, "r_norm": self.r_norm,
                "residual": self.residual}


def remainder_residual(pot: Potential, zeta: Zeta, r: ScalarField) -> float:
    """Homogeneous -1/2 norm of ``(-Delta - 2 zeta . grad) r + q r + q``."""
    grid = pot.grid
    q = pot.q.space_values()
    rv = r.space_values()
    res_hat = p_on_grid(zeta, grid) * np.fft.fftn(rv) + np.fft.fftn(q * rv + q)
    return x_norm(ScalarField(grid, res_hat, "frequency"), zeta, -0.5)


def solve_remainder(sigma, zeta: Zeta, tol: float = 1e-10, max_iter: int = 200,
                    kappa: Optional[float] = None, check_contraction: bool = False) -> CgoSolution:
    """Neumann iteration for the CGO remainder.

    Parameters
    ----------
    sigma : conductivity field, extended conductivity or :class:`Potential`
    zeta : Zeta
    tol : float
        Stop once the residual is at most ``tol * ||q||`` (homogeneous -1/2 norm).
    max_iter : int
    kappa : float, optional
        Known contraction estimate; computed by power iteration when
        ``check_contraction`` is set.

    Raises
    ------
    DivergenceError
        Successive differences failed to shrink for 5 consecutive steps.
    ConvergenceError
        ``max_iter`` steps without meeting the tolerance.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    pot = compute_q(sigma)
    grid = pot.grid
    if check_contraction and kappa is None:
        kappa = mq_norm_estimate(pot, zeta).kappa
    q = pot.q.space_values()
    q_norm = x_norm(pot.q, zeta, -0.5)
    r = ScalarField(grid, np.zeros(grid.shape, dtype=complex))
    dropped = 0.0
    diffs = []
    if q_norm == 0:
        return CgoSolution(zeta, r, 1, 0.0 if kappa is None else kappa, 0.0, 0.0, 0.0, [0.0])
    bad = 0
    residual = math.inf
    for it in range(1, max_iter + 1):
        rhs = ScalarField(grid, -q - q * r.space_values())
        new, dropped = invert_conjugated_laplacian(rhs, zeta, return_dropped=True)
        diff = x_norm(new - r, zeta, 0.5)
        diffs.append(diff)
        r = new
        residual = remainder_residual(pot, zeta, r)
        if len(diffs) >= 2 and diffs[-2] > 0 and diffs[-1] / diffs[-2] >= 1:
            bad += 1
        else:
            bad = 0
        record = {"k": list(zeta.k), "s": zeta.s, "theta": zeta.theta, "iters": it,
                  "residual": residual, "q_norm": q_norm, "diffs": diffs[-6:]}
        if not np.isfinite(residual) or bad >= 5:
            raise DivergenceError(f"Neumann iteration diverges at s = {zeta.s}", record)
        if residual <= tol * q_norm:
            return CgoSolution(zeta, r, it, kappa, x_norm(r, zeta, 0.5), q_norm,
                               residual, diffs, dropped)
    raise ConvergenceError(f"no convergence in {max_iter} iterations (residual {residual:.3e})",
                           record)


def sample_zeta_pair(k, s: float, theta: float = 0.0, alternate_frame: bool = False):
    """``(zeta1, zeta2)`` with ``zeta1 + zeta2 = i k``."""
    return (make_zeta(k, s, theta, False, alternate_frame),
            make_zeta(k, s, theta, True, alternate_frame))


@dataclass
class CgoAssembly:
    u: np.ndarray
    mask: np.ndarray
    h1_norm: float
    bound: float
    max_abs_u: float
    pointwise_bound: float
    laplace_residual: float

    def to_json(self) -> dict:
        return {"h1_norm": self.h1_norm, "bound": self.bound, "max_abs_u": self.max_abs_u,
                "pointwise_bound": self.pointwise_bound, "laplace_residual": self.laplace_residual}


def assemble_cgo(sigma, sol: CgoSolution, ball_radius: float = 1.0) -> CgoAssembly:
    """Evaluate ``u = sigma^(-1/2) e^{zeta.x} (1 + r)`` on a ball and its H^1 norm.

    ``laplace_residual`` is ``||Delta v - q v|| / (|zeta|^2 ||v||)`` on the
    ball with ``v = e^{zeta.x}(1 + r)``, the derivatives of the exponential
    taken analytically and those of ``r`` spectrally.
    """
    pot = compute_q(sigma)
    cond = pot.sigma
    grid = pot.grid
    zeta = sol.zeta
    z = zeta.vector
    if ball_radius >= grid.L:
        raise ValueError("ball radius must be below L")
    if zeta.norm * ball_radius > 700:
        raise OverflowError(f"|zeta| R = {zeta.norm * ball_radius:.1f} exceeds the exponential range")
    mask = Ball(ball_radius).mask(grid)
    x = grid.points[mask]
    sig = np.real(cond.sigma.space_values())[mask]
    dsig = np.stack([np.real(g.space_values())[mask] for g in cond.grad], axis=-1)
    dlog = dsig / sig[:, None]
    r = sol.r.space_values()
    dr = gradient(sol.r)
    drm = np.stack([d.values[mask] for d in dr], axis=-1)
    lap_r = sum(gradient(dr[j])[j].values for j in range(grid.n))[mask]
    w = 1.0 + r[mask]
    ez = np.exp(x @ z)
    u = ez * w / np.sqrt(sig)
    du = (ez / np.sqrt(sig))[:, None] * ((z[None, :] - 0.5 * dlog) * w[:, None] + drm)
    cell = grid.cell_volume
    h1 = math.sqrt((np.sum(np.abs(u) ** 2) + np.sum(np.abs(du) ** 2)) * cell)

    # Laplace residual of the conjugated equation
    zz = np.dot(z, z)
    v = ez * w
    lap_v = ez * (zz * w + 2 * drm @ z + lap_r)
    qv = pot.q.space_values()[mask] * v
    denom = zeta.norm**2 * math.sqrt(np.sum(np.abs(v) ** 2) * cell)
    lres = math.sqrt(np.sum(np.abs(lap_v - qv) ** 2) * cell) / denom if denom else 0.0

    n = grid.n
    g0 = cond.gamma0
    E = math.exp(ball_radius * zeta.norm)
    sup_log = float(np.sum([g.max_abs() for g in pot.log_grad]))
    rn = sol.r_norm
    bound = (g0**-0.5 * E * (sup_log + zeta.norm)
             * (ball_radius ** (n / 2) + zeta.norm**-0.5 * rn)
             + g0**-0.5 * E * (1 + zeta.norm) ** 0.5 * rn)
    pw = g0**-0.5 * math.exp(zeta.s * math.sqrt(2) * ball_radius) * (1 + float(np.max(np.abs(r))))
    return CgoAssembly(u, mask, h1, bound, float(np.max(np.abs(u))), pw, lres)


# -- averaged decay -----------------------------------------------------------

@dataclass
class AverageDecay:
    lam: float
    h: float
    lhs: float
    rhs: float
    terms: tuple
    samples: np.ndarray

    def to_json(self) -> dict:
        return {"lambda": self.lam, "h": self.h, "lhs": self.lhs, "rhs": self.rhs,
                "terms": list(self.terms)}


def _q_norm_sq(q_hat_abs2: np.ndarray, zeta: Zeta, grid) -> float:
    # ||q||^2 in the homogeneous -1/2 space without caching the weight
    z = zeta.vector
    p = grid.xi_squared.astype(complex)
    for j, xi in enumerate(grid.freqs):
        p = p - 2j * z[j] * xi
    ap = np.abs(np.broadcast_to(p, grid.shape))
    scale = grid.xi_squared + 2 * zeta.norm * np.sqrt(grid.xi_squared)
    keep = ap > 1e-10 * scale
    keep[(0,) * grid.n] = False
    return float(np.sum(q_hat_abs2[keep] / ap[keep])) * grid.cell_volume / grid.size


def average_rhs(pot: Potential, k, lam: float, h: float, direction_samples: int = 26) -> tuple:
    """Three terms bounding the averaged potential norm."""
    grid = pot.grid
    sup2 = float(np.sum(pot.log_grad_sup() ** 2))
    l2sq = float(sum(l2_norm(g) ** 2 for g in pot.log_grad))
    om = float(sum(modulus_of_continuity(g, 2, h, direction_samples) ** 2 for g in pot.log_grad))
    t1 = sup2**2 / lam
    t2 = l2sq / (h * h * lam)
    t3 = (1 + bracket(k) ** 2 / lam) * om
    return t1, t2, t3


def average_q_norm(sigma, k, lam: float, n_s: int = 8, n_theta: int = 16,
                   h: Optional[float] = None, eps: float = 0.5,
                   alternate_frame: bool = False, direction_samples: int = 26) -> AverageDecay:
    """``(1/lambda) int_S int_lambda^2lambda ||q||^2 ds dl`` by trapezoid rules.

    ``s`` runs over ``n_s`` equispaced nodes of ``[lambda, 2 lambda]``
    (endpoints included) and ``theta`` over ``n_theta`` equispaced nodes of
    the circle.  ``h`` defaults to ``lambda^(-1/(2 + 2 eps))``.
    """
    knorm = float(np.linalg.norm(k))
    if lam < max(1.0, knorm):
        raise ValueError(f"lambda = {lam} must be at least max(1, |k|) = {max(1.0, knorm)}")
    pot = compute_q(sigma)
    grid = pot.grid
    h = lam ** (-1.0 / (2 + 2 * eps)) if h is None else h
    qa2 = np.abs(np.fft.fftn(pot.q.space_values())) ** 2
    s_nodes = np.linspace(lam, 2 * lam, n_s)
    ws = np.full(n_s, lam / (n_s - 1))
    ws[[0, -1]] *= 0.5
    thetas = 2 * np.pi * np.arange(n_theta) / n_theta
    samples = np.zeros((n_s, n_theta))
    if np.any(qa2):
        for i, s in enumerate(s_nodes):
            for j, th in enumerate(thetas):
                zeta = make_zeta(k, s, th, alternate_frame=alternate_frame)
                samples[i, j] = _q_norm_sq(qa2, zeta, grid)
    lhs = float(ws @ samples.sum(axis=1) * (2 * np.pi / n_theta) / lam)
    terms = average_rhs(pot, k, lam, h, direction_samples)
    return AverageDecay(lam, h, lhs, float(sum(terms)), terms, samples)


def cutoff_norm_check(w: ScalarField, zeta: Zeta, k, phi: Optional[ScalarField] = None) -> dict:
    """``||e^{ik.x} phi w||`` (inhomogeneous 1/2) over ``||w||`` (homogeneous 1/2)."""
    grid = w.grid
    lattice_index(grid, k)
    phi = cutoff(grid) if phi is None else phi
    kx = sum(float(k[j]) * grid.coords[j] for j in range(grid.n))
    prod = ScalarField(grid, np.exp(1j * kx) * phi.space_values() * w.space_values())
    num = x_norm(prod, zeta, 0.5, homogeneous=False)
    den = x_norm(w, zeta, 0.5)
    return {"ratio": num / den if den else math.inf, "numerator": num, "denominator": den,
            "bracket_sqrt": math.sqrt(bracket(k))}
