"""Dirichlet-to-Neumann eigenvalues of radial conductivities on the unit ball.

For ``gamma = gamma(r)`` the map is diagonal on spherical harmonics: the
degree-``l`` eigenvalue is ``gamma(1) f'(1) / f(1)`` where ``f`` is the
regular solution of ``(gamma r^2 f')' = gamma l(l+1) f``.  The ODE is solved
for ``g = r f'/f`` in the variable ``t = log r``::

    dg/dt = l(l+1) - g - g^2 - r (gamma'/gamma) g

which never overflows, whatever ``l``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

__all__ = [
    "DtnSpectrum",
    "DtnBlowupError",
    "radial_dtn",
    "dtn_of_model",
    "two_layer_reference",
    "dtn_gap",
    "gap_terms",
    "dump_spectrum",
    "load_spectrum",
]

R0 = 1e-3
# RK4 stability: the linearized Riccati rate near g = l is 2l + 1
STABLE_STEP = 2.7


class DtnBlowupError(ArithmeticError):
    """The Riccati integration left the finite range."""

    def __init__(self, msg, l=None, r=None):
        super().__init__(msg)
        self.l = l
        self.r = r


@dataclass
class DtnSpectrum:
    """Eigenvalues ``mu[l]``, ``l = 0..L_max``, with solver metadata."""

    mu: np.ndarray
    ode_steps: int
    r0: float = R0
    meta: dict = field(default_factory=dict)

    @property
    def L_max(self) -> int:
        return len(self.mu) - 1

    def to_json(self) -> dict:
        return {"L_max": self.L_max, "mu": [float(m) for m in self.mu],
                "ode_steps": self.ode_steps, "r0": self.r0, **self.meta}


def _start(l: np.ndarray, gamma, dgamma, r0: float) -> np.ndarray:
    # g(r0) = l + a r0^2 from the series f = r^l (1 + c r^2)
    beta = dgamma(r0) / (r0 * gamma(r0))
    a = -beta * l / (2 * l + 3)
    return l + a * r0 * r0


def radial_dtn(profile, L_max: int = 32, ode_steps: int = 2000, r0: float = R0) -> DtnSpectrum:
    """DtN spectrum of a radial conductivity.

    Parameters
    ----------
    profile : tuple of callables
        ``(gamma, gamma')`` as functions of ``r`` on ``[0, 1]``.
    L_max : int
        Highest harmonic degree.
    ode_steps : int
        Number of RK4 steps in ``t = log r`` on ``[log r0, 0]``.  Stability
        needs ``(2 L_max + 1) log(1/r0) / ode_steps`` below about 2.7.

    Raises
    ------
    ValueError
        Nonpositive profile on the sampled nodes, or a step violating the
        stability bound above (such runs return finite but meaningless values).
    DtnBlowupError
        Non-finite ``g`` during the integration.
    """
    gamma, dgamma = profile
    if L_max < 0 or ode_steps < 1:
        raise ValueError("need L_max >= 0 and ode_steps >= 1")
    rs = np.linspace(0.0, 1.0, 1001)
    gv = np.asarray(gamma(rs), dtype=float)
    if np.any(gv <= 0) or not np.all(np.isfinite(gv)):
        raise ValueError(f"profile must be positive on [0, 1]; min {np.min(gv):.4g}")
    l = np.arange(L_max + 1, dtype=float)
    ll = l * (l + 1)
    t0 = math.log(r0)
    h = -t0 / ode_steps
    if (2 * L_max + 1) * h > STABLE_STEP:
        raise ValueError(f"ode_steps = {ode_steps} too few for L_max = {L_max}; "
                         f"need at least {math.ceil((2 * L_max + 1) * -t0 / STABLE_STEP)}")

    def rhs(t, g):
        r = math.exp(t)
        return ll - g - g * g - r * float(dgamma(r) / gamma(r)) * g

    g = _start(l, gamma, dgamma, r0)
    with np.errstate(over="ignore", invalid="ignore"):
        g = _integrate(rhs, g, t0, h, ode_steps)
    mu = float(gamma(1.0)) * g
    return DtnSpectrum(mu, ode_steps, r0, {"step": h})


def _integrate(rhs, g, t0, h, ode_steps):
    # classical RK4 in t = log r; non-finite values are reported, not returned
    t = t0
    for i in range(ode_steps):
        k1 = rhs(t, g)
        k2 = rhs(t + h / 2, g + h / 2 * k1)
        k3 = rhs(t + h / 2, g + h / 2 * k2)
        k4 = rhs(t + h, g + h * k3)
        g = g + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (i + 1) * h
        if not np.all(np.isfinite(g)):
            bad = int(np.argmax(~np.isfinite(g)))
            raise DtnBlowupError(f"Riccati blow-up at l = {bad}, r = {math.exp(t):.4g}",
                                 l=bad, r=math.exp(t))
    return g


def dtn_of_model(model, L_max: int = 32, ode_steps: int = 2000) -> DtnSpectrum:
    """:func:`radial_dtn` of a radial :class:`ConductivityModel`."""
    return radial_dtn(model.radial_profile(), L_max, ode_steps)


def two_layer_reference(a: float, rho: float, l: int) -> float:
    """Closed-form eigenvalue for ``gamma = a`` on ``r < rho`` and 1 outside.

    Inside ``f = r^l``; outside ``f = B r^l + C r^(-l-1)`` with ``f`` and
    ``gamma r^2 f'`` continuous at ``rho``.
    """
    if not a > 0 or not 0 < rho < 1 or l < 0:
        raise ValueError("need a > 0, 0 < rho < 1, l >= 0")
    D = l * (1.0 - a) / (2 * l + 1)
    B = 1.0 - D
    C = D * rho ** (2 * l + 1)
    return (l * B - (l + 1) * C) / (B + C)


def gap_terms(spec1: DtnSpectrum, spec2: DtnSpectrum) -> np.ndarray:
    """``|mu1_l - mu2_l| (1 + l(l+1))^(-1/2)`` for each ``l``."""
    if spec1.L_max != spec2.L_max:
        raise ValueError(f"L_max mismatch: {spec1.L_max} vs {spec2.L_max}")
    l = np.arange(spec1.L_max + 1, dtype=float)
    return np.abs(np.asarray(spec1.mu) - np.asarray(spec2.mu)) / np.sqrt(1 + l * (l + 1))


def dtn_gap(spec1: DtnSpectrum, spec2: DtnSpectrum, with_tail: bool = False):
    """Operator norm of the difference from ``H^{1/2}`` to ``H^{-1/2}`` on the sphere.

    With ``with_tail`` also returns the last term, a proxy for the truncated tail.
    """
    terms = gap_terms(spec1, spec2)
    gap = float(np.max(terms))
    if with_tail:
        return gap, float(terms[-1])
    return gap


def dump_spectrum(spec: DtnSpectrum, path) -> Path:
    """Write rows ``(l, mu)``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["l", "mu"])
        for l, m in enumerate(spec.mu):
            w.writerow([l, repr(float(m))])
    return path


def load_spectrum(path, ode_steps: Optional[int] = None) -> DtnSpectrum:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    mu = np.array([float(r["mu"]) for r in rows])
    return DtnSpectrum(mu, ode_steps or 0)
