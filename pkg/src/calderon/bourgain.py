"""Complex phase vectors, the conjugated-Laplacian symbol and Bourgain-type norms.

For ``zeta`` with ``zeta . zeta = 0`` the operator ``-Delta - 2 zeta . grad``
has symbol ``p(xi) = |xi|^2 - 2i zeta . xi``.  Its zero set is a codimension-2
circle; on the lattice the zero mode and every mode where ``p`` vanishes up to
rounding are excluded from homogeneous norms and from the inverse.  For a
lattice ``k`` the mode ``xi = -k`` is always such a point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .spectral import Grid, ScalarField, spectral_weight_norm

__all__ = [
    "Zeta",
    "CharacteristicHitError",
    "make_zeta",
    "plane_frame",
    "p_symbol",
    "p_on_grid",
    "excluded_modes",
    "x_norm",
    "dropped_mass",
    "invert_conjugated_laplacian",
    "apply_conjugated_laplacian",
    "multiplier_diagnostics",
]

CHAR_RTOL = 1e-10


class CharacteristicHitError(ZeroDivisionError):
    """``p_zeta`` vanishes at a nonzero lattice mode."""


def plane_frame(k: Sequence[float], alternate: bool = False):
    """Orthonormal ``(e, f)`` spanning ``k``-perp with ``(e, f, k/|k|)`` right-handed.

    ``e`` is Gram-Schmidt of the coordinate axis least aligned with ``k``;
    ties go to the lowest axis index (highest with ``alternate``).  For
    ``k = 0`` the plane is ``span(e1, e2)``.
    """
    k = np.asarray(k, dtype=float)
    if k.shape != (3,):
        raise ValueError("zeta is implemented for n = 3")
    nk = np.linalg.norm(k)
    if nk == 0:
        e, f = np.eye(3)[0], np.eye(3)[1]
        return (f, -e) if alternate else (e, f)
    # rescale first so subnormal components do not spoil the unit vector
    khat = k / np.max(np.abs(k))
    khat /= np.linalg.norm(khat)
    dots = np.abs(khat)
    order = np.arange(3)[::-1] if alternate else np.arange(3)
    axis = order[np.argmin(dots[order])]
    a = np.eye(3)[axis]
    e = a - np.dot(a, khat) * khat
    e /= np.linalg.norm(e)
    f = np.cross(khat, e)
    f /= np.linalg.norm(f)
    return e, f


@dataclass(frozen=True)
class Zeta:
    """``zeta = s eta + i (k/2 + sqrt(s^2 - |k|^2/4) kappa)``."""

    k: tuple
    s: float
    theta: float
    eta: tuple
    kappa: tuple

    @property
    def vector(self) -> np.ndarray:
        k = np.asarray(self.k)
        a = math.sqrt(max(self.s**2 - np.dot(k, k) / 4, 0.0))
        return self.s * np.asarray(self.eta) + 1j * (k / 2 + a * np.asarray(self.kappa))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def conjugate(self) -> "Zeta":
        """Formal conjugate: same data, but :attr:`vector` is conjugated via ``ConjZeta``."""
        return ConjZeta(self.k, self.s, self.theta, self.eta, self.kappa)

    def to_json(self) -> dict:
        return {"k": list(self.k), "s": self.s, "theta": self.theta}


@dataclass(frozen=True)
class ConjZeta(Zeta):
    @property
    def vector(self) -> np.ndarray:
        return np.conj(Zeta.vector.fget(self))


def make_zeta(k: Sequence[float], s: float, theta: float = 0.0, flip: bool = False,
              alternate_frame: bool = False) -> Zeta:
    """Build ``zeta(k, s, theta)``; ``flip`` returns the partner with ``(-eta, -kappa)``."""
    k = np.asarray(k, dtype=float)
    nk = float(np.linalg.norm(k))
    if s < max(1.0, nk / 2):
        raise ValueError(f"need s >= max(1, |k|/2) = {max(1.0, nk / 2)}, got s = {s}")
    e, f = plane_frame(k, alternate_frame)
    eta = math.cos(theta) * e + math.sin(theta) * f
    kappa = -math.sin(theta) * e + math.cos(theta) * f
    if flip:
        eta, kappa = -eta, -kappa
    return Zeta(tuple(map(float, k)), float(s), float(theta), tuple(map(float, eta)),
                tuple(map(float, kappa)))


def p_symbol(zeta: Zeta, xi) -> complex:
    xi = np.asarray(xi, dtype=float)
    z = zeta.vector
    return np.sum(xi * xi, axis=-1) - 2j * np.sum(z * xi, axis=-1)


@lru_cache(maxsize=8)
def _p_grid(zeta: Zeta, grid: Grid) -> np.ndarray:
    z = zeta.vector
    p = grid.xi_squared.astype(complex)
    for j, xi in enumerate(grid.freqs):
        p = p - 2j * z[j] * xi
    p = np.broadcast_to(p, grid.shape).copy()
    p.setflags(write=False)
    return p


def p_on_grid(zeta: Zeta, grid: Grid) -> np.ndarray:
    """``p_zeta`` on the lattice in FFT ordering (cached, read-only)."""
    return _p_grid(zeta, grid)


@lru_cache(maxsize=8)
def _excluded(zeta: Zeta, grid: Grid, rtol: float) -> np.ndarray:
    p = p_on_grid(zeta, grid)
    xi = np.sqrt(grid.xi_squared)
    scale = grid.xi_squared + 2 * zeta.norm * xi
    mask = np.abs(p) <= rtol * scale
    mask = np.broadcast_to(mask, grid.shape).copy()
    mask[(0,) * grid.n] = True
    mask.setflags(write=False)
    return mask


def excluded_modes(zeta: Zeta, grid: Grid, rtol: float = CHAR_RTOL) -> np.ndarray:
    """Zero mode plus nonzero modes where ``|p| <= rtol (|xi|^2 + 2|zeta||xi|)``."""
    return _excluded(zeta, grid, rtol)


def _check_hits(zeta: Zeta, grid: Grid, policy: str):
    if policy == "drop":
        return
    mask = excluded_modes(zeta, grid).copy()
    mask[(0,) * grid.n] = False
    if np.any(mask):
        idx = tuple(int(v) for v in np.argwhere(mask)[0])
        raise CharacteristicHitError(
            f"p_zeta vanishes at nonzero mode {idx}; perturb s by one part in 1e6")


def _weight(zeta: Zeta, grid: Grid, b: float, homogeneous: bool, floor=None):
    p = np.abs(p_on_grid(zeta, grid))
    if floor:
        p = np.maximum(p, floor)
    if homogeneous:
        w = np.zeros(grid.shape)
        keep = ~excluded_modes(zeta, grid)
        w[keep] = p[keep] ** b
        return w
    return (zeta.norm + p) ** b


def x_norm(f: ScalarField, zeta: Zeta, b: float, homogeneous: bool = True,
           policy: str = "drop", floor=None) -> float:
    """Homogeneous ``||p^b f^||`` (excluded modes dropped) or inhomogeneous ``||(|zeta| + |p|)^b f^||``."""
    if homogeneous and b < 0:
        _check_hits(zeta, f.grid, policy)
    return spectral_weight_norm(f, _weight(zeta, f.grid, b, homogeneous, floor))


def dropped_mass(f: ScalarField, zeta: Zeta) -> float:
    """L^2 mass of ``f`` on the excluded modes."""
    w = excluded_modes(zeta, f.grid).astype(float)
    return spectral_weight_norm(f, w)


def invert_conjugated_laplacian(f: ScalarField, zeta: Zeta, policy: str = "drop",
                                return_dropped: bool = False, domain: str = "space"):
    """Apply the symbol ``1/p_zeta``; excluded modes are set to zero.

    With ``return_dropped`` the L^2 mass of the input on the excluded modes
    is returned as well.
    """
    grid = f.grid
    _check_hits(zeta, grid, policy)
    p = p_on_grid(zeta, grid)
    ex = excluded_modes(zeta, grid)
    inv = np.zeros(grid.shape, dtype=complex)
    inv[~ex] = 1.0 / p[~ex]
    fh = f.to_frequency()
    out = ScalarField(grid, fh.values * inv, "frequency")
    if domain == "space":
        out = out.to_space()
    if return_dropped:
        return out, dropped_mass(fh, zeta)
    return out


def apply_conjugated_laplacian(f: ScalarField, zeta: Zeta, domain: str = "space") -> ScalarField:
    """``(-Delta - 2 zeta . grad) f`` via the symbol ``p_zeta``."""
    out = ScalarField(f.grid, f.to_frequency().values * p_on_grid(zeta, f.grid), "frequency")
    return out.to_space() if domain == "space" else out


def multiplier_diagnostics(zeta: Zeta, grid: Grid, threshold: float) -> dict:
    """Smallest ``|p|`` over nonzero modes and the number of nonzero modes below ``threshold``."""
    p = np.abs(p_on_grid(zeta, grid)).copy()
    p[(0,) * grid.n] = np.inf
    nonzero_char = excluded_modes(zeta, grid).copy()
    nonzero_char[(0,) * grid.n] = False
    return {
        "min_abs_p": float(np.min(p)),
        "count_below": int(np.sum(p < threshold)),
        "characteristic_modes": int(np.sum(nonzero_char)),
        "min_abs_p_regular": float(np.min(np.where(nonzero_char, np.inf, p))),
    }
