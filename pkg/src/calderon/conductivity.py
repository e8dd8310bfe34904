"""Analytic conductivity models on the closed unit ball and their norms."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .spectral import Grid, ScalarField

__all__ = [
    "ConductivityModel",
    "ConductivityField",
    "LowerBoundError",
    "unit",
    "constant",
    "gaussian_bump",
    "radial_polynomial",
    "mollified_two_layer",
    "affine",
    "instantiate",
    "log_gradient",
    "holder_norm",
    "holder_quotient",
    "modulus_of_continuity",
    "lattice_shifts",
    "sphere_nodes",
    "shipped_models",
]

KINDS = ("unit", "gaussian_bump", "radial_polynomial", "mollified_two_layer", "affine")


class LowerBoundError(ValueError):
    """A conductivity dropped below its declared lower bound."""


@dataclass(frozen=True)
class ConductivityModel:
    """Analytic test conductivity.

    ``params`` always accepts ``scale`` (default 1), a global factor applied
    to the whole conductivity.
    """

    kind: str
    params: dict = field(default_factory=dict)
    gamma0: float = 0.5
    eps: float = 0.5
    M: float = 10.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown conductivity kind {self.kind!r}")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not self.M > 1:
            raise ValueError(f"M must exceed 1, got {self.M}")
        if not self.gamma0 > 0:
            raise ValueError(f"gamma0 must be positive, got {self.gamma0}")

    @property
    def scale(self) -> float:
        return float(self.params.get("scale", 1.0))

    @property
    def is_radial(self) -> bool:
        if self.kind == "gaussian_bump":
            return not np.any(np.asarray(self.params.get("x0", 0.0)))
        return self.kind in ("unit", "radial_polynomial", "mollified_two_layer")

    def scaled(self, c: float) -> "ConductivityModel":
        params = dict(self.params, scale=self.scale * c)
        return ConductivityModel(self.kind, params, self.gamma0, self.eps, self.M)

    # radial profiles g(r), g'(r) before scaling
    def _profile(self, r):
        p = self.params
        if self.kind == "unit":
            return np.ones_like(r), np.zeros_like(r)
        if self.kind == "radial_polynomial":
            coeffs = np.asarray(p["coeffs"], dtype=float)
            val = np.zeros_like(r)
            der = np.zeros_like(r)
            r2 = r * r
            for i, c in enumerate(coeffs):
                val = val + c * r2**i
                if i > 0:
                    der = der + 2 * i * c * r ** (2 * i - 1)
            return val, der
        if self.kind == "mollified_two_layer":
            a, rho, w = p["a"], p["rho"], p["w"]
            th = np.tanh((r - rho) / w)
            val = 1.0 + (a - 1.0) * 0.5 * (1.0 - th)
            der = -(a - 1.0) * 0.5 * (1.0 - th * th) / w
            return val, der
        if self.kind == "gaussian_bump":
            a, w = p["a"], p["w"]
            e = np.exp(-r * r / (2 * w * w))
            return 1.0 + a * e, -a * r / (w * w) * e
        raise ValueError(f"{self.kind} is not radial")

    def radial_profile(self):
        """Return callables ``(gamma(r), gamma'(r))`` for radial models."""
        if not self.is_radial:
            raise ValueError(f"model {self.kind} is not radial")
        c = self.scale

        def value(r):
            return c * self._profile(np.asarray(r, dtype=float))[0]

        def deriv(r):
            return c * self._profile(np.asarray(r, dtype=float))[1]

        return value, deriv

    def value(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points ``x`` of shape ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        c = self.scale
        if self.kind == "affine":
            b = np.asarray(self.params["b"], dtype=float)
            return c * (self.params.get("c0", 1.0) + x @ b)
        if self.kind == "gaussian_bump":
            x0 = np.broadcast_to(np.asarray(self.params.get("x0", 0.0), float), x.shape[-1:])
            d2 = np.sum((x - x0) ** 2, axis=-1)
            a, w = self.params["a"], self.params["w"]
            return c * (1.0 + a * np.exp(-d2 / (2 * w * w)))
        r = np.sqrt(np.sum(x * x, axis=-1))
        return c * self._profile(r)[0]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient at points ``x``; shape ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        c = self.scale
        if self.kind == "affine":
            b = np.asarray(self.params["b"], dtype=float)
            return c * np.broadcast_to(b, x.shape).copy()
        if self.kind == "gaussian_bump":
            x0 = np.broadcast_to(np.asarray(self.params.get("x0", 0.0), float), x.shape[-1:])
            d = x - x0
            a, w = self.params["a"], self.params["w"]
            e = np.exp(-np.sum(d * d, axis=-1) / (2 * w * w))
            return c * (-a / (w * w)) * e[..., None] * d
        r = np.sqrt(np.sum(x * x, axis=-1))
        _, der = self._profile(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit_r = np.where(r[..., None] > 0, x / r[..., None], 0.0)
        return c * der[..., None] * unit_r

    def to_json(self) -> dict:
        params = {k: (list(v) if isinstance(v, (tuple, np.ndarray)) else v)
                  for k, v in self.params.items()}
        return {"kind": self.kind, "params": params, "gamma0": self.gamma0,
                "eps": self.eps, "M": self.M}

    @classmethod
    def from_json(cls, d) -> "ConductivityModel":
        if isinstance(d, str):
            d = json.loads(d)
        missing = {"kind", "params"} - set(d)
        if missing:
            raise ValueError(f"model descriptor missing keys {sorted(missing)}")
        return cls(d["kind"], dict(d["params"]), float(d.get("gamma0", 0.5)),
                   float(d.get("eps", 0.5)), float(d.get("M", 10.0)))


def shipped_models() -> dict:
    """The test conductivities every invariant is checked on."""
    return {
        "unit": unit(),
        "gaussian": gaussian_bump(0.1, w=0.5),
        "gaussian_offset": gaussian_bump(0.2, x0=(0.2, -0.1, 0.0), w=0.4),
        "radial_polynomial": radial_polynomial([1.0, 0.05]),
        "two_layer": mollified_two_layer(1.5, 0.5, 0.2),
        "affine": affine(1.0, (0.1, 0.05, 0.0)),
    }


def unit(**decl) -> ConductivityModel:
    return ConductivityModel("unit", {}, **decl)


def constant(c: float, **decl) -> ConductivityModel:
    return ConductivityModel("unit", {"scale": float(c)}, **decl)


def gaussian_bump(a: float, x0=(0.0, 0.0, 0.0), w: float = 0.5, **decl) -> ConductivityModel:
    """``gamma = 1 + a exp(-|x - x0|^2 / (2 w^2))``."""
    return ConductivityModel("gaussian_bump", {"a": float(a), "x0": tuple(map(float, x0)),
                                               "w": float(w)}, **decl)


def radial_polynomial(coeffs: Sequence[float], **decl) -> ConductivityModel:
    """``gamma = sum_i coeffs[i] * r^(2i)``."""
    return ConductivityModel("radial_polynomial", {"coeffs": tuple(map(float, coeffs))}, **decl)


def mollified_two_layer(a: float, rho: float, w: float, **decl) -> ConductivityModel:
    """Core of conductivity ``a`` inside ``r < rho``, 1 outside, tanh-smoothed over ``w``."""
    return ConductivityModel("mollified_two_layer",
                             {"a": float(a), "rho": float(rho), "w": float(w)}, **decl)


def affine(c0: float, b: Sequence[float], **decl) -> ConductivityModel:
    return ConductivityModel("affine", {"c0": float(c0), "b": tuple(map(float, b))}, **decl)


@dataclass(frozen=True, eq=False)
class ConductivityField:
    """A conductivity sampled on a grid together with its gradient fields."""

    sigma: ScalarField
    grad: tuple
    gamma0: float
    eps: float = 0.5

    @property
    def grid(self) -> Grid:
        return self.sigma.grid

    @property
    def values(self) -> np.ndarray:
        return np.real(self.sigma.space_values())

    def min(self) -> float:
        return float(np.min(self.values))


def instantiate(model: ConductivityModel, grid: Grid) -> ConductivityField:
    """Sample a model and its analytic gradient on ``grid``."""
    pts = grid.points
    vals = model.value(pts)
    if np.min(vals) < model.gamma0:
        raise LowerBoundError(
            f"model {model.kind} takes value {np.min(vals):.4g} < gamma0 = {model.gamma0}")
    grads = model.gradient(pts)
    grad_fields = tuple(ScalarField(grid, grads[..., j].copy()) for j in range(grid.n))
    return ConductivityField(ScalarField(grid, vals), grad_fields, model.gamma0, model.eps)


def log_gradient(cond: ConductivityField, gamma0: Optional[float] = None) -> tuple:
    """Fields ``d_j log gamma = d_j gamma / gamma``."""
    gamma0 = cond.gamma0 if gamma0 is None else gamma0
    vals = cond.values
    if np.min(vals) < gamma0 / 2:
        raise LowerBoundError(f"min gamma {np.min(vals):.4g} below gamma0/2 = {gamma0 / 2}")
    return tuple(ScalarField(cond.grid, np.real(g.space_values()) / vals) for g in cond.grad)


def _nested_stride(total: int, pair_budget: int) -> int:
    # power-of-two strides make subsamples nested, so the estimate is monotone in the budget
    if total <= pair_budget:
        return 1
    return 2 ** math.ceil(math.log2(total / pair_budget))


def holder_quotient(values: np.ndarray, points: np.ndarray, exponent: float,
                    pair_budget: int = 2_000_000) -> float:
    """``sup |v(x) - v(y)| / |x - y|^exponent`` over a deterministic pair subsample.

    ``values`` has shape ``(M,)`` or ``(M, k)`` (max over components).  Pairs
    ``i < j`` are enumerated lexicographically; every ``stride``-th is kept.
    """
    values = np.asarray(values)
    if values.ndim == 1:
        values = values[:, None]
    points = np.asarray(points, dtype=float)
    M = len(points)
    total = M * (M - 1) // 2
    stride = _nested_stride(total, pair_budget)
    best = 0.0
    offset = 0
    for i in range(M - 1):
        count = M - 1 - i
        first = (-offset) % stride
        offset += count
        if first >= count:
            continue
        js = i + 1 + np.arange(first, count, stride)
        dist = np.sqrt(np.sum((points[js] - points[i]) ** 2, axis=1))
        diff = np.max(np.abs(values[js] - values[i]), axis=1)
        best = max(best, float(np.max(diff / dist**exponent)))
    return best


def holder_norm(f: ScalarField, eps: float, pair_budget: int = 2_000_000,
                grads: Optional[Sequence[ScalarField]] = None,
                mask: Optional[np.ndarray] = None) -> float:
    """Subsampled lower bound of a Hölder norm on the grid points in ``mask``.

    Without ``grads`` this is the C^{0,eps} norm ``max(sup|f|, [f]_eps)``.
    With ``grads`` it is the C^{1,eps} norm: ``max(sup|f|, sup|df|, [df]_eps)``.
    """
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    grid = f.grid
    mask = np.ones(grid.shape, dtype=bool) if mask is None else mask
    pts = grid.points[mask]
    fv = f.space_values()[mask]
    sup = float(np.max(np.abs(fv))) if fv.size else 0.0
    if grads is None:
        return max(sup, holder_quotient(fv, pts, eps, pair_budget))
    gv = np.stack([g.space_values()[mask] for g in grads], axis=1)
    sup = max(sup, float(np.max(np.abs(gv))) if gv.size else 0.0)
    return max(sup, holder_quotient(gv, pts, eps, pair_budget))


def _directions(n: int, count: int) -> np.ndarray:
    if n == 2:
        ang = np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # Fibonacci points on the upper half sphere; -y gives the same shift norm
    i = np.arange(count) + 0.5
    z = i / count
    phi = np.pi * (1 + 5**0.5) * i
    rr = np.sqrt(1 - z * z)
    return np.stack([rr * np.cos(phi), rr * np.sin(phi), z], axis=1)


def lattice_shifts(grid: Grid, t: float, direction_samples: int = 26):
    """Lattice shifts obtained by rounding ``tau*y`` for ``0 <= tau <= t``.

    Returns ``(shifts, discrepancy)`` where ``discrepancy`` is the largest
    distance between ``t*y`` and its rounded lattice vector.  The shift set is
    nested in ``t``.
    """
    dirs = _directions(grid.n, direction_samples)
    shifts = set()
    disc = 0.0
    for y in dirs:
        u = y / grid.dx
        bps = [0.0, t]
        for ui in np.abs(u):
            if ui > 0:
                m = np.arange(0, int(t * ui + 0.5) + 1)
                b = (m + 0.5) / ui
                bps.extend(b[b <= t])
        taus = np.unique(bps)
        samples = np.concatenate([(taus[:-1] + taus[1:]) / 2, [t]])
        for tau in samples:
            shifts.add(tuple(int(v) for v in np.rint(tau * u)))
        disc = max(disc, float(np.linalg.norm(np.rint(t * u) * grid.dx - t * y)))
    shifts.discard((0,) * grid.n)
    return sorted(shifts), disc


def modulus_of_continuity(f: ScalarField, p, t: float, direction_samples: int = 26,
                          with_discrepancy: bool = False):
    """``omega_p f(t) = sup_y ||f - f(. - t y)||_{L^p}`` over sampled directions.

    Shifts are rounded to lattice vectors (periodic rolls); the supremum also
    runs over all shorter shifts on the sampled rays.
    """
    if p not in (2, np.inf, "inf"):
        raise ValueError("p must be 2 or inf")
    if t < 0:
        raise ValueError("t must be nonnegative")
    vals = f.space_values()
    grid = f.grid
    best = 0.0
    disc = 0.0
    if t > 0:
        shifts, disc = lattice_shifts(grid, t, direction_samples)
        axes = tuple(range(grid.n))
        for v in shifts:
            d = vals - np.roll(vals, v, axis=axes)
            if p == 2:
                val = math.sqrt(float(np.sum(np.abs(d) ** 2)) * grid.cell_volume)
            else:
                val = float(np.max(np.abs(d)))
            best = max(best, val)
    return (best, disc) if with_discrepancy else best


def sphere_nodes(radius: float = 1.0, n_lat: int = 24, n_lon: int = 48):
    """Latitude-longitude nodes on a sphere with quadrature weights.

    Latitudes are Gauss-Legendre in ``cos(theta)``; weights integrate
    exactly polynomials of degree < ``min(2 n_lat, n_lon)`` over the sphere.
    """
    z, wz = np.polynomial.legendre.leggauss(n_lat)
    phi = 2 * np.pi * np.arange(n_lon) / n_lon
    Z, PHI = np.meshgrid(z, phi, indexing="ij")
    R = np.sqrt(1 - Z * Z)
    pts = np.stack([R * np.cos(PHI), R * np.sin(PHI), Z], axis=-1).reshape(-1, 3)
    w = (np.repeat(wz, n_lon) * (2 * np.pi / n_lon)) * radius**2
    return radius * pts, w
