"""Periodic-grid discretization of R^n with Fourier tools.

The torus is ``[-L, L)^n`` sampled with ``N`` points per axis.  Frequencies
live on the lattice ``(pi/L) * {-N/2, ..., N/2 - 1}^n``.

Fourier conventions
-------------------
A :class:`ScalarField` in the ``"frequency"`` domain stores the raw output of
``numpy.fft.fftn`` (no normalization, no phase).  Norms use the unitary
continuum transform ``f^(xi) = (2 pi)^(-n/2) \\int f e^{-i x.xi} dx`` so that
``sum |f^|^2 * omega`` with ``omega = (pi/L)^n`` equals the L^2 norm squared.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "Ball",
    "Shell",
    "GridMismatchError",
    "create_grid",
    "apply_fourier_multiplier",
    "derivative",
    "gradient",
    "laplacian",
    "integrate",
    "l2_norm",
    "sobolev_norm",
    "h1_ball_norm",
    "fourier_coefficient",
    "evaluate_points",
    "lattice_index",
    "dump_field",
    "load_field",
]


class GridMismatchError(ValueError):
    """Two fields defined on different grids were combined."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-L, L)^n``."""

    n: int
    N: int
    L: float

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.n}")
        if self.N % 2 != 0:
            raise ValueError(f"N must be even, got {self.N}")
        if self.N < 4:
            raise ValueError(f"N must be at least 4, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N**self.n

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.dx**self.n

    @property
    def dxi(self) -> float:
        """Spacing of the frequency lattice."""
        return math.pi / self.L

    @property
    def freq_cell(self) -> float:
        """Measure ``omega = (pi/L)^n`` of one frequency cell."""
        return self.dxi**self.n

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.N)

    @cached_property
    def coords(self) -> tuple:
        return tuple(np.meshgrid(*([self.axis] * self.n), indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        """Grid points as an array of shape ``shape + (n,)``."""
        return np.stack(self.coords, axis=-1)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords))

    @cached_property
    def freq_axis(self) -> np.ndarray:
        """Per-axis frequencies in FFT order; the -N/2 mode is negative."""
        return 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.dx)

    @cached_property
    def freqs(self) -> tuple:
        """Open-mesh frequency arrays, broadcastable to ``shape``."""
        out = []
        for j in range(self.n):
            sh = [1] * self.n
            sh[j] = self.N
            out.append(self.freq_axis.reshape(sh))
        return tuple(out)

    @cached_property
    def deriv_freqs(self) -> tuple:
        """Frequencies for first derivatives, with the Nyquist row zeroed.

        Zeroing keeps derivatives of real fields real and makes the discrete
        pairing identity sum(Da * Dc) = -sum(DDa * c) exact.
        """
        ax = self.freq_axis.copy()
        ax[self.N // 2] = 0.0
        out = []
        for j in range(self.n):
            sh = [1] * self.n
            sh[j] = self.N
            out.append(ax.reshape(sh))
        return tuple(out)

    @cached_property
    def xi_squared(self) -> np.ndarray:
        return sum(f * f for f in self.freqs)

    def lattice_vectors(self) -> np.ndarray:
        """All frequencies as an array of shape ``shape + (n,)``."""
        return np.stack(np.broadcast_arrays(*self.freqs), axis=-1)

    def check_same(self, other: "Grid"):
        if self != other:
            raise GridMismatchError(f"grid mismatch: {self} vs {other}")


def create_grid(n: int, N: int, L: float) -> Grid:
    return Grid(int(n), int(N), float(L))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Samples of a (complex) scalar function on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray
    domain: str = "space"

    def __post_init__(self):
        if self.domain not in ("space", "frequency"):
            raise ValueError(f"unknown domain {self.domain!r}")
        vals = np.asarray(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(
                f"value shape {vals.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: Grid, dtype=complex) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape, dtype=dtype))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable) -> "ScalarField":
        """Sample ``func(*coords)`` on the grid."""
        return cls(grid, np.broadcast_to(func(*grid.coords), grid.shape).copy())

    def to_frequency(self) -> "ScalarField":
        if self.domain == "frequency":
            return self
        return ScalarField(self.grid, np.fft.fftn(self.values), "frequency")

    def to_space(self) -> "ScalarField":
        if self.domain == "space":
            return self
        return ScalarField(self.grid, np.fft.ifftn(self.values), "space")

    def space_values(self) -> np.ndarray:
        return self.to_space().values

    def conj(self) -> "ScalarField":
        if self.domain == "frequency":
            # conj in space <-> conj(f^(-xi)) in frequency
            return self.to_space().conj().to_frequency()
        return ScalarField(self.grid, np.conj(self.values))

    @property
    def real(self) -> "ScalarField":
        return ScalarField(self.grid, np.real(self.space_values()))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.space_values())))

    # arithmetic is pointwise in space
    def _operand(self, other):
        if isinstance(other, ScalarField):
            self.grid.check_same(other.grid)
            return other.space_values()
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.space_values() + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.space_values() - self._operand(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._operand(other) - self.space_values())

    def __mul__(self, other):
        return ScalarField(self.grid, self.space_values() * self._operand(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.space_values() / self._operand(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.space_values())


FieldLike = Union[ScalarField, np.ndarray]


def _as_field(grid: Grid, f: FieldLike) -> ScalarField:
    if isinstance(f, ScalarField):
        grid.check_same(f.grid)
        return f
    return ScalarField(grid, np.asarray(f))


def apply_fourier_multiplier(
    f: ScalarField, m, domain: str = "space"
) -> ScalarField:
    """Multiply the Fourier coefficients of ``f`` by ``m(xi)``.

    ``m`` is either an array broadcastable to the grid shape (FFT ordering)
    or a callable receiving the open-mesh frequency arrays ``xi_1..xi_n``.
    """
    grid = f.grid
    mult = m(*grid.freqs) if callable(m) else m
    mult = np.broadcast_to(np.asarray(mult), grid.shape)
    if not np.all(np.isfinite(mult)):
        bad = np.argwhere(~np.isfinite(mult))[0]
        raise ValueError(f"non-finite multiplier at mode index {tuple(bad)}")
    out = ScalarField(grid, f.to_frequency().values * mult, "frequency")
    return out.to_space() if domain == "space" else out


def derivative(f: ScalarField, j: int) -> ScalarField:
    xi = f.grid.deriv_freqs[j]
    return apply_fourier_multiplier(f, 1j * xi)


def gradient(f: ScalarField) -> tuple:
    fh = f.to_frequency()
    return tuple(
        ScalarField(f.grid, 1j * xi * fh.values, "frequency").to_space()
        for xi in f.grid.deriv_freqs
    )


def laplacian(f: ScalarField) -> ScalarField:
    k2 = sum(xi * xi for xi in f.grid.deriv_freqs)
    return apply_fourier_multiplier(f, -k2)


@dataclass(frozen=True)
class Ball:
    """Sharp voxel mask ``|x| < radius`` (cell-center test)."""

    radius: float

    def mask(self, grid: Grid) -> np.ndarray:
        if self.radius >= grid.L:
            raise ValueError(f"ball radius {self.radius} must be < L = {grid.L}")
        return grid.radius < self.radius


@dataclass(frozen=True)
class Shell:
    """Sharp voxel mask ``r1 <= |x| < r2``."""

    r1: float
    r2: float

    def mask(self, grid: Grid) -> np.ndarray:
        if self.r2 >= grid.L:
            raise ValueError(f"shell radius {self.r2} must be < L = {grid.L}")
        return (grid.radius >= self.r1) & (grid.radius < self.r2)


def _region_mask(grid: Grid, region):
    if region is None or region == "all":
        return None
    if isinstance(region, (Ball, Shell)):
        return region.mask(grid)
    if isinstance(region, np.ndarray) and region.dtype == bool:
        return region
    raise ValueError(f"unknown region {region!r}")


def _fsum_complex(arr: np.ndarray) -> complex:
    # math.fsum is exactly rounded, hence independent of summation order
    arr = np.ravel(arr)
    if np.iscomplexobj(arr):
        return complex(math.fsum(arr.real), math.fsum(arr.imag))
    return complex(math.fsum(arr), 0.0)


def integrate(f: FieldLike, g: FieldLike = None, region="all") -> complex:
    """Bilinear quadrature ``sum f(x) g(x) 1_region(x) dx^n`` (no conjugation)."""
    if isinstance(f, ScalarField):
        grid = f.grid
    elif isinstance(g, ScalarField):
        grid = g.grid
    else:
        raise TypeError("at least one argument must be a ScalarField")
    fv = _as_field(grid, f).space_values()
    prod = fv if g is None else fv * _as_field(grid, g).space_values()
    mask = _region_mask(grid, region)
    if mask is not None:
        prod = prod[mask]
    return _fsum_complex(prod) * grid.cell_volume


def l2_norm(f: ScalarField, region="all") -> float:
    v = f.space_values()
    mask = _region_mask(f.grid, region)
    if mask is not None:
        v = v[mask]
    return math.sqrt(math.fsum(np.ravel(np.abs(v) ** 2)) * f.grid.cell_volume)


def spectral_weight_norm(f: ScalarField, weight: np.ndarray) -> float:
    """``(sum weight(xi)^2 |f^(xi)|^2 omega)^(1/2)`` with unitary coefficients."""
    grid = f.grid
    fh = f.to_frequency().values
    total = math.fsum(np.ravel((np.abs(weight) * np.abs(fh)) ** 2))
    # sum |f^|^2 omega == (dx^n / N^n) sum |DFT f|^2
    return math.sqrt(total * grid.cell_volume / grid.size)


def sobolev_norm(f: ScalarField, s: float) -> float:
    """H^s norm ``(sum (1 + |xi|^2)^s |f^|^2 omega)^(1/2)``."""
    w = (1.0 + f.grid.xi_squared) ** (0.5 * s)
    return spectral_weight_norm(f, w)


def h1_ball_norm(f: ScalarField, radius: float) -> float:
    """H^1(B) norm: L^2(B) of f and of its spectral first derivatives."""
    grid = f.grid
    if radius >= grid.L:
        raise ValueError(f"radius {radius} must be < L = {grid.L}")
    region = Ball(radius)
    parts = [l2_norm(f, region) ** 2]
    parts += [l2_norm(d, region) ** 2 for d in gradient(f)]
    return math.sqrt(sum(parts))


def lattice_index(grid: Grid, k: Sequence[float], atol: float = 1e-9) -> tuple:
    """Integer lattice coordinates of a frequency vector; raises if off-lattice."""
    m = np.asarray(k, dtype=float) / grid.dxi
    mi = np.rint(m)
    if np.any(np.abs(m - mi) > atol) or len(m) != grid.n:
        raise ValueError(f"k = {tuple(k)} is not on the frequency lattice")
    if np.any(mi < -grid.N // 2) or np.any(mi >= grid.N // 2):
        raise ValueError(f"k = {tuple(k)} is outside the resolved band")
    return tuple(int(v) for v in mi)


def fourier_coefficient(f: ScalarField, k: Sequence[float]) -> complex:
    """``\\int f(x) e^{-i k.x} dx`` for lattice ``k``, read off the FFT."""
    grid = f.grid
    m = lattice_index(grid, k)
    fh = f.to_frequency().values
    idx = tuple(mi % grid.N for mi in m)
    # x_0 = -L contributes e^{i k L} = (-1)^m per axis
    phase = (-1) ** (sum(m) % 2)
    return complex(fh[idx]) * phase * grid.cell_volume


def evaluate_points(f: ScalarField, points) -> np.ndarray:
    """Trigonometric interpolant of ``f`` at arbitrary points ``(P, n)``.

    The sum over modes is contracted one axis at a time, so the cost is
    ``P N^n`` without forming the full ``P x N^n`` exponential table.
    """
    grid = f.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != grid.n:
        raise ValueError(f"points must have {grid.n} coordinates")
    fh = f.to_frequency().values / grid.size
    xi = grid.freq_axis
    E = [np.exp(1j * np.outer(pts[:, j] + grid.L, xi)) for j in range(grid.n)]
    # (P, N) tables; contract the last axis first
    acc = fh.reshape(-1, grid.N) @ E[-1].T
    acc = acc.reshape(grid.shape[:-1] + (len(pts),))
    for j in range(grid.n - 2, -1, -1):
        acc = np.einsum("...ap,pa->...p", acc, E[j])
    return acc


def dump_field(f: ScalarField, path, name: str = "field") -> Path:
    """Write raw little-endian float64 (re, im interleaved, C order) + JSON."""
    path = Path(path)
    vals = np.ascontiguousarray(f.values, dtype=np.complex128)
    raw = np.empty(vals.size * 2, dtype="<f8")
    raw[0::2] = vals.real.ravel(order="C")
    raw[1::2] = vals.imag.ravel(order="C")
    path.write_bytes(raw.tobytes())
    meta = {"n": f.grid.n, "N": f.grid.N, "L": f.grid.L, "domain": f.domain, "name": name}
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(meta, sort_keys=True))
    return path


def load_field(path) -> ScalarField:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    grid = create_grid(meta["n"], meta["N"], meta["L"])
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    vals = (raw[0::2] + 1j * raw[1::2]).reshape(grid.shape)
    return ScalarField(grid, vals, meta["domain"])
