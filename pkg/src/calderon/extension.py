"""Whitney-type extension of conductivities from the closed unit ball.

The set ``F`` is the closed unit ball together with the exterior of the ball
of radius ``1 + eps0``; the gap ``G`` between them is covered lazily by
dyadic Whitney cubes.  Each cube carries a first-order Taylor polynomial
anchored at its nearest point of ``F``, and the extension is the
partition-of-unity blend of those polynomials.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .conductivity import ConductivityModel, holder_norm, sphere_nodes
from .spectral import Grid, ScalarField

__all__ = [
    "CoverError",
    "ExtensionError",
    "WhitneyCover",
    "ExtendedConductivity",
    "choose_eps0",
    "boundary_gradient_sum",
    "whitney_cover",
    "bump_profile",
    "extend",
    "extend_pair",
    "boundary_difference_bound",
    "outside_difference",
    "blend",
    "taylor_remainder_check",
]

DILATION = 9.0 / 8.0
OMEGA_RADIUS = 1.0


class CoverError(ValueError):
    """The requested resolution cannot resolve the shell."""


class ExtensionError(RuntimeError):
    """The extension violated its lower bound (an eps0 or cover bug)."""


def choose_eps0(gamma0: float, grad_sums: Sequence[float]) -> float:
    """``min(4/9, 2 gamma0 / (9 S_j))`` over the supplied boundary gradient sums."""
    if not 0 < gamma0 <= 1:
        raise ValueError(f"gamma0 must lie in (0, 1], got {gamma0}")
    eps0 = 4.0 / 9.0
    for s in grad_sums:
        if s < 0:
            raise ValueError("gradient sums must be nonnegative")
        if s > 0:
            eps0 = min(eps0, 2.0 * gamma0 / (9.0 * s))
    return eps0


def boundary_gradient_sum(model: ConductivityModel, nodes: Optional[np.ndarray] = None) -> float:
    """``sum_j sup_{dOmega} |d_j gamma|`` sampled on sphere nodes."""
    if nodes is None:
        nodes, _ = sphere_nodes(OMEGA_RADIUS)
    g = model.gradient(nodes)
    return float(np.sum(np.max(np.abs(g), axis=0)))


# -- bump profile -----------------------------------------------------------

def _smooth_step(t):
    # C-infinity step: 0 for t <= 0, 1 for t >= 1
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def _smooth_step_deriv(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    tt = np.where(inside, t, 0.5)
    a = np.exp(-1.0 / tt)
    b = np.exp(-1.0 / (1.0 - tt))
    da = a / tt**2
    db = -b / (1.0 - tt) ** 2
    d = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return np.where(inside, d, 0.0)


_HALF = 0.5
_EDGE = 0.5 * DILATION  # 9/16


def bump_profile(u, deriv: bool = False):
    """1-D profile equal to 1 on ``|u| <= 1/2`` and 0 on ``|u| >= 9/16``."""
    u = np.asarray(u, dtype=float)
    t = (_EDGE - np.abs(u)) / (_EDGE - _HALF)
    if not deriv:
        return _smooth_step(t)
    return _smooth_step_deriv(t) * (-np.sign(u)) / (_EDGE - _HALF)


# -- cover -------------------------------------------------------------------

@dataclass
class WhitneyCover:
    """Lazy dyadic Whitney cover of the shell ``1 < |x| < 1 + eps0``.

    Cubes are ``[idx * side, (idx + 1) * side]`` with ``side = 2^-level``.  A
    cube is a Whitney cube when ``diam <= dist(Q, F)`` and its parent fails
    that test; cubes with ``diam < h_min / 4`` are not realized, which keeps
    every point farther than ``h_min`` from ``F`` covered.
    """

    eps0: float
    n: int = 3
    h_min: float = 1.0 / 64
    realized: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.eps0 > 2 * self.h_min:
            raise CoverError(
                f"shell width eps0 = {self.eps0:.4g} must exceed 2*h_min = {2 * self.h_min:.4g}")
        sq = math.sqrt(self.n)
        # largest level whose diameter is still >= h_min / 4
        self.max_level = int(math.floor(math.log2(4 * sq / self.h_min)))
        self._offsets = np.stack(np.meshgrid(*([np.arange(-1, 2)] * self.n),
                                             indexing="ij"), axis=-1).reshape(-1, self.n)

    @property
    def r_out(self) -> float:
        return OMEGA_RADIUS + self.eps0

    def side(self, level: int) -> float:
        return 2.0**-level

    def diam(self, level: int) -> float:
        return math.sqrt(self.n) * self.side(level)

    def _radii(self, idx: np.ndarray, side: float):
        lo = idx * side
        hi = lo + side
        near = np.clip(0.0, lo, hi)
        far = np.where(np.abs(lo) > np.abs(hi), lo, hi)
        return near, far

    def distances(self, idx: np.ndarray, level: int):
        """``(dist to closed ball, dist to exterior)`` for cubes ``idx`` (..., n)."""
        near, far = self._radii(np.asarray(idx, dtype=float), self.side(level))
        pmin = np.sqrt(np.sum(near**2, axis=-1))
        pmax = np.sqrt(np.sum(far**2, axis=-1))
        d_in = np.maximum(pmin - OMEGA_RADIUS, 0.0)
        d_out = np.maximum(self.r_out - pmax, 0.0)
        return d_in, d_out

    def admissible(self, idx: np.ndarray, level: int) -> np.ndarray:
        if level < 0:
            return np.zeros(np.shape(idx)[:-1], dtype=bool)
        d_in, d_out = self.distances(idx, level)
        return self.diam(level) <= np.minimum(d_in, d_out)

    def is_whitney(self, idx: np.ndarray, level: int) -> np.ndarray:
        idx = np.asarray(idx)
        own = self.admissible(idx, level)
        if level == 0:
            return own
        parent = self.admissible(np.floor_divide(idx, 2), level - 1)
        return own & ~parent

    def anchors(self, idx: np.ndarray, level: int):
        """Nearest points of F: returns ``(y, inner)`` with ``inner`` True on the unit sphere."""
        idx = np.asarray(idx, dtype=float)
        near, far = self._radii(idx, self.side(level))
        pmin = np.sqrt(np.sum(near**2, axis=-1, keepdims=True))
        pmax = np.sqrt(np.sum(far**2, axis=-1, keepdims=True))
        d_in, d_out = self.distances(idx, level)
        inner = d_in <= d_out
        y_in = OMEGA_RADIUS * near / pmin
        y_out = self.r_out * far / pmax
        return np.where(inner[..., None], y_in, y_out), inner

    def memberships(self, points: np.ndarray):
        """All (point, cube) incidences with ``point`` inside the dilated cube.

        Returns a list of dicts per level with keys ``point``, ``idx``, ``u``
        (local coordinates relative to the cube, side units).
        """
        points = np.asarray(points, dtype=float)
        out = []
        for level in range(self.max_level + 1):
            side = self.side(level)
            base = np.floor(points / side).astype(np.int64)
            cand = base[:, None, :] + self._offsets[None, :, :]
            centers = (cand + 0.5) * side
            u = (points[:, None, :] - centers) / side
            inside = np.all(np.abs(u) < _EDGE, axis=-1)
            if not np.any(inside):
                continue
            pi, ci = np.nonzero(inside)
            idx = cand[pi, ci]
            keep = self.is_whitney(idx, level)
            if not np.any(keep):
                continue
            rec = {"level": level, "point": pi[keep], "idx": idx[keep], "u": u[pi, ci][keep]}
            for key in rec["idx"].tolist():
                self.realized[(level, tuple(key))] = True
            out.append(rec)
        return out

    def partition_sum(self, points: np.ndarray) -> np.ndarray:
        """Raw bump sum ``S(x) = sum_l phi_l(x)`` before normalization."""
        points = np.asarray(points, dtype=float)
        S = np.zeros(len(points))
        for rec in self.memberships(points):
            phi = np.prod(bump_profile(rec["u"]), axis=-1)
            np.add.at(S, rec["point"], phi)
        return S

    def partition_of_unity(self, points: np.ndarray):
        """Normalized sums ``sum_l phi*_l`` (1 where covered, 0 where not)."""
        S = self.partition_sum(points)
        total = np.zeros_like(S)
        for rec in self.memberships(points):
            phi = np.prod(bump_profile(rec["u"]), axis=-1)
            np.add.at(total, rec["point"], phi / S[rec["point"]])
        return total

    def cubes(self):
        """Realized cubes as ``(level, idx)`` pairs in deterministic order."""
        return sorted(self.realized)

    def check_invariants(self) -> dict:
        """Verify the geometric cover invariants on all realized cubes."""
        cubes = self.cubes()
        ok_diam = True
        ok_star = True
        ok_disjoint = True
        keys = set(cubes)
        for level, idx in cubes:
            a = np.array(idx)
            d_in, d_out = self.distances(a, level)
            ok_diam &= bool(self.diam(level) <= min(d_in, d_out))
            ok_star &= DILATION * self.diam(level) <= 1.25 * self.diam(level)
            # an ancestor in the set would mean nested (non-disjoint) cubes
            anc = a.copy()
            for lv in range(level - 1, -1, -1):
                anc = np.floor_divide(anc, 2)
                if (lv, tuple(int(v) for v in anc)) in keys:
                    ok_disjoint = False
                    break
        return {"count": len(cubes), "diam_le_dist": ok_diam,
                "star_diam_ratio": ok_star, "disjoint": ok_disjoint}

    def to_json(self) -> str:
        cubes = [{"level": lv, "index": list(idx), "side": self.side(lv)}
                 for lv, idx in self.cubes()]
        return json.dumps({"eps0": self.eps0, "h_min": self.h_min, "dilation": DILATION,
                           "cubes": cubes}, sort_keys=True)


def whitney_cover(eps0: float, h_min: float = 1.0 / 64, n: int = 3) -> WhitneyCover:
    return WhitneyCover(eps0=float(eps0), n=n, h_min=float(h_min))


# -- extension ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExtendedConductivity:
    """Extended conductivity on a grid with diagnostics."""

    sigma: ScalarField
    grad: tuple
    gamma0: float
    eps: float
    eps0: float
    model: ConductivityModel
    cover: WhitneyCover
    diagnostics: dict

    @property
    def grid(self) -> Grid:
        return self.sigma.grid

    @property
    def values(self) -> np.ndarray:
        return np.real(self.sigma.space_values())

    def min(self) -> float:
        return float(np.min(self.values))

    def boundedness_constant(self, pair_budget: int = 200_000, radius: Optional[float] = None) -> float:
        """Ratio ``||sigma||_{C^{1,eps}} / max(1, ||gamma||_{C^{1,eps}(closed ball)})``."""
        grid = self.grid
        radius = radius or min(grid.L, OMEGA_RADIUS + self.eps0 + 2 * grid.dx)
        outer = grid.radius <= radius
        inner = grid.radius <= OMEGA_RADIUS
        num = holder_norm(self.sigma, self.eps, pair_budget, grads=self.grad, mask=outer)
        den = holder_norm(self.sigma, self.eps, pair_budget, grads=self.grad, mask=inner)
        return num / max(1.0, den)


def _taylor(model: ConductivityModel, y: np.ndarray, inner: np.ndarray):
    # anchor data: gamma and grad gamma on the sphere, (1, 0) outside
    val = np.where(inner, model.value(y), 1.0)
    grad = np.where(inner[:, None], model.gradient(y), 0.0)
    return val, grad


def blend(model: ConductivityModel, cover: WhitneyCover, points: np.ndarray):
    """Evaluate the extension and its gradient at shell points.

    Returns ``(sigma, grad, covered, anchors)`` where ``anchors`` collects the
    inner anchor points that contributed.
    """
    points = np.asarray(points, dtype=float)
    M, n = points.shape
    S = np.zeros(M)
    dS = np.zeros((M, n))
    num = np.zeros(M)
    dnum = np.zeros((M, n))
    anchors = []
    for rec in cover.memberships(points):
        level, pi, u = rec["level"], rec["point"], rec["u"]
        side = cover.side(level)
        prof = bump_profile(u)
        dprof = bump_profile(u, deriv=True) / side
        phi = np.prod(prof, axis=-1)
        dphi = np.empty_like(u)
        for j in range(n):
            others = np.prod(np.delete(prof, j, axis=-1), axis=-1)
            dphi[:, j] = dprof[:, j] * others
        y, inner = cover.anchors(rec["idx"], level)
        val, g = _taylor(model, y, inner)
        P = val + np.sum(g * (points[pi] - y), axis=-1)
        np.add.at(S, pi, phi)
        np.add.at(dS, pi, dphi)
        np.add.at(num, pi, P * phi)
        np.add.at(dnum, pi, g * phi[:, None] + P[:, None] * dphi)
        if np.any(inner):
            anchors.append(y[inner])
    covered = S > 0
    sigma = np.zeros(M)
    grad = np.zeros((M, n))
    Sc = S[covered]
    sigma[covered] = num[covered] / Sc
    grad[covered] = (dnum[covered] - sigma[covered, None] * dS[covered]) / Sc[:, None]
    # uncovered points (within h_min of dG): nearest-anchor Taylor value
    rest = ~covered
    if np.any(rest):
        p = points[rest]
        r = np.linalg.norm(p, axis=-1, keepdims=True)
        inner = (r[:, 0] - OMEGA_RADIUS) <= (cover.r_out - r[:, 0])
        y = np.where(inner[:, None], OMEGA_RADIUS * p / r, cover.r_out * p / r)
        val, g = _taylor(model, y, inner)
        sigma[rest] = val + np.sum(g * (p - y), axis=-1)
        grad[rest] = g
        if np.any(inner):
            anchors.append(y[inner])
    anchors = np.concatenate(anchors) if anchors else np.zeros((0, n))
    return sigma, grad, covered, anchors


def _default_h_min(grid: Grid, eps0: float) -> float:
    return min(grid.dx / 2, eps0 / 3)


def extend(model: ConductivityModel, grid: Grid, eps0: Optional[float] = None,
           h_min: Optional[float] = None, R: Optional[float] = None,
           gamma0: Optional[float] = None) -> ExtendedConductivity:
    """Extend ``model`` from the closed unit ball to the whole torus.

    Parameters
    ----------
    model : ConductivityModel
        Conductivity on the closed unit ball; only its values and gradients
        on the unit sphere enter the shell.
    grid : Grid
        Target grid; the ball ``B`` of radius ``R`` must sit inside it.
    eps0 : float, optional
        Shell width.  Defaults to :func:`choose_eps0` on this model alone.
    h_min : float, optional
        Smallest resolved distance to ``F``; defaults to ``min(dx/2, eps0/3)``.
    R : float, optional
        Radius of ``B``; defaults to ``L/2``.
    """
    if grid.n != 3:
        raise ValueError("the extension is implemented for n = 3")
    gamma0 = model.gamma0 if gamma0 is None else gamma0
    if eps0 is None:
        eps0 = choose_eps0(min(gamma0, 1.0), [boundary_gradient_sum(model)])
    R = grid.L / 2 if R is None else R
    if not OMEGA_RADIUS + eps0 < R < grid.L:
        raise ValueError(f"need 1 + eps0 < R < L, got eps0={eps0}, R={R}, L={grid.L}")
    h_min = _default_h_min(grid, eps0) if h_min is None else h_min
    cover = whitney_cover(eps0, h_min, grid.n)

    pts = grid.points.reshape(-1, grid.n)
    r = grid.radius.ravel()
    sigma = np.ones(len(pts))
    grad = np.zeros_like(pts)
    inside = r <= OMEGA_RADIUS
    shell = (r > OMEGA_RADIUS) & (r < cover.r_out)
    sigma[inside] = model.value(pts[inside])
    grad[inside] = model.gradient(pts[inside])
    s_shell, g_shell, covered, anchors = blend(model, cover, pts[shell])
    sigma[shell] = s_shell
    grad[shell] = g_shell

    gamma_in = sigma[inside]
    if np.any(inside) and np.min(gamma_in) < gamma0:
        raise ValueError(f"model value {np.min(gamma_in):.4g} below gamma0 = {gamma0} on the ball")
    min_sigma = float(np.min(sigma))
    if min_sigma < gamma0 / 2:
        raise ExtensionError(f"extension minimum {min_sigma:.4g} < gamma0/2 = {gamma0 / 2}")

    nodes, _ = sphere_nodes(OMEGA_RADIUS)
    diagnostics = {
        "eps0": eps0,
        "h_min": h_min,
        "R": R,
        "min_sigma": min_sigma,
        "shell_points": int(np.sum(shell)),
        "uncovered_points": int(np.sum(~covered)),
        "cubes": len(cover.realized),
        "boundary_agreement": float(np.max(np.abs(
            blend(model, cover, nodes * (1 + 1e-9))[0] - model.value(nodes)))),
        "outside_B_max_dev": float(np.max(np.abs(sigma[r >= R] - 1.0))) if np.any(r >= R) else 0.0,
        "anchors": anchors,
    }
    shape = grid.shape
    return ExtendedConductivity(
        ScalarField(grid, sigma.reshape(shape)),
        tuple(ScalarField(grid, grad[:, j].reshape(shape).copy()) for j in range(grid.n)),
        gamma0, model.eps, eps0, model, cover, diagnostics)


def extend_pair(model1: ConductivityModel, model2: ConductivityModel, grid: Grid,
                h_min: Optional[float] = None, R: Optional[float] = None):
    """Extend two conductivities with one shared shell width."""
    gamma0 = min(model1.gamma0, model2.gamma0, 1.0)
    eps0 = choose_eps0(gamma0, [boundary_gradient_sum(model1), boundary_gradient_sum(model2)])
    e1 = extend(model1, grid, eps0=eps0, h_min=h_min, R=R, gamma0=gamma0)
    e2 = extend(model2, grid, eps0=eps0, h_min=h_min, R=R, gamma0=gamma0)
    return e1, e2


def boundary_difference_bound(model1: ConductivityModel, model2: ConductivityModel,
                              extra_points: Optional[np.ndarray] = None) -> float:
    """``sum_{|alpha|<=1} sup |d^alpha gamma1 - d^alpha gamma2|`` on the unit sphere.

    The supremum runs over the sphere nodes plus any ``extra_points`` on the
    sphere (for instance the anchors an extension actually used).
    """
    pts, _ = sphere_nodes(OMEGA_RADIUS)
    if extra_points is not None and len(extra_points):
        pts = np.concatenate([pts, np.asarray(extra_points)])
    dv = np.max(np.abs(model1.value(pts) - model2.value(pts)))
    dg = np.max(np.abs(model1.gradient(pts) - model2.gradient(pts)), axis=0)
    return float(dv + np.sum(dg))


def outside_difference(e1: ExtendedConductivity, e2: ExtendedConductivity) -> float:
    """``sup`` over grid points outside the open unit ball of ``|sigma1 - sigma2|``."""
    mask = e1.grid.radius > OMEGA_RADIUS
    return float(np.max(np.abs(e1.values[mask] - e2.values[mask])))


def taylor_remainder_check(model: ConductivityModel, alpha: int, pairs, eps: Optional[float] = None,
                           seed: int = 0) -> float:
    """Largest ``|R_alpha(x1, x2)| / |x1 - x2|^(1 + eps - |alpha|)`` over point pairs.

    ``alpha`` is ``-1`` for the zeroth-order remainder
    ``gamma(x1) - gamma(x2) - grad gamma(x2).(x1 - x2)`` and ``j`` in
    ``0..n-1`` for ``d_j gamma(x1) - d_j gamma(x2)``.  ``pairs`` is an array
    ``(P, 2, n)`` or a count of random pairs drawn in the closed unit ball.
    """
    eps = model.eps if eps is None else eps
    if np.isscalar(pairs):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(int(pairs), 2, 3))
        rad = rng.random((int(pairs), 2, 1)) ** (1 / 3)
        pairs = pts / np.linalg.norm(pts, axis=-1, keepdims=True) * rad
    pairs = np.asarray(pairs, dtype=float)
    x1, x2 = pairs[:, 0], pairs[:, 1]
    d = np.linalg.norm(x1 - x2, axis=-1)
    keep = d > 0
    x1, x2, d = x1[keep], x2[keep], d[keep]
    if alpha < 0:
        R = model.value(x1) - model.value(x2) - np.sum(model.gradient(x2) * (x1 - x2), axis=-1)
        power = 1 + eps
    else:
        R = model.gradient(x1)[:, alpha] - model.gradient(x2)[:, alpha]
        power = eps
    return float(np.max(np.abs(R) / d**power)) if len(d) else 0.0
