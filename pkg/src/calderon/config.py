"""Experiment configuration: a single JSON file mapped onto dataclasses."""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .conductivity import ConductivityModel
from .spectral import Grid, create_grid

__all__ = ["ConfigError", "GridConfig", "ZetaConfig", "FamilyConfig", "Tolerances",
           "ExperimentConfig", "load_config", "output_dir"]


class ConfigError(ValueError):
    """Schema or range violation in an experiment configuration."""


@dataclass
class GridConfig:
    n: int = 3
    N: int = 64
    L: float = 3.0


@dataclass
class ZetaConfig:
    # k as integer multiples of the lattice spacing pi/L
    k_modes: list = field(default_factory=lambda: [[0, 0, 0], [2, 1, 0], [4, 0, 0]])
    s_values: list = field(default_factory=lambda: [8.0, 16.0, 32.0])
    lam_values: list = field(default_factory=lambda: [8.0, 16.0, 32.0, 64.0])
    n_s: int = 8
    n_theta: int = 16
    theta: float = 0.0


@dataclass
class FamilyConfig:
    """``gamma_tau = ConductivityModel(kind, params | {amplitude: offset + tau})``."""

    kind: str = "gaussian_bump"
    params: dict = field(default_factory=lambda: {"x0": [0.0, 0.0, 0.0], "w": 0.5})
    amplitude: str = "a"
    offset: float = 0.0
    taus: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])

    def model(self, tau: float, gamma0: float, eps: float, M: float) -> ConductivityModel:
        params = dict(self.params)
        params[self.amplitude] = self.offset + tau
        return ConductivityModel(self.kind, params, gamma0, eps, M)


@dataclass
class Tolerances:
    cgo_tol: float = 1e-10
    max_iter: int = 200
    probe_residual: float = 1e-3


@dataclass
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    reference: dict = field(default_factory=lambda: {"kind": "unit", "params": {}})
    family: FamilyConfig = field(default_factory=FamilyConfig)
    eps: float = 0.5
    delta: float = 0.5
    gamma0: float = 0.5
    M: float = 10.0
    R: Optional[float] = None
    L_max: int = 32
    ode_steps: int = 2000
    zeta: ZetaConfig = field(default_factory=ZetaConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    out: str = "calderon_out"
    seed: int = 0
    workers: int = 1

    # -- derived ---------------------------------------------------------
    def make_grid(self) -> Grid:
        g = self.grid
        return create_grid(g.n, g.N, g.L)

    @property
    def ball_radius(self) -> float:
        return self.grid.L / 2 if self.R is None else self.R

    def reference_model(self) -> ConductivityModel:
        d = dict(self.reference)
        d.setdefault("gamma0", self.gamma0)
        d.setdefault("eps", self.eps)
        d.setdefault("M", self.M)
        return ConductivityModel.from_json(d)

    def family_model(self, tau: float) -> ConductivityModel:
        return self.family.model(tau, self.gamma0, self.eps, self.M)

    def k_vectors(self, grid: Optional[Grid] = None) -> list:
        grid = grid or self.make_grid()
        return [np.asarray(m, dtype=float) * grid.dxi for m in self.zeta.k_modes]

    # -- validation ------------------------------------------------------
    def validate(self) -> "ExperimentConfig":
        g = self.grid
        if g.n != 3:
            raise ConfigError("only n = 3 is supported")
        if not (isinstance(g.N, int) and g.N >= 4 and g.N % 2 == 0):
            raise ConfigError(f"grid.N must be an even integer >= 4, got {g.N}")
        if not g.L > 0:
            raise ConfigError("grid.L must be positive")
        if not 0 < self.eps < 1 or not 0 < self.delta < 1:
            raise ConfigError("eps and delta must lie in (0, 1)")
        if not self.gamma0 > 0 or not self.M > 1:
            raise ConfigError("need gamma0 > 0 and M > 1")
        if not 1.0 < self.ball_radius < g.L:
            raise ConfigError(f"ball radius {self.ball_radius} must lie in (1, L)")
        fam = self.family
        taus = [float(t) for t in fam.taus]
        if not taus or any(t < 0 or not math.isfinite(t) for t in taus):
            raise ConfigError("family.taus must be a nonempty list of finite values >= 0")
        if any(b > a for a, b in zip(taus, taus[1:])):
            raise ConfigError("family.taus must be decreasing")
        for key in ("w", "rho"):
            if key in fam.params and not 0 < float(fam.params[key]) < g.L:
                raise ConfigError(f"family radius {key} = {fam.params[key]} must lie in (0, L)")
        if "x0" in fam.params and np.linalg.norm(fam.params["x0"]) >= g.L:
            raise ConfigError("family centre x0 lies outside the torus")
        try:
            self.reference_model()
            for t in taus:
                self.family_model(t)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad model descriptor: {exc}") from exc
        z = self.zeta
        for m in z.k_modes:
            if len(m) != g.n or any(int(v) != v or not -g.N // 2 <= v < g.N // 2 for v in m):
                raise ConfigError(f"k mode {m} is not an integer lattice point in the band")
        if z.n_s < 2 or z.n_theta < 1:
            raise ConfigError("need n_s >= 2 and n_theta >= 1")
        if any(s < 1 for s in z.s_values) or any(lam < 1 for lam in z.lam_values):
            raise ConfigError("s and lambda values must be at least 1")
        if self.L_max < 0 or self.ode_steps < 1 or self.workers < 1:
            raise ConfigError("L_max, ode_steps and workers out of range")
        tol = self.tolerances
        if not tol.cgo_tol > 0 or tol.max_iter < 1:
            raise ConfigError("tolerances out of range")
        return self

    # -- serialization ---------------------------------------------------
    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        nested = {"grid": GridConfig, "family": FamilyConfig, "zeta": ZetaConfig,
                  "tolerances": Tolerances}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kw = {}
        for key, val in d.items():
            if key in nested:
                if not isinstance(val, dict):
                    raise ConfigError(f"{key} must be an object")
                sub = nested[key]
                bad = set(val) - {f.name for f in fields(sub)}
                if bad:
                    raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
                kw[key] = sub(**val)
            else:
                kw[key] = val
        try:
            return cls(**kw).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path=None) -> ExperimentConfig:
    """Read a JSON config; ``None`` gives the shipped defaults."""
    if path is None:
        return ExperimentConfig().validate()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    return ExperimentConfig.from_dict(data)


def output_dir(cfg: ExperimentConfig, override=None) -> Path:
    """``--out`` beats ``CALDERON_OUT`` beats the config value."""
    return Path(override or os.environ.get("CALDERON_OUT") or cfg.out)
