"""Command-line front end.

Exit codes: 0 success, 2 validation error, 3 numerical failure.  Errors are
printed as one JSON object on stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bourgain import invert_conjugated_laplacian, make_zeta, x_norm
from .cgo import (ConvergenceError, DivergenceError, assemble_cgo, average_q_norm,
                  solve_remainder)
from .conductivity import LowerBoundError, gaussian_bump, instantiate, unit
from .config import ConfigError, load_config, output_dir
from .dtn import DtnBlowupError, dtn_gap, dtn_of_model, dump_spectrum
from .extension import ExtensionError, extend_pair, outside_difference
from .potential import compute_q, mq_norm_estimate
from .spectral import ScalarField, create_grid, dump_field
from .stability import _clean, fit_constant, fourier_probe, run_pipeline, schedule, write_report

log = logging.getLogger("calderon")

COMMANDS = ("extend", "potential", "cgo", "average-decay", "dtn", "probe", "pipeline", "verify")
NUMERICAL = (DivergenceError, ConvergenceError, DtnBlowupError, ArithmeticError,
             LowerBoundError, ExtensionError, FloatingPointError)


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _pair(cfg):
    grid = cfg.make_grid()
    m1 = cfg.reference_model()
    m2 = cfg.family_model(cfg.family.taus[0])
    e1, e2 = extend_pair(m1, m2, grid, R=cfg.ball_radius)
    return grid, m1, m2, e1, e2


def cmd_extend(cfg, files):
    grid, m1, m2, e1, e2 = _pair(cfg)
    out = {}
    for name, e in (("sigma1", e1), ("sigma2", e2)):
        d = {k: v for k, v in e.diagnostics.items() if k != "anchors"}
        d["anchors_used"] = len(e.diagnostics["anchors"])
        d["partition_check"] = e.cover.check_invariants()
        out[name] = d
        files[f"{name}.f64"] = e.sigma
    out["outside_difference"] = outside_difference(e1, e2)
    return out


def cmd_potential(cfg, files):
    grid, m1, m2, e1, e2 = _pair(cfg)
    k = cfg.k_vectors(grid)[0]
    out = {}
    for name, e in (("q1", e1), ("q2", e2)):
        pot = compute_q(e, cfg.ball_radius)
        files[f"{name}.f64"] = pot.q
        rows = []
        for s in cfg.zeta.s_values:
            est = mq_norm_estimate(pot, make_zeta(k, s, cfg.zeta.theta), seed=cfg.seed)
            rows.append({"s": s, **est.to_json()})
        out[name] = {"max_abs_q": pot.q.max_abs(), "mq_norm": rows}
    return out


def cmd_cgo(cfg, files):
    grid, m1, m2, e1, e2 = _pair(cfg)
    k = cfg.k_vectors(grid)[0]
    tol = cfg.tolerances
    rows = []
    for s in cfg.zeta.s_values:
        zeta = make_zeta(k, s, cfg.zeta.theta)
        sol = solve_remainder(e2, zeta, tol.cgo_tol, tol.max_iter)
        row = sol.to_json()
        if zeta.norm < 700:
            row["assembly"] = assemble_cgo(e2, sol).to_json()
        rows.append(row)
    return {"solutions": rows}


def cmd_average_decay(cfg, files):
    grid, m1, m2, e1, e2 = _pair(cfg)
    z = cfg.zeta
    out = {}
    for m, k in zip(z.k_modes, cfg.k_vectors(grid)):
        lams = [lam for lam in z.lam_values if lam >= max(1.0, float(np.linalg.norm(k)))]
        rows = [average_q_norm(e2, k, lam, z.n_s, z.n_theta, eps=cfg.eps).to_json() for lam in lams]
        fit = fit_constant([r["lhs"] for r in rows], [r["rhs"] for r in rows]) if rows else None
        out[str(tuple(m))] = {"rows": rows, "fit": fit}
    return out


def cmd_dtn(cfg, files):
    m1 = cfg.reference_model()
    out = {"spectra": {}}
    s1 = dtn_of_model(m1, cfg.L_max, cfg.ode_steps)
    files["dtn_reference.csv"] = s1
    for i, tau in enumerate(cfg.family.taus):
        if tau == 0:
            continue
        s2 = dtn_of_model(cfg.family_model(tau), cfg.L_max, cfg.ode_steps)
        files[f"dtn_tau{i}.csv"] = s2
        gap, tail = dtn_gap(s1, s2, with_tail=True)
        out["spectra"][repr(float(tau))] = {"gap": gap, "tail_term": tail, "L_max": cfg.L_max}
    return out


def cmd_probe(cfg, files):
    grid, m1, m2, e1, e2 = _pair(cfg)
    tol = cfg.tolerances
    rows = []
    for k in cfg.k_vectors(grid):
        for s in cfg.zeta.s_values:
            if s < max(1.0, float(np.linalg.norm(k)) / 2):
                continue
            pr = fourier_probe(e1, e2, k, s, cfg.zeta.theta, tol.cgo_tol, tol.max_iter)
            row = pr.to_json()
            row["s"] = s
            row["passed"] = pr.residual <= tol.probe_residual
            rows.append(row)
    return {"probes": rows, "passed": all(r["passed"] for r in rows)}


def cmd_pipeline(cfg, files):
    report = run_pipeline(cfg)
    files["pipeline"] = report
    return {"passed": report.passed, "exponents": report.exponents,
            "fits": {k: v.get("passed") for k, v in report.fits.items()}}


def run_verify() -> dict:
    """Fast invariant checks on a small grid, independent of the config."""
    checks = {}
    grid = create_grid(3, 16, 3.0)
    rng = np.random.default_rng(0)
    zeta = make_zeta(np.array([2.0, 1.0, 0.0]) * grid.dxi, 6.0, 0.3)
    f = ScalarField(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))
    u = invert_conjugated_laplacian(f, zeta)
    a, b = x_norm(u, zeta, 0.5), x_norm(f, zeta, -0.5)
    checks["isometry"] = abs(a - b) <= 1e-12 * b
    z = zeta.vector
    checks["zeta_null"] = abs(np.dot(z, z)) <= 1e-12 * zeta.s**2
    checks["zeta_norm"] = abs(np.vdot(z, z).real - 2 * zeta.s**2) <= 1e-12 * zeta.s**2
    sol = solve_remainder(instantiate(unit(), grid), zeta)
    checks["cgo_trivial"] = sol.r.max_abs() == 0.0
    spec = dtn_of_model(unit(), 32, 2000)
    checks["dtn_unit"] = float(np.max(np.abs(spec.mu - np.arange(33)))) <= 1e-8
    sch = schedule(0.5, 3, 1.5, 0.5, 1.0)
    checks["schedule_exponents"] = (str(sch.t_exponent), str(sch.lam_exponent), str(sch.theta),
                                    str(sch.hm1_exponent)) == ("1/13", "10", "1/216", "1/60")
    checks["schedule_clamp"] = sch.clamped and sch.t == 1.0
    e1, e2 = extend_pair(unit(), gaussian_bump(0.1, w=0.5), create_grid(3, 24, 3.0))
    pts = e2.grid.points.reshape(-1, 3)
    r = e2.grid.radius.ravel()
    shell = (r > 1 + e2.cover.h_min) & (r < 1 + e2.eps0 - e2.cover.h_min)
    pou = e2.cover.partition_of_unity(pts[shell])
    checks["partition_of_unity"] = float(np.max(np.abs(pou - 1))) <= 1e-10
    checks["extension_lower_bound"] = e2.min() >= e2.gamma0 / 2
    return {"checks": checks, "passed": all(checks.values())}


def cmd_verify(cfg, files):
    return run_verify()


HANDLERS = {"extend": cmd_extend, "potential": cmd_potential, "cgo": cmd_cgo,
            "average-decay": cmd_average_decay, "dtn": cmd_dtn, "probe": cmd_probe,
            "pipeline": cmd_pipeline, "verify": cmd_verify}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="calderon", description="Numerical experiments on log-type stability "
                "for the inverse conductivity problem.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON experiment configuration (defaults if omitted)")
    p.add_argument("--out", help="output directory (overrides CALDERON_OUT and the config)")
    p.add_argument("--workers", type=int, help="worker processes for sweeps")
    p.add_argument("--verbose", action="store_true")
    return p


def _write_files(files: dict, out: Path):
    for name, obj in files.items():
        if isinstance(obj, ScalarField):
            dump_field(obj, out / name, name=name.split(".")[0])
        elif name == "pipeline":
            write_report(obj, out)
        else:
            dump_spectrum(obj, out / name)


def _error(kind: str, exc: Exception, code: int) -> int:
    err = {"status": "error", "kind": kind, "type": type(exc).__name__, "message": str(exc)}
    rec = getattr(exc, "record", None)
    if rec:
        err["record"] = rec
    sys.stdout.write(_dumps(err))
    return code


def run_command(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1")
            cfg.workers = args.workers
        out = output_dir(cfg, args.out)
    except (ConfigError, ValueError) as exc:
        return _error("validation", exc, 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    files = {}
    try:
        log.info("running %s", args.command)
        result = HANDLERS[args.command](cfg, files)
    except NUMERICAL as exc:
        return _error("numerical", exc, 3)
    except (ConfigError, ValueError) as exc:
        return _error("validation", exc, 2)
    out.mkdir(parents=True, exist_ok=True)
    _write_files(files, out)
    summary = {"command": args.command, "result": result}
    (out / f"{args.command}.json").write_text(_dumps(summary))
    failed = args.command == "verify" and not result["passed"]
    status = "failed" if failed else "ok"
    sys.stdout.write(_dumps({"command": args.command, "status": status, "output": str(out)}))
    return 3 if failed else 0


def main(argv=None):
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
