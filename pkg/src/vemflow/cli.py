"""Command-line driver: ``vemflow {mesh,run,convergence,verify-complex,compare-formulations}``."""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .analysis import PROBLEMS, ConvergenceReport, make_problem, run_level, verify_complex
from .assembly import FORMULATIONS, VARIANTS, ConfigError, Discretization, SolverSettings
from .mesh import MeshError, check_mesh, make_mesh, read_mesh, write_mesh

log = logging.getLogger("vemflow")

FAMILIES = ("cvt", "dquad", "tri", "mapped-cvt")
RHS_MODES = ("projected", "curl")


@dataclass
class RunConfig:
    problem: str = "test1"
    formulation: str = "curl"
    trilinear: str = "conv"
    k: int = 2
    nu: float = 1.0
    rhs_mode: str = "projected"
    mesh: str | None = None
    mesh_family: str | None = None
    h: float = 0.125
    levels: list = field(default_factory=lambda: [1 / 8, 1 / 16, 1 / 32])
    seed: int = 0
    tol: float = 1e-10
    max_iters: int = 50
    picard: bool = False
    c1_consistency: str = "hessian"
    condition: bool = False
    threads: int = 1
    out_dir: str = "out"
    no_timestamp: bool = False

    def validate(self):
        if self.formulation not in FORMULATIONS:
            raise ConfigError(f"unknown formulation {self.formulation!r}; valid: {', '.join(FORMULATIONS)}")
        if self.trilinear not in VARIANTS:
            raise ConfigError(f"unknown trilinear variant {self.trilinear!r}; valid: {', '.join(VARIANTS)}")
        if self.rhs_mode not in RHS_MODES:
            raise ConfigError(f"unknown rhs mode {self.rhs_mode!r}; valid: {', '.join(RHS_MODES)}")
        if self.rhs_mode == "curl" and self.formulation not in ("curl", "stream-c1"):
            raise ConfigError("rhs-mode curl is only valid for the curl and stream-c1 formulations")
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; valid: {', '.join(PROBLEMS)}")
        if self.mesh_family is not None and self.mesh_family not in FAMILIES:
            raise ConfigError(f"unknown mesh family {self.mesh_family!r}; valid: {', '.join(FAMILIES)}")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.nu <= 0:
            raise ConfigError("nu must be positive")
        return self

    @property
    def family(self) -> str:
        if self.mesh_family:
            return self.mesh_family
        return "tri" if self.problem == "test2" else "cvt"

    def settings(self) -> SolverSettings:
        return SolverSettings(self.tol, self.max_iters, not self.picard, self.c1_consistency)


def parse_levels(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(Fraction(t.strip())) for t in str(text).split(",") if t.strip()]
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse levels {text!r}; expected e.g. 1/8,1/16,1/32") from None


def load_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def _coerce(cfg: dict) -> dict:
    types = {f.name: f.type for f in RunConfig.__dataclass_fields__.values()}
    out = {}
    for key, val in cfg.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        if key == "levels":
            out[key] = parse_levels(val)
        elif types[key] in ("int",):
            out[key] = int(val)
        elif types[key] in ("float",):
            out[key] = float(Fraction(val))
        elif types[key] in ("bool",):
            out[key] = str(val).lower() in ("1", "true", "yes", "on")
        else:
            out[key] = val
    return out


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--problem", choices=sorted(PROBLEMS))
    p.add_argument("--formulation")
    p.add_argument("--trilinear")
    p.add_argument("--k", type=int)
    p.add_argument("--nu", type=float)
    p.add_argument("--rhs-mode")
    p.add_argument("--mesh", help="mesh file (overrides --mesh-family/--h)")
    p.add_argument("--mesh-family")
    p.add_argument("--h", type=lambda s: float(Fraction(s)))
    p.add_argument("--levels")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--picard", action="store_true", default=None)
    p.add_argument("--c1-consistency", choices=["hessian", "laplacian"])
    p.add_argument("--condition", action="store_true", default=None, help="estimate condition numbers")
    p.add_argument("--threads", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--no-timestamp", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vemflow", description="Divergence-free virtual element solvers for 2D steady Navier-Stokes.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    mp = sub.add_parser("mesh", help="generate or audit meshes")
    msub = mp.add_subparsers(dest="mesh_command", required=True)
    g = msub.add_parser("gen")
    g.add_argument("--family", required=True, choices=FAMILIES)
    g.add_argument("--h", required=True, type=lambda s: float(Fraction(s)))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    c = msub.add_parser("check")
    c.add_argument("--rho-min", type=float, default=0.01)
    c.add_argument("file")

    for name, hlp in (
        ("run", "solve once and report errors"),
        ("convergence", "refinement sweep with CSV output"),
        ("compare-formulations", "velocity-pressure vs curl on identical inputs"),
    ):
        _common(sub.add_parser(name, help=hlp))
    vc = sub.add_parser("verify-complex", help="check exactness of the discrete Stokes complex")
    vc.add_argument("files", nargs="*", help="mesh files (default: coarsest mesh of every family)")
    vc.add_argument("--k", type=int, default=2)
    vc.add_argument("--seed", type=int, default=0)
    return ap


def make_config(args) -> RunConfig:
    cfg = {}
    if getattr(args, "config", None):
        cfg.update(_coerce(load_config(args.config)))
    for key in RunConfig.__dataclass_fields__:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = parse_levels(val) if key == "levels" else val
    return RunConfig(**cfg).validate()


# ---------------------------------------------------------------------------
# commands


def _mesh_for(cfg: RunConfig, h: float):
    if cfg.mesh:
        return read_mesh(cfg.mesh)
    return make_mesh(cfg.family, h, cfg.seed)


def _timestamp(cfg) -> str | None:
    return None if cfg.no_timestamp else f"generated {_dt.datetime.now().isoformat(timespec='seconds')}"


def write_solution(path, sol, cfg: RunConfig):
    lines = [
        f"# formulation {sol.formulation}",
        f"# k {sol.k}",
        f"# mesh {cfg.mesh or f'{cfg.family} h={cfg.h:g} seed={cfg.seed}'}",
        f"# trilinear {sol.variant}",
    ]
    lines += [f"{v:.17g}" for v in sol.U]
    if sol.P is not None:
        lines.append("# pressure")
        lines += [f"{v:.17g}" for v in sol.P]
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_mesh(args) -> int:
    if args.mesh_command == "gen":
        m = make_mesh(args.family, args.h, args.seed)
        write_mesh(m, args.out)
        print(f"wrote {args.out}: {m.n_vertices} vertices, {m.n_cells} cells, h = {m.h:.4g}")
        return 0
    m = read_mesh(args.file)
    rep = check_mesh(m, args.rho_min)
    print(rep.summary())
    for c in rep.failing_cells[:20]:
        print(f"  cell {c}: star {rep.star_ratio[c]:.3g} vertex {rep.vertex_ratio[c]:.3g}")
    return 0 if rep.passed else 1


def _row_summary(row) -> dict:
    return {
        "h": row.h,
        "n_dofs": row.n_dofs,
        "err_u_h1": row.err_u_h1,
        "err_psi_h2": row.err_psi_h2,
        "err_p_l2": row.err_p_l2,
        "cond": row.cond,
        "newton_iters": row.newton_iters,
        "converged": row.converged,
        "divergence_defect": row.divergence_defect,
    }


def cmd_run(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = _mesh_for(cfg, cfg.h)
    disc = Discretization(mesh, cfg.k, cfg.threads)
    problem = make_problem(cfg.problem, cfg.nu)
    row, sol = run_level(disc, problem, cfg.formulation, cfg.trilinear, cfg.rhs_mode, cfg.settings(), cfg.condition)
    write_solution(out / "solution.txt", sol, cfg)
    rep = {"config": asdict(cfg), "report": _row_summary(row), "residuals": sol.report.residuals, "message": sol.report.message}
    (out / "report.json").write_text(json.dumps(rep, indent=2, default=float) + "\n")
    print(
        f"{cfg.formulation}/{cfg.trilinear} k={cfg.k} cells={mesh.n_cells} dofs={row.n_dofs} "
        f"iters={row.newton_iters} converged={row.converged}\n"
        f"err_u_h1={row.err_u_h1:.6e} err_psi_h2={row.err_psi_h2:.6e} err_p_l2={row.err_p_l2:.6e}"
    )
    return 0 if row.converged else 1


def cmd_convergence(cfg: RunConfig) -> int:
    if len(cfg.levels) < 2:
        raise ConfigError("need >= 2 levels for a convergence study")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = make_problem(cfg.problem, cfg.nu)
    rows = []
    for h in cfg.levels:
        disc = Discretization(make_mesh(cfg.family, h, cfg.seed), cfg.k, cfg.threads)
        row, sol = run_level(disc, problem, cfg.formulation, cfg.trilinear, cfg.rhs_mode, cfg.settings(), cfg.condition)
        if not row.converged:
            log.warning("level h=%g did not converge: %s", h, sol.report.message)
        rows.append(row)
    rep = ConvergenceReport(cfg.formulation, cfg.trilinear, cfg.k, rows)
    text = rep.to_csv(_timestamp(cfg))
    (out / "convergence.csv").write_text(text)
    for name, pts in rep.plot_series().items():
        (out / f"{name}.dat").write_text("".join(f"{x:.10g} {y:.10g}\n" for x, y in pts))
    sys.stdout.write(text)
    return 0 if all(r.converged for r in rows) else 1


def cmd_compare(cfg: RunConfig) -> int:
    mesh = _mesh_for(cfg, cfg.h)
    disc = Discretization(mesh, cfg.k, cfg.threads)
    problem = make_problem(cfg.problem, cfg.nu)
    results = {}
    for form in ("velocity-pressure", "reduced", "curl"):
        results[form] = run_level(disc, problem, form, cfg.trilinear, "projected", cfg.settings(), cfg.condition)
    u_vp = results["velocity-pressure"][1].velocity_dofs(disc)
    u_curl = results["curl"][1].velocity_dofs(disc)
    diff = float(np.abs(u_vp - u_curl).max() / max(np.abs(u_vp).max(), 1e-300))
    for form, (row, _) in results.items():
        print(f"{form:18s} dofs={row.n_dofs:7d} cond={row.cond:.4e} err_u_h1={row.err_u_h1:.9e} err_p_l2={row.err_p_l2:.9e}")
    nr, nc = results["reduced"][0].n_dofs, results["curl"][0].n_dofs
    print(f"reduced - curl dofs = {nr - nc} (2(n_P - 1) = {2 * (mesh.n_cells - 1)})")
    print(f"max relative velocity DoF discrepancy = {diff:.3e}")
    ok = all(r.converged for r, _ in results.values()) and diff <= 1e-8 and nr - nc == 2 * (mesh.n_cells - 1)
    return 0 if ok else 1


def cmd_verify(args) -> int:
    if args.files:
        meshes = [(f, read_mesh(f)) for f in args.files]
    else:
        coarse = {"cvt": 1 / 8, "dquad": 1 / 8, "tri": 1 / 5, "mapped-cvt": 1 / 4}
        meshes = [(f"{fam} h={h:g}", make_mesh(fam, h, args.seed)) for fam, h in coarse.items()]
    ok = True
    for name, m in meshes:
        rep = verify_complex(m, args.k)
        print(f"{name}: {'PASS' if rep.passed else 'FAIL'}")
        for line in rep.lines():
            print(f"  {line}")
        ok &= rep.passed
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "mesh":
            return cmd_mesh(args)
        if args.command == "verify-complex":
            return cmd_verify(args)
        cfg = make_config(args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "convergence":
            return cmd_convergence(cfg)
        return cmd_compare(cfg)
    except (ConfigError, MeshError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
