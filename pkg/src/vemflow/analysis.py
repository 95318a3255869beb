"""Manufactured problems, discrete error norms, convergence rates and complex checks."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import sympy as sym

from .assembly import (
    Discretization,
    Solution,
    bernoulli_to_convective,
    newton_solve,
    PiecewisePressure,
    recover_pressure,
    SolverSettings,
)
from .mesh import PolygonalMesh
from .polybasis import dim_poly

__all__ = [
    "ManufacturedProblem",
    "make_problem",
    "PROBLEMS",
    "error_u_h1",
    "error_psi_h2",
    "error_p_l2",
    "rates",
    "ConvergenceRow",
    "ConvergenceReport",
    "run_level",
    "convergence_study",
    "verify_complex",
    "ComplexReport",
    "trilinear_identity_checks",
]

X, Y = sym.symbols("x y", real=True)


def _vectorize(expr):
    fn = sym.lambdify((X, Y), expr, "numpy")

    def call(pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        out = fn(pts[:, 0], pts[:, 1])
        return np.broadcast_to(np.asarray(out, float), (len(pts),)).copy()

    return call


def _stack(fns):
    def call(pts):
        return np.column_stack([f(pts) for f in fns])

    return call


@dataclass
class ManufacturedProblem:
    """Exact (psi, u = curl psi, p) with the load f = -nu lap u + (grad u) u - grad p."""

    name: str
    nu: float
    psi_expr: object
    p_expr: object
    domain: str = "square"
    homogeneous: bool = True
    convection: bool = True  # False: Stokes load, -nu lap u - grad p

    def __post_init__(self):
        psi, p, nu = self.psi_expr, self.p_expr, sym.nsimplify(self.nu)
        u = [sym.diff(psi, Y), -sym.diff(psi, X)]
        grad_u = [[sym.diff(ui, v) for v in (X, Y)] for ui in u]
        lap_u = [sym.diff(ui, X, 2) + sym.diff(ui, Y, 2) for ui in u]
        conv = [u[0] * grad_u[i][0] + u[1] * grad_u[i][1] if self.convection else 0 for i in range(2)]
        f = [-nu * lap_u[i] + conv[i] - sym.diff(p, v) for i, v in enumerate((X, Y))]
        rot_f = sym.diff(f[1], X) - sym.diff(f[0], Y)
        self.u_sym, self.f_sym, self.rot_f_sym = u, f, rot_f
        self.psi = _vectorize(psi)
        self.grad_psi = _stack([_vectorize(sym.diff(psi, v)) for v in (X, Y)])
        self.hess_psi = [[_vectorize(sym.diff(psi, a, b)) for b in (X, Y)] for a in (X, Y)]
        self.u = _stack([_vectorize(e) for e in u])
        self.grad_u = [[_vectorize(e) for e in row] for row in grad_u]
        self.div_u = _vectorize(grad_u[0][0] + grad_u[1][1])
        self.p = _vectorize(p)
        self.f = _stack([_vectorize(e) for e in f])
        self.rot_f = _vectorize(rot_f)
        bern = p - (u[0] ** 2 + u[1] ** 2) / 2
        self.bernoulli = _vectorize(bern)


def _test1(nu=1.0):
    pi = sym.pi
    psi = sym.sin(2 * pi * X) ** 2 * sym.sin(2 * pi * Y) ** 2 / (8 * pi)
    p = pi**2 * sym.sin(2 * pi * X) * sym.cos(2 * pi * Y)
    return ManufacturedProblem("test1", nu, psi, p, "square", True)


def _test2(nu=1.0):
    psi = X**2 * Y + Y**3 / 3
    p = X**3 * Y**3 - sym.Rational(1, 16)
    return ManufacturedProblem("test2", nu, psi, p, "disk", False)


def _zero(nu=1.0):
    return ManufacturedProblem("zero", nu, sym.Integer(0), sym.Integer(0), "square", True)


def _stokes_patch(nu=1.0):
    # u in [P_2]^2 divergence free, p in P_1; Dirichlet data from the exact solution
    psi = X**2 * Y - X * Y**2 / 2 + X**3 / 3 + Y**3 / 5
    p = X - 2 * Y + sym.Rational(1, 2)
    return ManufacturedProblem("stokes-patch", nu, psi, p, "square", False)


PROBLEMS = {"test1": _test1, "test2": _test2, "zero": _zero, "stokes-patch": _stokes_patch}


def make_problem(name: str, nu: float = 1.0, stokes: bool = False) -> ManufacturedProblem:
    """Built-in problem by name; ``stokes=True`` drops the convective term from the load."""
    try:
        pb = PROBLEMS[name](nu)
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; valid: {', '.join(PROBLEMS)}") from None
    if stokes:
        pb = ManufacturedProblem(pb.name, nu, pb.psi_expr, pb.p_expr, pb.domain, pb.homogeneous, convection=False)
    return pb


# ---------------------------------------------------------------------------
# errors


def _pairwise(vals) -> float:
    return float(math.fsum(vals))


def error_u_h1(disc: Discretization, u_global: np.ndarray, problem, degree: int | None = None) -> float:
    """sqrt(sum_E ||grad u - Pi0_{k-1} grad u_h||^2) on full-space velocity DoFs."""
    k = disc.k
    deg = 2 * k + 4 if degree is None else degree
    vidx, _, _ = disc.velocity_map
    parts = []
    for c, vel in enumerate(disc.velocity_elements):
        q = vel.geom.quadrature(deg)
        m = vel.geom.basis.eval(q.points, k - 1)
        G = np.einsum("xyqn,n->xyq", vel.pi_grad, u_global[vidx[c]])
        tot = 0.0
        for a in range(2):
            for b in range(2):
                d = problem.grad_u[a][b](q.points) - m @ G[a, b]
                tot += q.integrate(d * d)
        parts.append(tot)
    return math.sqrt(max(_pairwise(parts), 0.0))


def error_psi_h2(disc: Discretization, sol: Solution, problem, degree: int | None = None) -> float:
    """Broken H2 error of the stream function.

    For the curl formulation this is the velocity H1 error of the transferred
    curl; for the C1 scheme it uses the L2 projection of the Hessian.
    """
    if sol.formulation == "curl":
        return error_u_h1(disc, disc.global_transfer() @ sol.U, problem, degree)
    if sol.formulation != "stream-c1":
        return error_u_h1(disc, sol.velocity_dofs(disc), problem, degree)
    k = disc.k
    deg = 2 * k + 4 if degree is None else degree
    sidx, ssgn, _, _ = disc.stream_map
    parts = []
    for c, el in enumerate(disc.c1_elements):
        q = el.geom.quadrature(deg)
        m = el.geom.basis.eval(q.points, k - 1)
        H = np.einsum("abqn,n->abq", el.pi_hessian_l2, ssgn[c] * sol.U[sidx[c]])
        tot = 0.0
        for a in range(2):
            for b in range(2):
                d = problem.hess_psi[a][b](q.points) - m @ H[a, b]
                tot += q.integrate(d * d)
        parts.append(tot)
    return math.sqrt(max(_pairwise(parts), 0.0))


def error_p_l2(disc: Discretization, pressure: PiecewisePressure, problem, exact=None, degree: int | None = None) -> float:
    """||p - p_h||_0 with the exact pressure shifted to zero mean over the mesh."""
    k = disc.k
    deg = 2 * k + 4 if degree is None else degree
    pex = problem.p if exact is None else exact
    rules = [g.quadrature(deg) for g in disc.mesh.geometry]
    area = sum(g.area for g in disc.mesh.geometry)
    mean = _pairwise(q.integrate(pex(q.points)) for q in rules) / area
    parts = []
    for c, q in enumerate(rules):
        d = pex(q.points) - mean - pressure.eval_cell(c, q.points)
        parts.append(q.integrate(d * d))
    return math.sqrt(max(_pairwise(parts), 0.0))


def rates(h, err) -> list:
    """log(e_i / e_{i+1}) / log(h_i / h_{i+1}); the first entry is NaN."""
    out = [float("nan")]
    for i in range(1, len(h)):
        a, b = err[i - 1], err[i]
        if a is None or b is None or not (a > 0 and b > 0) or math.isnan(a) or math.isnan(b):
            out.append(float("nan"))
        else:
            out.append(math.log(a / b) / math.log(h[i - 1] / h[i]))
    return out


# ---------------------------------------------------------------------------
# convergence harness


@dataclass
class ConvergenceRow:
    h: float
    n_dofs: int
    err_u_h1: float = float("nan")
    err_psi_h2: float = float("nan")
    err_p_l2: float = float("nan")
    cond: float = float("nan")
    newton_iters: int = 0
    converged: bool = True
    divergence_defect: float = float("nan")
    extra: dict = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    formulation: str
    variant: str
    k: int
    rows: list

    def _rates(self, attr):
        ok = [r for r in self.rows if r.converged]
        rr = rates([r.h for r in ok], [getattr(r, attr) for r in ok])
        out, it = [], iter(rr)
        for r in self.rows:
            out.append(next(it) if r.converged else float("nan"))
        return out

    @property
    def rate_u(self):
        attr = "err_psi_h2" if self.formulation == "stream-c1" else "err_u_h1"
        return self._rates(attr)

    @property
    def rate_p(self):
        return self._rates("err_p_l2")

    def to_csv(self, header_line: str | None = None) -> str:
        buf = io.StringIO()
        if header_line:
            buf.write(f"# {header_line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["h", "n_dofs", "err_u_h1", "err_psi_h2", "err_p_l2", "cond", "newton_iters", "rate_u", "rate_p"])
        for r, ru, rp in zip(self.rows, self.rate_u, self.rate_p):
            w.writerow(
                [
                    f"{r.h:.6g}",
                    r.n_dofs,
                    f"{r.err_u_h1:.10e}",
                    f"{r.err_psi_h2:.10e}",
                    f"{r.err_p_l2:.10e}",
                    f"{r.cond:.6e}",
                    r.newton_iters if r.converged else f"{r.newton_iters}!",
                    f"{ru:.4f}",
                    f"{rp:.4f}",
                ]
            )
        return buf.getvalue()

    def plot_series(self) -> dict:
        """log10(h), log10(err) pairs per error type."""
        out = {}
        for attr in ("err_u_h1", "err_psi_h2", "err_p_l2"):
            pts = [(math.log10(r.h), math.log10(getattr(r, attr))) for r in self.rows if getattr(r, attr) > 0]
            if pts:
                out[attr] = pts
        return out


def divergence_defect(disc: Discretization, u_global: np.ndarray) -> float:
    """max_q |b(u_h, q)| / ||u_h|| over the local P_{k-1} pressure basis."""
    vidx, _, _ = disc.velocity_map
    worst = 0.0
    for c, vel in enumerate(disc.velocity_elements):
        worst = max(worst, float(np.abs(vel.divergence @ u_global[vidx[c]]).max()))
    return worst / max(np.linalg.norm(u_global), 1e-300)


def run_level(
    disc: Discretization,
    problem: ManufacturedProblem,
    formulation: str,
    variant: str,
    rhs_mode: str = "projected",
    settings: SolverSettings | None = None,
    condition: bool = False,
    convective_pressure: bool = True,
) -> tuple[ConvergenceRow, Solution]:
    """Solve on one mesh and compute every error the formulation supports."""
    sol = newton_solve(disc, formulation, problem.nu, problem, variant, rhs_mode, settings, condition=condition)
    h = disc.mesh.nominal_h or disc.mesh.h
    counts = disc.dof_counts(formulation)
    row = ConvergenceRow(h=h, n_dofs=counts["total"], newton_iters=sol.report.iterations, converged=sol.report.converged)
    row.cond = sol.condition if sol.condition is not None else float("nan")
    if formulation == "stream-c1":
        row.err_psi_h2 = error_psi_h2(disc, sol, problem)
        return row, sol
    u = sol.velocity_dofs(disc)
    row.err_u_h1 = error_u_h1(disc, u, problem)
    row.err_psi_h2 = row.err_u_h1
    row.divergence_defect = divergence_defect(disc, u)
    if formulation == "curl":
        rec = recover_pressure(disc, sol, problem, rhs_mode)
        P = rec.P
        row.extra["lsq_residual"] = rec.residual
        row.extra["pressure_mean"] = rec.mean
    else:
        P = sol.P
    if variant == "rot" and convective_pressure:
        pressure = bernoulli_to_convective(disc, P, u)
    else:
        pressure = PiecewisePressure(disc, P)
    row.err_p_l2 = error_p_l2(disc, pressure, problem)
    row.extra["pressure"] = pressure
    return row, sol


def convergence_study(meshes, problem, formulation, variant, k=2, rhs_mode="projected", settings=None, condition=False, threads=1):
    if len(meshes) < 2:
        raise ValueError("need >= 2 levels for a convergence study")
    rows = []
    for m in meshes:
        disc = Discretization(m, k, threads)
        row, _ = run_level(disc, problem, formulation, variant, rhs_mode, settings, condition)
        rows.append(row)
    return ConvergenceReport(formulation, variant, k, rows)


# ---------------------------------------------------------------------------
# discrete complex


@dataclass
class ComplexReport:
    checks: dict  # name -> (passed, detail)

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks.values())

    def lines(self) -> list:
        return [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, (ok, detail) in self.checks.items()]


def _global_divergence(disc: Discretization, reduced: bool) -> sp.csr_matrix:
    vidx, nv, _ = disc.velocity_map
    npl = 1 if reduced else dim_poly(disc.k - 1)
    rows, cols, vals = [], [], []
    for c, vel in enumerate(disc.velocity_elements):
        B = vel.divergence[:npl]
        r, cc = np.meshgrid(c * npl + np.arange(npl), vidx[c], indexing="ij")
        rows.append(r.ravel())
        cols.append(cc.ravel())
        vals.append(B.ravel())
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(disc.mesh.n_cells * npl, nv))


def _rank(M) -> int:
    A = M.toarray() if sp.issparse(M) else np.asarray(M)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int((s > s[0] * max(A.shape) * 1e-13).sum()) if s[0] > 0 else 0


def verify_complex(mesh: PolygonalMesh, k: int = 2, tol: float = 1e-13) -> ComplexReport:
    """Exactness of 0 -> Phi_h -> V_h -> Q_h -> 0 (and the reduced sequence) with boundary conditions."""
    disc = Discretization(mesh, k)
    checks = {}
    # transfer consistency: cells sharing a velocity DoF must produce the same row
    vidx, nv, vb = disc.velocity_map
    sidx, ssgn, ns, sb = disc.stream_map
    Tg = disc.global_transfer()
    worst = 0.0
    for c in range(mesh.n_cells):
        T = disc.stream_elements[c].curl_transfer * ssgn[c][None, :]
        loc = Tg[vidx[c]][:, sidx[c]].toarray()
        worst = max(worst, float(np.abs(loc - T).max()))
    checks["transfer_consistent"] = (worst <= 1e-12, f"max cell/global mismatch {worst:.2e}")

    B = _global_divergence(disc, reduced=False)
    BT = (B @ Tg).toarray() if B.shape[0] else np.zeros(0)
    scale = max(1.0, abs(B).max())
    d = float(np.abs(BT).max()) if BT.size else 0.0
    checks["div_curl_zero"] = (d <= tol * scale, f"max |B T| = {d:.2e}")

    vfree, sfree = np.flatnonzero(~vb), np.flatnonzero(~sb)
    dim_phi = len(sfree)
    n1 = dim_poly(k - 1)
    dim_v, dim_q = len(vfree), mesh.n_cells * n1 - 1
    Tf = Tg[vfree][:, sfree]
    leak = Tg[np.flatnonzero(vb)][:, sfree]
    leak_max = float(abs(leak).max()) if leak.nnz else 0.0
    rT = _rank(Tf)
    ok = rT == dim_phi == dim_v - dim_q and leak_max <= 1e-12
    checks["curl_rank"] = (ok, f"rank curl = {rT}, dim Phi_h = {dim_phi}, dim V_h - dim Q_h = {dim_v - dim_q}")
    rB = _rank(B[:, vfree])
    checks["div_surjective"] = (rB == dim_q, f"rank div = {rB}, dim Q_h = {dim_q}")

    nVi, nEi, nP = mesh.interior_counts()
    n3 = dim_poly(k - 3)
    formula = 3 * nVi + (2 * k - 3) * nEi + nP * n3
    euler = nVi - nEi + nP
    ok = formula == dim_phi and euler == 1 and dim_phi == dim_v - dim_q
    checks["dimension_identity"] = (ok, f"3nV+(2k-3)ne+nP(k-1)(k-2)/2 = {formula}, dim Phi_h = {dim_phi}, V-E+F = {euler}")

    # reduced sequence: Phi_h -> V~_h -> P_0 / R
    ridx, nr, rb = disc.reduced_map
    keep = np.zeros(nv, dtype=bool)
    for c in range(mesh.n_cells):
        keep[vidx[c][: len(ridx[c])]] = True
    rfree = np.flatnonzero(keep & ~vb)
    B0 = _global_divergence(disc, reduced=True)
    dfree_v4 = float(abs(Tg[np.flatnonzero(~keep)]).max()) if (~keep).any() and Tg[np.flatnonzero(~keep)].nnz else 0.0
    rT0 = _rank(Tg[rfree][:, sfree])
    rB0 = _rank(B0[:, rfree])
    d0 = float(np.abs((B0 @ Tg).toarray()).max()) if B0.shape[0] else 0.0
    ok = rT0 == dim_phi == len(rfree) - (nP - 1) and rB0 == nP - 1 and dfree_v4 == 0.0 and d0 <= tol * scale
    checks["reduced_sequence"] = (
        ok,
        f"rank curl = {rT0}, dim V~_h - dim Q~_h = {len(rfree) - (nP - 1)}, rank div = {rB0}, D_V4 of curl = {dfree_v4:.1e}",
    )
    return ComplexReport(checks)


# ---------------------------------------------------------------------------
# trilinear identities


@dataclass
class TrilinearReport:
    conv_minus_skew: float
    conv_minus_rot_minus_grad: float
    control_conv_minus_skew: float
    control_expected: float

    @property
    def passed(self) -> bool:
        return (
            self.conv_minus_skew <= 1e-11
            and self.conv_minus_rot_minus_grad <= 1e-11
            and abs(self.control_conv_minus_skew - self.control_expected) <= 1e-11 * max(1.0, abs(self.control_expected))
        )


def _continuous_forms(mesh, u, gu, v, gv, degree):
    """Exact quadrature of conv(u;u,v), conv(u;v,u), rot(u;u,v), 1/2 int grad|u|^2 . v, 1/2 int div(u) u.v."""
    acc = np.zeros(5)
    for g in mesh.geometry:
        q = g.quadrature(degree)
        U, V = u(q.points), v(q.points)
        GU, GV = gu(q.points), gv(q.points)  # (n, 2, 2) [a, b] = d_b u_a
        conv = np.einsum("nab,nb,na->n", GU, U, V)
        conv_t = np.einsum("nab,nb,na->n", GV, U, U)
        om = GU[:, 1, 0] - GU[:, 0, 1]
        rot = om * (U[:, 0] * V[:, 1] - U[:, 1] * V[:, 0])
        grad_half = np.einsum("na,nab,nb->n", U, GU, V)
        div = GU[:, 0, 0] + GU[:, 1, 1]
        acc += [q.integrate(conv), q.integrate(conv_t), q.integrate(rot), q.integrate(grad_half), q.integrate(0.5 * div * (U * V).sum(1))]
    return acc


def _poly_field(coef_a, coef_b):
    """Polynomial vector field from sympy expressions plus its Jacobian."""
    u = [coef_a, coef_b]
    fu = _stack([_vectorize(e) for e in u])
    J = [[_vectorize(sym.diff(e, v)) for v in (X, Y)] for e in u]

    def gu(p):
        return np.stack([np.column_stack([J[a][b](p) for b in range(2)]) for a in range(2)], axis=1)

    return fu, gu


def trilinear_identity_checks(mesh: PolygonalMesh, k: int = 2, rng_seed: int = 0) -> TrilinearReport:
    """Continuous identities behind the three trilinear variants, by exact quadrature.

    Fields vanish on the boundary of the unit square so that no boundary terms arise.
    """
    rng = np.random.default_rng(rng_seed)
    bub = X**2 * (1 - X) ** 2 * Y**2 * (1 - Y) ** 2
    c = [sym.Rational(int(v), 7) for v in rng.integers(-9, 10, size=6)]
    q = c[0] + c[1] * X + c[2] * Y
    psi = bub * q
    u, gu = _poly_field(sym.diff(psi, Y), -sym.diff(psi, X))
    v, gv = _poly_field(bub * (c[3] + c[4] * X), bub * (c[5] + c[3] * Y))
    ctrl, gctrl = _poly_field(sym.diff(bub * q, X), sym.diff(bub * q, Y))
    deg = 40
    conv, conv_t, rot, grad_half, _ = _continuous_forms(mesh, u, gu, v, gv, deg)
    skew = 0.5 * (conv - conv_t)
    cconv, cconv_t, _, _, chalf = _continuous_forms(mesh, ctrl, gctrl, v, gv, deg)
    cskew = 0.5 * (cconv - cconv_t)
    return TrilinearReport(
        conv_minus_skew=abs(conv - skew) / max(1.0, abs(conv)),
        conv_minus_rot_minus_grad=abs(conv - rot - grad_half) / max(1.0, abs(conv)),
        control_conv_minus_skew=cconv - cskew,
        control_expected=-chalf,
    )
