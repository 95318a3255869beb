"""Global DoF maps, assembly of the four formulations, Newton solves and pressure recovery.

Formulations:

``velocity-pressure``  full velocity space, P_{k-1} pressures per cell;
``reduced``            divergence moments removed, piecewise-constant pressures;
``curl``               stream functions whose curl is the discrete velocity;
``stream-c1``          plain C1 stream-function discretization.

Pressures have zero mean through one Lagrange multiplier.  Dirichlet data are
imposed strongly by fixing boundary DoFs (zero unless the problem supplies an
exact solution, in which case its interpolant is used).
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import PolygonalMesh
from .polybasis import dim_poly
from .stream import StreamElement, c1_trilinear_matrices
from .velocity import ElementError, VelocityElement, trilinear_matrices

log = logging.getLogger(__name__)

__all__ = [
    "FORMULATIONS",
    "VARIANTS",
    "ConfigError",
    "SolverSettings",
    "SolveReport",
    "GlobalSystem",
    "Discretization",
    "assemble",
    "newton_solve",
    "recover_pressure",
    "bernoulli_to_convective",
    "estimate_condition_number",
    "PiecewisePressure",
]

FORMULATIONS = ("velocity-pressure", "reduced", "curl", "stream-c1")
VARIANTS = ("conv", "skew", "rot")


class ConfigError(ValueError):
    pass


@dataclass
class SolverSettings:
    tol: float = 1e-10
    max_iters: int = 50
    newton: bool = True  # False: Picard (frozen wind) iterations
    c1_consistency: str = "hessian"


@dataclass
class SolveReport:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    converged: bool = False
    n_unknowns: int = 0
    seconds: float = 0.0
    message: str = ""

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")


# ---------------------------------------------------------------------------
# numbering


def _velocity_numbering(mesh: PolygonalMesh, k: int, reduced: bool):
    nV, nEd = mesh.n_vertices, mesh.n_edges
    n3, n4 = dim_poly(k - 3), dim_poly(k - 1) - 1
    ncell = n3 + (0 if reduced else n4)
    eoff = 2 * nV
    coff = eoff + 2 * (k - 1) * nEd
    total = coff + ncell * mesh.n_cells
    idx = []
    for c, (cell, ce, cs) in enumerate(zip(mesh.cells, mesh.cell_edges, mesh.cell_edge_signs)):
        nE = len(cell)
        loc = np.empty(2 * nE * k + ncell, dtype=np.int64)
        loc[0 : 2 * nE : 2] = 2 * cell
        loc[1 : 2 * nE : 2] = 2 * cell + 1
        for e in range(nE):
            for j in range(k - 1):
                gj = j if cs[e] > 0 else k - 2 - j
                b = eoff + 2 * (k - 1) * ce[e] + 2 * gj
                lb = 2 * nE + 2 * (k - 1) * e + 2 * j
                loc[lb : lb + 2] = [b, b + 1]
        loc[2 * nE * k :] = coff + ncell * c + np.arange(ncell)
        idx.append(loc)
    bnd = np.zeros(total, dtype=bool)
    bv = np.flatnonzero(mesh.boundary_vertex)
    bnd[2 * bv] = bnd[2 * bv + 1] = True
    for E in np.flatnonzero(mesh.boundary_edge):
        bnd[eoff + 2 * (k - 1) * E : eoff + 2 * (k - 1) * (E + 1)] = True
    return idx, total, bnd


def _stream_numbering(mesh: PolygonalMesh, k: int):
    nV, nEd = mesh.n_vertices, mesh.n_edges
    n3 = dim_poly(k - 3)
    per_edge = 2 * k - 3
    eoff = 3 * nV
    coff = eoff + per_edge * nEd
    total = coff + n3 * mesh.n_cells
    idx, sgn = [], []
    for c, (cell, ce, cs) in enumerate(zip(mesh.cells, mesh.cell_edges, mesh.cell_edge_signs)):
        nE = len(cell)
        loc = np.empty(2 * nE * k + n3, dtype=np.int64)
        sg = np.ones(len(loc))
        for i in range(3):
            loc[i : 3 * nE : 3] = 3 * cell + i
        for e in range(nE):
            base_l = 3 * nE + per_edge * e
            base_g = eoff + per_edge * ce[e]
            for j in range(k - 2):
                gj = j if cs[e] > 0 else k - 3 - j
                loc[base_l + j] = base_g + gj
            for j in range(k - 1):
                gj = j if cs[e] > 0 else k - 2 - j
                loc[base_l + k - 2 + j] = base_g + k - 2 + gj
                sg[base_l + k - 2 + j] = cs[e]
        loc[2 * nE * k :] = coff + n3 * c + np.arange(n3)
        idx.append(loc)
        sgn.append(sg)
    bnd = np.zeros(total, dtype=bool)
    bv = np.flatnonzero(mesh.boundary_vertex)
    for i in range(3):
        bnd[3 * bv + i] = True
    for E in np.flatnonzero(mesh.boundary_edge):
        bnd[eoff + per_edge * E : eoff + per_edge * (E + 1)] = True
    return idx, sgn, total, bnd


# ---------------------------------------------------------------------------
# per-cell data, batched by local size


@dataclass
class _Batch:
    cells: np.ndarray
    idx: np.ndarray  # (e, n) global primary indices
    A: np.ndarray  # (e, n, n) stiffness (nu = 1)
    T3: np.ndarray
    P1: np.ndarray  # conv/rot: Pi0_k (e,2,a,n); c1: Laplacian (e,q,n)
    P2: np.ndarray  # conv/rot: grad proj (e,2,2,q,n); c1: curl (e,2,a,n)
    P3: np.ndarray | None  # c1: grad (e,2,a,n)
    load: np.ndarray  # (e, n)
    B: np.ndarray | None  # (e, npress, n)


def _group(sizes):
    groups: dict[int, list[int]] = {}
    for c, n in enumerate(sizes):
        groups.setdefault(n, []).append(c)
    return [np.array(v) for v in groups.values()]


class Discretization:
    """Element objects and DoF maps of one mesh at one polynomial degree."""

    def __init__(self, mesh: PolygonalMesh, k: int, threads: int = 1):
        if k < 2:
            raise ConfigError("k must be >= 2")
        self.mesh = mesh
        self.k = k
        self.threads = max(1, int(threads))

    def _build(self, fn):
        n = self.mesh.n_cells
        try:
            if self.threads > 1:
                with ThreadPoolExecutor(self.threads) as ex:
                    return list(ex.map(fn, range(n)))
            return [fn(c) for c in range(n)]
        except ElementError as err:
            raise ElementError(f"{err} (while building cells of a {n}-cell mesh)") from err

    def _stream_el(self, variant):
        def make(c):
            try:
                return StreamElement(self.mesh.geometry[c], self.k, variant)
            except ElementError as err:
                raise ElementError(f"cell {c}: {err}") from err

        return make

    @cached_property
    def stream_elements(self) -> list[StreamElement]:
        return self._build(self._stream_el("complex"))

    @cached_property
    def c1_elements(self) -> list[StreamElement]:
        return self._build(self._stream_el("c1"))

    @cached_property
    def velocity_elements(self) -> list[VelocityElement]:
        return [s.velocity for s in self.stream_elements]

    @cached_property
    def velocity_map(self):
        return _velocity_numbering(self.mesh, self.k, reduced=False)

    @cached_property
    def reduced_map(self):
        return _velocity_numbering(self.mesh, self.k, reduced=True)

    @cached_property
    def stream_map(self):
        return _stream_numbering(self.mesh, self.k)

    def pressure_size(self, formulation: str) -> int:
        return self.mesh.n_cells * (1 if formulation == "reduced" else dim_poly(self.k - 1))

    def primary_map(self, formulation: str):
        """(cell index lists, cell sign lists or None, total, boundary mask)."""
        if formulation == "velocity-pressure":
            idx, n, b = self.velocity_map
            return idx, None, n, b
        if formulation == "reduced":
            idx, n, b = self.reduced_map
            return idx, None, n, b
        if formulation in ("curl", "stream-c1"):
            return self.stream_map
        raise ConfigError(f"unknown formulation {formulation!r}; valid: {', '.join(FORMULATIONS)}")

    def dof_counts(self, formulation: str) -> dict:
        _, _, n, bnd = self.primary_map(formulation)
        free = int((~bnd).sum())
        npres = 0 if formulation in ("curl", "stream-c1") else self.pressure_size(formulation) - 1
        return {"primary": n, "free_primary": free, "pressure": npres, "total": free + npres}

    def local_map(self, formulation: str, c: int) -> np.ndarray:
        """Matrix from formulation-local (global orientation) DoFs to velocity-element DoFs."""
        vel = self.velocity_elements[c]
        if formulation == "velocity-pressure":
            return np.eye(vel.ndof)
        if formulation == "reduced":
            return np.eye(vel.ndof)[:, : vel.ndof - vel.n4]
        if formulation == "curl":
            s = self.stream_map[1][c]
            return self.stream_elements[c].curl_transfer * s[None, :]
        raise ConfigError(formulation)

    def global_transfer(self) -> sp.csr_matrix:
        """Sparse map from global stream DoFs to global (full) velocity DoFs."""
        vidx, nv, _ = self.velocity_map
        sidx, ssgn, ns, _ = self.stream_map
        seen = np.zeros(nv, dtype=bool)
        rows, cols, vals = [], [], []
        for c in range(self.mesh.n_cells):
            T = self.stream_elements[c].curl_transfer * ssgn[c][None, :]
            for i, g in enumerate(vidx[c]):
                if seen[g]:
                    continue
                seen[g] = True
                nz = np.flatnonzero(T[i])
                rows += [g] * len(nz)
                cols += list(sidx[c][nz])
                vals += list(T[i, nz])
        return sp.csr_matrix((vals, (rows, cols)), shape=(nv, ns))

    def batches(self, formulation: str, load_fn=None) -> list[_Batch]:
        """Per-cell matrices in the formulation's coordinates, grouped by local size.

        ``load_fn(c) -> local load`` in the same coordinates; zero if omitted.
        """
        idx, sgn, _, _ = self.primary_map(formulation)
        out = []
        for cells in _group([len(i) for i in idx]):
            A, T3, P1, P2, P3, L, B = [], [], [], [], [], [], []
            for c in cells:
                if formulation == "stream-c1":
                    el = self.c1_elements[c]
                    s = sgn[c]
                    A.append(el.stiffness(self._c1_consistency) * np.outer(s, s))
                    T3.append(el.triple)
                    P1.append(el.pi_laplacian * s)
                    P2.append(el.pi_curl * s)
                    P3.append(el.pi_grad * s)
                else:
                    vel = self.velocity_elements[c]
                    M = self.local_map(formulation, c)
                    A.append(M.T @ vel.stiffness @ M)
                    T3.append(vel.triple)
                    P1.append(np.einsum("xan,nm->xam", vel.pi_zero.reshape(2, vel.npk, -1), M))
                    P2.append(np.einsum("xyqn,nm->xyqm", vel.pi_grad, M))
                    if formulation == "velocity-pressure":
                        B.append(vel.divergence @ M)
                    elif formulation == "reduced":
                        B.append(vel.divergence[:1] @ M)
                L.append(load_fn(c) if load_fn is not None else np.zeros(len(idx[c])))
            out.append(
                _Batch(
                    cells=cells,
                    idx=np.array([idx[c] for c in cells]),
                    A=np.array(A),
                    T3=np.array(T3),
                    P1=np.array(P1),
                    P2=np.array(P2),
                    P3=np.array(P3) if P3 else None,
                    load=np.array(L),
                    B=np.array(B) if B else None,
                )
            )
        return out

    _c1_consistency = "hessian"


# ---------------------------------------------------------------------------
# loads and boundary data


def _vector_load(disc: Discretization, formulation: str, f):
    def fn(c):
        vel = disc.velocity_elements[c]
        return disc.local_map(formulation, c).T @ vel.load(f)

    return fn


def _curl_load(disc: Discretization, formulation: str, rot_f):
    _, sgn, _, _ = disc.stream_map

    def fn(c):
        el = disc.c1_elements[c] if formulation == "stream-c1" else disc.stream_elements[c]
        return sgn[c] * el.curl_load(rot_f)

    return fn


def _stream_interpolant(disc: Discretization, psi, grad_psi, variant: str) -> np.ndarray:
    idx, sgn, n, _ = disc.stream_map
    out = np.zeros(n)
    els = disc.c1_elements if variant == "c1" else disc.stream_elements
    for c, el in enumerate(els):
        out[idx[c]] = sgn[c] * el.interpolate(psi, grad_psi)
    return out


def boundary_values(disc: Discretization, formulation: str, problem) -> np.ndarray:
    """Full primary vector holding the Dirichlet data (interior entries zero)."""
    idx, sgn, n, bnd = disc.primary_map(formulation)
    out = np.zeros(n)
    if problem is None or getattr(problem, "homogeneous", True):
        return out
    if formulation in ("curl", "stream-c1"):
        full = _stream_interpolant(disc, problem.psi, problem.grad_psi, "c1" if formulation == "stream-c1" else "complex")
    else:
        # velocity boundary data through the stream function keeps the boundary flux exactly zero
        s = _stream_interpolant(disc, problem.psi, problem.grad_psi, "complex")
        full_v = disc.global_transfer() @ s
        if formulation == "reduced":
            vidx, _, _ = disc.velocity_map
            ridx, _, _ = disc.reduced_map
            full = np.zeros(n)
            for c in range(disc.mesh.n_cells):
                m = len(ridx[c])
                full[ridx[c]] = full_v[vidx[c][:m]]
        else:
            full = full_v
    out[bnd] = full[bnd]
    return out


# ---------------------------------------------------------------------------
# global system


@dataclass
class GlobalSystem:
    """Linearized system at a given state, restricted to free unknowns."""

    formulation: str
    matrix: sp.csr_matrix
    residual: np.ndarray
    free: np.ndarray
    n_primary: int
    n_pressure: int
    load: np.ndarray

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[0]


def _coo(batches, attr_idx_rows, attr_idx_cols, mats, shape):
    rows, cols, vals = [], [], []
    for b, M in zip(batches, mats):
        ir, ic = attr_idx_rows(b), attr_idx_cols(b)
        rows.append(np.broadcast_to(ir[:, :, None], M.shape).ravel())
        cols.append(np.broadcast_to(ic[:, None, :], M.shape).ravel())
        vals.append(M.ravel())
    if not rows:
        return sp.csr_matrix(shape)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)


class _Problem:
    """Assembled element data for one (formulation, variant, nu, load)."""

    def __init__(self, disc, formulation, nu, variant, load_fn, settings: SolverSettings):
        if formulation not in FORMULATIONS:
            raise ConfigError(f"unknown formulation {formulation!r}; valid: {', '.join(FORMULATIONS)}")
        if variant not in VARIANTS:
            raise ConfigError(f"unknown trilinear variant {variant!r}; valid: {', '.join(VARIANTS)}")
        self.disc, self.formulation, self.nu, self.variant = disc, formulation, nu, variant
        self.settings = settings
        disc._c1_consistency = settings.c1_consistency
        self.batches = disc.batches(formulation, load_fn)
        _, _, self.n, self.bnd = disc.primary_map(formulation)
        self.free = np.flatnonzero(~self.bnd)
        self.has_pressure = formulation in ("velocity-pressure", "reduced")
        self.np = disc.pressure_size(formulation) if self.has_pressure else 0
        self.A = _coo(self.batches, lambda b: b.idx, lambda b: b.idx, [b.A for b in self.batches], (self.n, self.n))
        F = np.zeros(self.n)
        for b in self.batches:
            np.add.at(F, b.idx, b.load)
        self.F = F
        if self.has_pressure:
            npl = self.np // disc.mesh.n_cells
            pidx = lambda b: (b.cells[:, None] * npl + np.arange(npl)[None, :])  # noqa: E731
            self.B = _coo(self.batches, pidx, lambda b: b.idx, [b.B for b in self.batches], (self.np, self.n))
            m = np.zeros(self.np)
            for c, g in enumerate(disc.mesh.geometry):
                m[c * npl : (c + 1) * npl] = g.monomial_integrals(disc.k - 1)[:npl]
            self.mean_row = m
            self.const_vec = np.zeros(self.np)
            self.const_vec[::npl] = 1.0

    def nonlinear(self, U, newton=True):
        """Global trilinear residual and Jacobian (primary x primary)."""
        r = np.zeros(self.n)
        mats = []
        for b in self.batches:
            UL = U[b.idx]
            if self.formulation == "stream-c1":
                rl, Jl = c1_trilinear_matrices(b.T3, b.P1, b.P2, b.P3, UL, newton)
            else:
                rl, Jl = trilinear_matrices(self.variant, b.T3, b.P2, b.P1, UL, newton)
            np.add.at(r, b.idx, rl)
            mats.append(Jl)
        J = _coo(self.batches, lambda b: b.idx, lambda b: b.idx, mats, (self.n, self.n))
        return r, J

    def system(self, U, P=None, mu=0.0, with_convection=True, newton=True) -> GlobalSystem:
        f = self.free
        Ru = self.nu * (self.A @ U) - self.F
        K = self.nu * self.A
        if with_convection:
            rc, Jc = self.nonlinear(U, newton)
            Ru = Ru + rc
            K = K + Jc
        K = K.tocsr()[f][:, f]
        if not self.has_pressure:
            return GlobalSystem(self.formulation, K.tocsr(), Ru[f], f, self.n, 0, self.F[f])
        Bf = self.B.tocsr()[:, f]
        Ru = Ru + self.B.T @ P
        Rp = self.B @ U + mu * self.mean_row
        Rm = np.array([self.mean_row @ P])
        m = sp.csr_matrix(self.mean_row[:, None])
        M = sp.bmat([[K, Bf.T, None], [Bf, None, m], [None, m.T, None]], format="csr")
        R = np.concatenate([Ru[f], Rp, Rm])
        return GlobalSystem(self.formulation, M, R, f, self.n, self.np, self.F[f])


def assemble(disc, formulation, nu, problem=None, variant="conv", state=None, rhs_mode="projected", settings=None):
    """GlobalSystem linearized at ``state = (U, P, mu)`` (defaults: Dirichlet lifting, zero pressure)."""
    pb = _make_problem(disc, formulation, nu, problem, variant, rhs_mode, settings or SolverSettings())
    U, P, mu = state if state is not None else (boundary_values(disc, formulation, problem), np.zeros(pb.np), 0.0)
    return pb.system(U, P, mu)


def _make_problem(disc, formulation, nu, problem, variant, rhs_mode, settings):
    if rhs_mode not in ("projected", "curl"):
        raise ConfigError(f"unknown rhs mode {rhs_mode!r}; valid: projected, curl")
    if formulation not in FORMULATIONS:
        raise ConfigError(f"unknown formulation {formulation!r}; valid: {', '.join(FORMULATIONS)}")
    if formulation == "stream-c1" and rhs_mode != "curl":
        rhs_mode = "curl"  # the C1 space has no velocity load
    if rhs_mode == "curl" and formulation not in ("curl", "stream-c1"):
        raise ConfigError("rhs mode 'curl' is only valid for the curl and stream-c1 formulations")
    load_fn = None
    if problem is not None:
        if rhs_mode == "curl":
            load_fn = _curl_load(disc, formulation, problem.rot_f)
        else:
            load_fn = _vector_load(disc, formulation, problem.f)
    return _Problem(disc, formulation, nu, variant, load_fn, settings)


@dataclass
class Solution:
    formulation: str
    variant: str
    k: int
    nu: float
    U: np.ndarray  # full primary vector (velocity or stream DoFs)
    P: np.ndarray | None
    report: SolveReport
    condition: float | None = None
    stokes: bool = False

    def velocity_dofs(self, disc: Discretization) -> np.ndarray:
        """Full-space global velocity DoFs (D_V4 zero for reduced/curl)."""
        if self.formulation == "velocity-pressure":
            return self.U
        if self.formulation == "curl":
            return disc.global_transfer() @ self.U
        if self.formulation == "reduced":
            vidx, nv, _ = disc.velocity_map
            ridx, _, _ = disc.reduced_map
            out = np.zeros(nv)
            for c in range(disc.mesh.n_cells):
                out[vidx[c][: len(ridx[c])]] = self.U[ridx[c]]
            return out
        raise ValueError("the C1 stream formulation has no velocity DoFs")


def _lu_solve(M: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    if M.shape[0] == 0:
        return np.zeros(0)
    try:
        lu = spla.splu(M.tocsc())
    except RuntimeError as err:
        raise np.linalg.LinAlgError(f"singular linearized system: {err}") from err
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("singular linearized system (non-finite solution)")
    return x


def _solve_system(sysm: GlobalSystem, pb: "_Problem", rhs: np.ndarray) -> np.ndarray:
    """Solve ``sysm.matrix x = rhs`` without factorizing the dense mean row.

    With ``c`` the global-constant pressure vector (B c = 0 on free DoFs), the
    multiplier follows from compatibility, one pressure DoF is pinned, and the
    mean constraint is restored by a shift along ``c``.  This is algebraically
    the bordered solve but keeps the sparse LU fill low.
    """
    if not pb.has_pressure:
        return _lu_solve(sysm.matrix, rhs)
    nf, npr = len(pb.free), pb.np
    c = pb.const_vec
    m = pb.mean_row
    ru, rp, rm = rhs[:nf], rhs[nf : nf + npr], rhs[-1]
    dmu = (c @ rp) / (c @ m)
    keep = np.r_[0:nf, nf + 1 : nf + npr]
    M = sysm.matrix.tocsr()[keep][:, keep]
    y = _lu_solve(M, np.concatenate([ru, rp - dmu * m])[keep])
    dx = y[:nf]
    dp = np.concatenate([[0.0], y[nf:]])
    dp += (rm - m @ dp) / (m @ c) * c
    return np.concatenate([dx, dp, [dmu]])


def newton_solve(
    disc: Discretization,
    formulation: str,
    nu: float = 1.0,
    problem=None,
    variant: str = "conv",
    rhs_mode: str = "projected",
    settings: SolverSettings | None = None,
    condition: bool = False,
    stokes: bool = False,
) -> Solution:
    """Stokes start followed by Newton (or Picard) iterations.

    ``iterations`` counts linear solves including the Stokes start.  With
    ``stokes=True`` the trilinear form is dropped entirely.
    """
    settings = settings or SolverSettings()
    t0 = time.perf_counter()
    pb = _make_problem(disc, formulation, nu, problem, variant, rhs_mode, settings)
    f = pb.free
    U = boundary_values(disc, formulation, problem)
    P = np.zeros(pb.np)
    mu = 0.0
    rep = SolveReport(n_unknowns=len(f) + (pb.np - 1 if pb.has_pressure else 0))

    def update(sol, dx):
        U, P, mu = sol
        U = U.copy()
        U[f] += dx[: len(f)]
        if pb.has_pressure:
            P = P + dx[len(f) : len(f) + pb.np]
            mu = mu + dx[-1]
        return U, P, mu

    sys0 = pb.system(U, P, mu, with_convection=False)
    cond = estimate_condition_number(sys0.matrix) if condition else None
    scale = max(1.0, float(np.linalg.norm(sys0.load)))
    U, P, mu = update((U, P, mu), _solve_system(sys0, pb, -sys0.residual))
    rep.iterations = 1
    while True:
        sysk = pb.system(U, P, mu, with_convection=not stokes, newton=settings.newton)
        res = float(np.linalg.norm(sysk.residual))
        rep.residuals.append(res)
        if res <= settings.tol * scale:
            rep.converged = True
            break
        if rep.iterations >= settings.max_iters:
            rep.message = f"no convergence after {rep.iterations} iterations (residual {res:.3e})"
            break
        dx = _solve_system(sysk, pb, -sysk.residual)
        U, P, mu = update((U, P, mu), dx)
        rep.iterations += 1
        if np.linalg.norm(dx) <= 1e-15 * max(1.0, np.linalg.norm(U)):
            sysk = pb.system(U, P, mu, with_convection=not stokes, newton=settings.newton)
            rep.residuals.append(float(np.linalg.norm(sysk.residual)))
            rep.converged = rep.residuals[-1] <= 1e3 * settings.tol * scale
            rep.message = "update stagnated at round-off"
            break
    rep.seconds = time.perf_counter() - t0
    if not rep.converged:
        log.warning("%s/%s: %s", formulation, variant, rep.message)
    return Solution(formulation, variant, disc.k, nu, U, P if pb.has_pressure else None, rep, cond, stokes)


# ---------------------------------------------------------------------------
# condition numbers


def estimate_condition_number(M, dense_limit: int = 5000) -> float:
    """2-norm condition number: dense SVD for small systems, Lanczos otherwise.

    The large-system path assumes a symmetric operator (true for every first
    Newton operator here) and uses shift-invert for the smallest eigenvalue.
    """
    n = M.shape[0]
    if n == 0:
        return 1.0
    if n <= dense_limit:
        D = M.toarray() if sp.issparse(M) else np.asarray(M, float)
        if np.abs(D - D.T).max() <= 1e-12 * np.abs(D).max():
            s = np.sort(np.abs(np.linalg.eigvalsh(D)))[::-1]  # singular values of a symmetric matrix
        else:
            s = np.linalg.svd(D, compute_uv=False)
        return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
    M = sp.csc_matrix(M)
    if abs(M - M.T).max() > 1e-10 * abs(M).max():
        smax = spla.svds(M, k=1, which="LM", return_singular_vectors=False)[0]
        lu = spla.splu(M)
        op = spla.LinearOperator(M.shape, matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="T"))
        sinv = spla.svds(op, k=1, which="LM", return_singular_vectors=False, tol=1e-3)[0]
        return float(smax * sinv)
    lmax = abs(spla.eigsh(M, k=1, which="LM", return_eigenvectors=False, tol=1e-4)[0])
    lmin = abs(spla.eigsh(M, k=1, sigma=0.0, which="LM", return_eigenvectors=False, tol=1e-4)[0])
    return float(lmax / lmin)


# ---------------------------------------------------------------------------
# pressure recovery


@dataclass
class PressureRecovery:
    P: np.ndarray  # global coefficients, P_{k-1} per cell
    residual: float  # norm of B^T p - r on the rectangular system
    mean: float


def recover_pressure(disc: Discretization, sol: Solution, problem=None, rhs_mode: str = "projected") -> PressureRecovery:
    """Least-squares pressure from a curl solution: B B^T p = B r with zero mean."""
    if sol.formulation != "curl":
        raise ConfigError("pressure recovery needs a curl-formulation solution")
    pb = _make_problem(disc, "velocity-pressure", sol.nu, problem, sol.variant, "projected", SolverSettings())
    u = disc.global_transfer() @ sol.U
    r = pb.F - sol.nu * (pb.A @ u)
    if not sol.stokes:
        r = r - pb.nonlinear(u, newton=False)[0]
    r = r[pb.free]
    Bf = pb.B.tocsr()[:, pb.free]
    m = sp.csr_matrix(pb.mean_row[:, None])
    N = sp.bmat([[Bf @ Bf.T, m], [m.T, None]], format="csc")
    rhs = np.concatenate([Bf @ r, [0.0]])
    x = _lu_solve(N.tocsr(), rhs)
    p = x[:-1]
    res = float(np.linalg.norm(Bf.T @ p - r))
    return PressureRecovery(p, res, float(pb.mean_row @ p))


class PiecewisePressure:
    """Per-cell pressure P + c (u.u)/2 - shift, evaluated pointwise.

    ``P`` holds P_{k-1} coefficients per cell; ``vel_coeffs`` (optional) holds
    the L2-projected velocity per cell (2, dim P_k) for the quadratic term.
    """

    def __init__(self, disc: Discretization, P: np.ndarray, vel_coeffs=None, shift: float = 0.0):
        self.disc = disc
        n1 = dim_poly(disc.k - 1)
        self.P = np.asarray(P).reshape(disc.mesh.n_cells, -1)
        if self.P.shape[1] == 1 and n1 > 1:
            self.P = np.hstack([self.P, np.zeros((disc.mesh.n_cells, n1 - 1))])
        self.vel = vel_coeffs
        self.shift = shift

    def eval_cell(self, c: int, pts: np.ndarray) -> np.ndarray:
        g = self.disc.mesh.geometry[c]
        val = g.basis.eval(pts, self.disc.k - 1) @ self.P[c]
        if self.vel is not None:
            m = g.basis.eval(pts, self.disc.k)
            uu = m @ self.vel[c].T
            val = val + 0.5 * (uu**2).sum(axis=1)
        return val - self.shift

    def mean(self, degree: int | None = None) -> float:
        deg = 2 * self.disc.k + 2 if degree is None else degree
        tot = area = 0.0
        for c, g in enumerate(self.disc.mesh.geometry):
            q = g.quadrature(deg)
            tot += q.integrate(self.eval_cell(c, q.points))
            area += g.area
        return tot / area


def projected_velocity(disc: Discretization, u_global: np.ndarray) -> np.ndarray:
    """Per-cell Pi0_k coefficients (n_cells, 2, dim P_k) of a global velocity vector."""
    vidx, _, _ = disc.velocity_map
    out = []
    for c, vel in enumerate(disc.velocity_elements):
        out.append((vel.pi_zero @ u_global[vidx[c]]).reshape(2, -1))
    return np.array(out)


def bernoulli_to_convective(disc: Discretization, P: np.ndarray, u_global: np.ndarray | None) -> PiecewisePressure:
    """p_h = P_h + |Pi0 u_h|^2 / 2 - lambda_h with lambda_h the global mean of the quadratic term."""
    if u_global is None:
        return PiecewisePressure(disc, P)
    vc = projected_velocity(disc, u_global)
    quad = PiecewisePressure(disc, np.zeros_like(P), vc)
    lam = quad.mean()
    base = PiecewisePressure(disc, P).mean()
    return PiecewisePressure(disc, P, vc, shift=lam + base)
