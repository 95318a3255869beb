"""Local divergence-free velocity element: DoFs, projectors, stiffness, divergence, loads.

Local DoF ordering on a cell with n_E vertices:

* vertex ``i``: components at ``2i, 2i+1``;
* edge ``e`` (from vertex e to e+1), interior Gauss-Lobatto node ``j``, component ``c``:
  ``2 n_E + 2 (k-1) e + 2 j + c``;
* D_V3, ``(1/|E|) int v . x_perp m_g`` for ``|g| <= k-3``;
* D_V4, ``(h_E/|E|) int div(v) m_a`` for ``1 <= |a| <= k-1``.

Vector polynomial coefficients are stacked ``[v_1 | v_2]`` over the scaled
monomials of ``polybasis``.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .polybasis import (
    CellGeometry,
    deriv_matrix,
    dim_poly,
    edge_gauss_rule,
    gauss_lobatto_interior,
    laplacian_coeffs,
    vector_decomposition_matrix,
    xperp_coeffs,
)

__all__ = [
    "ElementError",
    "VelocityElement",
    "lagrange_matrix",
    "velocity_dof_count",
    "trilinear_matrices",
]

COND_GUARD = 1e12


class ElementError(RuntimeError):
    pass


def velocity_dof_count(n_edges: int, k: int, reduced: bool = False) -> int:
    n = 2 * n_edges * k + dim_poly(k - 3)
    return n if reduced else n + dim_poly(k - 1) - 1


def lagrange_matrix(nodes: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Values at ``s`` of the Lagrange basis on ``nodes``, shape (len(s), len(nodes))."""
    nodes = np.asarray(nodes, float)
    s = np.asarray(s, float)
    out = np.ones((len(s), len(nodes)))
    for j, xj in enumerate(nodes):
        for m, xm in enumerate(nodes):
            if m != j:
                out[:, j] *= (s - xm) / (xj - xm)
    return out


def _solve(A: np.ndarray, B: np.ndarray, what: str) -> np.ndarray:
    c = np.linalg.cond(A)
    if not np.isfinite(c) or c > COND_GUARD:
        raise ElementError(f"{what}: local system conditioning {c:.3e} exceeds {COND_GUARD:.0e}")
    return np.linalg.solve(A, B)


class VelocityElement:
    """All DoF-computable operators of the local velocity space of degree ``k``."""

    def __init__(self, geom: CellGeometry | np.ndarray, k: int):
        if k < 2:
            raise ValueError("velocity element needs k >= 2")
        self.geom = geom if isinstance(geom, CellGeometry) else CellGeometry(geom)
        self.k = k
        g = self.geom
        self.nE = g.n_vertices
        self.h = g.h
        self.area = g.area
        self.n_bnd = 2 * self.nE * k
        self.n3 = dim_poly(k - 3)
        self.n4 = dim_poly(k - 1) - 1
        self.ndof = self.n_bnd + self.n3 + self.n4
        self.sl3 = slice(self.n_bnd, self.n_bnd + self.n3)
        self.sl4 = slice(self.n_bnd + self.n3, self.ndof)
        self.npk = dim_poly(k)
        self._setup_boundary()

    # -- boundary traces ----------------------------------------------------

    @cached_property
    def edge_nodes(self) -> np.ndarray:
        """Parameters in [0, 1] of the k+1 trace nodes on each edge (endpoints included)."""
        return np.concatenate([[0.0], gauss_lobatto_interior(self.k + 1), [1.0]])

    def edge_node_dofs(self, e: int) -> np.ndarray:
        """Local DoF indices, shape (k+1, 2), of the trace nodes of edge ``e``."""
        k, nE = self.k, self.nE
        out = np.empty((k + 1, 2), dtype=np.int64)
        out[0] = [2 * e, 2 * e + 1]
        out[k] = [2 * ((e + 1) % nE), 2 * ((e + 1) % nE) + 1]
        for j in range(k - 1):
            b = 2 * nE + 2 * (k - 1) * e + 2 * j
            out[j + 1] = [b, b + 1]
        return out

    @cached_property
    def boundary_points(self) -> np.ndarray:
        """Coordinates of the 2 n_E k / 2 point DoFs, in DoF order."""
        g, k = self.geom, self.k
        pts = np.empty((self.n_bnd // 2, 2))
        pts[: self.nE] = g.vertices
        s = gauss_lobatto_interior(k + 1)
        for e in range(self.nE):
            seg = g.edge_start[e] + np.outer(s, g.edge_end[e] - g.edge_start[e])
            pts[self.nE + (k - 1) * e : self.nE + (k - 1) * (e + 1)] = seg
        return pts

    def _setup_boundary(self, degree: int | None = None):
        g, k, nE = self.geom, self.k, self.nE
        deg = 2 * k + 2 if degree is None else degree
        pts, wts, BV = [], [], []
        for e in range(nE):
            rule = edge_gauss_rule(g.edge_start[e], g.edge_end[e], deg)
            s = np.linalg.norm(rule.points - g.edge_start[e], axis=1) / g.edge_length[e]
            Lq = lagrange_matrix(self.edge_nodes, s)
            V = np.zeros((len(s), 2, self.ndof))
            nd = self.edge_node_dofs(e)
            for c in range(2):
                V[:, c, nd[:, c]] = Lq
            pts.append(rule.points)
            wts.append(rule.weights)
            BV.append(V)
        self.bpts = np.array(pts)  # (nE, nq, 2)
        self.bw = np.array(wts)  # (nE, nq)
        self.BV = np.array(BV)  # (nE, nq, 2, ndof)

    def bnd_flux(self, n: int) -> np.ndarray:
        """oint m_a v.n for |a| <= n, shape (dim P_n, ndof)."""
        G = self.geom.basis.eval(self.bpts.reshape(-1, 2), n).reshape(self.nE, -1, dim_poly(n))
        return np.einsum("ej,ejm,ec,ejcd->md", self.bw, G, self.geom.normal, self.BV, optimize=True)

    def bnd_comp(self, G: np.ndarray) -> np.ndarray:
        """oint g_m v_c for values G (nE, nq, m) of scalar functions g_m; shape (2, m, ndof)."""
        return np.einsum("ej,ejm,ejcd->cmd", self.bw, G, self.BV, optimize=True)

    # -- divergence ---------------------------------------------------------

    @cached_property
    def divergence(self) -> np.ndarray:
        """B^E: rows int m_a div v over a in P_{k-1}, exact from the DoFs."""
        B = np.zeros((dim_poly(self.k - 1), self.ndof))
        B[0] = self.bnd_flux(0)[0]
        B[1:, self.sl4] = (self.area / self.h) * np.eye(self.n4)
        return B

    @cached_property
    def div_coeffs(self) -> np.ndarray:
        """Coefficients of div v in P_{k-1}."""
        return _solve(self.geom.gram(self.k - 1), self.divergence, "divergence Gram")

    # -- moments ------------------------------------------------------------

    def grad_moments(self, n: int) -> np.ndarray:
        """int grad(m_b) . v for 1 <= |b| <= n+1 (physical gradient)."""
        Mdiv = self.geom.gram(n + 1, self.k - 1) @ self.div_coeffs
        return (-Mdiv + self.bnd_flux(n + 1))[1:]

    def _perp_low(self) -> np.ndarray:
        out = np.zeros((self.n3, self.ndof))
        out[:, self.sl3] = self.area * np.eye(self.n3)
        return out

    def perp_moments(self, n: int) -> np.ndarray:
        """int x_perp m_g . v for |g| <= n-1, via D_V3 and the enhancement constraint."""
        m = dim_poly(n - 1)
        if m <= self.n3:
            return self._perp_low()[:m]
        X = xperp_coeffs(self.k - 1)  # x_perp P_{k-1} inside [P_k]^2
        hi = X[:, self.n3 : m].T @ self.vec_gram(self.k) @ self.pi_nabla
        return np.vstack([self._perp_low(), hi])

    def vec_moments(self, n: int) -> np.ndarray:
        """int m_a v_c for every basis element of [P_n]^2, shape (2 dim P_n, ndof)."""
        if n > self.k:
            raise ValueError("moments above degree k are not computable")
        Dm = vector_decomposition_matrix(n, self.h)
        Z = np.vstack([self.grad_moments(n), self.perp_moments(n)]) if n >= 1 else self.grad_moments(n)
        return np.linalg.solve(Dm.T, Z)

    def vec_gram(self, n: int) -> np.ndarray:
        M = self.geom.gram(n)
        Z = np.zeros_like(M)
        return np.block([[M, Z], [Z, M]])

    # -- projectors ---------------------------------------------------------

    @cached_property
    def h1_gram(self) -> np.ndarray:
        """int grad m_a . grad m_b on P_k."""
        k, h = self.k, self.h
        M = self.geom.gram(k - 1)
        Dx, Dy = deriv_matrix(k, 0) / h, deriv_matrix(k, 1) / h
        return Dx.T @ M @ Dx + Dy.T @ M @ Dy

    @cached_property
    def pi_nabla(self) -> np.ndarray:
        """H1-seminorm projector onto [P_k]^2 with vector-mean constraint."""
        k, npk, h = self.k, self.npk, self.h
        low = self.vec_moments(k - 2)  # (2 dim P_{k-2}, ndof)
        nlow = dim_poly(k - 2)
        L = laplacian_coeffs(k, h)  # (dim P_{k-2}, dim P_k)
        Gn = self.geom.basis.grad(self.bpts.reshape(-1, 2), k).reshape(self.nE, -1, npk, 2)
        dn = np.einsum("ejmd,ed->ejm", Gn, self.geom.normal)
        bnd = self.bnd_comp(dn)  # (2, npk, ndof)
        M0 = self.geom.gram(0, k)[0]
        lhs = np.zeros((2 * npk, 2 * npk))
        rhs = np.zeros((2 * npk, self.ndof))
        for c in range(2):
            blk = slice(c * npk, (c + 1) * npk)
            lhs[blk, blk] = self.h1_gram
            rhs[blk] = -L.T @ low[c * nlow : (c + 1) * nlow] + bnd[c]
            lhs[c * npk] = 0.0
            lhs[c * npk, blk] = M0
            rhs[c * npk] = low[c * nlow]
        return _solve(lhs, rhs, "H1 projector")

    @cached_property
    def moments_k(self) -> np.ndarray:
        return self.vec_moments(self.k)

    @cached_property
    def pi_zero(self) -> np.ndarray:
        """L2 projector onto [P_k]^2."""
        return _solve(self.vec_gram(self.k), self.moments_k, "L2 projector")

    @cached_property
    def pi_grad(self) -> np.ndarray:
        """L2 projection of grad v onto [P_{k-1}]^{2x2}; shape (2, 2, dim P_{k-1}, ndof), [c, d] = d_d v_c."""
        k, h = self.k, self.h
        n1 = dim_poly(k - 1)
        n2 = dim_poly(k - 2)
        low = self.vec_moments(k - 2)
        Gb = self.geom.basis.eval(self.bpts.reshape(-1, 2), k - 1).reshape(self.nE, -1, n1)
        Minv_src = self.geom.gram(k - 1)
        out = np.empty((2, 2, n1, self.ndof))
        for d in range(2):
            Dd = deriv_matrix(k - 1, d) / h  # (n2, n1)
            bnd = self.bnd_comp(Gb * self.geom.normal[:, None, None, d])
            for c in range(2):
                rhs = -Dd.T @ low[c * n2 : (c + 1) * n2] + bnd[c]
                out[c, d] = _solve(Minv_src, rhs, "gradient projector")
        return out

    # -- polynomial DoFs ----------------------------------------------------

    @cached_property
    def poly_dofs(self) -> np.ndarray:
        """DoF vectors of the basis of [P_k]^2, shape (ndof, 2 dim P_k)."""
        k, npk, h = self.k, self.npk, self.h
        D = np.zeros((self.ndof, 2 * npk))
        vals = self.geom.basis.eval(self.boundary_points, k)
        D[0 : self.n_bnd : 2, :npk] = vals
        D[1 : self.n_bnd : 2, npk:] = vals
        if self.n3:
            X = xperp_coeffs(k - 3)  # (2 dim P_{k-2}, n3)
            G = self.geom.gram(k - 2, k)
            n2 = dim_poly(k - 2)
            D[self.sl3, :npk] = X[:n2].T @ G / self.area
            D[self.sl3, npk:] = X[n2:].T @ G / self.area
        Dx, Dy = deriv_matrix(k, 0) / h, deriv_matrix(k, 1) / h
        G = self.geom.gram(k - 1)[1:]
        D[self.sl4, :npk] = (h / self.area) * G @ Dx
        D[self.sl4, npk:] = (h / self.area) * G @ Dy
        return D

    def interpolate_poly(self, coeffs: np.ndarray) -> np.ndarray:
        return self.poly_dofs @ coeffs

    # -- forms --------------------------------------------------------------

    @cached_property
    def stiffness(self) -> np.ndarray:
        """Consistency a(Pi v, Pi w) plus dofi-dofi stabilization (unit coefficient)."""
        P = self.pi_nabla
        K = np.kron(np.eye(2), self.h1_gram)
        S = np.eye(self.ndof) - self.poly_dofs @ P
        return P.T @ K @ P + S.T @ S

    @cached_property
    def consistency(self) -> np.ndarray:
        P = self.pi_nabla
        return P.T @ np.kron(np.eye(2), self.h1_gram) @ P

    @cached_property
    def triple(self) -> np.ndarray:
        """int m_q m_a m_g, q in P_{k-1}, a, g in P_k."""
        return self.geom.triple_table(self.k - 1, self.k, self.k)

    def load(self, f, degree: int | None = None) -> np.ndarray:
        """(f, Pi0_k phi_i) for every DoF basis function; ``f(pts) -> (n, 2)``."""
        q = self.geom.quadrature(2 * self.k + 8 if degree is None else degree)
        F = np.asarray(f(q.points), float)
        m = self.geom.basis.eval(q.points, self.k)
        Fm = np.concatenate([q.integrate(F[:, 0:1] * m), q.integrate(F[:, 1:2] * m)])
        return self.pi_zero.T @ Fm

    def interpolate(self, v, degree: int | None = None) -> np.ndarray:
        """DoFs of a smooth field ``v(pts) -> (n, 2)``."""
        k, g = self.k, self.geom
        deg = 2 * k + 6 if degree is None else degree
        out = np.zeros(self.ndof)
        out[: self.n_bnd] = np.asarray(v(self.boundary_points), float).ravel()
        q = g.quadrature(deg)
        V = np.asarray(v(q.points), float)
        if self.n3:
            m = g.basis.eval(q.points, k - 3)
            s = g.to_scaled(q.points)
            # v . x_perp m = (v1 eta - v2 xi) m
            out[self.sl3] = q.integrate((V[:, 0] * s[:, 1] - V[:, 1] * s[:, 0])[:, None] * m) / self.area
        if self.n4:
            gm = g.basis.grad(q.points, k - 1)[:, 1:, :]
            vol = q.integrate(np.einsum("pmd,pd->pm", gm, V))
            bnd = np.zeros(self.n4)
            for e in range(self.nE):
                r = edge_gauss_rule(g.edge_start[e], g.edge_end[e], deg)
                flux = np.asarray(v(r.points), float) @ g.normal[e]
                bnd += r.integrate(flux[:, None] * g.basis.eval(r.points, k - 1)[:, 1:])
            out[self.sl4] = (self.h / self.area) * (bnd - vol)
        return out


# ---------------------------------------------------------------------------
# trilinear forms, batched over cells with equal local size


def _conv_u(T3, Gp, Po, U):
    """A[e,i,j] = c_conv(U; phi_j, phi_i)."""
    PU = np.einsum("eyaj,ej->eya", Po, U)
    return np.einsum("eqag,exyqj,eya,exgi->eij", T3, Gp, PU, Po, optimize=True)


def _conv_w(T3, Gp, Po, U):
    """A[e,i,j] = c_conv(phi_j; U, phi_i)."""
    GU = np.einsum("exyqj,ej->exyq", Gp, U)
    return np.einsum("eqag,exyq,eyaj,exgi->eij", T3, GU, Po, Po, optimize=True)


def _conv_v_first(T3, Gp, Po, U):
    """A[e,i,j] = c_conv(phi_j; phi_i, U)."""
    PU = np.einsum("exgj,ej->exg", Po, U)
    return np.einsum("eqag,exyqi,eyaj,exg->eij", T3, Gp, Po, PU, optimize=True)


_J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _rot_u(T3, Gp, Po, U):
    """A[e,i,j] = c_rot(U; phi_j, phi_i) = int omega(U) (u0 v1 - u1 v0)."""
    om = np.einsum("eqj,ej->eq", Gp[:, 1, 0] - Gp[:, 0, 1], U)
    return np.einsum("eqag,eq,exaj,xy,eygi->eij", T3, om, Po, _J, Po, optimize=True)


def _rot_w(T3, Gp, Po, U):
    """A[e,i,j] = c_rot(phi_j; U, phi_i)."""
    Om = Gp[:, 1, 0] - Gp[:, 0, 1]
    PU = np.einsum("exaj,ej->exa", Po, U)
    return np.einsum("eqag,eqj,exa,xy,eygi->eij", T3, Om, PU, _J, Po, optimize=True)


def trilinear_matrices(variant: str, T3, Gp, Po, U, newton: bool = True):
    """Residual r_i = c(U; U, phi_i) and its derivative for a batch of cells.

    Shapes: ``T3`` (e, q, a, g), ``Gp`` (e, 2, 2, q, n), ``Po`` (e, 2, a, n),
    ``U`` (e, n).  Returns ``(r, J)`` with ``J`` the exact Jacobian when
    ``newton`` is true, otherwise the frozen-wind (Picard) matrix.
    """
    if variant == "conv":
        A1 = _conv_u(T3, Gp, Po, U)
        r = np.einsum("eij,ej->ei", A1, U)
        J = A1 + _conv_w(T3, Gp, Po, U) if newton else A1
    elif variant == "skew":
        A1 = _conv_u(T3, Gp, Po, U)
        C = 0.5 * (A1 - A1.transpose(0, 2, 1))
        r = np.einsum("eij,ej->ei", C, U)
        if newton:
            J = C + 0.5 * (_conv_w(T3, Gp, Po, U) - _conv_v_first(T3, Gp, Po, U))
        else:
            J = C
    elif variant == "rot":
        A1 = _rot_u(T3, Gp, Po, U)
        r = np.einsum("eij,ej->ei", A1, U)
        J = A1 + _rot_w(T3, Gp, Po, U) if newton else A1
    else:
        raise ValueError(f"unknown trilinear variant {variant!r}; expected conv, skew or rot")
    return r, J
