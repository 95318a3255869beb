"""Local stream-function elements.

``StreamElement(geom, k, variant="complex")`` is the space whose curl lands in
the divergence-free velocity space; ``variant="c1"`` is the plain C1 space
with interior moments of the function itself.  Both share the boundary DoFs.

Local DoF ordering:

* vertex ``i``: ``phi, d_x phi, d_y phi`` at ``3i, 3i+1, 3i+2``;
* edge ``e`` starting at offset ``3 n_E + (2k-3) e``: ``k-2`` values at the
  interior Gauss-Lobatto nodes of the k-point rule, then ``k-1`` outward
  normal derivatives at the interior nodes of the (k+1)-point rule;
* interior moments: ``(1/|E|) int curl(phi) . x_perp m_g`` (complex) or
  ``(1/|E|) int phi m_g`` (c1), ``|g| <= k-3``.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .polybasis import (
    CellGeometry,
    curl_xperp_matrix,
    deriv_matrix,
    dim_poly,
    edge_gauss_rule,
    gauss_lobatto_interior,
    laplacian_coeffs,
    xperp_coeffs,
)
from .velocity import ElementError, VelocityElement, _solve, lagrange_matrix

__all__ = ["StreamElement", "stream_dof_count", "c1_trilinear_matrices"]


def stream_dof_count(n_edges: int, k: int) -> int:
    return 2 * n_edges * k + dim_poly(k - 3)


def _hessian_ops(n: int, h: float) -> list[np.ndarray]:
    """Coefficient maps of d_xx, d_xy, d_yx, d_yy, P_n -> P_{n-2}."""
    out = []
    for i in range(2):
        for j in range(2):
            out.append(deriv_matrix(n - 1, j) @ deriv_matrix(n, i) / h**2)
    return out


class StreamElement:
    def __init__(self, geom: CellGeometry | np.ndarray, k: int, variant: str = "complex"):
        if k < 2:
            raise ValueError("stream element needs k >= 2")
        if variant not in ("complex", "c1"):
            raise ValueError(f"unknown stream variant {variant!r}; expected 'complex' or 'c1'")
        self.geom = geom if isinstance(geom, CellGeometry) else CellGeometry(geom)
        self.k = k
        self.variant = variant
        g = self.geom
        self.nE = g.n_vertices
        self.h = g.h
        self.area = g.area
        self.n3 = dim_poly(k - 3)
        self.n_bnd = 2 * self.nE * k
        self.ndof = self.n_bnd + self.n3
        self.sl5 = slice(self.n_bnd, self.ndof)
        self.value_nodes = gauss_lobatto_interior(k)
        self.normal_nodes = np.concatenate([[0.0], gauss_lobatto_interior(k + 1), [1.0]])
        self._build_traces()

    # -- layout -------------------------------------------------------------

    def edge_offset(self, e: int) -> int:
        return 3 * self.nE + (2 * self.k - 3) * e

    def value_dofs(self, e: int) -> np.ndarray:
        o = self.edge_offset(e)
        return np.arange(o, o + self.k - 2)

    def normal_dofs(self, e: int) -> np.ndarray:
        o = self.edge_offset(e) + self.k - 2
        return np.arange(o, o + self.k - 1)

    # -- edge traces --------------------------------------------------------

    @cached_property
    def _hermite_inverse(self) -> np.ndarray:
        """Map from (phi(0), phi(1), phi'(0), phi'(1), phi(s_j)) to monomial coefficients in s."""
        k = self.k
        p = np.arange(k + 2)
        rows = [0.0**p, np.ones(k + 2), np.where(p == 1, 1.0, 0.0), p.astype(float)]
        rows += [s**p for s in self.value_nodes]
        V = np.array(rows)
        c = np.linalg.cond(V)
        if c > 1e12:
            raise ElementError(f"edge trace system conditioning {c:.3e}")
        return np.linalg.inv(V)

    def _edge_conditions(self, e: int) -> np.ndarray:
        """Trace conditions (k+2, ndof) of phi on edge ``e`` in the parameter s."""
        g, nE = self.geom, self.nE
        a, b = e, (e + 1) % nE
        L, t = g.edge_length[e], g.tangent[e]
        C = np.zeros((self.k + 2, self.ndof))
        C[0, 3 * a] = 1.0
        C[1, 3 * b] = 1.0
        C[2, 3 * a + 1 : 3 * a + 3] = L * t
        C[3, 3 * b + 1 : 3 * b + 3] = L * t
        C[4:, self.value_dofs(e)] = np.eye(self.k - 2)
        return C

    def _normal_conditions(self, e: int) -> np.ndarray:
        """Outward normal derivative values at the k+1 normal nodes, (k+1, ndof)."""
        g, nE = self.geom, self.nE
        a, b = e, (e + 1) % nE
        n = g.normal[e]
        C = np.zeros((self.k + 1, self.ndof))
        C[0, 3 * a + 1 : 3 * a + 3] = n
        C[-1, 3 * b + 1 : 3 * b + 3] = n
        C[1:-1, self.normal_dofs(e)] = np.eye(self.k - 1)
        return C

    def trace_ops(self, e: int, s: np.ndarray):
        """(value, tangential derivative, normal derivative) operators at parameters ``s``."""
        s = np.asarray(s, float)
        p = np.arange(self.k + 2)
        coef = self._hermite_inverse @ self._edge_conditions(e)
        val = (s[:, None] ** p) @ coef
        dp = np.where(p > 0, p * s[:, None] ** np.maximum(p - 1, 0), 0.0)
        dt = dp @ coef / self.geom.edge_length[e]
        dn = lagrange_matrix(self.normal_nodes, s) @ self._normal_conditions(e)
        return val, dt, dn

    def grad_op(self, e: int, s: np.ndarray) -> np.ndarray:
        """Gradient of phi along edge ``e``, shape (len(s), 2, ndof)."""
        _, dt, dn = self.trace_ops(e, s)
        t, n = self.geom.tangent[e], self.geom.normal[e]
        return dt[:, None, :] * t[None, :, None] + dn[:, None, :] * n[None, :, None]

    def _build_traces(self):
        g, k = self.geom, self.k
        pts, wts, BP, BG = [], [], [], []
        for e in range(self.nE):
            rule = edge_gauss_rule(g.edge_start[e], g.edge_end[e], 2 * k + 2)
            s = np.linalg.norm(rule.points - g.edge_start[e], axis=1) / g.edge_length[e]
            val, _, _ = self.trace_ops(e, s)
            pts.append(rule.points)
            wts.append(rule.weights)
            BP.append(val)
            BG.append(self.grad_op(e, s))
        self.bpts = np.array(pts)
        self.bw = np.array(wts)
        self.BP = np.array(BP)  # (nE, nq, ndof)
        self.BG = np.array(BG)  # (nE, nq, 2, ndof)

    def _beval(self, n: int) -> np.ndarray:
        return self.geom.basis.eval(self.bpts.reshape(-1, 2), n).reshape(self.nE, -1, dim_poly(n))

    # -- complex variant: curl transfer -------------------------------------

    @cached_property
    def velocity(self) -> VelocityElement:
        return VelocityElement(self.geom, self.k)

    @cached_property
    def curl_transfer(self) -> np.ndarray:
        """Velocity DoFs of curl(phi) as a (velocity ndof, stream ndof) matrix."""
        if self.variant != "complex":
            raise ValueError("the curl transfer is defined for the complex variant only")
        k, nE = self.k, self.nE
        vel = self.velocity
        T = np.zeros((vel.ndof, self.ndof))
        for i in range(nE):
            T[2 * i, 3 * i + 2] = 1.0
            T[2 * i + 1, 3 * i + 1] = -1.0
        s = gauss_lobatto_interior(k + 1)
        for e in range(nE):
            G = self.grad_op(e, s)
            b = 2 * nE + 2 * (k - 1) * e
            T[b : b + 2 * (k - 1) : 2] = G[:, 1, :]
            T[b + 1 : b + 2 * (k - 1) : 2] = -G[:, 0, :]
        T[vel.sl3, self.sl5] = np.eye(self.n3)
        return T

    # -- polynomial DoFs and interpolation ------------------------------------

    def _d5_poly(self) -> np.ndarray:
        k, h = self.k, self.h
        npk1 = dim_poly(k + 1)
        if self.n3 == 0:
            return np.zeros((0, npk1))
        if self.variant == "c1":
            return self.geom.gram(k - 3, k + 1) / self.area
        Dx, Dy = deriv_matrix(k + 1, 0) / h, deriv_matrix(k + 1, 1) / h
        X = xperp_coeffs(k - 3)
        n2 = dim_poly(k - 2)
        G = self.geom.gram(k - 2, k)
        # curl p = (d_y p, -d_x p)
        return (X[:n2].T @ G @ Dy - X[n2:].T @ G @ Dx) / self.area

    @cached_property
    def poly_dofs(self) -> np.ndarray:
        """DoF vectors of the scaled monomials of P_{k+1}, shape (ndof, dim P_{k+1})."""
        k, g = self.k, self.geom
        npk1 = dim_poly(k + 1)
        D = np.zeros((self.ndof, npk1))
        B = g.basis
        V = g.vertices
        D[0 : 3 * self.nE : 3] = B.eval(V, k + 1)
        gr = B.grad(V, k + 1)
        D[1 : 3 * self.nE : 3] = gr[:, :, 0]
        D[2 : 3 * self.nE : 3] = gr[:, :, 1]
        for e in range(self.nE):
            a, d = g.edge_start[e], g.edge_end[e] - g.edge_start[e]
            if k > 2:
                D[self.value_dofs(e)] = B.eval(a + np.outer(self.value_nodes, d), k + 1)
            pn = a + np.outer(self.normal_nodes[1:-1], d)
            D[self.normal_dofs(e)] = B.grad(pn, k + 1) @ g.normal[e]
        D[self.sl5] = self._d5_poly()
        return D

    def interpolate(self, phi, grad, degree: int | None = None) -> np.ndarray:
        """DoFs of a smooth ``phi(pts) -> (n,)`` with gradient ``grad(pts) -> (n, 2)``."""
        k, g = self.k, self.geom
        out = np.zeros(self.ndof)
        V = g.vertices
        out[0 : 3 * self.nE : 3] = phi(V)
        gv = np.asarray(grad(V), float)
        out[1 : 3 * self.nE : 3] = gv[:, 0]
        out[2 : 3 * self.nE : 3] = gv[:, 1]
        for e in range(self.nE):
            a, d = g.edge_start[e], g.edge_end[e] - g.edge_start[e]
            if k > 2:
                out[self.value_dofs(e)] = phi(a + np.outer(self.value_nodes, d))
            pn = a + np.outer(self.normal_nodes[1:-1], d)
            out[self.normal_dofs(e)] = np.asarray(grad(pn), float) @ g.normal[e]
        if self.n3:
            q = g.quadrature(2 * k + 6 if degree is None else degree)
            m = g.basis.eval(q.points, k - 3)
            if self.variant == "c1":
                out[self.sl5] = q.integrate(np.asarray(phi(q.points))[:, None] * m) / self.area
            else:
                G = np.asarray(grad(q.points), float)
                s = g.to_scaled(q.points)
                # curl phi . x_perp m = (phi_y eta + phi_x xi) m
                val = G[:, 1] * s[:, 1] + G[:, 0] * s[:, 0]
                out[self.sl5] = q.integrate(val[:, None] * m) / self.area
        return out

    # -- moments and projections ----------------------------------------------

    @cached_property
    def hessian_gram(self) -> np.ndarray:
        n, h = self.k + 1, self.h
        M = self.geom.gram(n - 2)
        return sum(D.T @ M @ D for D in _hessian_ops(n, h))

    @cached_property
    def pi_hessian(self) -> np.ndarray:
        """H2-seminorm projector onto P_{k+1}; affine part fixed by oint phi and oint grad phi.

        Only defined for the c1 variant, whose interior DoFs are moments of phi.
        """
        if self.variant != "c1":
            raise ValueError("the Hessian projector is built for the c1 variant")
        k, h, g = self.k, self.h, self.geom
        n = k + 1
        npn = dim_poly(n)
        rhs = np.zeros((npn, self.ndof))
        # int (lap^2 m) phi from the interior moments
        if self.n3:
            L2 = laplacian_coeffs(n - 2, h) @ laplacian_coeffs(n, h)  # P_{k+1} -> P_{k-3}
            rhs[:, self.sl5] += self.area * L2.T
        # - oint d_n(lap m) phi
        pts = self.bpts.reshape(-1, 2)
        gl = g.basis.grad(pts, n - 2).reshape(self.nE, -1, dim_poly(n - 2), 2)
        dnl = np.einsum("ejmd,ed->ejm", gl, g.normal) @ laplacian_coeffs(n, h)
        rhs -= np.einsum("ej,ejm,ejd->md", self.bw, dnl, self.BP, optimize=True)
        # + oint (hess m n) . grad phi
        H = g.basis.hess(pts, n).reshape(self.nE, -1, npn, 2, 2)
        Hn = np.einsum("ejmab,eb->ejma", H, g.normal)
        rhs += np.einsum("ej,ejma,ejad->md", self.bw, Hn, self.BG, optimize=True)
        lhs = self.hessian_gram.copy()
        Pb = self._beval(n)
        Gb = g.basis.grad(pts, n).reshape(self.nE, -1, npn, 2)
        lhs[0] = np.einsum("ej,ejm->m", self.bw, Pb)
        rhs[0] = np.einsum("ej,ejd->d", self.bw, self.BP)
        for d in range(2):
            lhs[1 + d] = np.einsum("ej,ejm->m", self.bw, Gb[..., d])
            rhs[1 + d] = np.einsum("ej,ejd->d", self.bw, self.BG[:, :, d, :])
        return _solve(lhs, rhs, "Hessian projector")

    @cached_property
    def phi_moments(self) -> np.ndarray:
        """int phi m_a for a in P_{k-1}, shape (dim P_{k-1}, ndof)."""
        k, h, g = self.k, self.h, self.geom
        n1 = dim_poly(k - 1)
        if self.variant == "c1":
            out = np.zeros((n1, self.ndof))
            out[: self.n3, self.sl5] = self.area * np.eye(self.n3)
            out[self.n3 :] = g.gram(k - 1, k + 1)[self.n3 :] @ self.pi_hessian
            return out
        # m_a = curl(x_perp p_a); int phi curl w = int curl phi . w + oint phi w . t
        P = np.linalg.inv(curl_xperp_matrix(k - 1, h))  # column a: coefficients of p_a
        X = self.velocity.perp_moments(k) @ self.curl_transfer  # int curl phi . x_perp m_g
        s = g.to_scaled(self.bpts.reshape(-1, 2)).reshape(self.nE, -1, 2)
        xt = s[..., 1] * g.tangent[:, None, 0] - s[..., 0] * g.tangent[:, None, 1]
        mb = self._beval(k - 1) * xt[..., None]
        bnd = np.einsum("ej,ejm,ejd->md", self.bw, mb, self.BP, optimize=True)
        return P.T @ (X + bnd)

    @cached_property
    def pi_zero_low(self) -> np.ndarray:
        """L2 projector of phi onto P_{k-1}."""
        return _solve(self.geom.gram(self.k - 1), self.phi_moments, "stream L2 projector")

    @cached_property
    def grad_moments(self) -> np.ndarray:
        """int m_a d_d phi for a in P_k, shape (2, dim P_k, ndof)."""
        k, h, g = self.k, self.h, self.geom
        npk = dim_poly(k)
        Pb = self._beval(k)
        out = np.empty((2, npk, self.ndof))
        for d in range(2):
            Dd = deriv_matrix(k, d) / h  # P_k -> P_{k-1}
            bnd = np.einsum("ej,ejm,e,ejn->mn", self.bw, Pb, g.normal[:, d], self.BP, optimize=True)
            out[d] = -Dd.T @ self.phi_moments + bnd
        return out

    @cached_property
    def pi_grad(self) -> np.ndarray:
        """L2 projection of grad phi onto [P_k]^2, shape (2, dim P_k, ndof)."""
        M = self.geom.gram(self.k)
        return np.stack([_solve(M, self.grad_moments[d], "stream gradient projector") for d in range(2)])

    @cached_property
    def pi_curl(self) -> np.ndarray:
        """L2 projection of curl phi = (d_y phi, -d_x phi) onto [P_k]^2."""
        return np.stack([self.pi_grad[1], -self.pi_grad[0]])

    @cached_property
    def pi_laplacian(self) -> np.ndarray:
        """L2 projection of lap phi onto P_{k-1}."""
        k, h, g = self.k, self.h, self.geom
        n1 = dim_poly(k - 1)
        Lc = laplacian_coeffs(k - 1, h)  # P_{k-1} -> P_{k-3}
        vol = Lc.T @ self.phi_moments[: self.n3] if self.n3 else np.zeros((n1, self.ndof))
        pts = self.bpts.reshape(-1, 2)
        gm = g.basis.grad(pts, k - 1).reshape(self.nE, -1, n1, 2)
        dnm = np.einsum("ejmd,ed->ejm", gm, g.normal)
        dnphi = np.einsum("ejdn,ed->ejn", self.BG, g.normal)
        bnd = -np.einsum("ej,ejm,ejn->mn", self.bw, dnm, self.BP, optimize=True)
        bnd += np.einsum("ej,ejm,ejn->mn", self.bw, self._beval(k - 1), dnphi, optimize=True)
        return _solve(g.gram(k - 1), vol + bnd, "Laplacian projector")

    @cached_property
    def pi_hessian_l2(self) -> np.ndarray:
        """L2 projection of the Hessian onto P_{k-1}, shape (2, 2, dim P_{k-1}, ndof)."""
        k, h, g = self.k, self.h, self.geom
        n1, n2 = dim_poly(k - 1), dim_poly(k - 2)
        Pb = self._beval(k - 1)
        M = g.gram(k - 1)
        out = np.empty((2, 2, n1, self.ndof))
        for i in range(2):
            for j in range(2):
                Dj = deriv_matrix(k - 1, j) / h  # P_{k-1} -> P_{k-2}
                vol = -Dj.T @ self.grad_moments[i, :n2]
                bnd = np.einsum("ej,ejm,e,ejn->mn", self.bw, Pb, g.normal[:, j], self.BG[:, :, i, :], optimize=True)
                out[i, j] = _solve(M, vol + bnd, "Hessian L2 projector")
        return out

    # -- c1 forms -----------------------------------------------------------

    @cached_property
    def dof_scaling(self) -> np.ndarray:
        """Value DoFs unscaled, derivative DoFs times h_E, moments unscaled."""
        s = np.ones(self.ndof)
        s[1 : 3 * self.nE : 3] = self.h
        s[2 : 3 * self.nE : 3] = self.h
        for e in range(self.nE):
            s[self.normal_dofs(e)] = self.h
        return s

    def stiffness(self, consistency: str = "hessian") -> np.ndarray:
        """Local biharmonic matrix: consistency plus h^-2 scaled dofi-dofi stabilization.

        ``consistency="hessian"`` uses int hess(P psi) : hess(P phi) with the H2
        projector P, so the kernel is the affine functions.  ``"laplacian"`` uses
        (Pi lap psi, Pi lap phi), whose kernel also contains every harmonic
        polynomial of degree <= k+1.
        """
        P = self.pi_hessian
        if consistency == "hessian":
            K = P.T @ self.hessian_gram @ P
        elif consistency == "laplacian":
            L = self.pi_laplacian
            K = L.T @ self.geom.gram(self.k - 1) @ L
        else:
            raise ValueError(f"unknown consistency {consistency!r}; expected 'hessian' or 'laplacian'")
        S = (np.eye(self.ndof) - self.poly_dofs @ P) * self.dof_scaling[:, None]
        return K + (S.T @ S) / self.h**2

    @cached_property
    def triple(self) -> np.ndarray:
        return self.geom.triple_table(self.k - 1, self.k, self.k)

    def curl_load(self, rot_f, degree: int | None = None) -> np.ndarray:
        """int Pi0_{k-1}(rot f) phi_i, with ``rot_f(pts) -> (n,)``."""
        q = self.geom.quadrature(2 * self.k + 8 if degree is None else degree)
        m = self.geom.basis.eval(q.points, self.k - 1)
        Fm = q.integrate(np.asarray(rot_f(q.points), float)[:, None] * m)
        return self.pi_zero_low.T @ Fm


def c1_trilinear_matrices(T3, Lap, Curl, Grad, U, newton: bool = True):
    """r_i = c(U; U, phi_i) = int (Pi lap U)(Pi curl U) . (Pi grad phi_i) for a batch.

    Shapes: ``T3`` (e, q, a, g), ``Lap`` (e, q, n), ``Curl``/``Grad`` (e, 2, a, n), ``U`` (e, n).
    """
    LU = np.einsum("eqn,en->eq", Lap, U)
    CU = np.einsum("exan,en->exa", Curl, U)
    A1 = np.einsum("eqag,eq,exaj,exgi->eij", T3, LU, Curl, Grad, optimize=True)
    r = np.einsum("eij,ej->ei", A1, U)
    if not newton:
        return r, A1
    A2 = np.einsum("eqag,eqj,exa,exgi->eij", T3, Lap, CU, Grad, optimize=True)
    return r, A1 + A2
