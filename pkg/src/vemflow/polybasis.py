"""Scaled monomials, polynomial coefficient algebra and quadrature on polygons.

Polynomials on a cell E are stored as coefficient vectors with respect to the
scaled monomials

    m_(a,b)(x, y) = ((x - x_E) / h_E)**a * ((y - y_E) / h_E)**b,

ordered by total degree and, within a degree, by increasing ``b``.  Vector
polynomials stack the two component blocks, ``[v_1 | v_2]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import roots_jacobi

__all__ = [
    "dim_poly",
    "exponents",
    "monomial_index",
    "deriv_matrix",
    "mult_matrix",
    "CellGeometry",
    "ScaledMonomialBasis",
    "QuadratureRule",
    "triangle_rule",
    "polygon_quadrature",
    "edge_gauss_rule",
    "gauss_lobatto_interior",
    "edge_rule_and_dof_points",
    "curl_xperp_matrix",
    "curl_isomorphism_solve",
    "vector_decomposition_matrix",
]


def dim_poly(n: int) -> int:
    """Dimension of P_n in two variables (0 for n < 0)."""
    return (n + 1) * (n + 2) // 2 if n >= 0 else 0


@lru_cache(maxsize=None)
def exponents(n: int) -> np.ndarray:
    if n < 0:
        return np.zeros((0, 2), dtype=int)
    out = [(d - j, j) for d in range(n + 1) for j in range(d + 1)]
    arr = np.array(out, dtype=int)
    arr.setflags(write=False)
    return arr


def monomial_index(a: int, b: int) -> int:
    d = a + b
    return d * (d + 1) // 2 + b


@lru_cache(maxsize=None)
def deriv_matrix(n: int, axis: int) -> np.ndarray:
    """d/dxi (axis 0) or d/deta (axis 1) in scaled variables, P_n -> P_{n-1}."""
    out = np.zeros((dim_poly(n - 1), dim_poly(n)))
    for j, (a, b) in enumerate(exponents(n)):
        e = (a, b)[axis]
        if e == 0:
            continue
        na, nb = (a - 1, b) if axis == 0 else (a, b - 1)
        out[monomial_index(na, nb), j] = e
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def mult_matrix(n: int, axis: int) -> np.ndarray:
    """Multiplication by xi (axis 0) or eta (axis 1), P_n -> P_{n+1}."""
    out = np.zeros((dim_poly(n + 1), dim_poly(n)))
    for j, (a, b) in enumerate(exponents(n)):
        na, nb = (a + 1, b) if axis == 0 else (a, b + 1)
        out[monomial_index(na, nb), j] = 1.0
    out.setflags(write=False)
    return out


def _embed(n: int, m: int) -> np.ndarray:
    """Inclusion P_n -> P_m (m >= n); graded ordering makes this zero padding."""
    out = np.zeros((dim_poly(m), dim_poly(n)))
    out[: dim_poly(n), : dim_poly(n)] = np.eye(dim_poly(n))
    return out


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    Gauss-Jacobi in the collapsed direction absorbs the Duffy Jacobian, so
    ``m = ceil((degree + 1) / 2)`` points per direction are exact for P_degree.
    """
    m = max(1, (degree + 2) // 2)
    t, wt = roots_jacobi(m, 1.0, 0.0)
    u = 0.5 * (1.0 + t)
    wu = wt / 4.0
    s, ws = np.polynomial.legendre.leggauss(m)
    v = 0.5 * (1.0 + s)
    wv = 0.5 * ws
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    w = np.outer(wu, wv).ravel()
    return pts, w


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _ear_clip(poly: np.ndarray) -> list[tuple[int, int, int]]:
    idx = list(range(len(poly)))
    tris = []

    def inside(p, a, b, c):
        d1 = _cross(a, b, p)
        d2 = _cross(b, c, p)
        d3 = _cross(c, a, p)
        return d1 >= 0 and d2 >= 0 and d3 >= 0

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(poly) ** 2:
            raise ValueError("ear clipping failed; polygon is not simple")
        for j in range(len(idx)):
            i0, i1, i2 = idx[j - 1], idx[j], idx[(j + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if _cross(a, b, c) <= 0:
                continue
            if any(inside(poly[q], a, b, c) for q in idx if q not in (i0, i1, i2)):
                continue
            tris.append((i0, i1, i2))
            idx.pop(j)
            break
    tris.append(tuple(idx))
    return tris


def _cross(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def polygon_quadrature(vertices: np.ndarray, degree: int) -> QuadratureRule:
    """Fan sub-triangulation from the centroid with a Gauss rule per triangle.

    Falls back to ear clipping when some fan triangle has non-positive area
    (cell not star-shaped with respect to its centroid).
    """
    verts = np.asarray(vertices, dtype=float)
    ref_pts, ref_w = triangle_rule(degree)
    c = _centroid(verts)
    nxt = np.roll(verts, -1, axis=0)
    areas = 0.5 * ((verts[:, 0] - c[0]) * (nxt[:, 1] - c[1]) - (verts[:, 1] - c[1]) * (nxt[:, 0] - c[0]))
    if np.all(areas > 1e-14 * max(1.0, abs(_signed_area(verts)))):
        tri = [(c, verts[i], nxt[i]) for i in range(len(verts))]
    else:
        tri = [(verts[a], verts[b], verts[cc]) for a, b, cc in _ear_clip(verts)]
    pts, wts = [], []
    for a, b, cc in tri:
        J = np.column_stack([b - a, cc - a])
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        pts.append(a + ref_pts @ J.T)
        wts.append(ref_w * det)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), degree)


def _centroid(verts: np.ndarray) -> np.ndarray:
    x, y = verts[:, 0], verts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    A = 0.5 * cr.sum()
    return np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6.0 * A)


@lru_cache(maxsize=None)
def _leggauss01(m: int) -> tuple[np.ndarray, np.ndarray]:
    s, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (s + 1.0), 0.5 * w


def edge_gauss_rule(a: np.ndarray, b: np.ndarray, degree: int) -> QuadratureRule:
    s, w = _leggauss01(degree // 2 + 1)
    a, b = np.asarray(a, float), np.asarray(b, float)
    L = float(np.hypot(*(b - a)))
    return QuadratureRule(a + np.outer(s, b - a), w * L, degree)


@lru_cache(maxsize=None)
def gauss_lobatto_interior(n_points: int) -> np.ndarray:
    """Interior nodes, on [0, 1], of the ``n_points`` Gauss-Lobatto rule."""
    if n_points <= 2:
        return np.zeros(0)
    roots = np.polynomial.legendre.Legendre.basis(n_points - 1).deriv().roots()
    out = np.sort(0.5 * (np.real(roots) + 1.0))
    out.setflags(write=False)
    return out


def edge_rule_and_dof_points(a, b, k: int, degree: int | None = None):
    """Edge quadrature plus the k-1 interior Gauss-Lobatto DoF points on [a, b]."""
    if k < 2:
        raise ValueError("k must be >= 2")
    a, b = np.asarray(a, float), np.asarray(b, float)
    rule = edge_gauss_rule(a, b, 2 * k if degree is None else degree)
    s = gauss_lobatto_interior(k + 1)
    return rule, a + np.outer(s, b - a)


# ---------------------------------------------------------------------------
# cell geometry and monomial integrals


class CellGeometry:
    """Geometry of one counterclockwise polygon plus cached monomial integrals."""

    def __init__(self, vertices: np.ndarray):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("cell needs at least 3 vertices")
        self.vertices = v
        self.n_vertices = len(v)
        self.area = _signed_area(v)
        if self.area <= 0:
            raise ValueError("cell must be counterclockwise with positive area")
        self.centroid = _centroid(v)
        diff = v[:, None, :] - v[None, :, :]
        self.diameter = float(np.sqrt((diff**2).sum(-1)).max())
        self.h = self.diameter
        nxt = np.roll(v, -1, axis=0)
        self.edge_start = v
        self.edge_end = nxt
        d = nxt - v
        self.edge_length = np.hypot(d[:, 0], d[:, 1])
        self.tangent = d / self.edge_length[:, None]
        self.normal = np.column_stack([self.tangent[:, 1], -self.tangent[:, 0]])
        self._moments: dict[int, np.ndarray] = {}

    def to_scaled(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, float) - self.centroid) / self.h

    def monomial_integrals(self, degree: int) -> np.ndarray:
        """Exact integrals of every scaled monomial of degree <= ``degree``.

        Uses the divergence theorem, int xi^a eta^b = oint xi^(a+1) eta^b/(a+1) d eta,
        with Gauss-Legendre on each edge, so it also works for non-convex cells.
        """
        for d, val in self._moments.items():
            if d >= degree:
                return val[: dim_poly(degree)]
        sv = self.to_scaled(self.vertices)
        sn = np.roll(sv, -1, axis=0)
        s, w = _leggauss01(degree // 2 + 2)
        P = sv[:, None, :] + s[None, :, None] * (sn - sv)[:, None, :]
        deta = (sn - sv)[:, 1][:, None] * w[None, :]
        exps = exponents(degree)
        xi, eta = P[..., 0].ravel(), P[..., 1].ravel()
        dw = deta.ravel()
        a, b = exps[:, 0], exps[:, 1]
        vals = (xi[:, None] ** (a + 1) * eta[:, None] ** b / (a + 1)).T @ dw
        vals = vals * self.h**2
        self._moments[degree] = vals
        return vals

    def gram(self, n: int, m: int | None = None) -> np.ndarray:
        """L2 Gram matrix between scaled monomials of P_n (rows) and P_m (cols)."""
        m = n if m is None else m
        if n < 0 or m < 0:
            return np.zeros((dim_poly(n), dim_poly(m)))
        I = self.monomial_integrals(n + m)
        en, em = exponents(n), exponents(m)
        s = en[:, None, :] + em[None, :, :]
        d = s.sum(-1)
        return I[d * (d + 1) // 2 + s[..., 1]]

    def triple_table(self, n1: int, n2: int, n3: int) -> np.ndarray:
        I = self.monomial_integrals(n1 + n2 + n3)
        s = exponents(n1)[:, None, None, :] + exponents(n2)[None, :, None, :] + exponents(n3)[None, None, :, :]
        d = s.sum(-1)
        return I[d * (d + 1) // 2 + s[..., 1]]

    def quadrature(self, degree: int) -> QuadratureRule:
        return polygon_quadrature(self.vertices, degree)

    @cached_property
    def basis(self) -> "ScaledMonomialBasis":
        return ScaledMonomialBasis(self.centroid, self.h)


class ScaledMonomialBasis:
    """Pointwise evaluation of scaled monomials and their derivatives."""

    def __init__(self, center, h: float):
        self.center = np.asarray(center, float)
        self.h = float(h)

    def eval(self, pts: np.ndarray, n: int) -> np.ndarray:
        if n < 0:
            return np.zeros((len(pts), 0))
        s = (np.asarray(pts, float) - self.center) / self.h
        e = exponents(n)
        return s[:, None, 0] ** e[:, 0] * s[:, None, 1] ** e[:, 1]

    def grad(self, pts: np.ndarray, n: int) -> np.ndarray:
        """Physical gradients, shape (npts, dim P_n, 2)."""
        lower = self.eval(pts, n - 1)
        gx = lower @ deriv_matrix(n, 0) / self.h
        gy = lower @ deriv_matrix(n, 1) / self.h
        return np.stack([gx, gy], axis=-1)

    def hess(self, pts: np.ndarray, n: int) -> np.ndarray:
        """Physical Hessians, shape (npts, dim P_n, 2, 2)."""
        lower = self.eval(pts, n - 2)
        out = np.empty((len(pts), dim_poly(n), 2, 2))
        for i in range(2):
            for j in range(2):
                D = deriv_matrix(n - 1, j) @ deriv_matrix(n, i)
                out[:, :, i, j] = lower @ D / self.h**2
        return out


def grad_coeffs(n: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient maps of d/dx and d/dy, P_n -> P_{n-1}, in physical units."""
    return deriv_matrix(n, 0) / h, deriv_matrix(n, 1) / h


def laplacian_coeffs(n: int, h: float) -> np.ndarray:
    return (deriv_matrix(n - 1, 0) @ deriv_matrix(n, 0) + deriv_matrix(n - 1, 1) @ deriv_matrix(n, 1)) / h**2


def xperp_coeffs(n: int) -> np.ndarray:
    """Coefficient map p -> x_perp p = (eta p, -xi p), P_n -> [P_{n+1}]^2."""
    return np.vstack([mult_matrix(n, 1), -mult_matrix(n, 0)])


def curl_xperp_matrix(n: int, h: float) -> np.ndarray:
    """Matrix of p -> curl(x_perp p) on P_n, with curl v = d_x v_2 - d_y v_1."""
    Dx, _ = grad_coeffs(n + 1, h)
    _, Dy = grad_coeffs(n + 1, h)
    return Dx @ (-mult_matrix(n, 0)) - Dy @ mult_matrix(n, 1)


def curl_isomorphism_solve(q: np.ndarray, h: float = 1.0) -> np.ndarray:
    """Coefficients of the unique p in P_n with curl(x_perp p) = q."""
    q = np.asarray(q, float)
    n = 0
    while dim_poly(n) < len(q):
        n += 1
    if dim_poly(n) != len(q):
        raise ValueError("coefficient vector length is not a P_n dimension")
    M = curl_xperp_matrix(n, h)
    if np.linalg.cond(M) > 1e12:
        raise RuntimeError("curl(x_perp .) is numerically singular")
    return np.linalg.solve(M, q)


@lru_cache(maxsize=None)
def _vector_decomposition_unit(n: int) -> np.ndarray:
    Dx, Dy = deriv_matrix(n + 1, 0), deriv_matrix(n + 1, 1)
    grads = np.vstack([Dx, Dy])[:, 1:]
    return np.hstack([grads, xperp_coeffs(n - 1)]) if n >= 1 else grads


def vector_decomposition_matrix(n: int, h: float) -> np.ndarray:
    """Columns: grad m_b (1 <= |b| <= n+1) then x_perp m_c (|c| <= n-1), in [P_n]^2.

    The matrix is square and invertible, realizing
    [P_n]^2 = grad P_{n+1} (+) x_perp P_{n-1}.
    """
    M = _vector_decomposition_unit(n).copy()
    M[:, : dim_poly(n + 1) - 1] /= h
    return M
