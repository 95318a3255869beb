"""Regenerate ``oracles.json`` with exact sympy integration.

Independent of the package: polygons are fan-triangulated and every integral
is evaluated symbolically over the reference triangle.  Run from the repo
root with ``python tests/oracles/build_oracles.py``.
"""
from __future__ import annotations

import json
from pathlib import Path

import sympy as sp

x, y, s, t = sp.symbols("x y s t", real=True)

PENTAGON = [(0, 0), (2, 0), (sp.Rational(5, 2), sp.Rational(3, 2)), (1, sp.Rational(5, 2)), (sp.Rational(-1, 2), 1)]
SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]


def integrate_polygon(expr, poly):
    """Exact integral over a convex counterclockwise polygon."""
    a = sp.Matrix(poly[0])
    total = 0
    for i in range(1, len(poly) - 1):
        b, c = sp.Matrix(poly[i]), sp.Matrix(poly[i + 1])
        J = sp.Matrix.hstack(b - a, c - a)
        X = a + J * sp.Matrix([s, t])
        g = expr.subs({x: X[0], y: X[1]}, simultaneous=True)
        total += abs(J.det()) * sp.integrate(sp.integrate(g, (t, 0, 1 - s)), (s, 0, 1))
    return sp.nsimplify(sp.expand(total))


def grad(f):
    return [sp.diff(f, x), sp.diff(f, y)]


def jac(u):
    return [[sp.diff(ui, v) for v in (x, y)] for ui in u]


def lap(f):
    return sp.diff(f, x, 2) + sp.diff(f, y, 2)


def num(e) -> float:
    return float(sp.N(e, 30))


def build() -> dict:
    out = {}
    out["pentagon"] = [[num(a), num(b)] for a, b in PENTAGON]
    out["pentagon_area"] = num(integrate_polygon(sp.Integer(1), PENTAGON))
    out["pentagon_monomials"] = {f"{a},{b}": num(integrate_polygon(x**a * y**b, PENTAGON)) for a in range(5) for b in range(5 - a)}
    out["square_x2y2"] = num(integrate_polygon(x**2 * y**2, SQUARE))

    # velocity element, k = 2
    v = [x**2 - y + 1, x * y + 3 * y**2 - 2 * x]
    w = [y**2 + x, 2 * x * y - 1]
    div_v = sp.diff(v[0], x) + sp.diff(v[1], y)
    out["vel_v"] = [str(e) for e in v]
    out["vel_w"] = [str(e) for e in w]
    out["div_moments_pentagon"] = {str(q): num(integrate_polygon(q * div_v, PENTAGON)) for q in (sp.Integer(1), x, y)}
    gv, gw = jac(v), jac(w)
    out["a_vw_pentagon"] = num(integrate_polygon(sum(gv[i][j] * gw[i][j] for i in range(2) for j in range(2)), PENTAGON))
    conv = sum(gv[i][j] * w[j] * v[i] for i in range(2) for j in range(2))
    out["conv_wvv_square"] = num(integrate_polygon(sum(gv[i][j] * w[j] * v[i] for i in range(2) for j in range(2)), SQUARE))
    out["conv_vvw_square"] = num(integrate_polygon(sum(gv[i][j] * v[j] * w[i] for i in range(2) for j in range(2)), SQUARE))
    del conv

    # stream element, k = 2 (P_3 members)
    psi = x**2 * y - x * y**2 / 3 + y**3 / 2 + x
    phi = x**3 - 2 * x * y**2 + y**2
    out["stream_psi"] = str(psi)
    out["stream_phi"] = str(phi)
    hp, hf = [[sp.diff(psi, a, b) for b in (x, y)] for a in (x, y)], [[sp.diff(phi, a, b) for b in (x, y)] for a in (x, y)]
    out["lap_lap_square"] = num(integrate_polygon(lap(psi) * lap(phi), SQUARE))
    out["hess_hess_square"] = num(integrate_polygon(sum(hp[i][j] * hf[i][j] for i in range(2) for j in range(2)), SQUARE))
    out["hess_hess_pentagon"] = num(integrate_polygon(sum(hp[i][j] * hf[i][j] for i in range(2) for j in range(2)), PENTAGON))
    out["phi_moments_pentagon"] = {str(q): num(integrate_polygon(q * phi, PENTAGON)) for q in (sp.Integer(1), x, y)}

    # manufactured problem norms on the unit square
    pi = sp.pi
    psi1 = sp.sin(2 * pi * x) ** 2 * sp.sin(2 * pi * y) ** 2 / (8 * pi)
    p1 = pi**2 * sp.sin(2 * pi * x) * sp.cos(2 * pi * y)
    u1 = [sp.diff(psi1, y), -sp.diff(psi1, x)]
    g1 = jac(u1)
    h1sq = sp.integrate(sp.integrate(sp.expand(sum(g1[i][j] ** 2 for i in range(2) for j in range(2))), (x, 0, 1)), (y, 0, 1))
    p_sq = sp.integrate(sp.integrate(p1**2, (x, 0, 1)), (y, 0, 1))
    out["test1_u_h1_seminorm"] = num(sp.sqrt(sp.simplify(h1sq)))
    out["test1_p_l2"] = num(sp.sqrt(sp.simplify(p_sq)))

    # quadrature point layouts
    out["gauss_lobatto_k3"] = [num((1 - 1 / sp.sqrt(5)) / 2), num((1 + 1 / sp.sqrt(5)) / 2)]
    out["curl_iso_const"] = num(sp.solve(sp.diff(-x * sp.Symbol("c"), x) - sp.diff(y * sp.Symbol("c"), y) - 1, sp.Symbol("c"))[0])
    return out


if __name__ == "__main__":
    path = Path(__file__).with_name("oracles.json")
    path.write_text(json.dumps(build(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")
