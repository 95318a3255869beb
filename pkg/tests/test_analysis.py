import math

import numpy as np
import pytest
from conftest import ORACLES, cached_disc, cached_mesh, quad_disc
from hypothesis import given, settings
from hypothesis import strategies as st

from vemflow.analysis import (
    ConvergenceReport,
    ConvergenceRow,
    convergence_study,
    error_p_l2,
    error_u_h1,
    make_problem,
    rates,
    run_level,
    trilinear_identity_checks,
    verify_complex,
)
from vemflow.assembly import Discretization, PiecewisePressure
from vemflow.mesh import PolygonalMesh, generate_distorted_quads

PTS = np.random.default_rng(3).uniform(0.05, 0.95, size=(40, 2))


def fd_grad(f, p, h=1e-5):
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    return (f(p + ex) - f(p - ex)) / (2 * h), (f(p + ey) - f(p - ey)) / (2 * h)


@pytest.mark.parametrize("name", ["test1", "test2", "stokes-patch"])
def test_problem_invariants(name):
    pb = make_problem(name, nu=0.7)
    pts = 0.5 * PTS if pb.domain == "disk" else PTS  # inside the unit disk too
    assert np.abs(pb.div_u(pts)).max() <= 1e-12
    gx, gy = fd_grad(pb.psi, pts)
    u = pb.u(pts)
    scale = np.abs(u).max()
    assert np.allclose(u[:, 0], gy, atol=1e-7 * scale) and np.allclose(u[:, 1], -gx, atol=1e-7 * scale)


def test_load_matches_finite_differences():
    pb = make_problem("test1", nu=0.3)
    h = 1e-3
    pts = PTS[:10]
    lap = sum(pb.u(pts + d) + pb.u(pts - d) - 2 * pb.u(pts) for d in (np.array([h, 0]), np.array([0, h]))) / h**2
    u = pb.u(pts)
    J = np.stack([np.stack(fd_grad(lambda p, a=a: pb.u(p)[:, a], pts), axis=1) for a in range(2)], axis=1)
    conv = np.einsum("nab,nb->na", J, u)
    gp = np.column_stack(fd_grad(pb.p, pts))
    f = -0.3 * lap + conv - gp
    assert np.allclose(f, pb.f(pts), rtol=1e-3, atol=1e-3 * np.abs(pb.f(pts)).max())


def test_stokes_load_drops_convection():
    a, b = make_problem("test1"), make_problem("test1", stokes=True)
    u = a.u(PTS)
    J = np.stack([[a.grad_u[i][j](PTS) for j in range(2)] for i in range(2)]).transpose(2, 0, 1)
    assert np.allclose(a.f(PTS) - b.f(PTS), np.einsum("nab,nb->na", J, u))


def test_unknown_problem():
    with pytest.raises(ValueError, match="valid"):
        make_problem("cavity")


def test_zero_solution_errors_are_exact_norms():
    disc = cached_disc("cvt", 1 / 8)
    pb = make_problem("test1")
    nv = disc.velocity_map[1]
    eu = error_u_h1(disc, np.zeros(nv), pb, degree=14)
    ep = error_p_l2(disc, PiecewisePressure(disc, np.zeros(disc.mesh.n_cells * 3)), pb, degree=14)
    assert eu == pytest.approx(ORACLES["test1_u_h1_seminorm"], rel=1e-8)
    assert ep == pytest.approx(ORACLES["test1_p_l2"], rel=1e-8)


def test_rates_examples():
    r = rates([0.5, 0.25, 0.125], [1.0, 0.25, 0.0625])
    assert math.isnan(r[0]) and r[1:] == pytest.approx([2.0, 2.0])
    assert math.isnan(rates([0.5, 0.25], [1.0, 0.0])[1])


@given(st.floats(0.5, 5.0), st.floats(0.1, 10.0))
def test_rates_recover_power_law(p, c):
    h = [0.2, 0.1, 0.05]
    assert rates(h, [c * x**p for x in h])[1:] == pytest.approx([p, p], rel=1e-9)


def test_csv_format():
    rows = [ConvergenceRow(0.125, 10, 1.0, 1.0, 2.0, newton_iters=3), ConvergenceRow(0.0625, 40, 0.25, 0.25, 0.5, newton_iters=4, converged=False)]
    text = ConvergenceReport("curl", "conv", 2, rows).to_csv("run 1")
    lines = text.splitlines()
    assert lines[0] == "# run 1"
    assert lines[1] == "h,n_dofs,err_u_h1,err_psi_h2,err_p_l2,cond,newton_iters,rate_u,rate_p"
    assert lines[2].startswith("0.125,10,1.0000000000e+00")
    assert lines[3].split(",")[6] == "4!" and lines[3].endswith("nan,nan")


def test_convergence_study_needs_two_levels():
    with pytest.raises(ValueError, match="2 levels"):
        convergence_study([cached_mesh("dquad", 1 / 8)], make_problem("test1"), "curl", "conv")


def test_run_level_curl_reports_recovery():
    row, sol = run_level(cached_disc("cvt", 1 / 8), make_problem("test1"), "curl", "conv")
    assert row.converged and row.n_dofs == 451
    assert abs(row.extra["pressure_mean"]) <= 1e-11
    assert row.divergence_defect <= 1e-10
    assert 0.1 < row.err_u_h1 < 1.0 and 0.1 < row.err_p_l2 < 1.0


def test_variants_agree_on_fine_mesh():
    disc = cached_disc("cvt", 1 / 16)
    pb = make_problem("test1")
    errs = [run_level(disc, pb, "curl", v)[0] for v in ("conv", "skew", "rot")]
    eu = [r.err_u_h1 for r in errs]
    ep = [r.err_p_l2 for r in errs]
    assert max(eu) / min(eu) < 1.1 and max(ep) / min(ep) < 1.1


def test_verify_complex_small_meshes():
    rep = verify_complex(generate_distorted_quads(2, 0.2, 1))
    assert rep.passed, rep.lines()
    square = PolygonalMesh(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), ([0, 1, 2, 3],))
    rep = verify_complex(square)
    assert rep.passed, rep.lines()
    assert all(line.startswith("PASS") for line in rep.lines())


def test_verify_complex_k3():
    assert verify_complex(generate_distorted_quads(3, 0.2, 2), k=3).passed


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 1000))
def test_trilinear_identities(seed):
    rep = trilinear_identity_checks(generate_distorted_quads(3, 0.2, 0), rng_seed=seed)
    assert rep.passed
    # the control field is not divergence free, so conv and skew must differ
    assert abs(rep.control_conv_minus_skew) > 1e-14

