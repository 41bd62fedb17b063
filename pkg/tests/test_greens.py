import csv

import numpy as np
import pytest
from oracles import disk_green, disk_regular, disk_robin, kernel_profile

from layercrest.greens import (
    GreensError,
    GreenSolver,
    decompose_regular_part,
    flux_extrapolated,
    robin,
    solve_kernel_R,
    weak_identity,
    write_field_csv,
    write_robin_csv,
)
from layercrest.mesh import generate_mesh
from layercrest.weights import constant_weight, expression_weight


def _solver(dom, h, pts, w=None):
    return GreenSolver(generate_mesh(dom, h, [(p, h / 8) for p in pts]), w or constant_weight())


def test_interior_regular_part_matches_bessel_series(disk):
    z = np.array([0.3, 0.1])
    errs = []
    for h in (0.1, 0.05, 0.025):
        s = _solver(disk, h, [z])
        gf = s.solve(z)
        assert not gf.on_boundary and gf.c_sing == 4.0
        errs.append(np.abs(gf.H - disk_regular(s.mesh.nodes, z)).max())
    assert errs[-1] < 1e-3
    assert np.all(np.diff(np.log(errs)) < -1.0)


def test_boundary_pole_is_limit_of_interior(disk):
    zb = np.array([1.0, 0.0])
    s = _solver(disk, 0.025, [zb])
    gf = s.solve(zb, boundary=True)
    assert gf.on_boundary and gf.c_sing == 8.0
    x = np.array([[0.2, 0.3], [-0.5, 0.1], [0.6, -0.6]])
    assert np.allclose(gf.eval_G(x), disk_green(x, (1 - 1e-7, 0.0)), rtol=2e-3)


def test_robin_against_series(disk):
    z = np.array([0.0, 0.6])
    s = _solver(disk, 0.05, [z])
    r = robin(s, z)
    assert r.H_diag == pytest.approx(disk_robin(0.6), abs=5e-3)
    assert r.d_bd == pytest.approx(0.4)
    assert r.z_val == pytest.approx(r.H_diag + 4 * np.log(0.4))


def test_pole_outside_raises(disk):
    s = _solver(disk, 0.2, [])
    with pytest.raises(GreensError):
        s.solve((1.5, 0.0))


def test_weak_identity_and_flux_weighted(disk):
    w = expression_weight("2 + x1 + 0.5*x2^2")
    z = np.array([0.3, 0.2])
    s = _solver(disk, 0.04, [z], w)
    gf = s.solve(z)
    psi = lambda x: np.cos(x[:, 0]) * (1 + x[:, 1] ** 2)
    gpsi = lambda x: np.column_stack([-np.sin(x[:, 0]) * (1 + x[:, 1] ** 2), 2 * np.cos(x[:, 0]) * x[:, 1]])
    lhs, target = weak_identity(gf, psi, gpsi)
    assert lhs == pytest.approx(target, rel=1e-3)
    assert flux_extrapolated(gf, 0.04)[2] == pytest.approx(8 * np.pi, rel=0.02)


def test_kernel_R_profile():
    k = solve_kernel_R()
    r = np.geomspace(1e-3, 20, 60)
    assert np.abs(k.profile(r) - kernel_profile(r)).max() < 1e-8
    assert k.residual_r < 1e-6
    with pytest.raises(GreensError):
        solve_kernel_R(R_max=5)


def test_decomposition_removes_gradient_term(disk):
    w = expression_weight("exp(0.5*x1)")
    z = np.array([0.2, 0.0])
    s = _solver(disk, 0.05, [z], w)
    gf = s.solve(z)
    H1 = decompose_regular_part(gf, solve_kernel_R())
    # H itself has a bounded gradient jump of size ~c|gamma| at the pole; H1 is smoother
    def near_grad(f):
        from layercrest.greens import max_grad_near

        return max_grad_near(s.mesh, f, z, 0.02)

    assert near_grad(H1) < near_grad(gf.H)


def test_csv_writers(tmp_path, disk):
    z = np.array([0.0, 0.0])
    s = _solver(disk, 0.2, [z])
    gf = s.solve(z)
    write_field_csv(gf, tmp_path / "g.csv", "# layercrest x y")
    rows = list(csv.reader(open(tmp_path / "g.csv")))
    assert rows[0] == ["x", "y", "H", "G"]
    assert rows[-1][0].startswith("# layercrest")
    assert len(rows) == s.mesh.n_nodes + 2
    write_robin_csv([robin(s, z)], tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["zx", "zy", "dist", "Hdiag", "zval"]
    assert len(rows[1][3]) >= 17
