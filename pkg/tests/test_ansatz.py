import numpy as np
import pytest

from layercrest.ansatz import (
    AnsatzError,
    Bubble,
    build_ansatz,
    bubble_mass,
    check_admissible,
    discrete_bubble_residual,
    eval_bubble,
    plane_integrals,
    residual_S,
    solve_closure,
    w_shape_error,
)
from layercrest.greens import GreenSolver
from layercrest.mesh import generate_mesh, rectangle_mesh
from layercrest.weights import constant_weight


def test_bubble_formula_and_gradient(rng):
    b = Bubble(2.0, (0.1, -0.2), 0.01)
    x = rng.uniform(-0.5, 0.5, (10, 2))
    r2 = np.sum((x - b.zeta) ** 2, 1)
    assert np.allclose(eval_bubble(b, x), np.log(8 * 4 / (0.0004 + r2) ** 2))
    assert np.allclose(np.exp(b(x)), b.exp(x))
    h = 1e-7
    fd = np.column_stack([(b(x + [h, 0]) - b(x - [h, 0])) / (2 * h), (b(x + [0, h]) - b(x - [0, h])) / (2 * h)])
    assert np.allclose(b.grad(x), fd, rtol=1e-6)


@pytest.mark.parametrize("d,eps", [(0.0, 0.01), (1.0, -0.1), (20.0, 0.01)])
def test_bubble_rejects_bad_parameters(d, eps):
    with pytest.raises(AnsatzError):
        Bubble(d, (0.0, 0.0), eps)


def test_plane_integrals():
    i1, i2 = plane_integrals()
    assert i1 == pytest.approx(8 * np.pi, abs=1e-10)
    assert i2 == pytest.approx(-16 * np.pi, abs=1e-9)


def test_bubble_mass_interior_and_boundary(disk):
    bi = Bubble(1.0, (0.0, 0.0), 0.01)
    bb = Bubble(1.0, (1.0, 0.0), 0.01)
    m = generate_mesh(disk, 0.1, [((0.0, 0.0), 0.001), ((1.0, 0.0), 0.001)])
    assert bubble_mass(m, bi) == pytest.approx(8 * np.pi, rel=1e-3)
    # the curved boundary trims a lens of relative size O(eps d)
    mb = bubble_mass(m, bb)
    assert mb < 4 * np.pi
    assert mb == pytest.approx(4 * np.pi, rel=1e-2)


def test_discrete_bubble_residual_second_order():
    b = Bubble(1.0, (0.0, 0.0), 0.05)
    e = [discrete_bubble_residual(rectangle_mesh(-0.25, 0.25, -0.25, 0.25, n, n), b) for n in (40, 80)]
    assert np.log2(e[0] / e[1]) == pytest.approx(2.0, abs=0.3)


@pytest.fixture(scope="module")
def ans_one(disk, bump5):
    p = np.array([1.0, 0.0])
    m = generate_mesh(disk, 0.1, [(p, 0.02 * 0.95 / 8)])
    return build_ansatz(GreenSolver(m, bump5), [p], [True], 0.02, check=False)


def test_closure_is_satisfied(ans_one):
    assert np.abs(ans_one.closure_residual()).max() < 1e-12
    assert ans_one.d[0] == pytest.approx(0.95, abs=0.01)


def test_ansatz_mass_and_shape(ans_one):
    assert ans_one.masses()[0] == pytest.approx(4 * np.pi, rel=1e-2)
    assert w_shape_error(ans_one) < 0.3
    S, star = residual_S(ans_one)
    assert S.shape == (ans_one.mesh.n_nodes,)
    assert 0 < star < 5


def test_closure_out_of_regime(disk):
    p = np.array([0.0, 0.0])
    m = generate_mesh(disk, 0.1, [(p, 0.01)])
    s = GreenSolver(m, constant_weight())
    d, _ = solve_closure(s, [p], [False])
    with pytest.raises(AnsatzError):
        solve_closure(s, [p], [False], eps=0.2 / d[0])


def test_admissibility(disk):
    with pytest.raises(AnsatzError):
        check_admissible(disk, [(0.0, 0.0), (0.05, 0.0)], [False, False], 0.01)
    with pytest.raises(AnsatzError):
        check_admissible(disk, [(0.95, 0.0)], [False], 0.01)
    assert check_admissible(disk, [(1.0, 0.0), (-1.0, 0.0)], [True, True], 0.01) == pytest.approx(1 / np.log(100))
