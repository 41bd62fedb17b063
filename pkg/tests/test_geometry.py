import numpy as np
import pytest

from layercrest.geometry import (
    GeometryError,
    LiftSpec,
    boundary_kernel_g,
    boundary_kernel_g_param,
    build_domain,
    dist_to_boundary,
    orbit_measure,
    reflect_across_boundary,
    sphere_measure,
)


def test_disk_frame(disk):
    t = np.linspace(0, 2 * np.pi, 9)
    p = disk.point(t)
    assert np.allclose(np.linalg.norm(p, axis=1), 1)
    assert np.allclose(disk.normal(t), -p)
    assert np.allclose(disk.outer_normal(t), p)
    assert np.allclose(disk.curvature(t), 1)
    assert disk.length == pytest.approx(2 * np.pi, rel=1e-10)


def test_ellipse_curvature_and_length(ellipse):
    # curvature a/b^2 at the ends of the major axis, b/a^2 at the minor axis
    assert ellipse.curvature(0.0) == pytest.approx(2.0, rel=1e-10)
    assert ellipse.curvature(np.pi / 2) == pytest.approx(0.25, rel=1e-10)
    assert ellipse.length == pytest.approx(9.688448220547675, rel=1e-9)


def test_arclength_roundtrip(ellipse):
    s = np.linspace(0, ellipse.length, 13)[:-1]
    t = ellipse.param_at_arclength(s)
    assert np.allclose(ellipse.arclength(t), s, atol=1e-10)


def test_foot_and_distance(disk):
    x = np.array([0.3, 0.4])
    d, foot = dist_to_boundary(disk, x)
    assert d == pytest.approx(0.5, abs=1e-9)
    assert np.allclose(foot, [0.6, 0.8], atol=1e-9)
    assert disk.contains(x)
    assert not disk.contains([1.2, 0.0])


def test_reflection_band(disk):
    z = reflect_across_boundary(disk, [0.9, 0.0])
    assert np.allclose(z, [1.1, 0.0], atol=1e-9)
    with pytest.raises(GeometryError):
        reflect_across_boundary(disk, [0.0, 0.0])


def test_kernel_on_circle(disk):
    t = np.linspace(0, 2 * np.pi, 40)
    assert np.allclose(boundary_kernel_g_param(disk, t, 1.3), 0.5, atol=1e-12)
    assert boundary_kernel_g(disk, disk.point(0.7), disk.point(0.7)) == pytest.approx(0.5)


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "hexagon"},
        {"kind": "disk", "radius": -1},
        {"kind": "ellipse", "a": 0, "b": 1},
        {"kind": "star", "amp": 1.2},
        {"kind": "spline", "points": [0, 0, 1, 1, 1, 0, 0, 1]},
    ],
)
def test_bad_domains(spec):
    with pytest.raises(GeometryError):
        build_domain(spec)


def test_star_and_spline_build():
    s = build_domain({"kind": "star", "amp": 0.2, "lobes": 3})
    assert s.contains([0.0, 0.0])
    th = np.linspace(0, 2 * np.pi, 10, endpoint=False)
    sp = build_domain({"kind": "spline", "points": np.column_stack([np.cos(th), 0.7 * np.sin(th)]).ravel().tolist()})
    assert sp.contains([0.1, 0.1])
    assert np.all(np.isfinite(sp.curvature(np.linspace(0, 6, 50))))


def test_sphere_measures():
    assert sphere_measure(1) == pytest.approx(2 * np.pi)
    assert sphere_measure(2) == pytest.approx(4 * np.pi)
    lift = LiftSpec(1, (2,))
    assert lift.N == 3
    assert orbit_measure(lift, (3.0, 0.0)) == pytest.approx(6 * np.pi)
    with pytest.raises(GeometryError):
        LiftSpec(1, (1,))
    with pytest.raises(GeometryError):
        orbit_measure(lift, (-1.0, 0.0))
