"""Planar domains with smooth closed boundaries.

Every domain is described by a counter-clockwise periodic parametrization
``X(t)``, ``t in [0, 2*pi)``.  Normals returned here point *into* the domain;
curvature is positive for convex curves so that its integral over the
boundary equals ``2*pi``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
import shapely
from scipy import interpolate, optimize
from scipy.spatial import ConvexHull
from shapely.geometry import LinearRing, Polygon

TWO_PI = 2.0 * pi


class GeometryError(ValueError):
    """Raised for invalid domain descriptions or undefined geometric maps."""


# --------------------------------------------------------------------------
# curve parametrizations
# --------------------------------------------------------------------------


class _Curve:
    """Closed parametric curve ``t -> X(t)`` with two derivatives."""

    kind = "curve"

    def xy(self, t):
        raise NotImplementedError

    def d1(self, t):
        raise NotImplementedError

    def d2(self, t):
        raise NotImplementedError

    def inside(self, x) -> np.ndarray:
        raise NotImplementedError


class _Ellipse(_Curve):
    kind = "ellipse"

    def __init__(self, center, a, b):
        self.c = np.asarray(center, float)
        self.a, self.b = float(a), float(b)

    def xy(self, t):
        t = np.asarray(t, float)
        return np.stack([self.c[0] + self.a * np.cos(t), self.c[1] + self.b * np.sin(t)], -1)

    def d1(self, t):
        t = np.asarray(t, float)
        return np.stack([-self.a * np.sin(t), self.b * np.cos(t)], -1)

    def d2(self, t):
        t = np.asarray(t, float)
        return np.stack([-self.a * np.cos(t), -self.b * np.sin(t)], -1)

    def inside(self, x):
        x = np.atleast_2d(x)
        q = ((x[:, 0] - self.c[0]) / self.a) ** 2 + ((x[:, 1] - self.c[1]) / self.b) ** 2
        return q < 1.0


class _Star(_Curve):
    """``r(t) = R (1 + amp cos(k t))`` around a center."""

    kind = "star"

    def __init__(self, center, radius, amp, lobes):
        self.c = np.asarray(center, float)
        self.R, self.amp, self.k = float(radius), float(amp), int(lobes)

    def _r(self, t):
        return self.R * (1 + self.amp * np.cos(self.k * t))

    def _dr(self, t):
        return -self.R * self.amp * self.k * np.sin(self.k * t)

    def _ddr(self, t):
        return -self.R * self.amp * self.k**2 * np.cos(self.k * t)

    def xy(self, t):
        t = np.asarray(t, float)
        r = self._r(t)
        return np.stack([self.c[0] + r * np.cos(t), self.c[1] + r * np.sin(t)], -1)

    def d1(self, t):
        t = np.asarray(t, float)
        r, dr = self._r(t), self._dr(t)
        c, s = np.cos(t), np.sin(t)
        return np.stack([dr * c - r * s, dr * s + r * c], -1)

    def d2(self, t):
        t = np.asarray(t, float)
        r, dr, ddr = self._r(t), self._dr(t), self._ddr(t)
        c, s = np.cos(t), np.sin(t)
        return np.stack(
            [ddr * c - 2 * dr * s - r * c, ddr * s + 2 * dr * c - r * s], -1
        )

    def inside(self, x):
        x = np.atleast_2d(x) - self.c
        th = np.arctan2(x[:, 1], x[:, 0])
        return np.hypot(x[:, 0], x[:, 1]) < self._r(th)


class _Spline(_Curve):
    """Periodic cubic spline through sample points (chord-length spaced)."""

    kind = "spline"

    def __init__(self, points):
        p = np.asarray(points, float)
        if np.allclose(p[0], p[-1]):
            p = p[:-1]
        if len(p) < 8:
            raise GeometryError("spline boundary needs at least 8 distinct points")
        # force counter-clockwise orientation
        area = 0.5 * np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1])
        if area < 0:
            p = p[::-1]
        closed = np.vstack([p, p[:1]])
        chord = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))]
        knots = chord * (TWO_PI / chord[-1])
        self._sp = interpolate.CubicSpline(knots, closed, bc_type="periodic")
        self._poly = Polygon(self._sp(np.linspace(0, TWO_PI, 4097))[:-1])

    def xy(self, t):
        return self._sp(np.mod(t, TWO_PI))

    def d1(self, t):
        return self._sp(np.mod(t, TWO_PI), 1)

    def d2(self, t):
        return self._sp(np.mod(t, TWO_PI), 2)

    def inside(self, x):
        x = np.atleast_2d(x)
        return shapely.contains_xy(self._poly, x[:, 0], x[:, 1])


# --------------------------------------------------------------------------
# Domain2D
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundarySamples:
    """Arc-length samples of the boundary (last sample repeats the first)."""

    t: np.ndarray
    s: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    curvature: np.ndarray


@dataclass(frozen=True, eq=False)
class Domain2D:
    """A smooth simply connected planar domain.

    Parameters
    ----------
    curve : _Curve
        Counter-clockwise boundary parametrization over ``[0, 2*pi)``.
    description : dict
        The description the domain was built from (echoed in reports).
    """

    curve: _Curve
    description: dict = field(default_factory=dict)
    n_samples: int = 2048

    def __post_init__(self):
        t = np.linspace(0.0, TWO_PI, self.n_samples + 1)
        speed = np.linalg.norm(self.curve.d1(t), axis=1)
        s_of_t = interpolate.CubicSpline(t, speed, bc_type="periodic").antiderivative()
        s = s_of_t(t)
        object.__setattr__(self, "_t_grid", t)
        object.__setattr__(self, "_s_grid", s)
        object.__setattr__(self, "_s_of_t", s_of_t)
        object.__setattr__(self, "length", float(s[-1]))
        pts = self.curve.xy(t)
        object.__setattr__(self, "_dense", pts)
        lo, hi = pts.min(0), pts.max(0)
        object.__setattr__(self, "bbox", (lo[0], lo[1], hi[0], hi[1]))
        object.__setattr__(self, "diam", pdist_max(pts[:-1]))
        kmax = float(np.max(np.abs(self.curvature(t))))
        object.__setattr__(self, "kmax", kmax)
        object.__setattr__(self, "reach", 0.5 / kmax)

    # -- pointwise boundary quantities (by curve parameter) --------------------

    def point(self, t):
        return self.curve.xy(t)

    def speed(self, t):
        return np.linalg.norm(self.curve.d1(t), axis=-1)

    def tangent(self, t):
        d = self.curve.d1(t)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def normal(self, t):
        """Inner unit normal at parameter ``t``."""
        tau = self.tangent(t)
        return np.stack([-tau[..., 1], tau[..., 0]], -1)

    def outer_normal(self, t):
        return -self.normal(t)

    def curvature(self, t):
        d1, d2 = self.curve.d1(t), self.curve.d2(t)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def arclength(self, t):
        """Arc length from ``t=0`` to ``t`` (``t`` taken mod ``2*pi``)."""
        return self._s_of_t(np.mod(t, TWO_PI))

    def param_at_arclength(self, s):
        """Inverse of :meth:`arclength` (``s`` taken mod the boundary length)."""
        s = np.mod(np.atleast_1d(np.asarray(s, float)), self.length)
        t = np.interp(s, self._s_grid, self._t_grid)
        for _ in range(3):
            t = t - (self.arclength(t) - s) / self.speed(t)
        return t

    def samples(self, n: int = 512) -> BoundarySamples:
        s = np.linspace(0.0, self.length, n + 1)
        t = self.param_at_arclength(s[:-1])
        t = np.r_[t, t[0]]
        return BoundarySamples(
            t=t,
            s=s,
            points=self.point(t),
            normals=self.normal(t),
            curvature=self.curvature(t),
        )

    def interior_test(self, x) -> np.ndarray:
        return np.asarray(self.curve.inside(x), bool)

    # -- distance and reflection -----------------------------------------------

    def foot(self, x):
        """Curve parameter of the nearest boundary point to ``x``."""
        x = np.asarray(x, float)
        d2 = np.sum((self._dense[:-1] - x) ** 2, axis=1)
        t = self._t_grid[int(np.argmin(d2))]
        h = self._t_grid[1] - self._t_grid[0]

        def f(tt):
            return float(np.dot(self.curve.xy(tt) - x, self.curve.d1(tt)))

        lo, hi = t - h, t + h
        if f(lo) * f(hi) < 0:
            t = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)
        else:
            t = optimize.minimize_scalar(
                lambda tt: float(np.sum((self.curve.xy(tt) - x) ** 2)),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-14},
            ).x
        return float(np.mod(t, TWO_PI))

    def contains(self, x) -> bool:
        return bool(self.interior_test(np.atleast_2d(x))[0])

    def is_on_boundary(self, x, tol: float = 1e-10) -> bool:
        return dist_to_boundary(self, x)[0] < tol * max(1.0, self.diam)


def dist_to_boundary(dom: Domain2D, x):
    """Distance from ``x`` to the boundary and the foot point realizing it."""
    x = np.asarray(x, float)
    t = dom.foot(x)
    foot = dom.point(t)
    d = float(np.linalg.norm(x - foot))
    return d, foot


def reflect_across_boundary(dom: Domain2D, zeta, eta: float | None = None):
    """Mirror image of ``zeta`` through its foot point along the normal.

    Only defined inside the band of width ``eta`` (default: the reach
    estimate ``0.5 / max|k|``) around the boundary.
    """
    eta = dom.reach if eta is None else eta
    zeta = np.asarray(zeta, float)
    d, foot = dist_to_boundary(dom, zeta)
    if d >= eta:
        raise GeometryError(
            f"reflection undefined: dist {d:.3g} outside the band of width {eta:.3g}"
        )
    return 2.0 * foot - zeta


def boundary_kernel_g(dom: Domain2D, x, zeta, tol: float | None = None) -> float:
    """Boundary kernel ``n(x).(x - zeta)/|x - zeta|^2`` with outward normal ``n``.

    On the diagonal the kernel extends continuously by ``k(zeta)/2``.
    """
    tx = dom.foot(x)
    tz = dom.foot(zeta)
    return float(boundary_kernel_g_param(dom, tx, tz, tol=tol))


def boundary_kernel_g_param(dom: Domain2D, tx, tz, tol: float | None = None):
    """Vectorized :func:`boundary_kernel_g` on curve parameters."""
    tol = 1e-6 * dom.diam if tol is None else tol
    tx = np.asarray(tx, float)
    tz = np.broadcast_to(np.asarray(tz, float), tx.shape)
    diff = dom.point(tx) - dom.point(tz)
    r2 = np.sum(diff**2, axis=-1)
    n = dom.outer_normal(tx)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.sum(n * diff, axis=-1) / r2
    near = r2 < tol * tol
    if np.any(near):
        g = np.where(near, 0.5 * dom.curvature(tz), g)
    return g


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------


def pdist_max(pts: np.ndarray) -> float:
    """Largest pairwise distance (evaluated on the convex hull)."""
    hull = pts[ConvexHull(pts).vertices]
    d = hull[:, None, :] - hull[None, :, :]
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))


def _self_intersects(pts: np.ndarray) -> bool:
    return not LinearRing(pts).is_simple


def build_domain(spec: dict) -> Domain2D:
    """Build a domain from a key-value description.

    Recognized kinds: ``disk`` (radius), ``ellipse`` (a, b), ``star``
    (radius, amp, lobes) and ``spline`` (points).  All accept ``center``.
    """
    spec = dict(spec)
    kind = str(spec.get("kind", "disk")).lower()
    center = tuple(float(c) for c in spec.get("center", (0.0, 0.0)))
    if kind in ("disk", "circle"):
        r = float(spec.get("radius", 1.0))
        if r <= 0:
            raise GeometryError("disk radius must be positive")
        curve = _Ellipse(center, r, r)
    elif kind == "ellipse":
        a, b = float(spec.get("a", 2.0)), float(spec.get("b", 1.0))
        if a <= 0 or b <= 0:
            raise GeometryError("ellipse semi-axes must be positive")
        curve = _Ellipse(center, a, b)
    elif kind == "star":
        r = float(spec.get("radius", 1.0))
        amp = float(spec.get("amp", 0.2))
        lobes = int(spec.get("lobes", 3))
        if not (0 <= amp < 1):
            raise GeometryError("star amplitude must lie in [0, 1)")
        curve = _Star(center, r, amp, lobes)
    elif kind == "spline":
        pts = np.asarray(spec["points"], float).reshape(-1, 2) + np.asarray(center)
        curve = _Spline(pts)
    else:
        raise GeometryError(f"unknown domain kind {kind!r}")

    t = np.linspace(0, TWO_PI, 4097)
    if _self_intersects(curve.xy(t[:-1])):
        raise GeometryError("boundary curve self-intersects")
    dom = Domain2D(curve, description={"kind": kind, **spec})
    k = dom.curvature(t)
    # a corner shows up as a curvature spike far above the curve's scale
    if np.max(np.abs(k)) * dom.diam > 1e4 or not np.all(np.isfinite(k)):
        raise GeometryError("boundary is not smooth (curvature blow-up detected)")
    return dom


# --------------------------------------------------------------------------
# rotational lift
# --------------------------------------------------------------------------


def sphere_measure(k: int) -> float:
    """Surface measure of the unit sphere ``S^k`` in ``R^(k+1)``."""
    return 2.0 * pi ** ((k + 1) / 2) / gamma((k + 1) / 2)


@dataclass(frozen=True)
class LiftSpec:
    """Symmetric lift data: ``n`` rotated coordinates with multiplicities ``M``."""

    n: int
    M: tuple

    def __post_init__(self):
        if self.n not in (1, 2):
            raise GeometryError("lift needs n in {1, 2}")
        M = tuple(int(m) for m in self.M)
        object.__setattr__(self, "M", M)
        if len(M) != self.n:
            raise GeometryError("one multiplicity per rotated coordinate")
        if any(m < 2 for m in M):
            raise GeometryError("multiplicities must be >= 2")

    @property
    def N(self) -> int:
        return sum(self.M) + 2 - self.n

    @property
    def sphere_factor(self) -> float:
        return float(np.prod([sphere_measure(m - 1) for m in self.M]))


def orbit_measure(lift: LiftSpec, zeta) -> float:
    """(N-2)-volume of the orbit of ``zeta`` under the rotation group."""
    zeta = np.asarray(zeta, float)
    vol = 1.0
    for i, m in enumerate(lift.M):
        zi = zeta[i]
        if zi <= 0:
            raise GeometryError("orbit undefined for non-positive rotated coordinate")
        vol *= sphere_measure(m - 1) * zi ** (m - 1)
    return float(vol)
