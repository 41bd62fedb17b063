"""Neumann Green's function of ``-div(a grad .) + a`` with the ``8 pi a(zeta)`` normalization.

The Green's function is split as ``G(x, zeta) = H(x, zeta) - c ln|x - zeta|``
with ``c = 4`` for interior and ``c = 8`` for boundary poles.  Only the
regular part ``H`` is discretized; its right-hand sides are integrable and
are integrated with refined quadrature around the pole, so no point source
ever enters the linear system.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate

from . import fem
from .geometry import boundary_kernel_g_param, dist_to_boundary
from .quadrature import boundary_rule, mesh_rule

C_INTERIOR = 4.0
C_BOUNDARY = 8.0
EIGHT_PI = 8.0 * np.pi


class GreensError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# solver handle (one factorization per mesh and weight)
# --------------------------------------------------------------------------


class GreenSolver:
    """Factorized ``K_a + M_a`` shared by all Green solves on one mesh.

    Parameters
    ----------
    mesh : Mesh
        Must carry its :class:`Domain2D` (boundary quadrature uses the curve).
    weight : Weight
    """

    def __init__(self, mesh, weight):
        self.mesh = mesh
        self.weight = weight
        self.K, self.M = fem.assemble(mesh, weight, weight)
        self.lu = fem.Factorized(self.K + self.M)
        self.locator = fem.Locator(mesh)
        self._brule = None

    def boundary_rule(self):
        if self._brule is None:
            self._brule = boundary_rule(self.mesh)
        return self._brule

    def classify(self, zeta, boundary: bool | None = None, tol: float = 1e-10):
        """Return ``(zeta, on_boundary, curve_param)``, snapping boundary poles."""
        dom = self.mesh.domain
        zeta = np.asarray(zeta, float)
        d, foot = dist_to_boundary(dom, zeta)
        if boundary is None:
            boundary = d < tol * max(1.0, dom.diam)
        if boundary:
            t = dom.foot(zeta)
            return dom.point(t), True, t
        if not dom.contains(zeta):
            raise GreensError("pole lies outside the domain")
        return zeta, False, None

    def solve(self, zeta, boundary: bool | None = None) -> "GreenField":
        return solve_regular_part(self, zeta, boundary)


@dataclass(eq=False)
class GreenField:
    """Regular part of ``G(., zeta)`` on a mesh."""

    zeta: np.ndarray
    c_sing: float
    H: np.ndarray
    solver: GreenSolver = field(repr=False)
    t_boundary: float | None = None

    @property
    def mesh(self):
        return self.solver.mesh

    @property
    def on_boundary(self) -> bool:
        return self.c_sing == C_BOUNDARY

    def eval_H(self, x) -> np.ndarray:
        return self.solver.locator.interpolate(self.H, x)

    def eval_G(self, x) -> np.ndarray:
        return eval_G(self, x)

    def nodal_G(self) -> np.ndarray:
        r = np.linalg.norm(self.mesh.nodes - self.zeta, axis=1)
        with np.errstate(divide="ignore"):
            G = self.H - self.c_sing * np.log(r)
        G[r < 1e-12] = np.nan
        return G


def solve_regular_part(solver: GreenSolver, zeta, boundary: bool | None = None) -> GreenField:
    """Discrete regular part ``H(., zeta)``.

    Weak form: for every hat ``psi``,
    ``int a grad H . grad psi + a H psi
    = c int (a ln r - grad a . (x - zeta) / r^2) psi + c int_bd a g psi ds``
    with ``g = n . (x - zeta) / r^2`` and ``n`` the outward normal.
    """
    zeta, on_bd, tz = solver.classify(zeta, boundary)
    c = C_BOUNDARY if on_bd else C_INTERIOR
    w = solver.weight
    mesh = solver.mesh
    dom = mesh.domain

    def f(x):
        d = x - zeta
        r2 = np.sum(d * d, 1)
        r2 = np.where(r2 > 0, r2, np.inf)  # quadrature never hits the pole; guard anyway
        return c * (w(x) * 0.5 * np.log(r2) - np.sum(w.grad(x) * d, 1) / r2)

    b = fem.load_vector(mesh, f, foci=[(zeta, 0.0)])

    if on_bd:
        rule = solver.boundary_rule()

        def gb(x, t):
            return c * w(x) * boundary_kernel_g_param(dom, t, tz)

    else:
        dist = dist_to_boundary(dom, zeta)[0]
        rule = solver.boundary_rule() if dist > 4 * mesh.h else boundary_rule(mesh, [(zeta, 0.0)])

        def gb(x, t):
            d = x - zeta
            return c * w(x) * np.sum(dom.outer_normal(t) * d, 1) / np.sum(d * d, 1)

    b += fem.boundary_load(mesh, gb, rule=rule)
    H = solver.lu.solve(b)
    return GreenField(zeta, c, H, solver, tz)


def eval_G(gf: GreenField, x) -> np.ndarray:
    """``H(x) - c ln|x - zeta|`` with ``H`` interpolated linearly."""
    x = np.atleast_2d(np.asarray(x, float))
    r = np.linalg.norm(x - gf.zeta, axis=1)
    if np.any(r < 1e-12):
        raise GreensError("Green's function evaluated at its pole")
    return gf.eval_H(x) - gf.c_sing * np.log(r)


# --------------------------------------------------------------------------
# radial kernel R
# --------------------------------------------------------------------------


@dataclass(eq=False)
class KernelR:
    """Radial profile ``g`` with ``R(z) = g(|z|) z / |z|`` solving
    ``Delta R - R = z / |z|^2``.

    ``g`` is tabulated in ``t = ln r`` on ``[ln r0, ln R_max]``.
    """

    r: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    R_max: float
    r0: float
    residual_t: float
    residual_r: float
    _spl: object = field(repr=False, default=None)

    def profile(self, r) -> np.ndarray:
        r = np.asarray(r, float)
        out = np.empty_like(r)
        lo, hi = r < self.r0, r > self.R_max
        mid = ~(lo | hi)
        out[mid] = self._spl(np.log(r[mid]))[..., 0] if self._spl is not None else np.interp(r[mid], self.r, self.g)
        # small-r: g ~ (r/2) ln(r/2); large r: g ~ -1/r
        rl = np.maximum(r[lo], 1e-300)
        out[lo] = 0.5 * rl * np.log(0.5 * rl)
        out[hi] = -1.0 / r[hi]
        return out

    def __call__(self, z) -> np.ndarray:
        """Vector field ``R(z)``."""
        z = np.atleast_2d(np.asarray(z, float))
        r = np.linalg.norm(z, axis=1)
        safe = np.where(r > 0, r, 1.0)
        return (self.profile(r) / safe)[:, None] * z


def solve_kernel_R(R_max: float = 40.0, n_grid: int = 8000, r0: float = 1e-6, tol: float = 1e-10) -> KernelR:
    """Two-point BVP for the profile of ``R``.

    With ``t = ln r`` the profile equation becomes
    ``g_tt - (1 + e^{2t}) g = e^t``.  Boundedness at the origin is imposed
    through ``g = g_t`` at ``r0`` and decay through
    ``g + g' (1 + 1/(2r)) = 0`` at ``R_max``.
    """
    if R_max < 20:
        raise GreensError("R_max must be at least 20")
    if n_grid < 1000:
        raise GreensError("n_grid must be at least 1000")
    t0, t1 = np.log(r0), np.log(R_max)
    t = np.linspace(t0, t1, n_grid)

    def rhs(tt, y):
        return np.vstack([y[1], (1 + np.exp(2 * tt)) * y[0] + np.exp(tt)])

    def bc(ya, yb):
        # g'(r) = g_t / r
        return np.array([ya[0] - ya[1], yb[0] + yb[1] / R_max * (1 + 0.5 / R_max)])

    y0 = np.zeros((2, n_grid))
    r = np.exp(t)
    y0[0] = -1.0 / r + np.where(r < 30, _k1_safe(r), 0.0)
    y0[1] = np.gradient(y0[0], t)
    sol = integrate.solve_bvp(rhs, bc, t, y0, tol=tol, max_nodes=200000)
    if not sol.success:
        raise GreensError(f"R-kernel BVP did not converge: {sol.message}")
    # probe off the collocation points (nodes and midpoints are exact by construction)
    tm = np.concatenate([0.75 * sol.x[1:] + 0.25 * sol.x[:-1], 0.25 * sol.x[1:] + 0.75 * sol.x[:-1]])
    y, dy = sol.sol(tm), sol.sol(tm, 1)
    res_t = float(np.max(np.abs(dy[1] - rhs(tm, y)[1])))
    # r-form residual g'' + g'/r - g/r^2 - g - 1/r = (t-form residual)/r^2,
    # reported away from both ends
    rm = np.exp(tm)
    inner = (rm > 1e-3) & (rm < 0.5 * R_max)
    res_r = float(np.max(np.abs(dy[1] - rhs(tm, y)[1])[inner] / rm[inner] ** 2))
    tt = sol.x
    y, dy = sol.y, sol.yp
    rr = np.exp(tt)
    spl = interpolate.CubicHermiteSpline(tt, y.T, dy.T)
    return KernelR(rr, y[0], y[1] / rr, float(R_max), float(r0), float(res_t), res_r, spl)


def _k1_safe(r):
    from scipy.special import k1

    return k1(np.maximum(r, 1e-300))


def decompose_regular_part(gf: GreenField, kR: KernelR, weight=None) -> np.ndarray:
    """``H1 = H - c gamma(zeta) . R(x - zeta)`` at the nodes."""
    w = gf.solver.weight if weight is None else weight
    if w.is_constant:
        return gf.H.copy()
    gam = w.gamma(gf.zeta[None, :])[0]
    Rv = kR(gf.mesh.nodes - gf.zeta)
    return gf.H - gf.c_sing * (Rv @ gam)


# --------------------------------------------------------------------------
# Robin function and diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RobinSample:
    zeta: np.ndarray
    H_diag: float
    d_bd: float
    z_val: float


def robin(solver: GreenSolver, zeta) -> RobinSample:
    """Robin value ``H(zeta, zeta)`` and the remainder ``H + 4 ln dist``."""
    zeta = np.asarray(zeta, float)
    gf = solver.solve(zeta, boundary=False)
    Hd = float(gf.eval_H(zeta)[0])
    d = dist_to_boundary(solver.mesh.domain, zeta)[0]
    return RobinSample(zeta, Hd, d, Hd + 4.0 * np.log(d))


def weak_identity(gf: GreenField, psi, grad_psi, n_extra: int = 0):
    """Left side of the weak identity ``int a grad G . grad psi + a G psi``
    and its target ``8 pi a(zeta) psi(zeta)``.
    """
    mesh = gf.mesh
    w = gf.solver.weight
    pts, wts, tri = mesh_rule(mesh, [(gf.zeta, 0.0)])
    H = fem.eval_at_rule(mesh, gf.H, pts, tri)
    gH = fem.grad_at_tri(mesh, gf.H)[tri]
    d = pts - gf.zeta
    r2 = np.sum(d * d, 1)
    G = H - 0.5 * gf.c_sing * np.log(r2)
    gG = gH - gf.c_sing * d / r2[:, None]
    a = w(pts)
    lhs = np.sum(wts * a * (np.sum(gG * grad_psi(pts), 1) + G * psi(pts)))
    target = EIGHT_PI * float(w(gf.zeta[None, :])[0]) * float(psi(gf.zeta[None, :])[0])
    return float(lhs), float(target)


def flux(gf: GreenField, radius: float, n: int = 720) -> float:
    """``-int_{|x - zeta| = radius, x in domain} dG/dn ds`` with ``n`` pointing away from the pole."""
    th = np.linspace(0, 2 * np.pi, n, endpoint=False) + np.pi / n
    dirs = np.column_stack([np.cos(th), np.sin(th)])
    x = gf.zeta + radius * dirs
    inside = gf.mesh.domain.interior_test(x)
    gH = gf.solver.locator.gradient(gf.H, x)
    dGdn = np.sum(gH * dirs, 1) - gf.c_sing / radius
    return float(-np.sum(dGdn[inside]) * radius * 2 * np.pi / n)


def flux_extrapolated(gf: GreenField, h: float) -> tuple:
    """Fluxes at ``4h`` and ``8h`` and their extrapolation to zero radius.

    The radius correction is ``O(r^2 ln r)`` (odd terms cancel on circles),
    so the extrapolation eliminates the ``r^2`` term.
    """
    f4, f8 = flux(gf, 4 * h), flux(gf, 8 * h)
    return f4, f8, (4 * f4 - f8) / 3


def companion_solution(mesh) -> np.ndarray:
    """Solution of ``-Delta u + u = 0`` with ``u = 1`` on the boundary."""
    K, M = fem.assemble(mesh)
    A = (K + M).tocsr()
    bn = mesh.boundary_nodes
    free = np.setdiff1d(np.arange(mesh.n_nodes), bn)
    u = np.ones(mesh.n_nodes)
    rhs = -(A[free][:, bn] @ u[bn])
    u[free] = fem.Factorized(A[free][:, free]).solve(rhs)
    return u


def max_grad_near(mesh, field, center, radius) -> float:
    """Largest elementwise gradient norm on triangles within ``radius`` of ``center``."""
    cen = mesh.nodes[mesh.triangles].mean(1)
    sel = np.linalg.norm(cen - center, axis=1) < radius
    g = fem.grad_at_tri(mesh, field)[sel]
    return float(np.max(np.linalg.norm(g, axis=1)))


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------


def write_field_csv(gf: GreenField, path, footer: str | None = None) -> None:
    G = gf.nodal_G()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "y", "H", "G"])
        for (x, y), h, g in zip(gf.mesh.nodes, gf.H, G):
            wr.writerow([f"{x:.17g}", f"{y:.17g}", f"{h:.17g}", f"{g:.17g}"])
        if footer:
            fh.write(footer + "\n")


def write_robin_csv(samples, path, footer: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["zx", "zy", "dist", "Hdiag", "zval"])
        for s in samples:
            wr.writerow([f"{v:.17g}" for v in (s.zeta[0], s.zeta[1], s.d_bd, s.H_diag, s.z_val)])
        if footer:
            fh.write(footer + "\n")
