"""Energies, reduced energies and critical-point searches for the three
concentration scenarios, plus mass quantization and the symmetric lift."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.interpolate import RectBivariateSpline, CubicSpline

from .ansatz import Ansatz
from .geometry import LiftSpec, TWO_PI
from .greens import eval_G
from .reduction import CLAMP, ElementQuad
from . import fem

log = logging.getLogger(__name__)

C0 = -4 * np.pi * (2 - np.log(8))
FOUR_PI, EIGHT_PI, SIXTEEN_PI = 4 * np.pi, 8 * np.pi, 16 * np.pi


class LandscapeError(RuntimeError):
    pass


def _c(tag) -> float:
    return 0.5 if tag else 1.0


# --------------------------------------------------------------------------
# energies
# --------------------------------------------------------------------------


@dataclass
class EnergyReport:
    J_value: float
    leading: float
    interaction: float
    remainder: float

    def as_dict(self) -> dict:
        return {"J": self.J_value, "leading": self.leading,
                "interaction": self.interaction, "remainder": self.remainder}


def energy_J(mesh, weight, u, eps: float, ansatz: Ansatz | None = None) -> EnergyReport:
    """``J(u) = 1/2 int a (|grad u|^2 + u^2) - eps^2 int a e^u``.

    With an ansatz the value is split into the point-energy leading part,
    the pair interaction of the reduced energy and a remainder.
    """
    u = np.asarray(u, float)
    if not np.all(np.isfinite(u)):
        raise LandscapeError("energy of a non-finite field")
    K, M = fem.assemble(mesh, weight, weight)
    q = ElementQuad(mesh)
    uq = q.at(u)
    if np.max(uq) > CLAMP:
        raise LandscapeError("e^u overflows in the energy")
    aq = weight(q.pts.reshape(-1, 2)).reshape(q.w.shape)
    J = 0.5 * float(u @ (K @ u + M @ u)) - eps**2 * q.integrate(aq * np.exp(uq))
    if ansatz is None:
        return EnergyReport(J, 0.0, 0.0, J)
    lead, inter = _leading(weight, ansatz.points, ansatz.tags, eps), _interaction(weight, ansatz.fields, ansatz.tags)
    return EnergyReport(J, lead, inter, J - lead - inter)


def _leading(weight, points, tags, eps) -> float:
    L = abs(np.log(eps))
    return float(sum(_c(t) * float(weight(np.asarray(p))) * (2 * C0 + SIXTEEN_PI * L) for p, t in zip(points, tags)))


def _interaction(weight, fields, tags) -> float:
    out = 0.0
    for i, fi in enumerate(fields):
        ai = float(weight(fi.zeta))
        for j, fj in enumerate(fields):
            if j != i:
                out -= FOUR_PI * _c(tags[i]) * _c(tags[j]) * ai * float(eval_G(fj, fi.zeta)[0])
    return out


@dataclass
class F0Terms:
    value: float
    leading: float
    interaction: float
    self_term: float


def reduced_F0_terms(solver, points, tags, eps: float, fields=None, sep_floor: float = 0.0) -> F0Terms:
    """``sum_i c_i a_i (2 c0 + 16 pi |ln eps|) - 4 pi sum_i c_i a_i (c_i H_ii + sum_j c_j G_ij)``.

    ``c_i`` is 1 for interior and 1/2 for boundary points, ``c0 = -4 pi (2 - ln 8)``.
    """
    pts = [np.asarray(p, float) for p in points]
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if np.linalg.norm(pts[i] - pts[j]) <= sep_floor:
                raise LandscapeError("points violate the separation floor")
    if fields is None:
        fields = [solver.solve(p, boundary=bool(t)) for p, t in zip(pts, tags)]
    w = solver.weight
    lead = _leading(w, [f.zeta for f in fields], tags, eps)
    inter = _interaction(w, fields, tags)
    self_term = -FOUR_PI * sum(
        _c(t) ** 2 * float(w(f.zeta)) * float(f.eval_H(f.zeta)[0]) for f, t in zip(fields, tags)
    )
    return F0Terms(lead + inter + self_term, lead, inter, self_term)


def reduced_F0(solver, points, tags, eps: float, fields=None, sep_floor: float = 0.0) -> float:
    return reduced_F0_terms(solver, points, tags, eps, fields, sep_floor).value


# --------------------------------------------------------------------------
# boundary calculus of the weight
# --------------------------------------------------------------------------


def tangential_derivative(dom, weight, t):
    """``d a(X(t)) / ds`` along arc length."""
    t = np.atleast_1d(np.asarray(t, float))
    return np.sum(weight.grad(dom.point(t)) * dom.tangent(t), axis=-1)


def normal_derivative(dom, weight, t):
    """``d_nu a`` with the inner normal."""
    t = np.atleast_1d(np.asarray(t, float))
    return np.sum(weight.grad(dom.point(t)) * dom.normal(t), axis=-1)


def _wrap(t) -> float:
    """Curve parameter in ``[0, 2 pi)``, with rounding just below ``2 pi`` sent to 0."""
    t = float(t) % TWO_PI
    return 0.0 if TWO_PI - t < 1e-12 else t


def _refine_root(f, lo, hi):
    g = lambda s: float(f(s)[0])
    fl, fh = g(lo), g(hi)
    if fl * fh > 0:
        # the bracket was detected by a vectorized evaluation; a root sitting
        # on an endpoint can flip sign under rounding
        return lo if abs(fl) <= abs(fh) else hi
    return optimize.brentq(g, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=200)


def boundary_extrema(dom, weight, n: int = 2048):
    """All sign changes of the tangential derivative of ``a`` along the boundary.

    Returns a list of ``(t, kind)`` with kind ``'max'`` or ``'min'``.
    """
    tt = np.linspace(0, TWO_PI, n, endpoint=False)
    ds = tangential_derivative(dom, weight, tt)
    scale = float(np.max(np.abs(ds))) if len(ds) else 0.0
    if scale < 1e-12 * max(1.0, float(np.max(np.abs(weight(dom.point(tt)))))):
        return []
    out = []
    for k in range(n):
        a, b = ds[k], ds[(k + 1) % n]
        if a > 0 >= b or a < 0 <= b:
            lo, hi = tt[k], tt[k] + TWO_PI / n
            t = _wrap(_refine_root(lambda s: tangential_derivative(dom, weight, s), lo, hi))
            out.append((float(t), "max" if a > 0 else "min"))
    return sorted(out)


# --------------------------------------------------------------------------
# scenario results
# --------------------------------------------------------------------------


@dataclass
class CriticalPointResult:
    scenario: str
    points: list
    params: list
    t_values: list = field(default_factory=list)
    certificate: dict = field(default_factory=dict)
    F_values: list = field(default_factory=list)
    grad_norm: float = 0.0
    kinds: list = field(default_factory=list)
    history: list = field(default_factory=list)


def search_boundary_separated(dom, weight, candidates, eps: float, delta: float = 0.1, rho: float = 0.1) -> CriticalPointResult:
    """Refine strict extrema of ``a`` on the boundary near each candidate parameter.

    The certificate per point is the sign change of the tangential derivative
    on the faces ``t* +- rho`` (a one-dimensional degree).
    """
    params, kinds, certs = [], [], []
    for t0 in candidates:
        lo, hi = t0 - rho, t0 + rho
        fl, fh = tangential_derivative(dom, weight, [lo, hi])
        if not fl * fh < 0:
            raise LandscapeError(f"no strict extremum of a on the boundary near t={t0:.6g}")
        t = _wrap(_refine_root(lambda s: tangential_derivative(dom, weight, s), lo, hi))
        params.append(float(t))
        kinds.append("max" if fl > 0 else "min")
        certs.append({"face_signs": (int(np.sign(fl)), int(np.sign(fh))), "degree": -1 if fl > 0 else 1})
    P = [dom.point(t) for t in params]
    for i in range(len(P)):
        for j in range(i + 1, len(P)):
            if np.linalg.norm(P[i] - P[j]) < delta:
                raise LandscapeError("extrema closer than the separation delta")
    L = abs(np.log(eps))
    F = [float(EIGHT_PI * L * sum(float(weight(p)) for p in P))]
    g = float(np.max(np.abs(tangential_derivative(dom, weight, params))))
    return CriticalPointResult("separated", P, params, [], {"points": certs}, F, g, kinds)


def search_interior(dom, weight, s_star: float, eps: float, delta: float = 0.1, rho: float = 0.05) -> CriticalPointResult:
    """Balance of the reduced maps ``S(s) = 8 pi d_s a`` and
    ``T(s, t) = 16 pi (a / t + d_nu a)`` near a boundary extremum.

    The concentration point is ``X(s) + t / |ln eps| nu(s)``.
    """
    lo, hi = s_star - rho, s_star + rho
    dn0 = float(normal_derivative(dom, weight, s_star)[0])
    if dn0 >= 0:
        raise LandscapeError("inner normal derivative of a is not negative at the boundary point")
    fl, fh = tangential_derivative(dom, weight, [lo, hi])
    if not fl * fh < 0:
        raise LandscapeError("no critical point certified: tangential derivative keeps its sign")
    s = _wrap(_refine_root(lambda x: tangential_derivative(dom, weight, x), lo, hi))
    a = float(weight(dom.point(s)))
    dn = float(normal_derivative(dom, weight, s)[0])

    def T(t):
        return SIXTEEN_PI * (a / t + dn)

    t_lo, t_hi = delta, 1.0 / delta
    if not T(t_lo) * T(t_hi) < 0:
        raise LandscapeError("no critical point certified: T keeps its sign on the t-interval")
    t = optimize.brentq(T, t_lo, t_hi, xtol=1e-14, rtol=1e-14)
    dt = 0.1 * t
    cert = {
        "S_face_signs": (int(np.sign(fl)), int(np.sign(fh))),
        "T_face_signs": (int(np.sign(T(t - dt))), int(np.sign(T(t + dt)))),
        "dS_ds_sign": int(np.sign(float(tangential_derivative(dom, weight, s + 1e-4)[0] - tangential_derivative(dom, weight, s - 1e-4)[0]))),
        "dT_dt_sign": int(np.sign(-a / t**2)),
    }
    L = abs(np.log(eps))
    zeta = dom.point(s) + t / L * dom.normal(s)
    if not dom.contains(zeta):
        raise LandscapeError("balanced point falls outside the domain for this eps")
    return CriticalPointResult("interior", [zeta], [s], [t], cert, [], abs(T(t)), ["interior"])


def interior_landscape(dom, weight, s_grid, t_grid):
    """Rows ``(s, t, F, gradS, gradT)`` of the per-point reduced model
    ``16 pi (a ln t + t d_nu a)`` around a boundary point."""
    rows = []
    for s in s_grid:
        a = float(weight(dom.point(s)))
        dn = float(normal_derivative(dom, weight, s)[0])
        gs = EIGHT_PI * float(tangential_derivative(dom, weight, s)[0])
        for t in t_grid:
            rows.append((s, t, SIXTEEN_PI * (a * np.log(t) + t * dn), gs, SIXTEEN_PI * (a / t + dn)))
    return rows


# --------------------------------------------------------------------------
# boundary Green table and cluster search
# --------------------------------------------------------------------------


class BoundaryGreenTable:
    """Boundary Green fields on a grid of curve parameters, with smooth
    interpolation of the regular parts.

    ``G(X(s), X(t)) = Hb(s, t) - 8 ln|X(s) - X(t)|`` where ``Hb`` is
    interpolated by a bicubic spline over the grid; ``H(X(t), X(t))`` is a
    cubic spline of the diagonal.
    """

    def __init__(self, solver, t_grid):
        self.solver = solver
        self.t = np.asarray(t_grid, float)
        dom = solver.mesh.domain
        self.dom = dom
        P = dom.point(self.t)
        Hb = np.empty((len(self.t), len(self.t)))
        for k, tk in enumerate(self.t):
            gf = solver.solve(P[k], boundary=True)
            Hb[:, k] = gf.eval_H(P)
        self.Hb = Hb
        self._H = RectBivariateSpline(self.t, self.t, Hb, kx=3, ky=3)
        self._diag = CubicSpline(self.t, np.diag(Hb))

    def H_diag(self, t) -> float:
        return float(self._diag(t))

    def G(self, s, t) -> float:
        """``G(X(s), X(t))`` for the pole ``X(t)``."""
        r = np.linalg.norm(self.dom.point(s) - self.dom.point(t))
        return float(self._H(s, t)[0, 0]) - 8.0 * np.log(r)


def boundary_F0(table: BoundaryGreenTable, weight, params, eps: float) -> float:
    """Reduced energy of boundary points given by curve parameters."""
    dom = table.dom
    L = abs(np.log(eps))
    out = 0.0
    for i, s in enumerate(params):
        a = float(weight(dom.point(s)))
        inter = sum(table.G(s, t) for j, t in enumerate(params) if j != i)
        out += 0.5 * a * (2 * C0 + SIXTEEN_PI * L) - FOUR_PI * 0.5 * a * (0.5 * table.H_diag(s) + 0.5 * inter)
    return float(out)


def search_boundary_cluster(
    table: BoundaryGreenTable,
    weight,
    t0: float,
    m: int,
    eps: float,
    kappa: float = 1.0,
    c_sep: float = 1.0,
    barrier: float = 1e-3,
    tol: float = 1e-5,
    max_iter: int = 5000,
    spread: float = 0.05,
) -> CriticalPointResult:
    """Maximize the reduced boundary energy of ``m`` points near ``X(t0)``.

    Backtracking gradient ascent in the curve parameters with a logarithmic
    barrier at the separation floor ``c_sep |ln eps|^-kappa``.
    """
    dom = table.dom
    floor = c_sep * abs(np.log(eps)) ** (-kappa)
    lo_t, hi_t = table.t[0], table.t[-1]

    def seps(p):
        P = dom.point(np.asarray(p))
        return [np.linalg.norm(P[i] - P[j]) for i in range(m) for j in range(i + 1, m)]

    def obj(p):
        if np.any(p <= lo_t) or np.any(p >= hi_t):
            return -np.inf
        s = seps(p)
        if s and min(s) <= floor:
            return -np.inf
        return boundary_F0(table, weight, p, eps) + barrier * sum(np.log(x - floor) for x in s)

    def grad(p, h=1e-6):
        g = np.empty(m)
        for k in range(m):
            e = np.zeros(m)
            e[k] = h
            g[k] = (obj(p + e) - obj(p - e)) / (2 * h)
        return g

    # start just outside the floor, spread symmetrically around t0
    L0 = dom.length
    step0 = max(spread, 1.5 * floor * TWO_PI / L0)
    p = t0 + step0 * (np.arange(m) - 0.5 * (m - 1))
    f = obj(p)
    if not np.isfinite(f):
        raise LandscapeError("cluster start violates the separation floor")
    hist = [(p.copy(), f)]
    lr = 1e-3
    for it in range(max_iter):
        g = grad(p)
        gn = float(np.linalg.norm(g))
        if gn < tol:
            break
        while True:
            pn = p + lr * g
            fn = obj(pn)
            if np.isfinite(fn) and fn >= f + 1e-4 * lr * gn * gn:
                break
            lr *= 0.5
            if lr < 1e-14:
                break
        if lr < 1e-14:
            break
        p, f = pn, fn
        lr *= 2.0
        hist.append((p.copy(), f))
    g = grad(p)
    gn = float(np.linalg.norm(g))
    s = seps(p)
    if s and min(s) < 1.01 * floor and gn >= tol:
        raise LandscapeError("cluster collapse: iterates reached the separation floor")
    # second-order certificate: FD Hessian negative definite
    Hs = np.empty((m, m))
    h2 = 1e-4
    for k in range(m):
        e = np.zeros(m)
        e[k] = h2
        Hs[:, k] = (grad(p + e) - grad(p - e)) / (2 * h2)
    ev = np.linalg.eigvalsh(0.5 * (Hs + Hs.T))
    cert = {"hessian_eigs": ev.tolist(), "maximum": bool(np.all(ev < 0)), "floor": float(floor),
            "separations": [float(v) for v in s]}
    if not cert["maximum"]:
        raise LandscapeError("no critical point certified: Hessian is not negative definite")
    p = np.sort(p)
    return CriticalPointResult("cluster", [dom.point(t) for t in p], [float(t) for t in p], [], cert, [f], gn,
                               ["boundary"] * m, hist)


# --------------------------------------------------------------------------
# quantization and lift
# --------------------------------------------------------------------------


@dataclass
class QuantizationReport:
    total_mass: float
    weighted_mass: float
    per_point: list
    target: float
    deviation: float
    lifted_mass: float | None = None
    lifted_target: float | None = None
    lifted_deviation: float | None = None

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def quantize_and_lift(u, mesh, weight, eps: float, points, tags, lift: LiftSpec | None = None) -> QuantizationReport:
    """Masses of a solution, split among the points by nearest-point cells."""
    if lift is not None and weight.kind != "power":
        raise LandscapeError("the lift needs a power weight")
    from .geometry import orbit_measure

    q = ElementQuad(mesh)
    uq = q.at(np.asarray(u, float))
    if np.max(uq) > CLAMP:
        raise LandscapeError("e^u overflows in the mass")
    pts = q.pts.reshape(-1, 2)
    aq = weight(pts).reshape(q.w.shape)
    e = eps**2 * np.exp(uq) * q.w
    total = float(e.sum())
    weighted = float((aq * e).sum())
    P = np.asarray(points, float)
    owner = np.argmin(np.linalg.norm(pts[:, None, :] - P[None], axis=2), axis=1).reshape(q.w.shape)
    per = [float(e[owner == i].sum()) for i in range(len(P))]
    target = sum(FOUR_PI if t else EIGHT_PI for t in tags)
    rep = QuantizationReport(total, weighted, per, target, total / target - 1.0)
    if lift is not None:
        rep.lifted_mass = lift.sphere_factor * weighted
        rep.lifted_target = sum((FOUR_PI if t else EIGHT_PI) * orbit_measure(lift, p) for p, t in zip(P, tags))
        rep.lifted_deviation = rep.lifted_mass / rep.lifted_target - 1.0
    return rep
