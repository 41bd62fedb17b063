"""Bubbles, their Neumann projections and the composite approximate solution."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import fem
from .greens import GreenSolver, eval_G
from .quadrature import boundary_rule, mesh_rule

SIGMA = 0.5


class AnsatzError(ValueError):
    pass


@dataclass(frozen=True)
class Bubble:
    """``U(x) = ln(8 d^2 / (eps^2 d^2 + |x - zeta|^2)^2)``."""

    d: float
    zeta: tuple
    eps: float

    def __post_init__(self):
        if self.d <= 0 or self.eps <= 0:
            raise AnsatzError("bubble needs d > 0 and eps > 0")
        if self.eps * self.d >= 0.1:
            raise AnsatzError(f"eps*d = {self.eps * self.d:.3g} outside the asymptotic regime")

    @property
    def core(self) -> float:
        return self.eps * self.d

    def __call__(self, x) -> np.ndarray:
        return eval_bubble(self, x)

    def grad(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        dx = x - np.asarray(self.zeta)
        den = self.core**2 + np.sum(dx * dx, 1)
        return -4.0 * dx / den[:, None]

    def exp(self, x) -> np.ndarray:
        """``e^U`` without forming the logarithm."""
        x = np.atleast_2d(x)
        r2 = np.sum((x - np.asarray(self.zeta)) ** 2, 1)
        return 8 * self.d**2 / (self.core**2 + r2) ** 2


def eval_bubble(b: Bubble, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, float))
    r2 = np.sum((x - np.asarray(b.zeta)) ** 2, 1)
    return np.log(8 * b.d**2) - 2 * np.log(b.core**2 + r2)


def plane_integrals() -> tuple:
    """``int 8/(1+|y|^2)^2`` and ``int 8/(1+|y|^2)^2 ln(1/(1+|y|^2)^2)`` over the plane."""
    f1 = lambda r: 2 * np.pi * r * 8 / (1 + r * r) ** 2
    f2 = lambda r: -2 * np.pi * r * 8 / (1 + r * r) ** 2 * 2 * np.log1p(r * r)
    i1 = integrate.quad(f1, 0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    i2 = integrate.quad(f2, 0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    return i1, i2


def bubble_mass(mesh, b: Bubble) -> float:
    """``eps^2 int_domain e^U`` with refined quadrature at the core."""
    pts, wts, _ = mesh_rule(mesh, [(b.zeta, b.core)])
    return float(b.eps**2 * np.sum(wts * b.exp(pts)))


def discrete_bubble_residual(mesh, b: Bubble) -> float:
    """Max over interior nodes of ``-M_L^{-1} K U + eps^2 e^U``."""
    K, _ = fem.assemble(mesh)
    ml = fem.lumped_mass(mesh)
    U = eval_bubble(b, mesh.nodes)
    r = -(K @ U) / ml + b.eps**2 * b.exp(mesh.nodes)
    interior = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_nodes)
    return float(np.max(np.abs(r[interior])))


# --------------------------------------------------------------------------
# projection
# --------------------------------------------------------------------------


@dataclass(eq=False)
class ProjectedBubble:
    bubble: Bubble
    H: np.ndarray  # PU - U at the nodes
    boundary: bool

    @property
    def c(self) -> float:
        return 0.5 if self.boundary else 1.0

    def PU(self, mesh) -> np.ndarray:
        return eval_bubble(self.bubble, mesh.nodes) + self.H


def project_bubble(solver: GreenSolver, b: Bubble, boundary: bool = False) -> ProjectedBubble:
    """Solve for ``H_i = PU - U``.

    ``PU`` solves ``-div(a grad PU) + a PU = eps^2 a e^U`` with zero Neumann
    data; after subtracting ``U`` the right-hand side becomes smooth at scale
    ``eps d``:
    ``int a grad H . grad psi + a H psi = int (grad a . grad U - a U) psi
    + int_bd 4 a n . (x - zeta) / (eps^2 d^2 + r^2) psi ds``.
    """
    mesh, w = solver.mesh, solver.weight
    zeta = np.asarray(b.zeta, float)
    foci = [(zeta, b.core)]

    def f(x):
        return np.sum(w.grad(x) * b.grad(x), 1) - w(x) * eval_bubble(b, x)

    rhs = fem.load_vector(mesh, f, foci=foci)
    dom = mesh.domain

    def gb(x, t):
        dx = x - zeta
        return 4.0 * w(x) * np.sum(dom.outer_normal(t) * dx, 1) / (b.core**2 + np.sum(dx * dx, 1))

    rhs += fem.boundary_load(mesh, gb, rule=boundary_rule(mesh, foci))
    return ProjectedBubble(b, solver.lu.solve(rhs), bool(boundary))


def lemma_shadow(pb: ProjectedBubble, gf) -> float:
    """``max_nodes |H_i + ln(8 d^2) - c_i H(., zeta_i)|``."""
    return float(np.max(np.abs(pb.H + np.log(8 * pb.bubble.d**2) - pb.c * gf.H)))


# --------------------------------------------------------------------------
# closure and composite
# --------------------------------------------------------------------------


def closure_rhs(fields, tags) -> np.ndarray:
    """``c_i H(zeta_i, zeta_i) + sum_{j != i} c_j G(zeta_i, zeta_j)``."""
    m = len(fields)
    c = np.array([0.5 if t else 1.0 for t in tags])
    out = np.zeros(m)
    for i in range(m):
        zi = fields[i].zeta
        out[i] = c[i] * float(fields[i].eval_H(zi)[0])
        for j in range(m):
            if j != i:
                out[i] += c[j] * float(eval_G(fields[j], zi)[0])
    return out


def solve_closure(solver: GreenSolver, points, tags, eps: float | None = None, fields=None):
    """Scales ``d_i = sqrt(exp(rhs_i) / 8)`` from the closure condition.

    Returns ``(d, fields)`` where ``fields`` are the Green fields used.
    """
    points = [np.asarray(p, float) for p in points]
    if fields is None:
        fields = [solver.solve(p, boundary=bool(t)) for p, t in zip(points, tags)]
    d = np.sqrt(np.exp(closure_rhs(fields, tags)) / 8.0)
    if eps is not None and np.any(eps * d >= 0.1):
        raise AnsatzError("closure scales outside the asymptotic regime (eps*d >= 0.1)")
    return d, fields


def check_admissible(dom, points, tags, eps, kappa: float = 1.0, c0: float = 1.0, c_sep: float = 1.0):
    """Separation and distance-to-boundary floors ``c |ln eps|^-kappa``."""
    from .geometry import dist_to_boundary

    floor = abs(np.log(eps)) ** (-kappa)
    pts = np.asarray(points, float)
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if np.linalg.norm(pts[i] - pts[j]) < c_sep * floor:
                raise AnsatzError("points closer than the separation floor")
        if not tags[i] and dist_to_boundary(dom, pts[i])[0] < c0 * floor:
            raise AnsatzError("interior point closer to the boundary than the floor")
    return floor


@dataclass(eq=False)
class Ansatz:
    points: list
    tags: list
    d: np.ndarray
    eps: float
    projected: list
    fields: list
    solver: GreenSolver = field(repr=False)

    @property
    def mesh(self):
        return self.solver.mesh

    @property
    def bubbles(self):
        return [p.bubble for p in self.projected]

    @property
    def H_sum(self) -> np.ndarray:
        return np.sum([p.H for p in self.projected], axis=0)

    def u(self) -> np.ndarray:
        """Composite ``u_eps = sum_i PU_i`` at the nodes."""
        return np.sum([p.PU(self.mesh) for p in self.projected], axis=0)

    def u_at(self, x, tri=None) -> np.ndarray:
        """``u_eps`` at arbitrary points: exact bubbles plus interpolated ``H_i``."""
        x = np.atleast_2d(x)
        if tri is None:
            Hs = self.solver.locator.interpolate(self.H_sum, x)
        else:
            Hs = fem.eval_at_rule(self.mesh, self.H_sum, x, tri)
        return Hs + np.sum([eval_bubble(b, x) for b in self.bubbles], axis=0)

    def closure_residual(self) -> np.ndarray:
        return np.log(8 * self.d**2) - closure_rhs(self.fields, self.tags)

    def foci(self):
        return [(np.asarray(b.zeta), b.core) for b in self.bubbles]

    def masses(self) -> np.ndarray:
        return np.array([bubble_mass(self.mesh, b) for b in self.bubbles])


def build_ansatz(solver: GreenSolver, points, tags, eps: float, check: bool = True) -> Ansatz:
    pts = []
    for p, t in zip(points, tags):
        z, _, _ = solver.classify(p, bool(t))
        pts.append(z)
    if check:
        check_admissible(solver.mesh.domain, pts, tags, eps)
    d, fields = solve_closure(solver, pts, tags, eps)
    proj = [
        project_bubble(solver, Bubble(float(di), tuple(p), float(eps)), bool(t))
        for di, p, t in zip(d, pts, tags)
    ]
    return Ansatz(pts, list(tags), d, float(eps), proj, fields, solver)


def residual_S(ans: Ansatz, sigma: float = SIGMA):
    """Nodal residual of the rescaled equation and its weighted sup norm.

    With ``v(y) = u(eps y) + 4 ln eps`` and each ``PU_i`` solving its own
    projected problem exactly, the residual reduces to
    ``S = eps^4 (e^u - sum_i e^{U_i})``, evaluated at the nodes from exact
    bubbles and the computed ``H_i``.
    """
    mesh, eps = ans.mesh, ans.eps
    x = mesh.nodes
    Ub = np.array([eval_bubble(b, x) for b in ans.bubbles])
    u = Ub.sum(0) + ans.H_sum
    S = eps**4 * (np.exp(u) - np.exp(Ub).sum(0))
    y = x / eps
    wgt = eps**2 + sum(
        (1 + np.linalg.norm(y - np.asarray(b.zeta) / eps, axis=1)) ** (-2 - sigma) for b in ans.bubbles
    )
    return S, float(np.max(np.abs(S) / wgt))


def w_shape_error(ans: Ansatz, radius: float = 5.0) -> float:
    """Max relative gap between ``e^v`` and the bubble profile on ``B(zeta', radius d)``."""
    mesh, eps = ans.mesh, ans.eps
    u = ans.u()
    worst = 0.0
    for b in ans.bubbles:
        yz = (mesh.nodes - np.asarray(b.zeta)) / eps
        r2 = np.sum(yz * yz, 1)
        sel = r2 < (radius * b.d) ** 2
        ev = eps**4 * np.exp(u[sel])
        prof = 8 * b.d**2 / (b.d**2 + r2[sel]) ** 2
        worst = max(worst, float(np.max(np.abs(ev / prof - 1))))
    return worst
