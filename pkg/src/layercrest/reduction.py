"""Finite-dimensional reduction: kernel basis, projected solves, full Newton.

Projected solves work in the rescaled frame ``y = x / eps`` on a scaled copy
of the physical mesh; Newton on the full problem works in the physical frame.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from . import fem
from .ansatz import Ansatz, eval_bubble
from .quadrature import DUNAVANT7_BARY, DUNAVANT7_W

log = logging.getLogger(__name__)

CLAMP = 700.0
MIN_STEP_CAP = 1e-3
RESTART_STEP_CAP = 0.1


class ReductionError(RuntimeError):
    pass


class NewtonError(ReductionError):
    def __init__(self, msg, best_residual=np.inf, u=None):
        super().__init__(f"{msg} (best residual {best_residual:.3e})")
        self.best_residual = best_residual
        self.u = u


# --------------------------------------------------------------------------
# quadrature helpers on a fixed mesh
# --------------------------------------------------------------------------


class ElementQuad:
    """7-point rule on every triangle with precomputed hat values."""

    def __init__(self, mesh):
        self.mesh = mesh
        P = mesh.nodes[mesh.triangles]
        self.pts = np.einsum("qk,tkd->tqd", DUNAVANT7_BARY, P)  # (M, 7, 2)
        area = np.abs(fem.element_geometry(mesh)[0])
        self.w = area[:, None] * DUNAVANT7_W[None, :]  # (M, 7)
        T = mesh.triangles
        self.rows = np.repeat(T, 3, axis=1).ravel()
        self.cols = np.tile(T, (1, 3)).ravel()

    def at(self, u) -> np.ndarray:
        """Nodal P1 field at the quadrature points, shape ``(M, 7)``."""
        return u[self.mesh.triangles] @ DUNAVANT7_BARY.T

    def integrate(self, vals) -> float:
        return float(np.sum(self.w * vals))

    def load(self, vals) -> np.ndarray:
        """``b_i = int vals phi_i``."""
        be = np.einsum("tq,qi->ti", self.w * vals, DUNAVANT7_BARY)
        out = np.zeros(self.mesh.n_nodes)
        np.add.at(out, self.mesh.triangles.ravel(), be.ravel())
        return out

    def mass(self, vals):
        """``M_ij = int vals phi_i phi_j``."""
        B = DUNAVANT7_BARY
        Me = np.einsum("tq,qi,qj->tij", self.w * vals, B, B)
        n = self.mesh.n_nodes
        return sps.csr_matrix((Me.ravel(), (self.rows, self.cols)), shape=(n, n))


# --------------------------------------------------------------------------
# full Newton in the physical frame
# --------------------------------------------------------------------------


@dataclass
class NewtonResult:
    u: np.ndarray
    iterations: int
    residuals: list
    eps: float
    log_lines: list = field(default_factory=list)


class FullProblem:
    """Discrete ``-div(a grad u) + a u = eps^2 a e^u`` with natural Neumann data."""

    def __init__(self, mesh, weight, eps: float):
        self.mesh, self.weight, self.eps = mesh, weight, float(eps)
        self.K, self.M = fem.assemble(mesh, weight, weight)
        self.quad = ElementQuad(mesh)
        self.a_q = weight(self.quad.pts.reshape(-1, 2)).reshape(self.quad.w.shape)

    def _exp(self, u, strict=False):
        uq = self.quad.at(u)
        if np.max(uq) > CLAMP:
            if strict:
                raise NewtonError("exponent clamp active on the converged state")
            uq = np.minimum(uq, CLAMP)
        return np.exp(uq)

    def residual(self, u, strict=False) -> np.ndarray:
        e = self._exp(u, strict)
        return self.K @ u + self.M @ u - self.eps**2 * self.quad.load(self.a_q * e)

    def jacobian(self, u):
        e = self._exp(u)
        return (self.K + self.M - self.eps**2 * self.quad.mass(self.a_q * e)).tocsc()

    def mass(self, u, weighted: bool = False) -> float:
        e = self._exp(u)
        return self.eps**2 * self.quad.integrate(e * (self.a_q if weighted else 1.0))


def newton_solve_full(
    mesh,
    weight,
    initial,
    eps: float,
    tol: float = 1e-10,
    max_iter: int = 30,
    continuation=None,
    step_cap: float = None,
) -> NewtonResult:
    """Damped Newton with Armijo backtracking on the discrete residual.

    A step is also accepted when the simplified Newton correction shrinks
    (natural monotonicity test).

    Parameters
    ----------
    initial : array
        Nodal starting guess.
    continuation : sequence of float, optional
        Decreasing eps schedule ending at ``eps``; each stage starts from the
        previous converged solution.
    step_cap : float, optional
        Initial bound on the sup norm of each Newton update. A failed line
        search shrinks the bound fourfold and retries. By default the first
        attempt is unbounded and a failure restarts from ``initial`` with
        ``RESTART_STEP_CAP``.
    """
    caps = (np.inf, RESTART_STEP_CAP) if step_cap is None else (float(step_cap),)
    schedule = list(continuation) if continuation else [eps]
    if abs(schedule[-1] - eps) > 1e-15 * eps:
        schedule.append(eps)
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ReductionError("continuation schedule must be strictly decreasing")
    u = np.asarray(initial, float).copy()
    lines = []
    total = 0
    res_hist = []
    for e in schedule:
        prob = FullProblem(mesh, weight, e)
        start = u
        for k, cap in enumerate(caps):
            n0 = len(lines)
            try:
                u, it, hist = _newton(prob, start, tol, max_iter, lines, cap)
                break
            except NewtonError as exc:
                if k == len(caps) - 1:
                    raise
                # failed iterations still count
                total += sum(" step=" in ln for ln in lines[n0:])
                lines.append(f"eps={e:.6g} restart from the initial guess with step cap {caps[k + 1]:g} ({exc})")
        total += it
        res_hist = hist
    return NewtonResult(u, total, res_hist, eps, lines)


def _line_search(prob, u, du, nrm, fac, ndu):
    # Armijo on |F| first; if it stalls, fall back to natural monotonicity,
    # since |F| has spurious local minima on strongly graded meshes
    for natural, lam_min in ((False, 1.0 / 64), (True, 1e-6)):
        lam = 1.0
        while lam >= lam_min:
            un = u + lam * du
            Fn = prob.residual(un)
            nn = float(np.linalg.norm(Fn))
            if np.isfinite(nn):
                if not natural and nn <= (1 - 1e-4 * lam) * nrm:
                    return un, Fn, nn, lam
                if natural and np.linalg.norm(fac.solve(-Fn)) <= (1 - lam / 4) * ndu:
                    return un, Fn, nn, lam
            lam *= 0.5
    return None, None, None, None


def _newton(prob: FullProblem, u, tol, max_iter, lines, step_cap: float = np.inf):
    F = prob.residual(u)
    nrm = float(np.linalg.norm(F))
    hist = [nrm]
    best = (nrm, u)
    cap = step_cap
    lines.append(f"eps={prob.eps:.6g} it=0 |F|={nrm:.6e}")
    it = 0
    while it < max_iter:
        if nrm < tol:
            prob.residual(u, strict=True)
            return u, it, hist
        try:
            fac = fem.Factorized(prob.jacobian(u))
            du = fac.solve(-F)
        except fem.SolveError as exc:
            raise NewtonError(f"singular Jacobian: {exc}", best[0], best[1]) from exc
        # sup-norm trust bound: a large core update can push the dilation
        # eigenvalue through zero
        big = float(np.max(np.abs(du)))
        if big > cap:
            du *= cap / big
        un, Fn, nn, lam = _line_search(prob, u, du, nrm, fac, float(np.linalg.norm(du)))
        if un is None:
            cap = min(cap, big) / 4
            if cap < MIN_STEP_CAP:
                raise NewtonError("line search failed", best[0], best[1])
            lines.append(f"eps={prob.eps:.6g} it={it} line search failed; step cap {cap:.3g}")
            continue
        it += 1
        if lam == 1.0 and big > cap:
            cap *= 2
        u, F, nrm = un, Fn, nn
        hist.append(nrm)
        if nrm < best[0]:
            best = (nrm, u)
        lines.append(f"eps={prob.eps:.6g} it={it} |F|={nrm:.6e} step={lam:g}")
    if nrm < tol:
        prob.residual(u, strict=True)
        return u, max_iter, hist
    raise NewtonError("Newton did not converge", best[0], best[1])


# --------------------------------------------------------------------------
# approximate kernel
# --------------------------------------------------------------------------


def smooth_step(r, r0: float):
    """Quintic cutoff: one for ``r <= r0``, zero for ``r >= r0 + 1``."""
    t = np.clip(np.asarray(r, float) - r0, 0.0, 1.0)
    return 1.0 - t**3 * (10 - 15 * t + 6 * t * t)


@dataclass(eq=False)
class Flattening:
    """Local straightening of the boundary near a boundary point.

    In the frame ``xi = ((x - zeta) . T, (x - zeta) . nu)`` the boundary is
    the graph ``xi_2 = p(xi_1)``; the map is
    ``F_1 = xi_1 + (xi_2 - p) p' / (1 + p'^2)``, ``F_2 = xi_2 - p``.
    """

    origin: np.ndarray
    T: np.ndarray
    nu: np.ndarray
    p: object  # CubicSpline
    span: tuple

    def local(self, x):
        dx = np.atleast_2d(x) - self.origin
        return dx @ self.T, dx @ self.nu

    def __call__(self, x) -> np.ndarray:
        xi1, xi2 = self.local(x)
        s = np.clip(xi1, *self.span)
        p, dp = self.p(s), self.p(s, 1)
        F2 = xi2 - p
        F1 = xi1 + F2 * dp / (1 + dp * dp)
        return np.column_stack([F1, F2])


def build_flattening(dom, t: float, half_width: float) -> Flattening:
    from scipy.interpolate import CubicSpline

    origin, T, nu = dom.point(t), dom.tangent(t), dom.normal(t)
    s0 = dom.arclength(t)
    hw = min(half_width, 0.45 * dom.length)
    ss = s0 + np.linspace(-hw, hw, 401)
    P = dom.point(dom.param_at_arclength(np.mod(ss, dom.length)))
    xi1, xi2 = (P - origin) @ T, (P - origin) @ nu
    # keep the monotone branch through the origin
    k = 200
    inc = np.diff(xi1) > 0
    lo = k
    while lo > 0 and inc[lo - 1]:
        lo -= 1
    hi = k
    while hi < len(inc) and inc[hi]:
        hi += 1
    xi1, xi2 = xi1[lo : hi + 1], xi2[lo : hi + 1]
    return Flattening(origin, T, nu, CubicSpline(xi1, xi2), (float(xi1[0]), float(xi1[-1])))


@dataclass(eq=False)
class KernelBasis:
    """Cut-off translation modes ``Z_ij`` on the rescaled mesh ``y = x / eps``.

    ``Z[i]`` has shape ``(J_i, n_nodes)``; ``Z0[i]`` is the (cut-off)
    dilation mode, constructed but only constrained on request.
    """

    mesh: object
    eps: float
    centers: np.ndarray
    d: np.ndarray
    J: list
    r0: float
    Z: list
    Z0: list
    chi: list
    flattenings: list

    @property
    def labels(self) -> list:
        return [(i, j + 1) for i, Ji in enumerate(self.J) for j in range(Ji)]

    def columns(self, dilation: bool = False) -> np.ndarray:
        cols = [z for Zi in self.Z for z in Zi]
        if dilation:
            cols += list(self.Z0)
        return np.column_stack(cols)


def build_kernel_basis(ans: Ansatz, r0: float = 10.0) -> KernelBasis:
    """Kernel fields for every concentration point of ``ans``.

    Interior points carry two translation modes, boundary points one
    (tangential, through the local flattening).
    """
    if r0 < 5:
        raise ReductionError("cutoff radius must be at least 5 rescaled units")
    eps = ans.eps
    ymesh = ans.mesh.scaled((0.0, 0.0), 1.0 / eps)
    y = ymesh.nodes
    centers = np.array([np.asarray(p, float) / eps for p in ans.points])
    m = len(centers)
    for i in range(m):
        for j in range(i + 1, m):
            if np.linalg.norm(centers[i] - centers[j]) < 2 * (r0 + 1):
                raise ReductionError("kernel supports overlap: points not separated at scale r0")
    dom = ans.mesh.domain
    Z, Z0, chis, flats, J = [], [], [], [], []
    for i, (c, di, tag) in enumerate(zip(centers, ans.d, ans.tags)):
        dy = y - c
        r2 = np.sum(dy * dy, 1)
        chi = smooth_step(np.sqrt(r2), r0)
        den = di * di + r2
        Z0.append(chi * (1.0 / di - 2 * di / den))
        if tag:
            t = dom.foot(ans.points[i])
            fl = build_flattening(dom, t, 1.5 * eps * (r0 + 1))
            F = fl(y * eps) / eps
            Z.append((chi * F[:, 0] / (di * di + np.sum(F * F, 1)))[None, :])
            flats.append(fl)
            J.append(1)
        else:
            Z.append(np.vstack([chi * dy[:, 0] / den, chi * dy[:, 1] / den]))
            flats.append(None)
            J.append(2)
        chis.append(chi)
    return KernelBasis(ymesh, eps, centers, np.asarray(ans.d, float), J, float(r0), Z, Z0, chis, flats)


def liouville_kernel_residual(mesh, d: float, center=(0.0, 0.0), radius: float = 10.0) -> float:
    """Relative weak residual of the linearized Liouville equation for
    ``z = y_1 / (d^2 + |y|^2)``, tested against ``psi = y_1 exp(-|y|^2 / d^2)``
    (cut off at ``radius``).

    Pointwise lumped second differences are not consistent on unstructured
    meshes; the weak form converges at second order.
    """
    dy = mesh.nodes - np.asarray(center, float)
    r2 = np.sum(dy * dy, 1)
    z = dy[:, 0] / (d * d + r2)
    psi = dy[:, 0] * np.exp(-r2 / (d * d)) * smooth_step(np.sqrt(r2), radius - 1.0)
    c = np.asarray(center, float)
    K, M = fem.assemble(mesh, None, lambda x: 8 * d * d / (d * d + np.sum((x - c) ** 2, -1)) ** 2)
    ref = float(psi @ (M @ z))
    return abs(float(psi @ (K @ z)) - ref) / abs(ref)


# --------------------------------------------------------------------------
# projected problems in the rescaled frame
# --------------------------------------------------------------------------


@dataclass
class ReductionState:
    phi: np.ndarray
    c: np.ndarray
    labels: list
    pde_residual: float
    orth_residual: float
    iterations: int = 0
    ratios: list = field(default_factory=list)
    log_lines: list = field(default_factory=list)


class ProjectedOperator:
    """Saddle system for ``Lap phi - eps^2 phi + e^v phi = h + sum c_ij Z_ij``
    with ``int Z_ij phi = 0``, assembled and factorized once.

    Weak form: ``A phi + B c = -M h`` and ``B^T phi = 0`` with
    ``A = K + eps^2 M - M_{e^v}`` and ``B = M Z``.
    """

    def __init__(self, basis: KernelBasis, ans: Ansatz, dilation: bool = False):
        self.basis, self.ans = basis, ans
        eps = basis.eps
        ym = basis.mesh
        self.quad = ElementQuad(ym)
        tri = np.repeat(np.arange(len(ym.triangles)), 7)
        xq = self.quad.pts.reshape(-1, 2) * eps
        self.xq, self.tri_q = xq, tri
        uq = ans.u_at(xq, tri)
        self.ev_q = (eps**4 * np.exp(np.minimum(uq, CLAMP))).reshape(self.quad.w.shape)
        K, M = fem.assemble(ym)
        self.K, self.M = K, M
        self.A = (K + eps**2 * M - self.quad.mass(self.ev_q)).tocsr()
        Zc = basis.columns(dilation)
        self.B = np.asarray(M @ Zc)
        self.labels = basis.labels + ([(i, 0) for i in range(len(basis.Z0))] if dilation else [])
        S = sps.bmat([[self.A, sps.csr_matrix(self.B)], [sps.csr_matrix(self.B.T), None]]).tocsc()
        try:
            self.lu = fem.Factorized(S)
        except fem.SolveError as exc:
            raise ReductionError(f"saddle system singular: {exc}") from exc
        self.n = ym.n_nodes

    def solve_load(self, b) -> ReductionState:
        """Solve with load ``b_k = int h psi_k`` given directly."""
        rhs = np.concatenate([-np.asarray(b, float), np.zeros(self.B.shape[1])])
        try:
            x = self.lu.solve(rhs)
        except fem.SolveError as exc:
            raise ReductionError(f"saddle solve failed: {exc}") from exc
        phi, c = x[: self.n], x[self.n :]
        pde = float(np.linalg.norm(self.A @ phi + self.B @ c + b))
        orth = float(np.max(np.abs(self.B.T @ phi))) if len(c) else 0.0
        return ReductionState(phi, c, list(self.labels), pde, orth)

    def solve(self, h) -> ReductionState:
        """``h`` is a nodal field on the rescaled mesh or a callable of ``y``."""
        if callable(h):
            h = np.asarray(h(self.basis.mesh.nodes), float)
        return self.solve_load(self.M @ np.asarray(h, float))


def solve_projected_linear(basis: KernelBasis, ans: Ansatz, h, dilation: bool = False,
                           op: ProjectedOperator | None = None) -> ReductionState:
    op = op or ProjectedOperator(basis, ans, dilation)
    return op.solve(h)


def star_norm(basis: KernelBasis, h, sigma: float = 0.5) -> float:
    """``sup |h| / (eps^2 + sum_i (1 + |y - zeta_i'|)^(-2-sigma))`` over nodes."""
    y = basis.mesh.nodes
    w = basis.eps**2 + sum((1 + np.linalg.norm(y - c, axis=1)) ** (-2 - sigma) for c in basis.centers)
    return float(np.max(np.abs(h) / w))


def solve_projected_nonlinear(
    basis: KernelBasis,
    ans: Ansatz,
    tol: float = 1e-9,
    max_iter: int = 50,
    threshold: float = 3.0,
    sigma: float = 0.5,
) -> ReductionState:
    """Fixed point ``phi <- T(-S - eps gamma . grad phi - N(phi))``.

    ``N(phi) = e^v (e^phi - 1 - phi)``; ``S`` is the residual of the ansatz
    in the rescaled frame, evaluated at quadrature points.
    """
    from .ansatz import residual_S

    _, s_star = residual_S(ans, sigma)
    if s_star > threshold:
        raise ReductionError(f"residual star norm {s_star:.3g} above contraction threshold {threshold}")
    op = ProjectedOperator(basis, ans)
    eps, q = basis.eps, op.quad
    ym = basis.mesh
    # S at quadrature points: eps^4 (e^u - sum e^U_i)
    uq = ans.u_at(op.xq, op.tri_q)
    Ub = np.array([eval_bubble(b, op.xq) for b in ans.bubbles])
    S_q = (eps**4 * (np.exp(uq) - np.exp(Ub).sum(0))).reshape(q.w.shape)
    gam = ans.solver.weight.gamma(op.xq).reshape(q.w.shape + (2,))
    ev = op.ev_q
    phi = np.zeros(op.n)
    lines, ratios = [], []
    prev = None
    state = None
    for k in range(1, max_iter + 1):
        ph_q = q.at(phi)
        gphi = fem.grad_at_tri(ym, phi)[:, None, :]
        drift = eps * np.sum(gam * gphi, axis=2)
        N = ev * (np.expm1(ph_q) - ph_q)
        state = op.solve_load(q.load(-S_q - drift - N))
        diff = float(np.max(np.abs(state.phi - phi)))
        if prev is not None and prev > 0:
            ratios.append(diff / prev)
        lines.append(f"it={k} |dphi|={diff:.3e}" + (f" ratio={ratios[-1]:.3f}" if ratios else ""))
        phi, prev = state.phi, diff
        if diff < tol:
            state.iterations, state.ratios, state.log_lines = k, ratios, lines
            return state
    last = ratios[-1] if ratios else float("nan")
    raise ReductionError(f"no contraction after {max_iter} iterations (last ratio {last:.3g})")


# --------------------------------------------------------------------------
# pinned Newton and multiplier-driven point location (physical frame)
# --------------------------------------------------------------------------


def translation_modes(ans: Ansatz, r0: float = 10.0) -> np.ndarray:
    """Cut-off translation modes on the physical mesh, one column per
    interior coordinate and one tangential column per boundary point."""
    x = ans.mesh.nodes
    dom = ans.mesh.domain
    cols = []
    for p, b, tag in zip(ans.points, ans.bubbles, ans.tags):
        y = (x - np.asarray(p)) / b.core
        r2 = np.sum(y * y, 1)
        chi = smooth_step(np.sqrt(r2), r0)
        if tag:
            T = dom.tangent(dom.foot(p))
            cols.append(chi * (y @ T) / (1 + r2))
        else:
            cols += [chi * y[:, 0] / (1 + r2), chi * y[:, 1] / (1 + r2)]
    return np.column_stack(cols)


def newton_solve_pinned(mesh, weight, ans: Ansatz, eps: float, tol: float = 1e-10,
                        max_iter: int = 40, r0: float = 10.0):
    """Newton on ``F(u) = sum_k c_k M z_k`` with ``int z_k (u - u_eps) = 0``.

    Pinning the translation modes removes the near-kernel that makes plain
    Newton fragile away from a critical configuration.  Returns ``(u, c)``;
    ``c`` vanishes exactly when ``u`` solves the unconstrained problem.
    """
    prob = FullProblem(mesh, weight, eps)
    u0 = ans.u()
    C = prob.M @ translation_modes(ans, r0)
    n, k = mesh.n_nodes, C.shape[1]
    Cs = sps.csr_matrix(C)
    u, c = u0.copy(), np.zeros(k)

    def resid(u, c):
        return np.concatenate([prob.residual(u) - C @ c, C.T @ (u - u0)])

    F = resid(u, c)
    nrm = float(np.linalg.norm(F))
    best = (nrm, u)
    for it in range(max_iter):
        if nrm < tol:
            return u, c
        J = sps.bmat([[prob.jacobian(u), -Cs], [Cs.T, None]]).tocsc()
        try:
            dx = fem.Factorized(J).solve(-F)
        except fem.SolveError as exc:
            raise NewtonError(f"singular pinned Jacobian: {exc}", best[0], best[1]) from exc
        lam = 1.0
        while True:
            un, cn = u + lam * dx[:n], c + lam * dx[n:]
            Fn = resid(un, cn)
            nn = float(np.linalg.norm(Fn))
            if np.isfinite(nn) and nn <= (1 - 1e-4 * lam) * nrm:
                break
            lam *= 0.5
            if lam < 1e-6:
                raise NewtonError("pinned line search failed", best[0], best[1])
        u, c, F, nrm = un, cn, Fn, nn
        if nrm < best[0]:
            best = (nrm, u)
    if nrm < tol:
        return u, c
    raise NewtonError("pinned Newton did not converge", best[0], best[1])


@dataclass
class LocateResult:
    points: list
    u: np.ndarray
    mesh: object
    ansatz: Ansatz
    multipliers: np.ndarray
    history: list


def locate_concentration(
    dom,
    weight,
    points,
    tags,
    eps: float,
    h: float,
    grading_factor: float = 0.125,
    fd_step: float = 5e-3,
    tol: float = 1e-4,
    max_iter: int = 12,
) -> LocateResult:
    """Move the points until the pinned multipliers vanish.

    Unknowns are the interior coordinates and the boundary curve
    parameters; the Jacobian of the multipliers is taken by finite
    differences.  The mesh is regenerated around each trial configuration.
    """
    from .ansatz import build_ansatz, solve_closure
    from .greens import GreenSolver
    from .mesh import generate_mesh

    tags = [bool(t) for t in tags]

    def unpack(q):
        pts, k = [], 0
        for t in tags:
            if t:
                pts.append(dom.point(q[k]))
                k += 1
            else:
                pts.append(np.array(q[k : k + 2]))
                k += 2
        return pts

    q = []
    for p, t in zip(points, tags):
        if t:
            q.append(dom.foot(p))
        else:
            q += list(np.asarray(p, float))
    q = np.array(q, float)

    def evaluate(q):
        pts = unpack(q)
        coarse = generate_mesh(dom, h, [(p, h / 8) for p in pts])
        d, _ = solve_closure(GreenSolver(coarse, weight), pts, tags, eps)
        mesh = generate_mesh(dom, h, [(p, eps * di * grading_factor) for p, di in zip(pts, d)])
        ans = build_ansatz(GreenSolver(mesh, weight), pts, tags, eps, check=False)
        u, c = newton_solve_pinned(mesh, weight, ans, eps)
        return c, (u, mesh, ans)

    history = []
    c, extra = evaluate(q)
    for it in range(max_iter):
        history.append((q.copy(), c.copy()))
        Jm = np.empty((len(c), len(q)))
        for k in range(len(q)):
            dq = np.zeros_like(q)
            dq[k] = fd_step
            Jm[:, k] = (evaluate(q + dq)[0] - c) / fd_step
        step = np.linalg.lstsq(Jm, -c, rcond=None)[0]
        # keep steps local: the multipliers are only trusted near q
        scale = max(1.0, float(np.max(np.abs(step))) / 0.1)
        step /= scale
        q = q + step
        c, extra = evaluate(q)
        if float(np.max(np.abs(step))) < tol:
            break
    else:
        history.append((q.copy(), c.copy()))
        raise ReductionError("point location did not settle")
    history.append((q.copy(), c.copy()))
    u, mesh, ans = extra
    return LocateResult(unpack(q), u, mesh, ans, c, history)
