"""P1 finite elements: weighted assembly, load vectors, point location."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .quadrature import DUNAVANT7_BARY, DUNAVANT7_W, boundary_rule, mesh_rule


class SolveError(RuntimeError):
    pass


def element_geometry(mesh):
    """Signed areas and constant hat gradients, shape ``(M,)`` and ``(M, 3, 2)``."""
    P = mesh.nodes[mesh.triangles]
    e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # gradients of barycentric coordinates
    g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
    g0 = -g1 - g2
    return 0.5 * det, np.stack([g0, g1, g2], 1)


def _coef_at_quad(mesh, coef):
    """Coefficient values at the 7 element quadrature points, shape ``(M, 7)``."""
    M = len(mesh.triangles)
    if coef is None:
        return np.ones((M, 7))
    if callable(coef):
        pts = np.einsum("qk,tkd->tqd", DUNAVANT7_BARY, mesh.nodes[mesh.triangles])
        return np.asarray(coef(pts.reshape(-1, 2)), float).reshape(M, 7)
    coef = np.asarray(coef, float)
    if coef.shape == (mesh.n_nodes,):
        # nodal P1 field
        return coef[mesh.triangles] @ DUNAVANT7_BARY.T
    return coef.reshape(M, 7)


def assemble(mesh, stiff_coef=None, mass_coef=None):
    """Return ``K`` and ``M`` with ``K_ij = int c_k grad phi_i . grad phi_j``
    and ``M_ij = int c_m phi_i phi_j``.

    Coefficients may be callables of ``x`` (evaluated at quadrature points),
    nodal P1 fields, or ``None`` for one.
    """
    area, grad = element_geometry(mesh)
    area = np.abs(area)
    T = mesh.triangles
    ck = _coef_at_quad(mesh, stiff_coef) @ DUNAVANT7_W  # element means
    Ke = np.einsum("tid,tjd->tij", grad, grad) * (area * ck)[:, None, None]
    cm = _coef_at_quad(mesh, mass_coef)
    B = DUNAVANT7_BARY
    Me = np.einsum("tq,q,qi,qj->tij", cm, DUNAVANT7_W, B, B) * area[:, None, None]
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    n = mesh.n_nodes
    K = sps.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    Mm = sps.csr_matrix((Me.ravel(), (rows, cols)), shape=(n, n))
    return K, Mm


def lumped_mass(mesh) -> np.ndarray:
    area = np.abs(element_geometry(mesh)[0])
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.triangles.ravel(), np.repeat(area / 3.0, 3))
    return out


def load_vector(mesh, f, foci=(), rule=None) -> np.ndarray:
    """``b_i = int f phi_i`` with refined quadrature near ``foci``.

    ``f`` is called with an ``(Q, 2)`` array of points and must return
    ``(Q,)`` values.  A precomputed ``rule`` (from :func:`quadrature.mesh_rule`)
    can be passed to reuse points.
    """
    pts, wts, tri = rule if rule is not None else mesh_rule(mesh, foci)
    vals = np.asarray(f(pts), float) * wts
    lam = barycentric_many(mesh, pts, tri)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.triangles[tri].ravel(), (lam * vals[:, None]).ravel())
    return out


def boundary_load(mesh, f, foci=(), rule=None) -> np.ndarray:
    """``b_i = int_{boundary} f phi_i ds`` on the exact curve.

    ``f`` receives ``(points, curve_params)``.
    """
    pts, wts, idx, lam, tq = rule if rule is not None else boundary_rule(mesh, foci)
    vals = np.asarray(f(pts, tq), float) * wts
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, idx[:, 0], vals * lam)
    np.add.at(out, idx[:, 1], vals * (1.0 - lam))
    return out


def barycentric_many(mesh, pts, tri) -> np.ndarray:
    P = mesh.nodes[mesh.triangles[tri]]
    e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    r = pts - P[:, 0]
    l1 = (r[:, 0] * e2[:, 1] - r[:, 1] * e2[:, 0]) / det
    l2 = (e1[:, 0] * r[:, 1] - e1[:, 1] * r[:, 0]) / det
    return np.column_stack([1 - l1 - l2, l1, l2])


def eval_at_rule(mesh, field, pts, tri) -> np.ndarray:
    """Values of a nodal P1 field at quadrature points with known triangles."""
    lam = barycentric_many(mesh, pts, tri)
    return np.sum(lam * field[mesh.triangles[tri]], axis=1)


def grad_at_tri(mesh, field) -> np.ndarray:
    """Elementwise constant gradient of a P1 field, ``(M, 2)``."""
    _, grad = element_geometry(mesh)
    return np.einsum("ti,tid->td", field[mesh.triangles], grad)


class Locator:
    """Find the triangle containing each query point."""

    def __init__(self, mesh, k: int = 12):
        self.mesh = mesh
        self.k = min(k, len(mesh.triangles))
        self.cent = mesh.nodes[mesh.triangles].mean(1)
        self.tree = cKDTree(self.cent)

    def locate(self, pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        _, cand = self.tree.query(pts, k=self.k)
        cand = cand.reshape(len(pts), -1)
        tri = np.full(len(pts), -1)
        best = np.full(len(pts), -np.inf)
        for c in range(cand.shape[1]):
            lam = barycentric_many(self.mesh, pts, cand[:, c])
            mn = lam.min(1)
            upd = mn > best
            best[upd] = mn[upd]
            tri[upd] = cand[upd, c]
        # points slightly outside the polygon (on the true curve) keep the
        # least-violating candidate, i.e. linear extrapolation
        return tri

    def interpolate(self, field, pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        tri = self.locate(pts)
        lam = barycentric_many(self.mesh, pts, tri)
        return np.sum(lam * field[self.mesh.triangles[tri]], axis=1)

    def gradient(self, field, pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        tri = self.locate(pts)
        return grad_at_tri(self.mesh, field)[tri]


class Factorized:
    """Sparse LU of a fixed matrix, reused across right-hand sides."""

    def __init__(self, A):
        A = sps.csc_matrix(A)
        try:
            self.lu = spla.splu(A)
        except RuntimeError as exc:  # exactly singular
            raise SolveError(f"singular system: {exc}") from exc
        self.shape = A.shape

    def solve(self, b):
        x = self.lu.solve(np.asarray(b, float))
        if not np.all(np.isfinite(x)):
            raise SolveError("non-finite solution")
        return x
