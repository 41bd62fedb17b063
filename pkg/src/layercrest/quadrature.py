"""Triangle and boundary quadrature with local refinement near singular points.

A *focus* is a pair ``(point, scale)``.  ``scale = 0`` marks an integrable
point singularity (``ln r`` or ``1/r``); ``scale > 0`` marks a smooth peak of
width ``scale`` (a bubble core).  Triangles that are large compared with
their distance to a focus are subdivided recursively; triangles touching a
zero-scale focus are integrated with a Duffy (collapsed square) rule.
"""
from __future__ import annotations

import numpy as np

# 7-point degree-5 rule on the reference triangle (barycentric coordinates)
_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
DUNAVANT7_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_a1, _b1, _b1],
        [_b1, _a1, _b1],
        [_b1, _b1, _a1],
        [_a2, _b2, _b2],
        [_b2, _a2, _b2],
        [_b2, _b2, _a2],
    ]
)
# weights sum to one (multiply by the triangle area)
DUNAVANT7_W = np.array(
    [0.225, 0.132394152788506, 0.132394152788506, 0.132394152788506,
     0.125939180544827, 0.125939180544827, 0.125939180544827]
)

MAX_DEPTH = 7


def _area(P) -> float:
    return 0.5 * abs((P[1, 0] - P[0, 0]) * (P[2, 1] - P[0, 1]) - (P[1, 1] - P[0, 1]) * (P[2, 0] - P[0, 0]))


def dunavant(P):
    """Nodes and weights of the 7-point rule on triangle ``P`` (3x2)."""
    return DUNAVANT7_BARY @ P, DUNAVANT7_W * _area(P)


def duffy(P, n: int = 10):
    """Collapsed-square Gauss rule, exact for ``1/r`` singularities at ``P[0]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1), 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    u, v, wt = u.ravel(), v.ravel(), (wu * wv).ravel()
    pts = P[0] + u[:, None] * (P[1] - P[0]) + (u * v)[:, None] * (P[2] - P[1])
    return pts, wt * u * 2.0 * _area(P)


def point_triangle_distance(p, P) -> float:
    """Euclidean distance from ``p`` to the closed triangle ``P``."""
    p = np.asarray(p, float)
    l = barycentric(P, p)
    if np.all(l >= -1e-14):
        return 0.0
    best = np.inf
    for i in range(3):
        a, b = P[i], P[(i + 1) % 3]
        e = b - a
        s = np.clip(np.dot(p - a, e) / np.dot(e, e), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(p - a - s * e)))
    return best


def barycentric(P, p) -> np.ndarray:
    T = np.array([P[1] - P[0], P[2] - P[0]]).T
    l12 = np.linalg.solve(T, np.asarray(p, float) - P[0])
    return np.array([1.0 - l12.sum(), l12[0], l12[1]])


def _diam(P) -> float:
    return float(max(np.linalg.norm(P[1] - P[0]), np.linalg.norm(P[2] - P[1]), np.linalg.norm(P[0] - P[2])))


def refined_rule(P, foci, depth: int = 0, n_duffy: int = 10):
    """Adaptive rule on one triangle for integrands peaked at ``foci``."""
    P = np.asarray(P, float)
    diam = _diam(P)
    for p, scale in foci:
        p = np.asarray(p, float)
        d = point_triangle_distance(p, P)
        if diam <= 0.5 * max(d, scale):
            continue
        # focus on a vertex: Duffy handles a point singularity there directly
        vd = np.linalg.norm(P - p, axis=1)
        k = int(np.argmin(vd))
        if vd[k] <= 1e-12 * diam:
            if scale == 0 or depth >= MAX_DEPTH:
                Q = np.roll(P, -k, axis=0)
                return duffy(Q, n_duffy)
            return _split4(P, foci, depth, n_duffy)
        if d == 0.0:
            # focus interior to the triangle or on an edge: fan out from it
            pts, wts = [], []
            for i in range(3):
                Q = np.array([p, P[i], P[(i + 1) % 3]])
                if _area(Q) <= 1e-14 * diam * diam:
                    continue
                x, w = refined_rule(Q, foci, depth + 1, n_duffy)
                pts.append(x)
                wts.append(w)
            return np.vstack(pts), np.concatenate(wts)
        if depth >= MAX_DEPTH:
            break
        return _split4(P, foci, depth, n_duffy)
    return dunavant(P)


def _split4(P, foci, depth, n_duffy):
    m01, m12, m20 = 0.5 * (P[0] + P[1]), 0.5 * (P[1] + P[2]), 0.5 * (P[2] + P[0])
    subs = (
        np.array([P[0], m01, m20]),
        np.array([m01, P[1], m12]),
        np.array([m20, m12, P[2]]),
        np.array([m12, m20, m01]),
    )
    pts, wts = [], []
    for Q in subs:
        x, w = refined_rule(Q, foci, depth + 1, n_duffy)
        pts.append(x)
        wts.append(w)
    return np.vstack(pts), np.concatenate(wts)


def near_mask(nodes, triangles, foci, factor: float = 2.0) -> np.ndarray:
    """Triangles that may need refined quadrature for some focus."""
    P = nodes[triangles]
    diam = np.max(
        np.stack([np.linalg.norm(P[:, (k + 1) % 3] - P[:, k], axis=1) for k in range(3)], 1), 1
    )
    mask = np.zeros(len(triangles), bool)
    for p, scale in foci:
        dv = np.min(np.linalg.norm(P - np.asarray(p, float), axis=2), axis=1)
        # vertex distance overestimates the true distance by at most diam
        mask |= (dv - diam < factor * diam) & (diam > 0.5 * scale)
    return mask


def mesh_rule(mesh, foci=()):
    """Quadrature over the whole mesh.

    Returns
    -------
    pts : (Q, 2) array
    wts : (Q,) array
    tri : (Q,) int array
        Owning triangle of each point.
    """
    nodes, tris = mesh.nodes, mesh.triangles
    P = nodes[tris]
    foci = [(np.asarray(p, float), float(s)) for p, s in foci]
    near = near_mask(nodes, tris, foci) if foci else np.zeros(len(tris), bool)
    far = np.flatnonzero(~near)
    Pf = P[far]
    pts = np.einsum("qk,tkd->tqd", DUNAVANT7_BARY, Pf).reshape(-1, 2)
    area = np.abs(_areas(Pf))
    wts = (area[:, None] * DUNAVANT7_W[None, :]).ravel()
    tri = np.repeat(far, 7)
    xs, ws, ts = [pts], [wts], [tri]
    for t in np.flatnonzero(near):
        x, w = refined_rule(P[t], foci)
        xs.append(x)
        ws.append(w)
        ts.append(np.full(len(w), t))
    return np.vstack(xs), np.concatenate(ws), np.concatenate(ts)


def _areas(P):
    e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


# --------------------------------------------------------------------------
# boundary (curve) quadrature
# --------------------------------------------------------------------------


def boundary_rule(mesh, foci=(), n: int = 8, max_depth: int = 24):
    """Gauss rule on the exact boundary curve, edge by edge.

    Each boundary edge ``(i, j)`` of the mesh is mapped to the curve interval
    between the parameters of its end nodes; hat functions are linear in the
    curve parameter.

    Returns
    -------
    pts : (Q, 2) points on the curve
    wts : (Q,) arc-length weights
    idx : (Q, 2) node indices of the owning edge
    lam : (Q,) hat value of the first node of the owning edge
    tq : (Q,) curve parameters of the points
    """
    dom = mesh.domain
    gx, gw = np.polynomial.legendre.leggauss(n)
    foci = [(np.asarray(p, float), float(s)) for p, s in foci]
    out_t, out_w, out_e, out_l = [], [], [], []
    two_pi = 2 * np.pi
    for i, j in mesh.boundary_edges:
        ti, tj = mesh.boundary_param[i], mesh.boundary_param[j]
        dt = np.mod(tj - ti, two_pi)
        if dt > np.pi:  # edges run counter-clockwise with the curve
            dt -= two_pi
        # adaptive split into subintervals near foci
        stack = [(0.0, 1.0, 0)]
        while stack:
            a, b, dep = stack.pop()
            ta, tb = ti + a * dt, ti + b * dt
            pa, pb = dom.point(ta), dom.point(tb)
            length = float(np.linalg.norm(pb - pa))
            split = False
            if dep < max_depth:
                for p, s in foci:
                    # distance to the chord, a proxy for distance to the arc
                    e = pb - pa
                    u = np.clip(np.dot(p - pa, e) / max(np.dot(e, e), 1e-300), 0, 1)
                    dd = float(np.linalg.norm(p - pa - u * e))
                    if length > 0.5 * max(dd, s):
                        split = True
                        break
            if split:
                m = 0.5 * (a + b)
                stack.append((a, m, dep + 1))
                stack.append((m, b, dep + 1))
                continue
            lam = a + (b - a) * 0.5 * (gx + 1)
            tt = ti + lam * dt
            out_t.append(tt)
            out_w.append(0.5 * (b - a) * gw * abs(dt) * dom.speed(tt))
            out_e.append(np.tile([i, j], (n, 1)))
            out_l.append(1.0 - lam)
    tq = np.concatenate(out_t)
    return dom.point(tq), np.concatenate(out_w), np.vstack(out_e), np.concatenate(out_l), np.mod(tq, two_pi)
