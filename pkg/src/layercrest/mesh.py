"""Graded conforming triangulations of a :class:`Domain2D`.

Meshing itself is delegated to Shewchuk's Triangle (``triangle`` package);
this module places boundary vertices on the exact curve according to a size
field and drives area-constrained refinement until the size field is met.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import triangle as tr

from .geometry import Domain2D, TWO_PI


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """P1 triangulation.

    Attributes
    ----------
    nodes : (N, 2) array
    triangles : (M, 3) int array, counter-clockwise
    boundary_edges : (B, 2) int array, ordered so the domain lies to the left
    boundary_param : (N,) array
        Curve parameter of each boundary node, ``nan`` for interior nodes.
    grading : list of (point, size)
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_param: np.ndarray
    grading: tuple = ()
    h: float = 0.0
    domain: Domain2D | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def min_angle(self) -> float:
        """Smallest interior angle in degrees."""
        p = self.nodes[self.triangles]
        ang = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            c = np.sum(u * v, 1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            ang.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
        return float(np.min(ang))

    def edge_lengths(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return np.stack(
            [np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3)], 1
        )

    def incident_edge_min(self, point) -> float:
        """Shortest edge touching the node closest to ``point``."""
        i = int(np.argmin(np.sum((self.nodes - point) ** 2, 1)))
        tri = self.triangles[np.any(self.triangles == i, axis=1)]
        lens = [
            np.linalg.norm(self.nodes[j] - self.nodes[i]) for j in np.unique(tri) if j != i
        ]
        return float(min(lens))

    def scaled(self, center, factor: float) -> "Mesh":
        """Copy with nodes mapped to ``(x - center) * factor`` (topology kept)."""
        return Mesh(
            (self.nodes - np.asarray(center)) * factor,
            self.triangles,
            self.boundary_edges,
            self.boundary_param,
            self.grading,
            self.h * factor,
            None,
        )

    def export(self, path) -> None:
        """Write the plain-text node/element format (0-based indices)."""
        with open(path, "w") as fh:
            fh.write(
                f"nodes {len(self.nodes)} elements {len(self.triangles)} "
                f"boundary {len(self.boundary_edges)}\n"
            )
            for x, y in self.nodes:
                fh.write(f"{float(x)!r} {float(y)!r}\n")
            for a, b, c in self.triangles:
                fh.write(f"{a} {b} {c}\n")
            for a, b in self.boundary_edges:
                fh.write(f"{a} {b}\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        head = fh.readline().split()
        n, m, b = int(head[1]), int(head[3]), int(head[5])
        rows = [fh.readline().split() for _ in range(n + m + b)]
    nodes = np.array(rows[:n], float)
    tris = np.array(rows[n:n + m], int)
    bedges = np.array(rows[n + m:], int).reshape(-1, 2)
    return Mesh(nodes, tris, bedges, np.full(n, np.nan))


def size_field(h: float, grading, grade: float = 0.3):
    """``x -> min(h, min_k s_k + grade * |x - p_k|)``."""
    cen = np.array([g[0] for g in grading], float).reshape(-1, 2)
    siz = np.array([g[1] for g in grading], float)

    def f(x):
        x = np.atleast_2d(x)
        out = np.full(len(x), h)
        for p, s in zip(cen, siz):
            out = np.minimum(out, s + grade * np.linalg.norm(x - p, axis=1))
        return out

    return f


def _boundary_params(dom: Domain2D, hf, grading):
    # march along arc length with the local size; then snap boundary grading
    # centers onto the nearest sample
    s, out = 0.0, [0.0]
    L = dom.length
    while True:
        t = dom.param_at_arclength(s)[0]
        step = float(hf(dom.point(t))[0])
        # look ahead so a step never overshoots a finer region
        t2 = dom.param_at_arclength(s + step)[0]
        step = min(step, float(hf(dom.point(t2))[0]))
        if s + 1.5 * step >= L:
            break
        s += step
        out.append(s)
    ss = np.array(out)
    # stretch uniformly so the closing gap matches its neighbour
    ss = ss * L / (ss[-1] + step)
    t = dom.param_at_arclength(ss)
    for p, _ in grading:
        d, _foot = _dist(dom, p)
        if d < 1e-9 * dom.diam:
            tp = dom.foot(p)
            gap = np.abs(np.angle(np.exp(1j * (t - tp)))) * dom.speed(tp)
            keep = gap > 0.6 * float(hf(dom.point(tp))[0])
            t = np.r_[t[keep], tp]
    return np.sort(np.mod(t, TWO_PI))


def _dist(dom, p):
    from .geometry import dist_to_boundary

    return dist_to_boundary(dom, np.asarray(p, float))


def generate_mesh(
    dom: Domain2D,
    h: float,
    grading=(),
    min_angle: float = 30.0,
    grade: float = 0.3,
    max_rounds: int = 30,
) -> Mesh:
    """Triangulate ``dom`` with target size ``h`` and graded refinement.

    Parameters
    ----------
    dom : Domain2D
    h : float
        Background edge length.
    grading : sequence of (point, size)
        Local sizes at refinement centers; centers become mesh vertices.
    min_angle : float
        Quality bound passed to Triangle (degrees).
    """
    grading = tuple((tuple(np.asarray(p, float)), float(s)) for p, s in grading)
    if h <= 0:
        raise MeshError("mesh size must be positive")
    floor = 1e-6 * dom.diam
    for p, s in grading:
        if s < floor:
            raise MeshError(f"grading size {s:.3g} below the hard floor {floor:.3g}")
        if s >= h:
            raise MeshError("grading sizes must be smaller than h")
    hf = size_field(h, grading, grade)
    tb = _boundary_params(dom, hf, grading)
    bpts = dom.point(tb)
    nb = len(bpts)
    segs = np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb])
    verts = [bpts]
    for p, s in grading:
        d, _ = _dist(dom, p)
        if d > 1e-9 * dom.diam:
            if d < 0.5 * s:
                raise MeshError("interior grading center too close to the boundary")
            verts.append(np.asarray(p)[None, :])
    V = np.vstack(verts)
    mesh = tr.triangulate({"vertices": V, "segments": segs}, f"pq{min_angle:g}Q")
    for _ in range(max_rounds):
        P, T = mesh["vertices"], mesh["triangles"]
        target = np.sqrt(3) / 4 * hf(P[T].mean(1)) ** 2
        area = _areas(P, T)
        if np.all(area <= 1.5 * target):
            break
        mesh["triangle_max_area"] = np.minimum(area, target)
        mesh = tr.triangulate(mesh, f"rpq{min_angle:g}Qa")
    else:
        raise MeshError("mesh refinement did not converge")
    P, T = mesh["vertices"].copy(), mesh["triangles"].astype(np.int64)
    if np.any(_areas(P, T) <= 0):
        T = T[:, [0, 2, 1]]
    bedges = _boundary_edges(T)
    # Triangle may split boundary segments; move those Steiner points onto the curve
    bparam = np.full(len(P), np.nan)
    bparam[:nb] = tb
    for i in np.unique(bedges):
        if i >= nb:
            bparam[i] = dom.foot(P[i])
            P[i] = dom.point(bparam[i])
    if np.any(_areas(P, T) <= 0):
        raise MeshError("boundary snapping inverted an element; reduce h")
    return Mesh(P, T, bedges, bparam, grading, float(h), dom)


def _areas(P, T):
    a, b, c = P[T[:, 0]], P[T[:, 1]], P[T[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _boundary_edges(T: np.ndarray) -> np.ndarray:
    """Edges used by a single triangle, oriented as in that triangle."""
    e = np.vstack([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
    key = np.sort(e, 1)
    _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return e[cnt[inv.ravel()] == 1]


def rectangle_mesh(x0, x1, y0, y1, nx: int, ny: int) -> Mesh:
    """Structured criss-cross-free right-triangle mesh of a rectangle."""
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange(P.shape[0]).reshape(nx + 1, ny + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    T = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return Mesh(P, T, _boundary_edges(T), np.full(len(P), np.nan), (), float(max(np.diff(xs)[0], np.diff(ys)[0])))
