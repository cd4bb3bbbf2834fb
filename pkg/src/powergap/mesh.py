"""Interface- and inclusion-conforming triangulation of a scene.

Nodes are placed exactly on the outer boundary, the interface and the
inclusion boundary (with shared nodes at curve crossings), a hexagonal
lattice fills the interior with a clearance band around every curve, and a
Delaunay triangulation of the node set then conforms to the discretized
curves. Component and inclusion tags are assigned per element from the
centroid, so every triangle carries a single coefficient value.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import CoverageError, MeshingError
from .geometry import Circle, as_points, polyline_min_distance

__all__ = ["Mesh", "build_mesh"]


def circle_circle_intersections(c1: Circle, c2: Circle) -> np.ndarray:
    p1, p2 = np.asarray(c1.center, float), np.asarray(c2.center, float)
    d = float(np.linalg.norm(p2 - p1))
    r1, r2 = c1.radius, c2.radius
    if d <= 1e-14 or d >= r1 + r2 or d <= abs(r1 - r2):
        return np.empty((0, 2))
    a = (d * d + r1 * r1 - r2 * r2) / (2.0 * d)
    h2 = r1 * r1 - a * a
    if h2 <= 0:
        return np.empty((0, 2))
    h = math.sqrt(h2)
    u = (p2 - p1) / d
    mid = p1 + a * u
    perp = np.array([-u[1], u[0]])
    return np.vstack([mid + h * perp, mid - h * perp])


def _generic_intersections(curve_a, curve_b, n: int = 2048) -> np.ndarray:
    """Crossing points via sign changes of curve_a membership along curve_b."""
    poly = curve_b.polyline(n)
    inside = curve_a.contains(poly)
    flips = np.nonzero(inside != np.roll(inside, -1))[0]
    pts = []
    for i in flips:
        a, b = poly[i], poly[(i + 1) % n]
        fa = curve_a.signed_distance(a)[0]
        for _ in range(60):
            m = 0.5 * (a + b)
            fm = curve_a.signed_distance(m)[0]
            if fa * fm <= 0:
                b = m
            else:
                a, fa = m, fm
        pts.append(0.5 * (a + b))
    return np.asarray(pts) if pts else np.empty((0, 2))


def curve_intersections(curve_a, curve_b) -> np.ndarray:
    if isinstance(curve_a, Circle) and isinstance(curve_b, Circle):
        return circle_circle_intersections(curve_a, curve_b)
    return _generic_intersections(curve_a, curve_b)


def _param_of(curve, points) -> np.ndarray:
    """Parameter t in [0,1) of points assumed to lie on the curve."""
    p = as_points(points) - np.asarray(curve.center)
    if isinstance(curve, Circle):
        ang = np.arctan2(p[:, 1], p[:, 0])
    else:  # ellipse parametrization
        ang = np.arctan2(p[:, 1] / curve.b, p[:, 0] / curve.a)
    return np.mod(ang / (2.0 * np.pi), 1.0)


def _curve_nodes(curve, h: float, break_points: Optional[np.ndarray]) -> np.ndarray:
    """Nodes with spacing about h, forced to pass through the break points."""
    if break_points is None or len(break_points) == 0:
        return curve.nodes(h)
    ts = np.sort(_param_of(curve, break_points))
    out = []
    for k, t0 in enumerate(ts):
        t1 = ts[(k + 1) % len(ts)]
        span = (t1 - t0) % 1.0
        if span == 0.0:
            span = 1.0
        arc = span * curve.perimeter
        n = max(1, int(math.ceil(arc / h)))
        out.append(np.mod(t0 + span * np.arange(n) / n, 1.0))
    return curve.point_at(np.concatenate(out))


class Mesh:
    """Triangulation with per-element component and inclusion tags."""

    def __init__(self, points, triangles, comp, in_d, boundary_edges,
                 interface_edges, interface_tris, h, scene, delaunay,
                 diagnostics):
        self.points = points
        self.triangles = triangles
        self.comp = comp
        self.in_d = in_d
        self.boundary_edges = boundary_edges
        self.interface_edges = interface_edges
        self.interface_tris = interface_tris
        self.h = h
        self.scene = scene
        self.diagnostics = diagnostics
        self._tri = delaunay
        self._centroid_tree = None
        p = points[triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self.areas = 0.5 * np.abs(det)
        self.centroids = p.mean(axis=1)
        # P1 basis gradients: grad phi_i = rows of the inverse edge matrix
        inv_det = 1.0 / det
        g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) * inv_det[:, None]
        g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) * inv_det[:, None]
        g0 = -(g1 + g2)
        self.grads = np.stack([g0, g1, g2], axis=1)  # (m, 3, 2)

    @property
    def num_points(self) -> int:
        return len(self.points)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def edge_lengths(self) -> np.ndarray:
        p = self.points[self.triangles]
        return np.concatenate([
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1)])

    def min_angle_deg(self) -> float:
        p = self.points[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = (a * b).sum(axis=1) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return float(np.min(angles))

    def node_mass(self) -> np.ndarray:
        """Lumped volume weights: integral of each hat function."""
        m = np.zeros(self.num_points)
        np.add.at(m, self.triangles.ravel(),
                  np.repeat(self.areas / 3.0, 3))
        return m

    def locate(self, points) -> np.ndarray:
        """Element index per point; nearest element for boundary-band misses."""
        p = as_points(points)
        idx = self._tri.find_simplex(p)
        miss = idx < 0
        if miss.any():
            if self._centroid_tree is None:
                self._centroid_tree = cKDTree(self.centroids)
            dist, near = self._centroid_tree.query(p[miss])
            far = dist > 4.0 * self.h
            if far.any():
                raise CoverageError(
                    f"{int(far.sum())} points lie outside the meshed domain")
            idx = idx.copy()
            idx[miss] = near
        return idx

    def interpolate(self, nodal, points) -> np.ndarray:
        """P1 interpolation of nodal values at arbitrary points."""
        p = as_points(points)
        idx = self.locate(p)
        T = self._tri.transform[idx]
        b = np.einsum("nij,nj->ni", T[:, :2, :], p - T[:, 2, :])
        bary = np.column_stack([b, 1.0 - b.sum(axis=1)])
        vals = np.asarray(nodal)[self._tri.simplices[idx]]
        return (vals * bary).sum(axis=1)

    def gradient_per_element(self, nodal) -> np.ndarray:
        """Constant gradient of a P1 field on each element, shape (m, 2)."""
        vals = np.asarray(nodal)[self.triangles]
        return np.einsum("mi,mid->md", vals, self.grads)

    def gradient_at(self, nodal, points) -> np.ndarray:
        idx = self.locate(points)
        return self.gradient_per_element(nodal)[idx]

    def component_clusters(self) -> dict:
        """Connected element clusters per component tag (flood fill).

        A valid two-component scene yields exactly one cluster for each
        tag, i.e. the domain minus the interface has two pieces.
        """
        parent = np.arange(self.num_triangles)

        def find(i):
            root = i
            while parent[root] != root:
                root = parent[root]
            while parent[i] != root:
                parent[i], i = root, parent[i]
            return root

        nb = self._tri.neighbors
        for m in range(self.num_triangles):
            for k in range(3):
                n = nb[m, k]
                if n > m and self.comp[m] == self.comp[n]:
                    ra, rb = find(m), find(int(n))
                    if ra != rb:
                        parent[rb] = ra
        out = {}
        for tag in np.unique(self.comp):
            members = np.nonzero(self.comp == tag)[0]
            out[int(tag)] = len({find(int(i)) for i in members})
        return out

    def boundary_loop(self) -> np.ndarray:
        """Boundary node indices ordered counterclockwise."""
        nxt = {}
        for a, b in self.boundary_edges:
            nxt.setdefault(int(a), []).append(int(b))
            nxt.setdefault(int(b), []).append(int(a))
        start = int(self.boundary_edges[0, 0])
        loop = [start]
        prev = None
        while True:
            cands = [n for n in nxt[loop[-1]] if n != prev]
            prev = loop[-1]
            loop.append(cands[0])
            if loop[-1] == start:
                loop.pop()
                break
        pts = self.points[loop]
        nxt_pts = np.roll(pts, -1, axis=0)
        area2 = (pts[:, 0] * nxt_pts[:, 1] - pts[:, 1] * nxt_pts[:, 0]).sum()
        if area2 < 0:
            loop = loop[::-1]
        return np.asarray(loop, dtype=int)


def _hex_lattice(lo, hi, h: float) -> np.ndarray:
    dy = h * math.sqrt(3.0) / 2.0
    rows = []
    y = lo[1]
    j = 0
    while y <= hi[1]:
        off = 0.5 * h if j % 2 else 0.0
        xs = np.arange(lo[0] + off, hi[0] + h, h)
        rows.append(np.column_stack([xs, np.full(len(xs), y)]))
        y += dy
        j += 1
    return np.vstack(rows)


def build_mesh(scene, h: float, min_angle_deg: float = 5.0) -> Mesh:
    """Conforming triangulation of the scene at target resolution h."""
    if h <= 0:
        raise MeshingError("h must be positive")
    lo, hi = scene.outer.bbox()
    extent = float(min(hi - lo))
    if h > extent / 6.0:
        raise MeshingError(
            f"h = {h:.3g} too coarse for a domain of extent {extent:.3g}; "
            f"try h <= {extent / 12.0:.3g}")

    outer_nodes = scene.outer.nodes(h)
    curves = [("outer", scene.outer, outer_nodes)]

    sigma_nodes = np.empty((0, 2))
    if scene.interface is not None:
        breaks = None
        if scene.inclusion is not None:
            x = curve_intersections(scene.interface, scene.inclusion)
            breaks = x if len(x) else None
        sigma_nodes = _curve_nodes(scene.interface, h, breaks)
        curves.append(("interface", scene.interface, sigma_nodes))

    d_nodes = np.empty((0, 2))
    if scene.inclusion is not None:
        breaks = None
        if scene.interface is not None:
            x = curve_intersections(scene.interface, scene.inclusion)
            breaks = x if len(x) else None
        d_nodes = _curve_nodes(scene.inclusion, h, breaks)
        if scene.interface is not None:
            # drop inclusion nodes crowding the interface polyline, but keep
            # the shared crossing nodes (they exist in both node sets)
            dist = polyline_min_distance(d_nodes, sigma_nodes)
            on_sigma = dist < 1e-9 * extent
            keep = (dist > 0.4 * h) | on_sigma
            d_nodes = d_nodes[keep]
        curves.append(("inclusion", scene.inclusion, d_nodes))

    clearance = 0.55 * h
    lattice = _hex_lattice(lo - 0.5 * h, hi + 0.5 * h, h)
    inside = scene.outer.signed_distance(lattice) < -clearance
    lattice = lattice[inside]
    for _, curve, nodes in curves[1:]:
        if len(nodes):
            lattice = lattice[polyline_min_distance(lattice, nodes) > clearance]

    pts = np.vstack([outer_nodes, sigma_nodes, d_nodes, lattice])
    # dedupe exactly coincident nodes (shared crossing points)
    _, keep_idx = np.unique(np.round(pts / (1e-9 * max(extent, 1.0))),
                            axis=0, return_index=True)
    pts = pts[np.sort(keep_idx)]
    if len(pts) < 5:
        raise MeshingError("too few nodes; decrease h")

    tri = Delaunay(pts)
    triangles = tri.simplices
    centroids = pts[triangles].mean(axis=1)
    comp = scene.component(centroids)
    in_d = scene.in_inclusion(centroids)

    boundary_edges = tri.convex_hull.copy()

    interface_edges = []
    interface_tris = []
    if scene.interface is not None:
        nb = tri.neighbors
        for m in range(len(triangles)):
            for k in range(3):
                n = nb[m, k]
                if n <= m:
                    continue
                if comp[m] != comp[n]:
                    e = [triangles[m][(k + 1) % 3], triangles[m][(k + 2) % 3]]
                    interface_edges.append(e)
                    pair = (m, n) if comp[m] > 0 else (n, m)
                    interface_tris.append(pair)
    interface_edges = (np.asarray(interface_edges, dtype=int)
                       if interface_edges else np.empty((0, 2), dtype=int))
    interface_tris = (np.asarray(interface_tris, dtype=int)
                      if interface_tris else np.empty((0, 2), dtype=int))

    diagnostics = {}
    if scene.interface is not None and len(interface_edges):
        ends = pts[interface_edges.ravel()]
        diagnostics["interface_node_dist"] = float(
            np.abs(scene.interface.signed_distance(ends)).max())
        # count elements whose vertices strictly straddle the interface
        sd = scene.interface.signed_distance(pts)
        tol = 1e-7 * extent
        vmin = sd[triangles].min(axis=1)
        vmax = sd[triangles].max(axis=1)
        diagnostics["straddling_triangles"] = int(
            ((vmin < -tol) & (vmax > tol)).sum())

    mesh = Mesh(pts, triangles, comp, in_d, boundary_edges,
                interface_edges, interface_tris, h, scene, tri, diagnostics)
    clusters = mesh.component_clusters()
    diagnostics["component_clusters"] = clusters
    if any(v != 1 for v in clusters.values()):
        raise MeshingError(
            f"domain minus interface splits into {clusters} clusters; "
            "expected one per component")
    lens = mesh.edge_lengths()
    diagnostics["h_min"] = float(lens.min())
    diagnostics["h_max"] = float(lens.max())
    diagnostics["min_angle_deg"] = mesh.min_angle_deg()
    if diagnostics["min_angle_deg"] < min_angle_deg:
        diagnostics["quality_warning"] = (
            f"min angle {diagnostics['min_angle_deg']:.2f} deg below "
            f"{min_angle_deg} deg")
    return mesh
