"""Proximity-based mesh conditioning: ball-pivoting surface reconstruction,
ray-cast mesh rasterization, and back-facing normal filtering.

The ball-pivoting property enforced here: every emitted face has a
circumscribing ball of one of the given radii that touches its three
vertices and contains no other cloud point strictly inside.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import CameraPose, PointCloud, Pointmap

_DEGENERATE_AREA = 1e-12


@dataclass
class TriMesh:
    """Indexed triangle mesh with per-vertex color and per-face normal."""

    vertices: np.ndarray  # Nx3
    vertex_colors: np.ndarray  # Nx3 in [0,1]
    faces: np.ndarray  # Fx3 int
    face_normals: np.ndarray  # Fx3 unit vectors

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.vertex_colors = np.asarray(self.vertex_colors, dtype=np.float64).reshape(
            -1, 3
        )
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        self.face_normals = np.asarray(self.face_normals, dtype=np.float64).reshape(
            -1, 3
        )
        if len(self.vertex_colors) != len(self.vertices):
            raise ValueError("vertex color count mismatch")
        if len(self.face_normals) != len(self.faces):
            raise ValueError("face normal count mismatch")
        if self.faces.size and (
            self.faces.min() < 0 or self.faces.max() >= len(self.vertices)
        ):
            raise ValueError("face index out of range")

    @property
    def num_faces(self) -> int:
        return len(self.faces)


@dataclass
class MeshRender:
    """Per-pixel mesh rasterization: pointmap, depth, face normals, mask."""

    pointmap: Pointmap
    depth: np.ndarray  # HxW camera-frame depth, 0 where masked out
    normals: np.ndarray  # HxWx3, zero sentinel where masked out
    mask: np.ndarray  # HxW in {0,1}

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.normals = np.asarray(self.normals, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.uint8)
        if not np.array_equal(self.mask == 1, self.depth > 0):
            raise ValueError("mask and positive depth disagree")
        if np.any(self.normals[self.mask == 0] != 0):
            raise ValueError("normals at masked-out pixels must be zero")


# ---------------------------------------------------------------------------
# Ball pivoting
# ---------------------------------------------------------------------------

def estimate_radii(cloud: PointCloud) -> list[float]:
    """{1x, 2x, 4x} the median nearest-neighbor distance."""
    if len(cloud) < 2:
        raise ValueError("need at least two points")
    tree = cKDTree(cloud.positions)
    dists, _ = tree.query(cloud.positions, k=2)
    median = float(np.median(dists[:, 1]))
    return [median, 2.0 * median, 4.0 * median]


def _circumcircle(p0, p1, p2):
    """Circumcenter, circumradius, and unit normal of a triangle.

    Returns None for (near-)degenerate triangles. Scalar math: this sits in
    the pivoting hot loop where np.cross overhead dominates.
    """
    a0 = p1[0] - p0[0]
    a1 = p1[1] - p0[1]
    a2 = p1[2] - p0[2]
    b0 = p2[0] - p0[0]
    b1 = p2[1] - p0[1]
    b2 = p2[2] - p0[2]
    n0 = a1 * b2 - a2 * b1
    n1 = a2 * b0 - a0 * b2
    n2 = a0 * b1 - a1 * b0
    nn = n0 * n0 + n1 * n1 + n2 * n2
    if 0.5 * np.sqrt(nn) <= _DEGENERATE_AREA:
        return None
    aa = a0 * a0 + a1 * a1 + a2 * a2
    bb = b0 * b0 + b1 * b1 + b2 * b2
    # aa * (b x n) + bb * (n x a), over 2|n|^2
    c0 = (aa * (b1 * n2 - b2 * n1) + bb * (n1 * a2 - n2 * a1)) / (2.0 * nn)
    c1 = (aa * (b2 * n0 - b0 * n2) + bb * (n2 * a0 - n0 * a2)) / (2.0 * nn)
    c2 = (aa * (b0 * n1 - b1 * n0) + bb * (n0 * a1 - n1 * a0)) / (2.0 * nn)
    radius = float(np.sqrt(c0 * c0 + c1 * c1 + c2 * c2))
    center = np.array([p0[0] + c0, p0[1] + c1, p0[2] + c2])
    inv_len = 1.0 / np.sqrt(nn)
    normal = np.array([n0 * inv_len, n1 * inv_len, n2 * inv_len])
    return center, radius, normal


def _ball_centers(p0, p1, p2, radius):
    """Centers of the two radius-r balls touching all three points."""
    cc = _circumcircle(p0, p1, p2)
    if cc is None:
        return []
    center, circumradius, normal = cc
    if circumradius > radius * (1.0 + 1e-12):
        return []
    h = np.sqrt(max(radius * radius - circumradius * circumradius, 0.0))
    if h == 0.0:
        return [center]
    return [center + h * normal, center - h * normal]


class _Pivoter:
    """Front-based ball pivoting over a fixed point set."""

    def __init__(self, points: np.ndarray):
        self.points = points
        self.tree = cKDTree(points)
        self.faces: list[tuple[int, int, int]] = []
        self.face_keys: set[frozenset] = set()
        self.edge_count: dict[tuple[int, int], int] = {}
        self.front: deque = deque()
        self.used_vertices: set[int] = set()
        self._seed_rejected: set[frozenset] = set()  # per-radius geometric failures

    def _edge_key(self, a, b):
        return (a, b) if a < b else (b, a)

    def _ball_empty(self, center, radius, exclude):
        inside = self.tree.query_ball_point(center, radius * (1.0 - 1e-9))
        if len(inside) > len(exclude):
            return False
        return all(i in exclude for i in inside)

    def _add_face(self, tri, center, radius):
        a, b, c = tri
        self.faces.append(tri)
        self.face_keys.add(frozenset(tri))
        self.used_vertices.update(tri)
        for e in ((a, b), (b, c), (c, a)):
            key = self._edge_key(*e)
            count = self.edge_count.get(key, 0) + 1
            self.edge_count[key] = count
            if count == 1:
                opp = ({a, b, c} - set(e)).pop()
                self.front.append((key, opp, center, radius))

    def _pivot(self, edge, opp, center_prev, radius):
        a, b = edge
        pa, pb = self.points[a], self.points[b]
        mid = 0.5 * (pa + pb)
        axis = pb - pa
        axis_norm = np.linalg.norm(axis)
        if axis_norm == 0:
            return None
        axis = axis / axis_norm
        u_prev = center_prev - mid
        u_prev = u_prev - (u_prev @ axis) * axis
        if u_prev @ u_prev < 1e-24:
            return None
        ux, uy, uz = u_prev
        kx, ky, kz = axis
        candidates = self.tree.query_ball_point(mid, 2.0 * radius)
        best = None
        for p in candidates:
            if p == a or p == b or p == opp:
                continue
            if frozenset((a, b, p)) in self.face_keys:
                continue
            if self.edge_count.get(self._edge_key(a, p), 0) >= 2:
                continue
            if self.edge_count.get(self._edge_key(b, p), 0) >= 2:
                continue
            for center in _ball_centers(pa, pb, self.points[p], radius):
                if not self._ball_empty(center, radius, (a, b, p)):
                    continue
                w = center - mid
                w = w - (w @ axis) * axis
                wx, wy, wz = w
                if wx * wx + wy * wy + wz * wz < 1e-24:
                    continue
                cross_axis = (
                    (uy * wz - uz * wy) * kx
                    + (uz * wx - ux * wz) * ky
                    + (ux * wy - uy * wx) * kz
                )
                angle = np.arctan2(cross_axis, ux * wx + uy * wy + uz * wz)
                angle = angle % (2.0 * np.pi)
                if angle < 1e-12:
                    angle = 2.0 * np.pi
                if best is None or angle < best[0]:
                    best = (angle, p, center)
        return best

    def _find_seed(self, radius):
        # Seed only in still-unmeshed regions; meshed regions are grown by
        # pivoting. Triples failing the geometric tests are cached per
        # radius since emptiness does not depend on mesh state.
        for i in range(len(self.points)):
            if i in self.used_vertices:
                continue
            neighbors = sorted(
                self.tree.query_ball_point(self.points[i], 2.0 * radius)
            )
            for j in neighbors:
                if j == i or j in self.used_vertices:
                    continue
                for k in neighbors:
                    if k <= j or k == i or k in self.used_vertices:
                        continue
                    key = frozenset((i, j, k))
                    if key in self._seed_rejected:
                        continue
                    found = None
                    for center in _ball_centers(
                        self.points[i], self.points[j], self.points[k], radius
                    ):
                        if self._ball_empty(center, radius, {i, j, k}):
                            found = center
                            break
                    if found is None:
                        self._seed_rejected.add(key)
                        continue
                    return (i, j, k), found
        return None

    def run(self, radii):
        for radius in radii:
            deferred = []
            self._seed_rejected.clear()
            while True:
                while self.front:
                    edge, opp, center, r_created = self.front.popleft()
                    if self.edge_count.get(edge, 0) >= 2:
                        continue
                    if r_created < radius:
                        # Boundary edge from an earlier pass: restart the
                        # sweep from the adjacent face's ball at this radius.
                        a, b = edge
                        centers = _ball_centers(
                            self.points[a], self.points[b], self.points[opp], radius
                        )
                        if not centers:
                            continue
                        empty = [
                            c
                            for c in centers
                            if self._ball_empty(c, radius, {a, b, opp})
                        ]
                        center = empty[0] if empty else centers[0]
                    hit = self._pivot(edge, opp, center, radius)
                    if hit is None:
                        # Geometric boundary at this radius; pivot failure
                        # is permanent for this ball size, retry larger.
                        deferred.append((edge, opp, center, r_created))
                        continue
                    _, p, new_center = hit
                    a, b = edge
                    self._add_face((a, b, p), new_center, radius)
                seed = self._find_seed(radius)
                if seed is None:
                    break
                tri, center = seed
                self._add_face(tri, center, radius)
            self.front.extend(deferred)
        return self.faces


def ball_pivot(
    cloud: PointCloud, radii: list[float], orient_toward: np.ndarray | None = None
) -> TriMesh:
    """Ball-pivoting surface reconstruction over an ascending radius schedule.

    Fewer than three points, or no valid empty-ball triangle (e.g. collinear
    input), yields an empty mesh. Face normals are flipped, when
    orient_toward is given, to face that world point.
    """
    if list(radii) != sorted(radii) or any(r <= 0 for r in radii):
        raise ValueError("radii must be positive and ascending")
    positions = cloud.positions
    colors = cloud.colors if cloud.colors is not None else np.ones_like(positions)
    if len(positions) < 3:
        return TriMesh(positions, colors, np.zeros((0, 3), int), np.zeros((0, 3)))

    faces = _Pivoter(positions).run(list(radii))
    kept_faces = []
    normals = []
    for tri in faces:
        p0, p1, p2 = positions[list(tri)]
        n = np.cross(p1 - p0, p2 - p0)
        area = 0.5 * np.linalg.norm(n)
        if area <= _DEGENERATE_AREA:
            continue
        n = n / np.linalg.norm(n)
        tri = list(tri)
        if orient_toward is not None:
            centroid = (p0 + p1 + p2) / 3.0
            if n @ (np.asarray(orient_toward, dtype=np.float64) - centroid) < 0:
                n = -n
                tri = [tri[0], tri[2], tri[1]]
        kept_faces.append(tri)
        normals.append(n)
    if not kept_faces:
        return TriMesh(positions, colors, np.zeros((0, 3), int), np.zeros((0, 3)))
    return TriMesh(positions, colors, np.asarray(kept_faces), np.asarray(normals))


# ---------------------------------------------------------------------------
# Rasterization
# ---------------------------------------------------------------------------

def pixel_rays(camera: CameraPose, height: int, width: int):
    """World-space origin and per-pixel direction through each pixel center.

    Directions are scaled so the ray parameter t equals camera-frame depth.
    """
    v, u = np.mgrid[0:height, 0:width]
    d_cam = np.stack(
        [
            (u - camera.cx) / camera.fx,
            (v - camera.cy) / camera.fy,
            np.ones_like(u, dtype=np.float64),
        ],
        axis=-1,
    )
    dirs = d_cam @ camera.rotation  # R^T applied row-wise
    return camera.center, dirs


def rasterize_mesh(
    mesh: TriMesh, camera: CameraPose, height: int, width: int
) -> MeshRender:
    """Per-pixel nearest ray-triangle intersection (Moller-Trumbore).

    Each hit writes the world intersection point, interpolated vertex color,
    camera-frame depth, and the face normal.
    """
    origin, dirs = pixel_rays(camera, height, width)
    rays = dirs.reshape(-1, 3)
    n_rays = rays.shape[0]

    depth = np.full(n_rays, np.inf)
    points = np.zeros((n_rays, 3))
    colors = np.zeros((n_rays, 3))
    normals = np.zeros((n_rays, 3))

    eps = 1e-12
    for f in range(mesh.num_faces):
        i0, i1, i2 = mesh.faces[f]
        v0 = mesh.vertices[i0]
        e1 = mesh.vertices[i1] - v0
        e2 = mesh.vertices[i2] - v0
        pvec = np.cross(rays, e2)
        det = pvec @ e1
        ok = np.abs(det) > eps
        inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = origin - v0
        bu = (pvec @ tvec) * inv_det
        qvec = np.cross(tvec, e1)
        bv = (rays @ qvec) * inv_det
        t = (qvec @ e2) * inv_det
        hit = ok & (bu >= -1e-12) & (bv >= -1e-12) & (bu + bv <= 1 + 1e-12) & (t > 1e-9)
        closer = hit & (t < depth)
        if not closer.any():
            continue
        idx = np.nonzero(closer)[0]
        tc = t[idx]
        depth[idx] = tc
        points[idx] = origin + tc[:, None] * rays[idx]
        w0 = 1.0 - bu[idx] - bv[idx]
        colors[idx] = (
            w0[:, None] * mesh.vertex_colors[i0]
            + bu[idx, None] * mesh.vertex_colors[i1]
            + bv[idx, None] * mesh.vertex_colors[i2]
        )
        normals[idx] = mesh.face_normals[f]

    mask = np.isfinite(depth).astype(np.uint8)
    depth = np.where(mask == 1, depth, 0.0)
    pointmap = Pointmap(
        points.reshape(height, width, 3),
        mask.reshape(height, width),
        colors.reshape(height, width, 3),
    )
    return MeshRender(
        pointmap,
        depth.reshape(height, width),
        normals.reshape(height, width, 3),
        mask.reshape(height, width),
    )


def normal_mask(render: MeshRender, camera: CameraPose) -> np.ndarray:
    """Keep pixels whose surface faces the camera: dot(normal, ray) < 0.

    A deviation of exactly 90 degrees (dot == 0) is masked out. The result
    is conjoined with the render's own mask.
    """
    h, w = render.mask.shape
    _, dirs = pixel_rays(camera, h, w)
    dots = np.einsum("hwc,hwc->hw", render.normals, dirs)
    return ((render.mask == 1) & (dots < 0)).astype(np.uint8)
