"""Pinhole cameras, pointmap merging, z-buffered projection, and the
extrapolative/interpolative view classifier.

Conventions: world-to-camera transform maps world points p to camera-frame
points R p + t with +z in front of the camera; pixel coordinates are
(column u, row v) with u = fx*x/z + cx, rounded half-up to the nearest
integer pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

EXTRAPOLATIVE = "Extrapolative"
INTERPOLATIVE = "Interpolative"


@dataclass(frozen=True)
class CameraPose:
    """4x4 rigid world-to-camera transform plus pinhole intrinsics."""

    world_to_camera: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        mat = np.asarray(self.world_to_camera, dtype=np.float64)
        if mat.shape != (4, 4):
            raise ValueError("world_to_camera must be 4x4")
        R = mat[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6):
            raise ValueError("rotation block is not orthonormal")
        if np.linalg.det(R) < 0:
            raise ValueError("rotation block has negative determinant")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not np.all(np.isfinite(mat)):
            raise ValueError("non-finite camera matrix")
        object.__setattr__(self, "world_to_camera", mat)

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates, -R^T t."""
        return -self.rotation.T @ self.translation

    def world_to_cam_points(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def cam_to_world_points(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.translation) @ self.rotation


@dataclass
class Pointmap:
    """HxW grid of 3D world coordinates with a validity mask.

    Invalid pixels hold the (0,0,0) sentinel.
    """

    points: np.ndarray  # HxWx3
    valid: np.ndarray  # HxW in {0,1}
    colors: np.ndarray | None = None  # HxWx3 in [0,1]

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=np.uint8)
        if self.points.ndim != 3 or self.points.shape[2] != 3:
            raise ValueError("points must be HxWx3")
        if self.valid.shape != self.points.shape[:2]:
            raise ValueError("valid mask shape mismatch")
        if not np.all((self.valid == 0) | (self.valid == 1)):
            raise ValueError("valid mask is not two-valued")
        if not np.all(np.isfinite(self.points[self.valid == 1])):
            raise ValueError("valid points must be finite")
        self.points = self.points.copy()
        self.points[self.valid == 0] = 0.0
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64)
            if self.colors.shape != self.points.shape:
                raise ValueError("colors shape mismatch")

    @property
    def height(self) -> int:
        return self.points.shape[0]

    @property
    def width(self) -> int:
        return self.points.shape[1]


@dataclass
class PointCloud:
    """Unordered set of 3D world points with optional parallel colors."""

    positions: np.ndarray  # Nx3
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != len(self.positions):
                raise ValueError("colors and positions length mismatch")

    def __len__(self) -> int:
        return len(self.positions)


@dataclass
class ViewClass:
    """Classification of a target camera against the reference hull."""

    label: str
    witness: np.ndarray | None = field(default=None)

    @property
    def is_extrapolative(self) -> bool:
        return self.label == EXTRAPOLATIVE


def merge_pointmaps(pointmaps: list[Pointmap]) -> PointCloud:
    """Union the valid points of all maps, in input order, no deduplication."""
    if not pointmaps:
        raise ValueError("need at least one pointmap")
    positions, colors = [], []
    any_colors = any(pm.colors is not None for pm in pointmaps)
    for pm in pointmaps:
        sel = pm.valid == 1
        positions.append(pm.points[sel])
        if any_colors:
            if pm.colors is None:
                colors.append(np.zeros((int(sel.sum()), 3)))
            else:
                colors.append(pm.colors[sel])
    positions = np.concatenate(positions, axis=0) if positions else np.zeros((0, 3))
    merged_colors = np.concatenate(colors, axis=0) if any_colors else None
    return PointCloud(positions, merged_colors)


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5).astype(np.int64)


def project_points(
    cloud: PointCloud, camera: CameraPose, height: int, width: int
) -> Pointmap:
    """Render the cloud into the camera with a minimum-depth z-buffer.

    Each point with camera-frame depth z > 0 landing inside the grid writes
    its world coordinate (and color) at its rounded pixel; z-ties are broken
    first-writer-wins in input order. Points behind the camera or off-grid
    are dropped.
    """
    if height < 1 or width < 1:
        raise ValueError("grid must be at least 1x1")
    points = np.zeros((height, width, 3), dtype=np.float64)
    valid = np.zeros((height, width), dtype=np.uint8)
    colors = (
        np.zeros((height, width, 3), dtype=np.float64)
        if cloud.colors is not None
        else None
    )
    if len(cloud) == 0:
        return Pointmap(points, valid, colors)

    cam_pts = camera.world_to_cam_points(cloud.positions)
    z = cam_pts[:, 2]
    front = z > 0
    idx = np.nonzero(front)[0]
    if idx.size == 0:
        return Pointmap(points, valid, colors)
    zf = z[idx]
    u = _round_half_up(camera.fx * cam_pts[idx, 0] / zf + camera.cx)
    v = _round_half_up(camera.fy * cam_pts[idx, 1] / zf + camera.cy)
    inside = (u >= 0) & (u < width) & (v >= 0) & (v < height)
    idx, u, v, zf = idx[inside], u[inside], v[inside], zf[inside]
    if idx.size == 0:
        return Pointmap(points, valid, colors)

    pix = v * width + u
    # Sort by pixel, then depth, then original index: the first entry of
    # each pixel run is the z-buffer winner with first-writer tie breaking.
    order = np.lexsort((idx, zf, pix))
    pix_sorted = pix[order]
    firsts = np.ones(len(order), dtype=bool)
    firsts[1:] = pix_sorted[1:] != pix_sorted[:-1]
    winners = idx[order[firsts]]
    win_u = u[order[firsts]]
    win_v = v[order[firsts]]
    points[win_v, win_u] = cloud.positions[winners]
    valid[win_v, win_u] = 1
    if colors is not None:
        colors[win_v, win_u] = cloud.colors[winners]
    return Pointmap(points, valid, colors)


def to_camera_space(pointmap: Pointmap, camera: CameraPose) -> Pointmap:
    """Replace every valid point p by R p + t; mask and colors unchanged."""
    out = pointmap.points.copy()
    sel = pointmap.valid == 1
    out[sel] = camera.world_to_cam_points(pointmap.points[sel])
    colors = None if pointmap.colors is None else pointmap.colors.copy()
    return Pointmap(out, pointmap.valid.copy(), colors)


def classify_view(
    target: CameraPose, references: list[CameraPose], tol: float = 1e-6
) -> ViewClass:
    """Interpolative iff the target camera center is a convex combination of
    the reference centers, within tol relative to the bounding-box diagonal.
    Hull-boundary targets classify as Interpolative.
    """
    if not references:
        raise ValueError("need at least one reference camera")
    refs = np.stack([cam.center for cam in references])
    tgt = target.center
    allpos = np.vstack([refs, tgt[None]])
    diag = float(np.linalg.norm(allpos.max(axis=0) - allpos.min(axis=0)))
    scale = max(diag, 1.0)
    # Non-negative least squares on the homogenized system [refs^T; 1] a = [t; 1]
    # finds the best convex combination; a near-zero residual means membership.
    A = np.vstack([refs.T / scale, np.ones((1, len(refs)))])
    b = np.concatenate([tgt / scale, [1.0]])
    alpha, residual = nnls(A, b)
    if residual <= tol:
        alpha = np.clip(alpha, 0.0, None)
        s = alpha.sum()
        if s > 0:
            alpha = alpha / s
        return ViewClass(INTERPOLATIVE, witness=alpha)
    return ViewClass(EXTRAPOLATIVE)
