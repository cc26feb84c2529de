"""Deterministic synthetic scenes with analytic ground truth.

Primitives (spheres, axis-aligned boxes, planar disks) are ray-cast
analytically with Lambert shading, producing exact per-pixel world
intersection points. Randomness is counter-based (splitmix64 keyed on
seed and entity index) so identical specs reproduce identical scenes on
any platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraPose, Pointmap
from .surface import pixel_rays

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1

BACKGROUND = np.array([0.05, 0.05, 0.08])
_LIGHT_DIR = np.array([0.4, -0.5, 0.76])
_LIGHT_DIR = _LIGHT_DIR / np.linalg.norm(_LIGHT_DIR)


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def rand01(seed: int, *indices: int) -> float:
    """Deterministic uniform in [0, 1) keyed on (seed, indices)."""
    state = seed & _MASK64
    for idx in indices:
        state = _splitmix64((state ^ (idx & _MASK64)) & _MASK64)
    return state / float(1 << 64)


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    primitive_count: int = 3
    extent: float = 1.0
    camera_count: int = 4
    height: int = 64
    width: int = 64
    ring_radius: float = 4.0
    elevation: float = 0.35  # radians above the ring plane
    backdrop: bool = True  # enclosing dome so every ray hits a surface

    def __post_init__(self):
        if self.primitive_count < 1 or self.camera_count < 1:
            raise ValueError("counts must be at least 1")
        if self.extent <= 0 or self.ring_radius <= 0:
            raise ValueError("extent and ring radius must be positive")
        if self.height < 1 or self.width < 1:
            raise ValueError("image dims must be at least 1")


class Sphere:
    def __init__(self, center, radius, color):
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)
        self.color = np.asarray(color, dtype=np.float64)

    def intersect(self, origin, dirs):
        oc = origin - self.center
        a = np.einsum("...c,...c->...", dirs, dirs)
        b = 2.0 * dirs @ oc
        c = oc @ oc - self.radius**2
        disc = b * b - 4 * a * c
        t = np.full(dirs.shape[:-1], np.inf)
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t0 = (-b - sq) / (2 * a)
        t1 = (-b + sq) / (2 * a)
        t = np.where(hit & (t0 > 1e-9), t0, np.where(hit & (t1 > 1e-9), t1, np.inf))
        normals = np.zeros_like(dirs)
        ok = np.isfinite(t)
        pts = origin + t[ok, None] * dirs[ok]
        normals[ok] = (pts - self.center) / self.radius
        return t, normals


class Box:
    def __init__(self, low, high, color):
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)
        self.color = np.asarray(color, dtype=np.float64)

    def intersect(self, origin, dirs):
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
        t_low = (self.low - origin) * inv
        t_high = (self.high - origin) * inv
        t_near = np.minimum(t_low, t_high)
        t_far = np.maximum(t_low, t_high)
        entry_axis = np.argmax(t_near, axis=-1)
        t_enter = np.max(t_near, axis=-1)
        t_exit = np.min(t_far, axis=-1)
        hit = (t_enter <= t_exit) & (t_exit > 1e-9)
        t = np.where(hit & (t_enter > 1e-9), t_enter, np.inf)
        normals = np.zeros_like(dirs)
        idx = np.nonzero(np.isfinite(t))
        axes = entry_axis[idx]
        d_sel = dirs[idx].reshape(-1, 3)
        rows = np.arange(len(axes))
        sel_normals = np.zeros((len(axes), 3))
        sel_normals[rows, axes] = -np.sign(d_sel[rows, axes])
        normals[idx] = sel_normals
        return t, normals


class Disk:
    def __init__(self, center, normal, radius, color):
        self.center = np.asarray(center, dtype=np.float64)
        self.normal = np.asarray(normal, dtype=np.float64)
        self.normal = self.normal / np.linalg.norm(self.normal)
        self.radius = float(radius)
        self.color = np.asarray(color, dtype=np.float64)

    def intersect(self, origin, dirs):
        denom = dirs @ self.normal
        num = (self.center - origin) @ self.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(denom) > 1e-12, num / denom, np.inf)
        finite = np.isfinite(t)
        pts = origin + np.where(finite, t, 0.0)[..., None] * dirs
        inside = finite & (np.linalg.norm(pts - self.center, axis=-1) <= self.radius)
        t = np.where((t > 1e-9) & inside, t, np.inf)
        normals = np.zeros_like(dirs)
        ok = np.isfinite(t)
        sign = np.sign(-denom)
        normals[ok] = self.normal * sign[ok][..., None]
        return t, normals


def look_at_camera(position, target, fx, fy, cx, cy) -> CameraPose:
    """Camera at position looking at target, +z forward, +y down."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward = forward / np.linalg.norm(forward)
    world_up = np.array([0.0, 0.0, 1.0])
    if abs(forward @ world_up) > 0.999:
        world_up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, world_up)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    mat = np.eye(4)
    mat[:3, :3] = R
    mat[:3, 3] = -R @ position
    return CameraPose(mat, fx, fy, cx, cy)


def generate_scene(spec: SceneSpec):
    """Deterministic primitives plus ring cameras looking at the origin."""
    primitives = []
    for i in range(spec.primitive_count):
        kind = i % 3
        u = [rand01(spec.seed, i, j) for j in range(8)]
        center = (np.array(u[:3]) - 0.5) * spec.extent
        color = 0.25 + 0.7 * np.array(u[3:6])
        size = spec.extent * (0.15 + 0.25 * u[6])
        if kind == 0:
            primitives.append(Sphere(center, size, color))
        elif kind == 1:
            half = size * (0.6 + 0.8 * np.array(u[:3]))
            primitives.append(Box(center - half, center + half, color))
        else:
            normal = np.array([u[7] - 0.5, u[3] - 0.5, 1.0])
            primitives.append(Disk(center, normal, 1.6 * size, color))
    if spec.backdrop:
        # Cameras sit inside this dome, so every pixel is backed by surface.
        primitives.append(
            Sphere(np.zeros(3), 2.0 * spec.ring_radius, np.array([0.55, 0.5, 0.45]))
        )

    fx = fy = 1.5 * max(spec.height, spec.width)
    cx = (spec.width - 1) / 2.0
    cy = (spec.height - 1) / 2.0
    cameras = []
    for k in range(spec.camera_count):
        angle = 2.0 * np.pi * k / spec.camera_count
        pos = np.array(
            [
                spec.ring_radius * np.cos(spec.elevation) * np.cos(angle),
                spec.ring_radius * np.cos(spec.elevation) * np.sin(angle),
                spec.ring_radius * np.sin(spec.elevation),
            ]
        )
        cameras.append(look_at_camera(pos, np.zeros(3), fx, fy, cx, cy))
    return primitives, cameras


def raycast(primitives, origin, dirs):
    """Nearest-hit t, normal, base color for a batch of rays."""
    shape = dirs.shape[:-1]
    best_t = np.full(shape, np.inf)
    normals = np.zeros(dirs.shape)
    colors = np.zeros(dirs.shape)
    for prim in primitives:
        t, n = prim.intersect(origin, dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        normals[closer] = n[closer]
        colors[closer] = prim.color
    return best_t, normals, colors


def shade(normals, colors, dirs):
    """Lambert shading with a fixed directional light; two-sided normals."""
    n = normals.copy()
    facing = np.einsum("...c,...c->...", n, dirs) > 0
    n[facing] = -n[facing]
    lambert = np.clip(np.einsum("...c,...c->...", n, _LIGHT_DIR), 0.0, 1.0)
    return np.clip(colors * (0.25 + 0.75 * lambert[..., None]), 0.0, 1.0)


def render_groundtruth(primitives, camera: CameraPose, height: int, width: int):
    """Analytic render: Lambert-shaded image plus exact world pointmap."""
    origin, dirs = pixel_rays(camera, height, width)
    t, normals, base = raycast(primitives, origin, dirs)
    hit = np.isfinite(t)
    image = np.tile(BACKGROUND, (height, width, 1))
    image[hit] = shade(normals, base, dirs)[hit]
    points = np.zeros((height, width, 3))
    points[hit] = origin + t[hit, None] * dirs[hit]
    pointmap = Pointmap(points, hit.astype(np.uint8), image.copy())
    return image.astype(np.float32), pointmap


def groundtruth_depth(primitives, camera: CameraPose, height: int, width: int):
    """Camera-frame depth map with {0,1} validity, from the analytic caster."""
    origin, dirs = pixel_rays(camera, height, width)
    t, _, _ = raycast(primitives, origin, dirs)
    hit = np.isfinite(t)
    return np.where(hit, t, 0.0), hit.astype(np.uint8)


def groundtruth_normals(primitives, camera: CameraPose, height: int, width: int):
    """Surface normals oriented toward the camera, zero where no hit."""
    origin, dirs = pixel_rays(camera, height, width)
    t, normals, _ = raycast(primitives, origin, dirs)
    hit = np.isfinite(t)
    facing = np.einsum("...c,...c->...", normals, dirs) > 0
    normals[facing] = -normals[facing]
    normals[~hit] = 0.0
    return normals, hit.astype(np.uint8)


def point_visible(primitives, camera: CameraPose, point, tol: float = 1e-6) -> bool:
    """True if the straight segment from the camera to the point is clear."""
    origin = camera.center
    ray = np.asarray(point, dtype=np.float64) - origin
    dist = np.linalg.norm(ray)
    if dist == 0:
        return True
    t, _, _ = raycast(primitives, origin, ray[None, :] / dist)
    return bool(t[0] >= dist * (1 - tol) - tol)
