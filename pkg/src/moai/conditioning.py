"""Fourier positional embedding of pointmaps and assembly of target and
reference correspondence conditions.

A condition stacks, in channel order: 6L embedding channels (sin/cos per
frequency level, per coordinate axis x,y,z), 1 normalized depth channel,
3 normal channels, and 1 validity-mask channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraPose, Pointmap, to_camera_space
from .surface import MeshRender


@dataclass(frozen=True)
class EmbedConfig:
    num_frequencies: int = 4
    base: float = 2.0

    def __post_init__(self):
        if self.num_frequencies < 1:
            raise ValueError("need at least one frequency level")
        if self.base <= 1:
            raise ValueError("frequency base must exceed 1")

    @property
    def embed_channels(self) -> int:
        return 6 * self.num_frequencies

    @property
    def total_channels(self) -> int:
        return self.embed_channels + 5  # + depth + 3 normals + mask


@dataclass
class ConditionTensor:
    """Channel-stacked conditioning grid of shape HxWx(6L+5)."""

    data: np.ndarray
    config: EmbedConfig

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[2] != self.config.total_channels:
            raise ValueError(
                "expected %d channels, got shape %s"
                % (self.config.total_channels, (self.data.shape,))
            )
        mask = self.data[..., -1]
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("mask channel is not two-valued")
        if np.any(self.data[mask == 0, :-1] != 0):
            raise ValueError("masked-out pixels must be zero outside the mask channel")

    @property
    def mask(self) -> np.ndarray:
        return self.data[..., -1].astype(np.uint8)

    def channel_names(self) -> list[str]:
        names = []
        for axis in "xyz":
            for level in range(self.config.num_frequencies):
                names.append("embed_%s_sin_l%d" % (axis, level))
                names.append("embed_%s_cos_l%d" % (axis, level))
        names += ["depth", "normal_x", "normal_y", "normal_z", "mask"]
        return names


def fourier_embed(pointmap: Pointmap, config: EmbedConfig) -> np.ndarray:
    """Per axis and level k: sin(base^k * pi * x), cos(base^k * pi * x).

    Masked-out pixels emit zeros in every channel.
    """
    h, w = pointmap.height, pointmap.width
    L = config.num_frequencies
    out = np.zeros((h, w, 6 * L), dtype=np.float64)
    coords = pointmap.points
    for axis in range(3):
        x = coords[..., axis]
        for level in range(L):
            arg = (config.base**level) * np.pi * x
            c = axis * 2 * L + level * 2
            out[..., c] = np.sin(arg)
            out[..., c + 1] = np.cos(arg)
    out[pointmap.valid == 0] = 0.0
    return out.astype(np.float32)


def normalize_pointmap_to_unit_cube(pointmap: Pointmap) -> Pointmap:
    """Scale valid coordinates into [-1, 1] by the max absolute value."""
    sel = pointmap.valid == 1
    if not sel.any():
        return pointmap
    scale = float(np.abs(pointmap.points[sel]).max())
    if scale == 0:
        return pointmap
    pts = pointmap.points / scale
    return Pointmap(pts, pointmap.valid.copy(), pointmap.colors)


def camera_space_render(render: MeshRender, camera: CameraPose) -> MeshRender:
    """Express the render's pointmap in the camera frame, scaled to the unit
    cube, for embedding."""
    pm = normalize_pointmap_to_unit_cube(to_camera_space(render.pointmap, camera))
    return MeshRender(pm, render.depth, render.normals, render.mask)


def _normalized_depth(depth: np.ndarray, mask: np.ndarray) -> np.ndarray:
    sel = mask == 1
    if not sel.any():
        return np.zeros_like(depth)
    peak = float(depth[sel].max())
    out = np.where(sel, depth / peak if peak > 0 else depth, 0.0)
    return out


def assemble_target_condition(render: MeshRender, config: EmbedConfig) -> ConditionTensor:
    """Stack [embedding, depth / masked max, normals, mask].

    A fully-empty mask yields a valid all-zero tensor (pure generation).
    """
    embed = fourier_embed(render.pointmap, config)
    mask = render.mask.astype(np.float64)
    depth = _normalized_depth(render.depth, render.mask)
    normals = np.where(render.mask[..., None] == 1, render.normals, 0.0)
    data = np.concatenate(
        [embed, depth[..., None], normals, mask[..., None]], axis=-1
    )
    return ConditionTensor(data.astype(np.float32), config)


def assemble_reference_condition(
    pointmap: Pointmap, depth: np.ndarray, normals: np.ndarray, config: EmbedConfig
) -> ConditionTensor:
    """Reference-view condition with an all-ones mask.

    References are dense by construction; any invalid pixel is a
    precondition error.
    """
    if np.any(pointmap.valid == 0):
        raise ValueError("reference pointmap must be dense")
    depth = np.asarray(depth, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    if depth.shape != pointmap.valid.shape or normals.shape != pointmap.points.shape:
        raise ValueError("depth/normal shape mismatch")
    if not (np.all(np.isfinite(depth)) and np.all(np.isfinite(normals))):
        raise ValueError("reference depth/normals must be finite")
    embed = fourier_embed(pointmap, config)
    ones = np.ones_like(depth)
    norm_depth = _normalized_depth(depth, ones.astype(np.uint8))
    data = np.concatenate(
        [embed, norm_depth[..., None], normals, ones[..., None]], axis=-1
    )
    return ConditionTensor(data.astype(np.float32), config)


def write_condition(condition: ConditionTensor, tensor_path, manifest_path) -> None:
    """Serialize the condition tensor plus a sidecar channel manifest."""
    from . import tensorio

    tensorio.write_tensor(condition.data, tensor_path)
    lines = ["channel %d %s" % (i, name) for i, name in enumerate(condition.channel_names())]
    with open(manifest_path, "w") as f:
        f.write("\n".join(lines) + "\n")
