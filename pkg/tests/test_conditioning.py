import math

import numpy as np
import pytest

from moai.conditioning import (
    ConditionTensor,
    EmbedConfig,
    assemble_reference_condition,
    assemble_target_condition,
    fourier_embed,
    normalize_pointmap_to_unit_cube,
    write_condition,
)
from moai.geometry import Pointmap
from moai.surface import MeshRender
from moai.tensorio import read_tensor


def make_render(points, valid, depth=None, normals=None):
    valid = np.asarray(valid, dtype=np.uint8)
    if depth is None:
        depth = valid.astype(np.float64) * 2.0
    if normals is None:
        normals = np.zeros(points.shape)
        normals[..., 2] = -1.0
        normals[valid == 0] = 0.0
    pts = np.where(valid[..., None] == 1, points, 0.0)
    return MeshRender(Pointmap(pts, valid), depth, normals, valid)


# --- fourier_embed ---------------------------------------------------------

def test_origin_single_level_pattern():
    pm = Pointmap(np.zeros((1, 1, 3)), np.ones((1, 1)))
    out = fourier_embed(pm, EmbedConfig(num_frequencies=1))
    # sin(0)=0, cos(0)=1 for each of the three axes
    np.testing.assert_allclose(out[0, 0], [0, 1, 0, 1, 0, 1])


def test_channel_count_scales_with_levels():
    pm = Pointmap(np.zeros((2, 2, 3)), np.ones((2, 2)))
    assert fourier_embed(pm, EmbedConfig(num_frequencies=4)).shape == (2, 2, 24)


def test_half_coordinate_scalar_oracle():
    pm = Pointmap(np.full((1, 1, 3), 0.5), np.ones((1, 1)))
    out = fourier_embed(pm, EmbedConfig(num_frequencies=2, base=2.0))
    expect = []
    for _axis in range(3):
        for level in range(2):
            arg = (2.0**level) * math.pi * 0.5
            expect += [math.sin(arg), math.cos(arg)]
    np.testing.assert_allclose(out[0, 0], expect, atol=1e-6)


def test_invalid_pixels_emit_zeros():
    pts = np.full((2, 2, 3), 0.3)
    valid = np.array([[1, 0], [0, 1]])
    out = fourier_embed(Pointmap(np.where(valid[..., None] == 1, pts, 0.0), valid),
                        EmbedConfig(num_frequencies=3))
    assert np.all(out[0, 1] == 0) and np.all(out[1, 0] == 0)
    assert np.any(out[0, 0] != 0)


def test_embedding_injective_on_grid():
    # 64x64 distinct coordinates in [-1, 1] must embed to distinct vectors
    xs = np.linspace(-1, 1, 64)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pts = np.stack([gx, gy, np.zeros_like(gx)], axis=-1)
    out = fourier_embed(Pointmap(pts, np.ones((64, 64))),
                        EmbedConfig(num_frequencies=4, base=2.0))
    flat = out.reshape(-1, out.shape[-1])
    assert len({row.tobytes() for row in flat}) == 64 * 64


def test_embedding_deterministic():
    pm = Pointmap(np.linspace(0, 1, 12).reshape(2, 2, 3), np.ones((2, 2)))
    a = fourier_embed(pm, EmbedConfig())
    b = fourier_embed(pm, EmbedConfig())
    assert a.tobytes() == b.tobytes()


def test_config_validation():
    with pytest.raises(ValueError):
        EmbedConfig(num_frequencies=0)
    with pytest.raises(ValueError):
        EmbedConfig(base=1.0)


# --- normalization ---------------------------------------------------------

def test_unit_cube_normalization():
    pts = np.zeros((1, 2, 3))
    pts[0, 0] = [4.0, -2.0, 1.0]
    pts[0, 1] = [0.5, 0.5, 0.5]
    pm = normalize_pointmap_to_unit_cube(Pointmap(pts, np.ones((1, 2))))
    assert np.abs(pm.points).max() == 1.0
    np.testing.assert_allclose(pm.points[0, 0], [1.0, -0.5, 0.25])


def test_normalization_ignores_invalid():
    pts = np.zeros((1, 2, 3))
    pts[0, 0] = [0.5, 0, 0]
    pm = normalize_pointmap_to_unit_cube(Pointmap(pts, np.array([[1, 0]])))
    np.testing.assert_allclose(pm.points[0, 0], [1.0, 0, 0])


# --- condition assembly ----------------------------------------------------

def test_total_channel_count():
    render = make_render(np.zeros((3, 3, 3)), np.ones((3, 3)))
    cond = assemble_target_condition(render, EmbedConfig(num_frequencies=4))
    assert cond.data.shape == (3, 3, 29)
    assert len(cond.channel_names()) == 29


def test_masked_out_pixels_fully_zero():
    pts = np.full((2, 2, 3), 0.25)
    valid = np.array([[1, 1], [0, 1]])
    cond = assemble_target_condition(make_render(pts, valid), EmbedConfig())
    assert np.all(cond.data[1, 0] == 0)
    assert cond.data[0, 0, -1] == 1


def test_depth_normalized_by_masked_max():
    valid = np.ones((2, 2))
    depth = np.array([[1.0, 2.0], [4.0, 3.0]])
    cond = assemble_target_condition(
        make_render(np.zeros((2, 2, 3)), valid, depth=depth), EmbedConfig()
    )
    np.testing.assert_allclose(cond.data[..., -5], depth / 4.0)


def test_empty_mask_gives_all_zero_tensor():
    cond = assemble_target_condition(
        make_render(np.zeros((2, 2, 3)), np.zeros((2, 2))), EmbedConfig()
    )
    assert np.all(cond.data == 0)


def test_normals_pass_through_under_mask():
    normals = np.zeros((2, 2, 3))
    normals[..., 0] = 0.6
    normals[..., 2] = -0.8
    cond = assemble_target_condition(
        make_render(np.zeros((2, 2, 3)), np.ones((2, 2)), normals=normals),
        EmbedConfig(num_frequencies=1),
    )
    np.testing.assert_allclose(cond.data[0, 0, -4:-1], [0.6, 0.0, -0.8], atol=1e-7)


def test_reference_requires_dense_pointmap():
    pm = Pointmap(np.zeros((2, 2, 3)), np.array([[1, 1], [1, 0]]))
    with pytest.raises(ValueError):
        assemble_reference_condition(pm, np.ones((2, 2)), np.zeros((2, 2, 3)), EmbedConfig())


def test_reference_mask_is_all_ones():
    pm = Pointmap(np.full((2, 2, 3), 0.1), np.ones((2, 2)))
    cond = assemble_reference_condition(pm, np.full((2, 2), 2.0), np.zeros((2, 2, 3)), EmbedConfig())
    assert np.all(cond.data[..., -1] == 1)
    np.testing.assert_allclose(cond.data[..., -5], 1.0)


def test_tensor_invariant_enforced():
    cfg = EmbedConfig(num_frequencies=1)
    data = np.zeros((1, 1, cfg.total_channels), dtype=np.float32)
    data[0, 0, 0] = 0.5  # nonzero embedding under a zero mask
    with pytest.raises(ValueError):
        ConditionTensor(data, cfg)


def test_channel_name_ordering():
    cfg = EmbedConfig(num_frequencies=2)
    cond = assemble_target_condition(make_render(np.zeros((1, 1, 3)), np.ones((1, 1))), cfg)
    names = cond.channel_names()
    assert names[0] == "embed_x_sin_l0"
    assert names[1] == "embed_x_cos_l0"
    assert names[2] == "embed_x_sin_l1"
    assert names[4] == "embed_y_sin_l0"
    assert names[-5:] == ["depth", "normal_x", "normal_y", "normal_z", "mask"]


# --- serialization ---------------------------------------------------------

def test_write_condition_round_trip(tmp_path):
    cfg = EmbedConfig(num_frequencies=3)
    cond = assemble_target_condition(
        make_render(np.full((4, 4, 3), 0.2), np.ones((4, 4))), cfg
    )
    tpath = tmp_path / "cond.moai"
    mpath = tmp_path / "cond.txt"
    write_condition(cond, tpath, mpath)
    back = read_tensor(tpath)
    assert back.tobytes() == cond.data.tobytes()
    lines = mpath.read_text().strip().split("\n")
    assert len(lines) == cfg.total_channels
    assert lines[0] == "channel 0 embed_x_sin_l0"
    assert lines[-1] == "channel %d mask" % (cfg.total_channels - 1)
