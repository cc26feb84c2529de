import numpy as np
import pytest

from moai import tensorio


def test_round_trip_identity(tmp_path):
    t = np.zeros((2, 3), dtype=np.float32)
    path = tmp_path / "t.moai"
    tensorio.write_tensor(t, path)
    back = tensorio.read_tensor(path)
    assert back.shape == (2, 3)
    assert back.tobytes() == t.tobytes()


def test_bad_magic_is_format_error(tmp_path):
    path = tmp_path / "bad.moai"
    path.write_bytes(b"XXXX" + b"\x00" * 32)
    with pytest.raises(tensorio.TensorFormatError):
        tensorio.read_tensor(path)


def test_truncated_payload_is_corruption_error(tmp_path):
    path = tmp_path / "t.moai"
    tensorio.write_tensor(np.ones((4, 4), dtype=np.float32), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-3])
    with pytest.raises(tensorio.TensorCorruptionError):
        tensorio.read_tensor(path)


def test_file_size_matches_layout(tmp_path):
    # magic 4 + rank 1 + 2 dims * 8 + 16 floats * 4
    path = tmp_path / "t.moai"
    tensorio.write_tensor(np.zeros((4, 4), dtype=np.float32), path)
    assert path.stat().st_size == 4 + 1 + 16 + 64


def test_write_is_deterministic(tmp_path):
    t = np.arange(12, dtype=np.float32).reshape(3, 4)
    a, b = tmp_path / "a.moai", tmp_path / "b.moai"
    tensorio.write_tensor(t, a)
    tensorio.write_tensor(t, b)
    assert a.read_bytes() == b.read_bytes()


def test_known_payload_hex(tmp_path):
    # 1.0 -> 0000803f, -2.5 -> 000020c0 little-endian
    path = tmp_path / "t.moai"
    tensorio.write_tensor(np.array([1.0, -2.5], dtype=np.float32), path)
    blob = path.read_bytes()
    assert blob[:4] == b"MOAI"
    assert blob[4] == 1
    assert blob[5:13] == (2).to_bytes(8, "little")
    assert blob[13:].hex() == "0000803f000020c0"


def test_fuzz_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(1000):
        rank = int(rng.integers(1, 4))
        dims = tuple(int(d) for d in rng.integers(1, 6, size=rank))
        t = rng.normal(size=dims).astype(np.float32)
        path = tmp_path / "fuzz.moai"
        tensorio.write_tensor(t, path)
        back = tensorio.read_tensor(path)
        assert back.shape == t.shape
        assert back.tobytes() == t.tobytes()


def test_rejects_non_finite():
    with pytest.raises(ValueError):
        tensorio.validate_tensor(np.array([1.0, np.nan]))


def test_image_black_round_trip(tmp_path):
    path = tmp_path / "img.png"
    tensorio.save_image(np.zeros((8, 8, 3)), path)
    img = tensorio.load_image(path)
    assert np.all(img == 0.0)


def test_image_255_maps_to_one(tmp_path):
    path = tmp_path / "img.png"
    tensorio.save_image(np.ones((8, 8, 3)), path)
    img = tensorio.load_image(path)
    assert np.all(img == 1.0)


def test_image_quantization_bound(tmp_path):
    rng = np.random.default_rng(7)
    x = rng.uniform(size=(16, 16, 3))
    path = tmp_path / "img.png"
    tensorio.save_image(x, path)
    back = tensorio.load_image(path)
    assert np.abs(back - x).max() <= 0.5 / 255.0 + 1e-7


def test_non_rgb_image_rejected(tmp_path):
    from PIL import Image

    path = tmp_path / "gray.png"
    Image.new("L", (4, 4)).save(path)
    with pytest.raises(tensorio.ImageFormatError):
        tensorio.load_image(path)


def test_ply_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    pos = rng.normal(size=(10, 3)).astype(np.float32)
    col = rng.uniform(size=(10, 3))
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    path = tmp_path / "mesh.ply"
    tensorio.write_ply(path, pos, col, faces)
    rpos, rcol, rfaces = tensorio.read_ply(path)
    np.testing.assert_array_equal(rpos, pos)
    assert np.abs(rcol - col).max() <= 0.5 / 255.0 + 1e-7
    np.testing.assert_array_equal(rfaces, faces)


def test_ply_positions_only(tmp_path):
    pos = np.arange(9, dtype=np.float32).reshape(3, 3)
    path = tmp_path / "cloud.ply"
    tensorio.write_ply(path, pos)
    rpos, rcol, rfaces = tensorio.read_ply(path)
    np.testing.assert_array_equal(rpos, pos)
    assert rcol is None and rfaces is None
