"""Dense tensor container with bit-exact file IO, plus PNG image and PLY IO.

The on-disk tensor layout is fixed so that independently written readers
agree byte for byte:

    magic "MOAI" (4 bytes)
    rank (1 unsigned byte)
    dims (rank x unsigned 64-bit little-endian)
    payload (row-major 32-bit little-endian floats)
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

MAGIC = b"MOAI"


class TensorFormatError(ValueError):
    """File does not look like a MOAI tensor (bad magic, bad header)."""


class TensorCorruptionError(ValueError):
    """Header and payload disagree (truncated or trailing bytes)."""


class ImageFormatError(ValueError):
    """Image file is not 8-bit RGB."""


def validate_tensor(array: np.ndarray) -> np.ndarray:
    """Coerce to float32 and enforce the container invariants."""
    arr = np.ascontiguousarray(array, dtype=np.float32)
    if arr.ndim == 0:
        raise ValueError("tensor must have at least one dimension")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


def write_tensor(array: np.ndarray, path) -> None:
    arr = validate_tensor(array)
    header = MAGIC + struct.pack("<B", arr.ndim)
    header += struct.pack("<%dQ" % arr.ndim, *arr.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(arr.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise TensorFormatError("bad magic %r in %s" % (blob[:4], path))
    if len(blob) < 5:
        raise TensorCorruptionError("truncated header in %s" % path)
    rank = blob[4]
    if rank == 0:
        raise TensorFormatError("zero-rank tensor in %s" % path)
    header_end = 5 + 8 * rank
    if len(blob) < header_end:
        raise TensorCorruptionError("truncated dims in %s" % path)
    dims = struct.unpack("<%dQ" % rank, blob[5:header_end])
    count = 1
    for d in dims:
        count *= d
    payload = blob[header_end:]
    if len(payload) != 4 * count:
        raise TensorCorruptionError(
            "payload of %d bytes does not match dims %s in %s"
            % (len(payload), dims, path)
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return np.ascontiguousarray(arr, dtype=np.float32)


def load_image(path) -> np.ndarray:
    """Load an 8-bit RGB PNG as an HxWx3 float32 array in [0, 1]."""
    with Image.open(path) as img:
        if img.mode != "RGB":
            raise ImageFormatError("expected 8-bit RGB, got mode %r" % img.mode)
        raw = np.asarray(img, dtype=np.uint8)
    return raw.astype(np.float32) / 255.0


def save_image(array: np.ndarray, path) -> None:
    """Save an HxWx3 array of values in [0, 1] as an 8-bit RGB PNG."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("expected HxWx3 image, got shape %s" % (arr.shape,))
    quantized = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path, format="PNG")


def as_binary_mask(array: np.ndarray) -> np.ndarray:
    """Validate a strictly two-valued {0,1} mask, returned as uint8."""
    arr = np.asarray(array)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("mask is not two-valued")
    return arr.astype(np.uint8)


# ---------------------------------------------------------------------------
# PLY (binary little-endian): float x,y,z; uchar red,green,blue; uchar-count
# int vertex_indices face lists.
# ---------------------------------------------------------------------------

def write_ply(path, positions, colors=None, faces=None) -> None:
    positions = np.asarray(positions, dtype=np.float32).reshape(-1, 3)
    n = len(positions)
    lines = [
        "ply",
        "format binary_little_endian 1.0",
        "element vertex %d" % n,
        "property float x",
        "property float y",
        "property float z",
    ]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
        if len(colors) != n:
            raise ValueError("colors and positions length mismatch")
        lines += [
            "property uchar red",
            "property uchar green",
            "property uchar blue",
        ]
    nf = 0 if faces is None else len(faces)
    if faces is not None:
        lines += [
            "element face %d" % nf,
            "property list uchar int vertex_indices",
        ]
    lines.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("ascii"))
        if colors is None:
            f.write(positions.astype("<f4").tobytes())
        else:
            rgb = np.clip(np.round(colors * 255.0), 0, 255).astype(np.uint8)
            for i in range(n):
                f.write(positions[i].astype("<f4").tobytes())
                f.write(rgb[i].tobytes())
        if faces is not None:
            for face in np.asarray(faces, dtype=np.int64):
                f.write(struct.pack("<B", len(face)))
                f.write(np.asarray(face, dtype="<i4").tobytes())


def read_ply(path):
    """Read a binary little-endian PLY written by write_ply.

    Returns (positions, colors or None, faces or None).
    """
    with open(path, "rb") as f:
        blob = f.read()
    end = blob.index(b"end_header\n") + len(b"end_header\n")
    header = blob[:end].decode("ascii").splitlines()
    if header[0] != "ply" or "format binary_little_endian 1.0" not in header[1]:
        raise TensorFormatError("not a binary little-endian PLY: %s" % path)
    n_vert = n_face = 0
    has_color = False
    for line in header:
        if line.startswith("element vertex"):
            n_vert = int(line.split()[-1])
        elif line.startswith("element face"):
            n_face = int(line.split()[-1])
        elif line == "property uchar red":
            has_color = True
    offset = end
    positions = np.empty((n_vert, 3), dtype=np.float32)
    colors = np.empty((n_vert, 3), dtype=np.float32) if has_color else None
    stride = 12 + (3 if has_color else 0)
    for i in range(n_vert):
        rec = blob[offset : offset + stride]
        positions[i] = np.frombuffer(rec[:12], dtype="<f4")
        if has_color:
            colors[i] = np.frombuffer(rec[12:15], dtype=np.uint8) / 255.0
        offset += stride
    faces = None
    if n_face:
        faces = []
        for _ in range(n_face):
            count = blob[offset]
            offset += 1
            idx = np.frombuffer(blob[offset : offset + 4 * count], dtype="<i4")
            faces.append(idx.astype(np.int64))
            offset += 4 * count
        faces = np.asarray(faces, dtype=np.int64)
    return positions, colors, faces
