"""Versioned binary checkpoint container.

Layout (all little-endian):
  magic "TCLC" | format version u32 | tensor count u32
  per tensor: name length u32, name UTF-8, ndim u32, dims u32*, f32 data
  zero or more trailing sections: 4-byte tag, payload length u64, payload

Sections carry non-tensor payloads (octree topology); readers that only
care about tensors can stop after the tensor block.
"""

import struct

import numpy as np

MAGIC = b"TCLC"
VERSION = 1


class CheckpointError(IOError):
    pass


def save_checkpoint(path, tensors, sections=None):
    """tensors: dict name -> array (stored as f32); sections: dict 4-char tag -> bytes."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())
        for tag, payload in (sections or {}).items():
            tb = tag.encode("ascii")
            if len(tb) != 4:
                raise CheckpointError(f"section tag must be 4 chars, got {tag!r}")
            f.write(tb)
            f.write(struct.pack("<Q", len(payload)))
            f.write(payload)


def load_checkpoint(path):
    """Returns (tensors: dict name -> f32 array, sections: dict tag -> bytes)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    off = 4
    version, count = struct.unpack_from("<II", blob, off)
    off += 8
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        end = off + 4 * n
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated tensor '{name}'")
        tensors[name] = np.frombuffer(blob[off:end], dtype="<f4").reshape(shape).copy()
        off = end
    sections = {}
    while off < len(blob):
        tag = blob[off:off + 4].decode("ascii")
        (length,) = struct.unpack_from("<Q", blob, off + 4)
        off += 12
        if off + length > len(blob):
            raise CheckpointError(f"{path}: truncated section '{tag}'")
        sections[tag] = blob[off:off + length]
        off += length
    return tensors, sections
