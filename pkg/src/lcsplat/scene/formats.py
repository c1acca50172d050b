"""Binary file formats used by the dataset layout and mesh export."""

import numpy as np


class FileFormatError(IOError):
    pass


# --- PPM / PGM -------------------------------------------------------------


def write_ppm(path, rgb):
    """rgb float [0,1] or uint8 (H, W, 3) -> binary P6."""
    arr = np.asarray(rgb)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(arr.tobytes())


def write_pgm(path, gray):
    arr = np.asarray(gray)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(arr.tobytes())


def _read_pnm(path, magic, channels):
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(magic):
        raise FileFormatError(f"{path}: expected {magic.decode()} header")
    # header = magic, width, height, maxval separated by whitespace/comments
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise FileFormatError(f"{path}: only maxval 255 supported")
    need = w * h * channels
    data = blob[pos:pos + need]
    if len(data) != need:
        raise FileFormatError(f"{path}: truncated at byte {pos + len(data)}, need {pos + need}")
    shape = (h, w, channels) if channels > 1 else (h, w)
    return np.frombuffer(data, dtype=np.uint8).reshape(shape).copy()


def read_ppm(path):
    return _read_pnm(path, b"P6", 3)


def read_pgm(path):
    return _read_pnm(path, b"P5", 1)


# --- raw f32 ----------------------------------------------------------------


def write_f32(path, arr):
    np.ascontiguousarray(arr, dtype="<f4").tofile(path)


def read_f32(path, shape):
    arr = np.fromfile(path, dtype="<f4")
    need = int(np.prod(shape))
    if arr.size != need:
        raise FileFormatError(f"{path}: expected {need} f32 values, found {arr.size}")
    return arr.reshape(shape)


# --- PLY ---------------------------------------------------------------------


def _ply_header(elements):
    lines = ["ply", "format binary_little_endian 1.0"]
    for name, count, props in elements:
        lines.append(f"element {name} {count}")
        lines.extend(props)
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode()


def write_points_ply(path, points, origins):
    """LiDAR sweep: per-point xyz plus the emitting sensor center."""
    pts = np.ascontiguousarray(points, dtype="<f4")
    org = np.broadcast_to(np.asarray(origins, dtype="<f4"), pts.shape)
    rec = np.concatenate([pts, org], axis=1).astype("<f4")
    props = [f"property float {n}" for n in ("x", "y", "z", "origin_x", "origin_y", "origin_z")]
    with open(path, "wb") as f:
        f.write(_ply_header([("vertex", len(pts), props)]))
        f.write(rec.tobytes())


def read_points_ply(path):
    names, data = _read_ply(path, "vertex",
                            [("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                             ("origin_x", "<f4"), ("origin_y", "<f4"), ("origin_z", "<f4")])
    pts = np.stack([data["x"], data["y"], data["z"]], axis=1)
    org = np.stack([data["origin_x"], data["origin_y"], data["origin_z"]], axis=1)
    return pts, org


def write_mesh_ply(path, vertices, colors, normals, triangles):
    """Colorized mesh: xyz f32, rgb u8, normal f32, int32 triangle indices."""
    nv = len(vertices)
    vert = np.zeros(nv, dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                               ("red", "u1"), ("green", "u1"), ("blue", "u1"),
                               ("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")])
    v = np.asarray(vertices, dtype=np.float32)
    c = np.clip(np.rint(np.asarray(colors) * 255.0), 0, 255).astype(np.uint8)
    n = np.asarray(normals, dtype=np.float32)
    vert["x"], vert["y"], vert["z"] = v[:, 0], v[:, 1], v[:, 2]
    vert["red"], vert["green"], vert["blue"] = c[:, 0], c[:, 1], c[:, 2]
    vert["nx"], vert["ny"], vert["nz"] = n[:, 0], n[:, 1], n[:, 2]
    tris = np.asarray(triangles, dtype="<i4")
    face = np.zeros(len(tris), dtype=[("count", "u1"), ("i0", "<i4"), ("i1", "<i4"), ("i2", "<i4")])
    face["count"] = 3
    face["i0"], face["i1"], face["i2"] = tris[:, 0], tris[:, 1], tris[:, 2]
    vprops = ["property float x", "property float y", "property float z",
              "property uchar red", "property uchar green", "property uchar blue",
              "property float nx", "property float ny", "property float nz"]
    fprops = ["property list uchar int vertex_indices"]
    with open(path, "wb") as f:
        f.write(_ply_header([("vertex", nv, vprops), ("face", len(tris), fprops)]))
        f.write(vert.tobytes())
        f.write(face.tobytes())


def read_mesh_ply(path):
    with open(path, "rb") as f:
        blob = f.read()
    header_end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or header_end < 0:
        raise FileFormatError(f"{path}: not a PLY file")
    counts = {}
    for line in blob[:header_end].decode().splitlines():
        parts = line.split()
        if parts and parts[0] == "element":
            counts[parts[1]] = int(parts[2])
    off = header_end + len(b"end_header\n")
    nv = counts.get("vertex", 0)
    nf = counts.get("face", 0)
    vdtype = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                       ("red", "u1"), ("green", "u1"), ("blue", "u1"),
                       ("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")])
    need = nv * vdtype.itemsize
    if off + need > len(blob):
        raise FileFormatError(f"{path}: truncated vertex block at byte {len(blob)}, need {off + need}")
    vert = np.frombuffer(blob, dtype=vdtype, count=nv, offset=off)
    off += need
    fdtype = np.dtype([("count", "u1"), ("i0", "<i4"), ("i1", "<i4"), ("i2", "<i4")])
    need = nf * fdtype.itemsize
    if off + need > len(blob):
        raise FileFormatError(f"{path}: truncated face block at byte {len(blob)}, need {off + need}")
    face = np.frombuffer(blob, dtype=fdtype, count=nf, offset=off)
    vertices = np.stack([vert["x"], vert["y"], vert["z"]], axis=1).astype(np.float32)
    colors = np.stack([vert["red"], vert["green"], vert["blue"]], axis=1).astype(np.float32) / 255.0
    normals = np.stack([vert["nx"], vert["ny"], vert["nz"]], axis=1).astype(np.float32)
    tris = np.stack([face["i0"], face["i1"], face["i2"]], axis=1).astype(np.int32)
    return vertices, colors, normals, tris


def _read_ply(path, element, expect_props):
    with open(path, "rb") as f:
        blob = f.read()
    header_end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or header_end < 0:
        raise FileFormatError(f"{path}: not a PLY file")
    count = None
    props = []
    in_elem = False
    for line in blob[:header_end].decode().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "element":
            in_elem = parts[1] == element
            if in_elem:
                count = int(parts[2])
        elif parts[0] == "property" and in_elem:
            props.append(parts[-1])
    if count is None:
        raise FileFormatError(f"{path}: no '{element}' element")
    if props != [n for n, _ in expect_props]:
        raise FileFormatError(f"{path}: unexpected properties {props}")
    dtype = np.dtype(expect_props)
    off = header_end + len(b"end_header\n")
    need = count * dtype.itemsize
    if off + need > len(blob):
        raise FileFormatError(f"{path}: truncated at byte {len(blob)}, need {off + need}")
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
    return props, data
