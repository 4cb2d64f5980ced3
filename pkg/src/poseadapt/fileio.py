"""On-disk formats: PGM depth/mask images and ASCII PLY models.

Depth files are 16-bit little-endian binary PGM (P5, maxval 65535) holding
millimeters, 0 = invalid. Masks are 8-bit PGM, value/255 = confidence.
Models are ASCII PLY with float vertex (x, y, z) and optional triangular
faces.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

DEPTH_SCALE_MM = 1000.0


def _read_pgm_header(f):
    def token():
        # Skip whitespace and '#' comments between header fields.
        tok = b""
        while True:
            ch = f.read(1)
            if not ch:
                raise DataError("truncated PGM header")
            if ch == b"#":
                while ch not in (b"\n", b""):
                    ch = f.read(1)
                continue
            if ch.isspace():
                if tok:
                    return tok
                continue
            tok += ch

    magic = token()
    if magic != b"P5":
        raise DataError(f"expected binary PGM (P5), got {magic!r}")
    width = int(token())
    height = int(token())
    maxval = int(token())
    return width, height, maxval


def write_pgm16(path, values: np.ndarray):
    """Write a uint16 image as binary PGM with little-endian samples."""
    values = np.asarray(values)
    if values.dtype != np.uint16:
        raise DataError(f"expected uint16 values, got {values.dtype}")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(values.astype("<u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    with open(path, "rb") as f:
        w, h, maxval = _read_pgm_header(f)
        if maxval != 65535:
            raise DataError(f"expected 16-bit PGM, maxval was {maxval}")
        data = f.read(w * h * 2)
    if len(data) != w * h * 2:
        raise DataError("truncated PGM payload")
    return np.frombuffer(data, dtype="<u2").reshape(h, w).astype(np.uint16)


def write_pgm8(path, values: np.ndarray):
    values = np.asarray(values)
    if values.dtype != np.uint8:
        raise DataError(f"expected uint8 values, got {values.dtype}")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(values.tobytes())


def read_pgm8(path) -> np.ndarray:
    with open(path, "rb") as f:
        w, h, maxval = _read_pgm_header(f)
        if maxval != 255:
            raise DataError(f"expected 8-bit PGM, maxval was {maxval}")
        data = f.read(w * h)
    if len(data) != w * h:
        raise DataError("truncated PGM payload")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()


def depth_to_u16(depth_m: np.ndarray) -> np.ndarray:
    """Quantize metric depth to 16-bit millimeters (0 stays invalid)."""
    mm = np.round(np.asarray(depth_m, dtype=np.float64) * DEPTH_SCALE_MM)
    if (mm < 0).any() or (mm > 65535).any():
        raise DataError("depth out of 16-bit millimeter range")
    return mm.astype(np.uint16)


def u16_to_depth(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) / DEPTH_SCALE_MM


def write_depth_pgm(path, depth_m: np.ndarray):
    finite = np.where(np.isfinite(depth_m), depth_m, 0.0)
    write_pgm16(path, depth_to_u16(finite))


def read_depth_pgm(path) -> np.ndarray:
    return u16_to_depth(read_pgm16(path))


def write_mask_pgm(path, confidence: np.ndarray):
    conf = np.clip(np.asarray(confidence, dtype=np.float64), 0.0, 1.0)
    write_pgm8(path, np.round(conf * 255.0).astype(np.uint8))


def read_mask_pgm(path) -> np.ndarray:
    return read_pgm8(path).astype(np.float64) / 255.0


def write_ply(path, vertices: np.ndarray, faces: np.ndarray | None = None):
    """Write an ASCII PLY with float vertices and optional triangle faces."""
    vertices = np.asarray(vertices, dtype=np.float64)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(vertices)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if faces is not None and len(faces):
        lines += [
            f"element face {len(faces)}",
            "property list uchar int vertex_indices",
        ]
    lines.append("end_header")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
        for v in vertices:
            f.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        if faces is not None:
            for face in faces:
                f.write("3 " + " ".join(str(int(i)) for i in face) + "\n")


def read_ply(path):
    """Read an ASCII PLY; returns (vertices (N, 3), faces (M, 3) or None)."""
    with open(path) as f:
        line = f.readline().strip()
        if line != "ply":
            raise DataError("not a PLY file")
        n_vertex = n_face = 0
        vertex_props = []
        element = None
        while True:
            line = f.readline()
            if not line:
                raise DataError("truncated PLY header")
            parts = line.split()
            if not parts or parts[0] == "comment":
                continue
            if parts[0] == "format":
                if parts[1] != "ascii":
                    raise DataError("only ASCII PLY is supported")
            elif parts[0] == "element":
                element = parts[1]
                if element == "vertex":
                    n_vertex = int(parts[2])
                elif element == "face":
                    n_face = int(parts[2])
                else:
                    raise DataError(f"unsupported PLY element {element!r}")
            elif parts[0] == "property" and element == "vertex":
                vertex_props.append(parts[-1])
            elif parts[0] == "end_header":
                break
        for axis in ("x", "y", "z"):
            if axis not in vertex_props:
                raise DataError(f"PLY vertices lack property {axis!r}")
        cols = [vertex_props.index(a) for a in ("x", "y", "z")]
        vertices = np.empty((n_vertex, 3))
        for i in range(n_vertex):
            parts = f.readline().split()
            if len(parts) < len(vertex_props):
                raise DataError("truncated PLY vertex data")
            vertices[i] = [float(parts[c]) for c in cols]
        faces = None
        if n_face:
            faces = np.empty((n_face, 3), dtype=np.int64)
            for i in range(n_face):
                parts = f.readline().split()
                if not parts:
                    raise DataError("truncated PLY face data")
                count = int(parts[0])
                if count != 3:
                    raise DataError("only triangular faces are supported")
                faces[i] = [int(p) for p in parts[1:4]]
    return vertices, faces
