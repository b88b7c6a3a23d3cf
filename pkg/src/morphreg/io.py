"""File formats: model/checkpoint containers, ASCII PLY, CSV tables, depth maps.

Container layout (model and regressor checkpoints)::

    magic      4 bytes   b"3DMM" (model) or b"LREG" (regressor)
    hlen       uint32 LE length of the JSON header in bytes
    header     UTF-8 JSON
    payload    arrays listed in header["arrays"], in that order

Float arrays are little-endian float32, index arrays little-endian uint32.
Matrices are stored column-major.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .model import MorphableModel, Mesh

MODEL_MAGIC = b"3DMM"
REGRESSOR_MAGIC = b"LREG"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """Raised for malformed or unsupported files."""


def _write_container(path, magic, header, arrays):
    header = dict(header, arrays=[[name, dtype, list(a.shape)] for name, dtype, a in arrays])
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, dtype, a in arrays:
            fh.write(np.asarray(a).astype(dtype).tobytes(order="F"))


def _read_container(path, magic):
    data = Path(path).read_bytes()
    if data[:4] != magic:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")
    (hlen,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except ValueError as exc:
        raise FormatError(f"{path}: unreadable header") from exc
    if header.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {header.get('version')!r}")
    offset = 8 + hlen
    arrays = {}
    for name, dtype, shape in header["arrays"]:
        dt = np.dtype(dtype)
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dt.itemsize
        if offset + nbytes > len(data):
            raise FormatError(f"{path}: truncated while reading {name!r}")
        arrays[name] = np.frombuffer(data, dtype=dt, count=count, offset=offset).reshape(shape, order="F")
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    return header, arrays


def save_model(model: MorphableModel, path) -> None:
    header = {
        "version": FORMAT_VERSION,
        "V": model.n_vertices,
        "K_s": model.n_shape,
        "K_t": model.n_texture,
        "landmarks": model.landmarks,
        "triangle_count": int(len(model.triangles)),
    }
    _write_container(
        path,
        MODEL_MAGIC,
        header,
        [
            ("mean_shape", "<f4", model.mean_shape),
            ("mean_texture", "<f4", model.mean_texture),
            ("shape_basis", "<f4", model.shape_basis),
            ("texture_basis", "<f4", model.texture_basis),
            ("shape_sigmas", "<f4", model.shape_sigmas),
            ("texture_sigmas", "<f4", model.texture_sigmas),
            ("triangles", "<u4", model.triangles),
        ],
    )


def load_model(path) -> MorphableModel:
    header, a = _read_container(path, MODEL_MAGIC)
    model = MorphableModel(
        mean_shape=a["mean_shape"],
        mean_texture=a["mean_texture"],
        shape_basis=a["shape_basis"],
        texture_basis=a["texture_basis"],
        shape_sigmas=a["shape_sigmas"],
        texture_sigmas=a["texture_sigmas"],
        triangles=a["triangles"].astype(np.int64),
        landmarks=header["landmarks"],
    )
    if (model.n_vertices, model.n_shape, model.n_texture) != (header["V"], header["K_s"], header["K_t"]):
        raise FormatError(f"{path}: header dimensions disagree with payload")
    return model


def save_regressor(reg, path) -> None:
    header = {
        "version": FORMAT_VERSION,
        "d_feat": reg.d_feat,
        "d_out": reg.d_out,
        "n_shape": reg.n_shape,
    }
    _write_container(
        path, REGRESSOR_MAGIC, header, [("weights", "<f4", reg.weights), ("bias", "<f4", reg.bias)]
    )


def load_regressor(path):
    from .regressor import LinearRegressor

    header, a = _read_container(path, REGRESSOR_MAGIC)
    return LinearRegressor(
        weights=a["weights"].astype(np.float64),
        bias=a["bias"].astype(np.float64),
        n_shape=header["n_shape"],
    )


# -- PLY -------------------------------------------------------------------

def write_ply(mesh: Mesh, path) -> None:
    """ASCII PLY with float xyz, optional uchar rgb and triangle faces."""
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {mesh.n_vertices}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if mesh.colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines += [
        f"element face {len(mesh.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    colors = None
    if mesh.colors is not None:
        colors = np.clip(np.rint(mesh.colors), 0, 255).astype(np.int64)
    for i, (x, y, z) in enumerate(mesh.positions):
        row = f"{x:.6f} {y:.6f} {z:.6f}"
        if colors is not None:
            r, g, b = colors[i]
            row += f" {r} {g} {b}"
        lines.append(row)
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> Mesh:
    """Read an ASCII PLY with a vertex element and an optional face element."""
    with open(path) as fh:
        if fh.readline().strip() != "ply":
            raise FormatError(f"{path}: not a PLY file")
        elements = []
        while True:
            line = fh.readline()
            if not line:
                raise FormatError(f"{path}: missing end_header")
            tokens = line.split()
            if not tokens or tokens[0] in ("comment", "obj_info"):
                continue
            if tokens[0] == "format":
                if tokens[1] != "ascii":
                    raise FormatError(f"{path}: only ASCII PLY is supported")
            elif tokens[0] == "element":
                elements.append((tokens[1], int(tokens[2]), []))
            elif tokens[0] == "property":
                if not elements:
                    raise FormatError(f"{path}: property before element")
                elements[-1][2].append(tokens[-1] if tokens[1] != "list" else ("list", tokens[-1]))
            elif tokens[0] == "end_header":
                break
        body = fh.read().split("\n")

    positions = colors = None
    triangles = np.zeros((0, 3), dtype=np.int64)
    cursor = 0
    for name, count, props in elements:
        rows = []
        while len(rows) < count:
            if cursor >= len(body):
                raise FormatError(f"{path}: truncated {name} element")
            line = body[cursor].split()
            cursor += 1
            if line:
                rows.append(line)
        if name == "vertex":
            table = np.asarray(rows, dtype=np.float64).reshape(count, len(props))
            col = {p: i for i, p in enumerate(props)}
            positions = table[:, [col["x"], col["y"], col["z"]]]
            if all(k in col for k in ("red", "green", "blue")):
                colors = table[:, [col["red"], col["green"], col["blue"]]]
        elif name == "face":
            faces = []
            for r in rows:
                n = int(r[0])
                idx = [int(v) for v in r[1:1 + n]]
                # fan-triangulate polygons
                faces += [(idx[0], idx[k], idx[k + 1]) for k in range(1, n - 1)]
            triangles = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if positions is None:
        raise FormatError(f"{path}: no vertex element")
    return Mesh(positions=positions, triangles=triangles, colors=colors)


# -- depth maps --------------------------------------------------------------

def write_depth_map(depth_map, path) -> None:
    """PGM-style ASCII grid (millimetres, ``nan`` for invalid) plus a JSON sidecar."""
    path = Path(path)
    d = depth_map.depth
    lines = ["P2-DEPTH", f"{d.shape[1]} {d.shape[0]}"]
    for row in d:
        lines.append(" ".join("nan" if np.isnan(v) else f"{v:.6f}" for v in row))
    path.write_text("\n".join(lines) + "\n")
    sidecar = {
        "pixel_scale": depth_map.pixel_scale,
        "origin": [float(v) for v in depth_map.center],
        "width": int(d.shape[1]),
        "height": int(d.shape[0]),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def read_depth_map(path):
    from .metrics.geometry import DepthMap

    path = Path(path)
    lines = path.read_text().split("\n")
    if lines[0].strip() != "P2-DEPTH":
        raise FormatError(f"{path}: not a depth grid")
    w, h = (int(v) for v in lines[1].split())
    depth = np.asarray([[float(v) for v in ln.split()] for ln in lines[2:2 + h]]).reshape(h, w)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    return DepthMap(depth=depth, pixel_scale=meta["pixel_scale"], center=tuple(meta["origin"]))


# -- CSV tables ----------------------------------------------------------------

def fmt_float(v: float) -> str:
    return repr(float(v))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_vectors(path, n_key_cols: int = 1):
    """CSV of key columns followed by numeric columns -> (keys, matrix)."""
    header, rows = read_csv(path)
    keys = [tuple(r[:n_key_cols]) if n_key_cols > 1 else r[0] for r in rows]
    try:
        values = np.asarray([[float(v) for v in r[n_key_cols:]] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric value ({exc})") from exc
    if len(rows) and values.ndim != 2:
        raise FormatError(f"{path}: ragged rows")
    return header, keys, values.reshape(len(rows), -1)
