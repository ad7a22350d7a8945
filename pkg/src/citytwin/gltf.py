"""Minimal binary glTF (GLB) writer for building meshes.

One mesh, one primitive: float32 positions plus uint32 indices.  Output is
byte-deterministic for identical input, which the tile endpoints rely on for
content-hash validators.
"""

from __future__ import annotations

import json
import struct

import numpy as np

_MAGIC = 0x46546C67  # "glTF"
_JSON_CHUNK = 0x4E4F534A
_BIN_CHUNK = 0x004E4942


def mesh_to_glb(vertices: np.ndarray, triangles: np.ndarray, name: str = "mesh") -> bytes:
    verts = np.ascontiguousarray(np.asarray(vertices, dtype=np.float32))
    tris = np.ascontiguousarray(np.asarray(triangles, dtype=np.uint32))
    if verts.ndim != 2 or verts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) vertices, got {verts.shape}")
    if tris.ndim != 2 or tris.shape[1] != 3:
        raise ValueError(f"expected (M, 3) triangles, got {tris.shape}")

    pos_blob = verts.tobytes()
    idx_blob = tris.tobytes()
    pad = (-len(pos_blob)) % 4
    bin_blob = pos_blob + b"\x00" * pad + idx_blob
    bin_blob += b"\x00" * ((-len(bin_blob)) % 4)

    doc = {
        "asset": {"version": "2.0", "generator": "citytwin"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0, "name": name}],
        "meshes": [
            {"primitives": [{"attributes": {"POSITION": 0}, "indices": 1, "mode": 4}]}
        ],
        "buffers": [{"byteLength": len(bin_blob)}],
        "bufferViews": [
            {"buffer": 0, "byteOffset": 0, "byteLength": len(pos_blob), "target": 34962},
            {
                "buffer": 0,
                "byteOffset": len(pos_blob) + pad,
                "byteLength": len(idx_blob),
                "target": 34963,
            },
        ],
        "accessors": [
            {
                "bufferView": 0,
                "componentType": 5126,
                "count": int(verts.shape[0]),
                "type": "VEC3",
                "min": [float(c) for c in verts.min(axis=0)] if len(verts) else [0, 0, 0],
                "max": [float(c) for c in verts.max(axis=0)] if len(verts) else [0, 0, 0],
            },
            {
                "bufferView": 1,
                "componentType": 5125,
                "count": int(tris.size),
                "type": "SCALAR",
            },
        ],
    }
    json_blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    json_blob += b" " * ((-len(json_blob)) % 4)

    total = 12 + 8 + len(json_blob) + 8 + len(bin_blob)
    out = struct.pack("<III", _MAGIC, 2, total)
    out += struct.pack("<II", len(json_blob), _JSON_CHUNK) + json_blob
    out += struct.pack("<II", len(bin_blob), _BIN_CHUNK) + bin_blob
    return out


def parse_glb(blob: bytes) -> tuple[dict, bytes]:
    """Read back (json doc, binary chunk); used by tests and the ingest path."""
    magic, version, length = struct.unpack_from("<III", blob, 0)
    if magic != _MAGIC or version != 2 or length != len(blob):
        raise ValueError("not a GLB v2 blob")
    offset = 12
    doc: dict | None = None
    binary = b""
    while offset < len(blob):
        chunk_len, chunk_type = struct.unpack_from("<II", blob, offset)
        offset += 8
        payload = blob[offset : offset + chunk_len]
        offset += chunk_len
        if chunk_type == _JSON_CHUNK:
            doc = json.loads(payload.decode())
        elif chunk_type == _BIN_CHUNK:
            binary = payload
    if doc is None:
        raise ValueError("GLB without JSON chunk")
    return doc, binary


def glb_mesh_arrays(blob: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Extract (vertices, triangles) from a single-primitive GLB."""
    doc, binary = parse_glb(blob)
    prim = doc["meshes"][0]["primitives"][0]
    pos_acc = doc["accessors"][prim["attributes"]["POSITION"]]
    idx_acc = doc["accessors"][prim["indices"]]
    pos_view = doc["bufferViews"][pos_acc["bufferView"]]
    idx_view = doc["bufferViews"][idx_acc["bufferView"]]
    verts = np.frombuffer(
        binary,
        dtype="<f4",
        count=pos_acc["count"] * 3,
        offset=pos_view.get("byteOffset", 0),
    ).reshape(-1, 3)
    tris = np.frombuffer(
        binary,
        dtype="<u4",
        count=idx_acc["count"],
        offset=idx_view.get("byteOffset", 0),
    ).reshape(-1, 3)
    return verts.copy(), tris.copy()
