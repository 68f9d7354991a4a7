"""Wavefront-OBJ subset reader/writer for triangle meshes.

Accepted directives: `v x y z`, `vt u v`, `f a/a b/b c/c` (1-based, the
vertex and uv index of each corner must be equal) and `#` comments.
Anything else is a ParseError.  Floats are written with repr precision,
so save -> load round-trips are bit-exact.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import InvariantViolation, ParseError
from .geometry import TriangleMesh


def _parse_floats(parts, count, path, line_no, what):
    if len(parts) != count:
        raise ParseError(f"{what} needs {count} values, got {len(parts)}", path, line_no)
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ParseError(f"malformed {what} value", path, line_no) from None


def load_mesh(path) -> TriangleMesh:
    vertices = []
    uvs = []
    faces = []
    with open(path, "r", encoding="ascii") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            tag, rest = tokens[0], tokens[1:]
            if tag == "v":
                vertices.append(_parse_floats(rest, 3, path, line_no, "vertex"))
            elif tag == "vt":
                uvs.append(_parse_floats(rest, 2, path, line_no, "uv"))
            elif tag == "f":
                if len(rest) != 3:
                    raise ParseError(
                        f"face needs 3 corners, got {len(rest)}", path, line_no
                    )
                tri = []
                for corner in rest:
                    fields = corner.split("/")
                    if len(fields) != 2:
                        raise ParseError(
                            f"face corner must be v/vt, got '{corner}'", path, line_no
                        )
                    try:
                        vi, ti = int(fields[0]), int(fields[1])
                    except ValueError:
                        raise ParseError(
                            f"malformed face corner '{corner}'", path, line_no
                        ) from None
                    if vi != ti:
                        raise ParseError(
                            f"vertex/uv indices must be equal, got {vi}/{ti}",
                            path,
                            line_no,
                        )
                    if vi < 1:
                        raise ParseError(
                            f"face index {vi} is not 1-based positive", path, line_no
                        )
                    tri.append(vi - 1)
                faces.append(tri)
            else:
                raise ParseError(f"unsupported directive '{tag}'", path, line_no)
    if len(uvs) != len(vertices):
        raise ParseError(
            f"{len(vertices)} vertices but {len(uvs)} uv coordinates", path
        )
    for tri in faces:
        if max(tri) >= len(vertices):
            raise InvariantViolation(
                f"face index {max(tri) + 1} exceeds vertex count {len(vertices)}"
            )
    return TriangleMesh(
        np.asarray(vertices, dtype=np.float64).reshape(len(vertices), 3),
        np.asarray(faces, dtype=np.int64).reshape(len(faces), 3),
        np.asarray(uvs, dtype=np.float64).reshape(len(uvs), 2),
    )


def save_mesh(mesh: TriangleMesh, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for u, v in mesh.uv_coords:
            fh.write(f"vt {float(u)!r} {float(v)!r}\n")
        for a, b, c in mesh.triangles + 1:
            fh.write(f"f {a}/{a} {b}/{b} {c}/{c}\n")
    os.replace(tmp, path)
