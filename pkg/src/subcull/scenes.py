"""Scene sources: a small OBJ reader/writer and two procedural generators."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import Triangle

DATA_DIR = Path(__file__).with_name("data")


class ObjParseError(ValueError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


def _vertex_ref(token: str, n_vertices: int, path, line_no: int) -> int:
    head = token.split("/", 1)[0]
    try:
        i = int(head)
    except ValueError:
        raise ObjParseError(path, line_no, f"bad vertex reference {token!r}") from None
    if i > 0:
        i -= 1
    elif i < 0:
        i += n_vertices
    else:
        raise ObjParseError(path, line_no, "vertex index 0 is not valid")
    if not 0 <= i < n_vertices:
        raise ObjParseError(path, line_no, f"vertex reference {token!r} out of range")
    return i


def parse_obj(text: str, path="<obj>") -> list[Triangle]:
    """Triangles from OBJ text; polygons are fan-triangulated, ids follow file order."""
    vertices: list[tuple[float, float, float]] = []
    out: list[Triangle] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise ObjParseError(path, line_no, "vertex needs three coordinates")
            try:
                x, y, z = (float(c) for c in rest[:3])
            except ValueError:
                raise ObjParseError(path, line_no, f"malformed vertex {line!r}") from None
            if not all(np.isfinite((x, y, z))):
                raise ObjParseError(path, line_no, "non-finite vertex coordinate")
            vertices.append((x, y, z))
        elif tag == "f":
            if len(rest) < 3:
                raise ObjParseError(path, line_no, "face needs at least three vertices")
            idx = [_vertex_ref(tok, len(vertices), path, line_no) for tok in rest]
            for k in range(1, len(idx) - 1):
                out.append(Triangle(vertices[idx[0]], vertices[idx[k]], vertices[idx[k + 1]],
                                    primitive_id=len(out)))
    if not out:
        raise ObjParseError(path, 0, "no triangles")
    return out


def load_obj(path) -> list[Triangle]:
    path = Path(path)
    return parse_obj(path.read_text(encoding="ascii", errors="strict"), path)


def write_obj(path, triangles) -> None:
    """Unindexed OBJ (three vertices per face)."""
    lines = []
    for tri in triangles:
        for v in tri.vertices:
            lines.append("v %.9g %.9g %.9g" % tuple(v))
    for i in range(len(triangles)):
        lines.append(f"f {3 * i + 1} {3 * i + 2} {3 * i + 3}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def bundled_obj(name: str = "torus_knot.obj") -> Path:
    return DATA_DIR / name


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def gen_hair_scene(seed: int = 0, strand_count: int = 300, segments: int = 12,
                   thickness: float = 0.004) -> list[Triangle]:
    """Thin tilted ribbons following smooth random polylines inside the unit cube."""
    if strand_count < 1 or segments < 1 or thickness <= 0:
        raise ValueError("strand_count, segments and thickness must be positive")
    rng = np.random.default_rng(seed)
    step = 0.6 / segments
    tris: list[Triangle] = []
    for _ in range(strand_count):
        # mostly diagonal growth direction with a gentle random bend
        direction = _unit(np.array([1.0, 1.0, 1.0]) + 0.6 * rng.standard_normal(3))
        points = [rng.uniform(0.05, 0.45, 3)]
        for _ in range(segments):
            direction = _unit(direction + 0.25 * rng.standard_normal(3))
            points.append(np.clip(points[-1] + step * direction, 0.0, 1.0))
        pts = np.array(points)
        tangent = _unit(np.gradient(pts, axis=0) + 1e-12)
        side = np.cross(tangent, _unit(rng.standard_normal(3)))
        side = _unit(side + 1e-12) * (0.5 * thickness)
        left, right = pts - side, pts + side
        for k in range(segments):
            tris.append(Triangle(left[k], right[k], right[k + 1], primitive_id=len(tris)))
            tris.append(Triangle(left[k], right[k + 1], left[k + 1], primitive_id=len(tris)))
    return tris


_CUBE_CORNERS = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=float) - 0.5
_CUBE_FACES = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]


def _rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    return q * np.sign(np.diag(r))


def gen_cube_array(n: int = 5, size: float = 0.09, seed: int = 0, rotate: bool = True) -> list[Triangle]:
    """n^3 small cubes on a regular lattice in the unit cube, optionally randomly rotated."""
    if n < 1 or size <= 0:
        raise ValueError("n and size must be positive")
    rng = np.random.default_rng(seed)
    tris: list[Triangle] = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                centre = (np.array([i, j, k]) + 0.5) / n
                rot = _rotation(rng) if rotate else np.eye(3)
                corners = centre + size * _CUBE_CORNERS @ rot.T
                for a, b, c, d in _CUBE_FACES:
                    tris.append(Triangle(corners[a], corners[b], corners[c], primitive_id=len(tris)))
                    tris.append(Triangle(corners[a], corners[c], corners[d], primitive_id=len(tris)))
    return tris


def torus_knot(p: int = 2, q: int = 3, rings: int = 160, sides: int = 10, tube: float = 0.08):
    """Vertices and quad faces of a (p, q) torus-knot tube, fitted into the unit cube."""
    s = np.linspace(0.0, 2 * np.pi, rings, endpoint=False)
    r = 0.5 + 0.2 * np.cos(q * s)
    centre = np.stack([r * np.cos(p * s), r * np.sin(p * s), 0.2 * np.sin(q * s)], axis=1)
    tangent = _unit(np.roll(centre, -1, axis=0) - np.roll(centre, 1, axis=0))
    normal = _unit(np.cross(tangent, [0.0, 0.0, 1.0]))
    binormal = np.cross(tangent, normal)
    a = np.linspace(0.0, 2 * np.pi, sides, endpoint=False)
    verts = (centre[:, None, :] + tube * (np.cos(a)[None, :, None] * normal[:, None, :]
                                          + np.sin(a)[None, :, None] * binormal[:, None, :]))
    verts = verts.reshape(-1, 3)
    verts = (verts - verts.min(0)) / (verts.max(0) - verts.min(0)).max()
    faces = []
    for i in range(rings):
        for j in range(sides):
            i1, j1 = (i + 1) % rings, (j + 1) % sides
            faces.append((i * sides + j, i1 * sides + j, i1 * sides + j1, i * sides + j1))
    return verts, faces


def write_indexed_obj(path, verts, faces, comment: str) -> None:
    lines = [f"# {comment}"]
    lines += ["v %.6f %.6f %.6f" % tuple(v) for v in verts]
    lines += ["f " + " ".join(str(i + 1) for i in f) for f in faces]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


SCENES = ("cubes", "hair", "knot")


def load_scene(name: str, seed: int = 0) -> list[Triangle]:
    """Named built-in scene, or a path to an OBJ file."""
    if name == "cubes":
        return gen_cube_array(seed=seed)
    if name == "hair":
        return gen_hair_scene(seed=seed)
    if name == "knot":
        return load_obj(bundled_obj())
    return load_obj(name)
