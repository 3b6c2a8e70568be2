"""Triangle mesh loading, normalization, and ground placement.

Meshes live in scene units with z up. The renderer expects objects that sit
on the ground plane z=0 so their shadows connect to them; `settle` enforces
that by vertical translation.
"""

import logging
import os
from dataclasses import dataclass, replace

import numpy as np

log = logging.getLogger(__name__)

DEGENERATE_AREA_TOL = 1e-12


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class DegenerateGeometryError(MeshError):
    pass


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle geometry.

    vertices: (N, 3) float64, scene units, z-up.
    triangles: (M, 3) int64 vertex indices.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    name: str = "mesh"

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError(f"triangle index out of range for {len(v)} vertices")

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def bounds(self):
        """Axis-aligned (min, max) corners, each shape (3,)."""
        if not len(self.vertices):
            raise MeshError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def triangle_areas(self):
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def _drop_degenerate(vertices, triangles, name):
    mesh = TriangleMesh(vertices, triangles, name)
    if not mesh.num_triangles:
        return mesh, 0
    keep = mesh.triangle_areas() > DEGENERATE_AREA_TOL
    dropped = int((~keep).sum())
    if dropped:
        log.warning("%s: dropped %d degenerate triangle(s)", name, dropped)
        mesh = replace(mesh, triangles=mesh.triangles[keep])
    return mesh, dropped


def parse_obj(data, name="mesh"):
    """Parse an ASCII Wavefront-OBJ subset into a TriangleMesh.

    Supported: `v x y z`, `f` with 3+ indices (fans triangulated), comments.
    Face entries may carry `/vt/vn` parts, which are ignored along with
    normal/texcoord/material statements. Indices are 1-based; negative
    indices count back from the current vertex list.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise MeshParseError(f"not ASCII: {exc}") from None
    else:
        text = data

    vertices = []
    faces = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        if key == "v":
            if len(parts) < 4:
                raise MeshParseError(f"vertex needs 3 coordinates: {raw!r}", line_no)
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError:
                raise MeshParseError(f"bad vertex coordinate: {raw!r}", line_no) from None
        elif key == "f":
            if len(parts) < 4:
                raise MeshParseError(f"face needs at least 3 indices: {raw!r}", line_no)
            idx = []
            for token in parts[1:]:
                head = token.split("/", 1)[0]
                try:
                    i = int(head)
                except ValueError:
                    raise MeshParseError(f"bad face index {token!r}", line_no) from None
                if i < 0:
                    i = len(vertices) + i
                else:
                    i = i - 1
                if i < 0 or i >= len(vertices):
                    raise MeshParseError(
                        f"face index {head} out of range (mesh has {len(vertices)} vertices)",
                        line_no,
                    )
                idx.append(i)
            for k in range(1, len(idx) - 1):  # fan triangulation
                faces.append((idx[0], idx[k], idx[k + 1]))
        elif key in ("vn", "vt", "vp", "mtllib", "usemtl", "o", "g", "s", "l"):
            continue
        else:
            raise MeshParseError(f"unsupported statement {key!r}", line_no)

    mesh, _ = _drop_degenerate(
        np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
        np.asarray(faces, dtype=np.int64).reshape(-1, 3),
        name,
    )
    return mesh


def serialize_obj(mesh):
    """Write the mesh back as OBJ text (exact float round-trip)."""
    lines = [f"# {mesh.name}"]
    for v in mesh.vertices:
        lines.append("v %.17g %.17g %.17g" % (v[0], v[1], v[2]))
    for t in mesh.triangles:
        lines.append("f %d %d %d" % (t[0] + 1, t[1] + 1, t[2] + 1))
    return "\n".join(lines) + "\n"


def load_obj(path):
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_obj(data, name=os.path.splitext(os.path.basename(path))[0])


def save_obj(mesh, path):
    with open(path, "w") as fh:
        fh.write(serialize_obj(mesh))


def normalize_mesh(mesh, target_extent=2.0):
    """Scale so the largest bounding-box dimension equals target_extent.

    The mesh is scaled uniformly about its bounding-box center and the
    center is moved to the origin; call `settle` afterwards to rest it on
    the ground plane.
    """
    if target_extent <= 0:
        raise ValueError(f"target_extent must be positive, got {target_extent}")
    lo, hi = mesh.bounds()
    extent = hi - lo
    largest = float(extent.max())
    if largest <= 0:
        raise DegenerateGeometryError(f"{mesh.name}: zero-extent mesh cannot be normalized")
    center = (lo + hi) / 2.0
    scale = target_extent / largest
    return replace(mesh, vertices=(mesh.vertices - center) * scale)


def rotate_z(mesh, degrees):
    """Rotate about the z-axis through the origin."""
    rad = np.deg2rad(degrees)
    c, s = np.cos(rad), np.sin(rad)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return replace(mesh, vertices=mesh.vertices @ rot.T)


def settle(mesh):
    """Translate along z so the lowest vertex touches the ground plane z=0."""
    z_min = float(mesh.vertices[:, 2].min())
    if z_min == 0.0:
        return mesh
    shift = np.array([0.0, 0.0, -z_min])
    return replace(mesh, vertices=mesh.vertices + shift)
