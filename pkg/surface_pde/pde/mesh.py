import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from django.conf import settings

from .exceptions import MeshFormatError, MeshValidationError

logger = logging.getLogger(__name__)

DEGENERATE_AREA_RATIO = 1e-14
MESH_FORMATS = ("obj", "off")
MESH_KINDS = ("icosphere", "grid", "torus", "unit_line")


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Vertex positions plus 0-based, consistently oriented triangle index triples.

    ``chart`` names the coordinate system analytic flows are evaluated in:
    ``planar`` and ``embedding`` use bounding-box-normalized (x, y), ``sphere``
    and ``torus`` use their angular parameters (see ``flows.py``).
    """

    vertices: np.ndarray
    faces: np.ndarray
    boundary: np.ndarray = None
    chart: str = "embedding"
    chart_params: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)
        if self.boundary is not None:
            object.__setattr__(self, "boundary", np.asarray(self.boundary, dtype=bool))
        validate_mesh(self)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    @cached_property
    def face_cross(self):
        v0, v1, v2 = (self.vertices[self.faces[:, k]] for k in range(3))
        return np.cross(v1 - v0, v2 - v0)

    @cached_property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_cross, axis=1)

    @cached_property
    def face_normals(self):
        return self.face_cross / (2.0 * self.face_areas[:, None])

    @cached_property
    def barycenters(self):
        return self.vertices[self.faces].mean(axis=1)

    @property
    def area(self):
        return float(self.face_areas.sum())

    @cached_property
    def edges(self):
        """Unique undirected edges as sorted (i, j) pairs."""
        return np.unique(np.sort(half_edges(self.faces), axis=1), axis=0)

    @cached_property
    def edge_face_counts(self):
        _, counts = np.unique(np.sort(half_edges(self.faces), axis=1), axis=0, return_counts=True)
        return counts

    @property
    def is_closed(self):
        return bool(np.all(self.edge_face_counts == 2))

    @cached_property
    def boundary_vertices(self):
        if self.boundary is not None:
            return np.flatnonzero(self.boundary)
        return np.unique(self.edges[self.edge_face_counts == 1])

    @property
    def max_edge_length(self):
        e = self.edges
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).max())

    @cached_property
    def vertex_normals(self):
        normals = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(normals, self.faces[:, k], self.face_cross)
        lengths = np.linalg.norm(normals, axis=1)
        lengths[lengths == 0] = 1.0
        return normals / lengths[:, None]

    def __str__(self):
        label = self.name or self.chart
        return f"{label} (|V|={self.n_vertices}, |F|={self.n_faces})"


def half_edges(faces):
    return np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])


def validate_mesh(mesh):
    vertices, faces = mesh.vertices, mesh.faces
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise MeshValidationError("vertices must be an array of 3D coordinates",
                                  {"shape": list(vertices.shape)})
    if faces.ndim != 2 or faces.shape[1] != 3 or faces.shape[0] == 0:
        raise MeshValidationError("faces must be a non-empty array of index triples",
                                  {"shape": list(faces.shape)})
    if not np.all(np.isfinite(vertices)):
        raise MeshValidationError("vertex coordinates must be finite")
    if faces.min() < 0 or faces.max() >= vertices.shape[0]:
        bad = int(np.flatnonzero((faces < 0).any(axis=1) | (faces >= vertices.shape[0]).any(axis=1))[0])
        raise MeshValidationError(f"face {bad} references a vertex outside [0, {vertices.shape[0]})",
                                  {"face": bad})
    repeated = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
    if repeated.any():
        bad = int(np.flatnonzero(repeated)[0])
        raise MeshValidationError(f"face {bad} repeats a vertex", {"face": bad})
    if mesh.boundary is not None and mesh.boundary.shape != (vertices.shape[0],):
        raise MeshValidationError("boundary marker must have one entry per vertex")

    areas = mesh.face_areas
    threshold = DEGENERATE_AREA_RATIO * areas.mean()
    degenerate = np.flatnonzero(areas <= threshold)
    if degenerate.size:
        bad = int(degenerate[0])
        raise MeshValidationError(
            f"face {bad} is degenerate (area {areas[bad]:.3e} <= {threshold:.3e})",
            {"face": bad, "area": float(areas[bad]), "threshold": float(threshold)},
        )


def check_manifold(mesh):
    """Reject edges shared by more than two faces and inconsistently oriented neighbours."""
    counts = mesh.edge_face_counts
    if np.any(counts > 2):
        edge = mesh.edges[np.flatnonzero(counts > 2)[0]]
        raise MeshValidationError(f"non-manifold edge ({edge[0]}, {edge[1]}) has {counts.max()} faces",
                                  {"edge": [int(edge[0]), int(edge[1])]})
    directed, directed_counts = np.unique(half_edges(mesh.faces), axis=0, return_counts=True)
    if np.any(directed_counts > 1):
        edge = directed[np.flatnonzero(directed_counts > 1)[0]]
        raise MeshValidationError(
            f"faces sharing edge ({edge[0]}, {edge[1]}) are inconsistently oriented",
            {"edge": [int(edge[0]), int(edge[1])]},
        )
    return mesh


def _content_lines(path):
    with open(path, "r") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield number, line


def read_off(path):
    lines = _content_lines(path)
    try:
        number, header = next(lines)
    except StopIteration:
        raise MeshFormatError(f"{path}: empty OFF file")
    tokens = header.split()
    if not tokens[0].upper().endswith("OFF"):
        raise MeshFormatError(f"{path}:{number}: missing OFF header", {"line": number})
    tokens = tokens[1:]
    if not tokens:
        try:
            number, counts_line = next(lines)
        except StopIteration:
            raise MeshFormatError(f"{path}: missing element counts")
        tokens = counts_line.split()
    try:
        n_vertices, n_faces = int(tokens[0]), int(tokens[1])
    except (IndexError, ValueError):
        raise MeshFormatError(f"{path}:{number}: malformed element counts", {"line": number})

    vertices = np.empty((n_vertices, 3))
    faces = np.empty((n_faces, 3), dtype=np.int64)
    try:
        for i in range(n_vertices):
            number, line = next(lines)
            vertices[i] = [float(x) for x in line.split()[:3]]
        for f in range(n_faces):
            number, line = next(lines)
            values = [int(x) for x in line.split()]
            if values[0] != 3 or len(values) < 4:
                raise MeshFormatError(f"{path}:{number}: only triangular faces are supported",
                                      {"line": number})
            faces[f] = values[1:4]
    except StopIteration:
        raise MeshFormatError(f"{path}: file ends before all {n_vertices} vertices and {n_faces} faces")
    except ValueError:
        raise MeshFormatError(f"{path}:{number}: malformed line", {"line": number})

    out_of_range = (faces < 0) | (faces >= n_vertices)
    if out_of_range.any():
        bad = int(np.flatnonzero(out_of_range.any(axis=1))[0])
        raise MeshFormatError(f"{path}: face {bad} index out of range", {"face": bad})
    return vertices, faces


def _obj_index(token, n_vertices, path, number):
    try:
        index = int(token.split("/")[0])
    except ValueError:
        raise MeshFormatError(f"{path}:{number}: malformed face index '{token}'", {"line": number})
    if index == 0:
        raise MeshFormatError(f"{path}:{number}: OBJ indices are 1-based, got 0", {"line": number})
    resolved = index - 1 if index > 0 else n_vertices + index
    if not 0 <= resolved < n_vertices:
        raise MeshFormatError(f"{path}:{number}: face index {index} out of range", {"line": number})
    return resolved


def read_obj(path):
    vertices, faces = [], []
    for number, line in _content_lines(path):
        tokens = line.split()
        if tokens[0] == "v":
            try:
                vertices.append([float(x) for x in tokens[1:4]])
            except ValueError:
                raise MeshFormatError(f"{path}:{number}: malformed vertex", {"line": number})
            if len(vertices[-1]) != 3:
                raise MeshFormatError(f"{path}:{number}: vertex needs three coordinates", {"line": number})
        elif tokens[0] == "f":
            if len(tokens) != 4:
                raise MeshFormatError(f"{path}:{number}: only triangular faces are supported",
                                      {"line": number})
            faces.append([_obj_index(t, len(vertices), path, number) for t in tokens[1:]])
    if not vertices or not faces:
        raise MeshFormatError(f"{path}: no vertices or faces found")
    return np.array(vertices), np.array(faces, dtype=np.int64)


def load_mesh(path, format=None):
    path = Path(path)
    if not path.is_file():
        raise MeshFormatError(f"mesh file not found: {path}", {"path": str(path)})
    format = (format or path.suffix.lstrip(".")).lower()
    if format not in MESH_FORMATS:
        raise MeshFormatError(f"unsupported mesh format '{format}'", {"path": str(path)})
    vertices, faces = read_obj(path) if format == "obj" else read_off(path)
    mesh = check_manifold(TriangleMesh(vertices, faces, name=path.stem))
    logger.info(f"Loaded {mesh} from {path}")
    return mesh


def write_off(mesh, path):
    with open(path, "w") as handle:
        handle.write("OFF\n")
        handle.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
        for x, y, z in mesh.vertices.tolist():
            handle.write(f"{x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces.tolist():
            handle.write(f"3 {a} {b} {c}\n")


def write_obj(mesh, path):
    with open(path, "w") as handle:
        for x, y, z in mesh.vertices.tolist():
            handle.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in (mesh.faces + 1).tolist():
            handle.write(f"f {a} {b} {c}\n")


_ICOSAHEDRON_FACES = [
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
]


def _icosahedron():
    t = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    return vertices / np.linalg.norm(vertices, axis=1)[:, None], np.array(_ICOSAHEDRON_FACES)


def _subdivide_sphere(vertices, faces):
    # Midpoint vertices are appended after the existing ones, so coarse vertex
    # indices survive refinement unchanged.
    pairs = np.sort(half_edges(faces), axis=1)
    unique, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    midpoints = vertices[unique].mean(axis=1)
    midpoints /= np.linalg.norm(midpoints, axis=1)[:, None]
    n_faces = faces.shape[0]
    mid = vertices.shape[0] + inverse
    ab, bc, ca = mid[:n_faces], mid[n_faces:2 * n_faces], mid[2 * n_faces:]
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.concatenate([
        np.column_stack([a, ab, ca]),
        np.column_stack([b, bc, ab]),
        np.column_stack([c, ca, bc]),
        np.column_stack([ab, bc, ca]),
    ])
    return np.vstack([vertices, midpoints]), new_faces


def icosphere(level):
    vertices, faces = _icosahedron()
    for _ in range(level):
        vertices, faces = _subdivide_sphere(vertices, faces)
    v0, v1, v2 = (vertices[faces[:, k]] for k in range(3))
    inward = np.einsum("ij,ij->i", np.cross(v1 - v0, v2 - v0), v0 + v1 + v2) < 0
    faces[inward] = faces[inward][:, [0, 2, 1]]
    return TriangleMesh(vertices, faces, chart="sphere", chart_params={"radius": 1.0},
                        name=f"icosphere{level}")


def grid(nx, ny, spacing=1.0):
    i, j = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    vertices = np.column_stack([i.ravel() * spacing, j.ravel() * spacing, np.zeros(i.size)])
    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (cj * (nx + 1) + ci).ravel()
    v10, v01, v11 = v00 + 1, v00 + nx + 1, v00 + nx + 2
    faces = np.concatenate([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])])
    boundary = ((i == 0) | (i == nx) | (j == 0) | (j == ny)).ravel()
    return TriangleMesh(vertices, faces, boundary=boundary, chart="planar",
                        chart_params={"origin": [0.0, 0.0], "extent": [nx * spacing, ny * spacing]},
                        name=f"grid{nx}x{ny}")


def torus(R, r, nu, nv):
    a, b = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    phi, theta = 2 * np.pi * a.ravel() / nu, 2 * np.pi * b.ravel() / nv
    vertices = np.column_stack([
        (R + r * np.cos(theta)) * np.cos(phi),
        (R + r * np.cos(theta)) * np.sin(phi),
        r * np.sin(theta),
    ])
    a, b = a.ravel(), b.ravel()
    v00 = a * nv + b
    v10 = ((a + 1) % nu) * nv + b
    v01 = a * nv + (b + 1) % nv
    v11 = ((a + 1) % nu) * nv + (b + 1) % nv
    faces = np.concatenate([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])])
    return TriangleMesh(vertices, faces, chart="torus", chart_params={"R": R, "r": r},
                        name=f"torus{nu}x{nv}")


def unit_line(n):
    """Strip of n square cells over [0, 1]; fields constant across the width behave as a 1D chain."""
    mesh = grid(n, 1, 1.0 / n)
    return TriangleMesh(mesh.vertices, mesh.faces, boundary=mesh.boundary, chart="planar",
                        chart_params=mesh.chart_params, name=f"unit_line{n}")


_GENERATORS = {
    "icosphere": (icosphere, lambda p: 20 * 4 ** p["level"]),
    "grid": (grid, lambda p: 2 * p["nx"] * p["ny"]),
    "torus": (torus, lambda p: 2 * p["nu"] * p["nv"]),
    "unit_line": (unit_line, lambda p: 2 * p["n"]),
}


def generate_mesh(kind, face_cap=None, **params):
    if kind not in _GENERATORS:
        raise MeshValidationError(f"unknown mesh generator '{kind}'", {"kind": kind})
    resolution = [v for k, v in params.items() if k in ("level", "nx", "ny", "nu", "nv", "n")]
    if any(v < 0 for v in resolution) or (kind != "icosphere" and any(v < 1 for v in resolution)):
        raise MeshValidationError(f"{kind} needs positive resolution parameters", {"params": params})
    if kind == "torus" and (params["nu"] < 3 or params["nv"] < 3 or not 0 < params["r"] < params["R"]):
        raise MeshValidationError("torus needs nu, nv >= 3 and 0 < r < R", {"params": params})
    generator, face_count = _GENERATORS[kind]
    face_cap = face_cap or settings.PDE_FACE_CAP
    expected = face_count(params)
    if expected > face_cap:
        raise MeshValidationError(
            f"{kind} with {params} would have {expected} faces, above the cap of {face_cap}",
            {"faces": expected, "cap": face_cap},
        )
    mesh = check_manifold(generator(**params))
    logger.info(f"Generated {mesh}")
    return mesh


def perturb_normal(mesh, amplitude, seed=0):
    """Displace every vertex along its normal by uniform noise in [-amplitude, amplitude]."""
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-amplitude, amplitude, size=mesh.n_vertices)
    vertices = mesh.vertices + offsets[:, None] * mesh.vertex_normals
    return TriangleMesh(vertices, mesh.faces, boundary=mesh.boundary, chart=mesh.chart,
                        chart_params=mesh.chart_params, name=f"{mesh.name}-noisy")
