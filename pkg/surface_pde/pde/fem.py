import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import MeshValidationError
from .mesh import check_manifold

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundaryCondition:
    """``neumann`` is the natural cotangent assembly; ``dirichlet`` pins ``vertices`` to ``values``."""

    kind: str = "neumann"
    vertices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def neumann(cls):
        return cls()

    @classmethod
    def dirichlet(cls, vertices, values=0.0):
        vertices = np.unique(np.asarray(vertices, dtype=np.int64))
        values = np.broadcast_to(np.asarray(values, dtype=float), vertices.shape).copy()
        return cls("dirichlet", vertices, values)

    @classmethod
    def dirichlet_boundary(cls, mesh, value=0.0):
        return cls.dirichlet(mesh.boundary_vertices, value)

    @property
    def is_dirichlet(self):
        return self.kind == "dirichlet" and self.vertices.size > 0

    def apply(self, u):
        """Return a copy of ``u`` with the pinned values written in."""
        u = np.array(u, dtype=float)
        if self.is_dirichlet:
            u[self.vertices] = self.values
        return u


@dataclass(frozen=True, eq=False)
class FemOperators:
    """First-order FEM operators of a triangle mesh.

    ``G`` maps vertex values to per-face gradients stacked component-major:
    rows ``k*F:(k+1)*F`` hold the k-th Cartesian component. Face vector
    fields are kept as ``(F, 3)`` arrays and flattened with ``phi.T.ravel()``.
    """

    mesh: object
    bc: BoundaryCondition
    mass: np.ndarray
    L: sp.csr_matrix
    G: sp.csr_matrix
    areas: np.ndarray
    one_ring: sp.csr_matrix
    omega: np.ndarray

    @property
    def n_vertices(self):
        return self.mass.shape[0]

    @property
    def n_faces(self):
        return self.areas.shape[0]

    @property
    def M(self):
        return sp.diags(self.mass, format="csr")

    @property
    def M_F(self):
        return sp.diags(self.areas, format="csr")

    @property
    def M_F3(self):
        return sp.diags(np.tile(self.areas, 3), format="csr")

    @property
    def D(self):
        return (self.G.T @ self.M_F3).tocsr()

    @property
    def free(self):
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.bc.vertices] = False
        return mask

    @property
    def ring_average(self):
        """Sparse ``(V, F)`` map ``diag(omega) @ one_ring @ diag(areas)``."""
        return (sp.diags(self.omega) @ self.one_ring @ sp.diags(self.areas)).tocsr()

    def stiffness(self):
        return (self.G.T @ self.M_F3 @ self.G).tocsr()

    def grad(self, u):
        """Per-face gradient of a vertex field as an ``(F, 3)`` array."""
        return (self.G @ u).reshape(3, self.n_faces).T

    def div(self, phi):
        return self.D @ flatten_face_field(phi)

    def face_sum(self, per_face_values):
        """Per vertex ``omega_i * sum_{j~i} a_j * values_j``."""
        return vertex_to_face_average(per_face_values, self)

    def mass_norm(self, v):
        return float(np.sqrt(v @ (self.mass * v)))

    def total_mass(self, u):
        return float(self.mass @ u)


def flatten_face_field(phi):
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 2:
        return phi.T.ravel()
    return phi


def _corner_vectors(vertices, faces):
    x = [vertices[faces[:, k]] for k in range(3)]
    # Edge opposite corner k runs from k+1 to k+2.
    return x, [x[(k + 2) % 3] - x[(k + 1) % 3] for k in range(3)]


def _cotangents(x):
    cots = []
    for k in range(3):
        e1 = x[(k + 1) % 3] - x[k]
        e2 = x[(k + 2) % 3] - x[k]
        cots.append(np.einsum("ij,ij->i", e1, e2) / np.linalg.norm(np.cross(e1, e2), axis=1))
    return cots


def cotangent_laplacian(vertices, faces):
    n = vertices.shape[0]
    x, _ = _corner_vectors(vertices, faces)
    cots = _cotangents(x)
    rows, cols, data = [], [], []
    for k in range(3):
        i, j = faces[:, (k + 1) % 3], faces[:, (k + 2) % 3]
        w = 0.5 * cots[k]
        rows += [i, j]
        cols += [j, i]
        data += [w, w]
    W = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    return (W - sp.diags(np.asarray(W.sum(axis=1)).ravel())).tocsr()


def voronoi_areas(vertices, faces, face_areas):
    """Mixed Voronoi areas: circumcentric split on non-obtuse faces, area/2 and area/4 at obtuse ones."""
    n = vertices.shape[0]
    x, opposite = _corner_vectors(vertices, faces)
    cots = _cotangents(x)
    sq = [np.einsum("ij,ij->i", e, e) for e in opposite]
    obtuse = np.column_stack([
        np.einsum("ij,ij->i", x[(k + 1) % 3] - x[k], x[(k + 2) % 3] - x[k]) < 0 for k in range(3)
    ])
    any_obtuse = obtuse.any(axis=1)
    contributions = []
    for k in range(3):
        # Vertex k touches the edges opposite k+1 and k+2.
        circumcentric = (sq[(k + 1) % 3] * cots[(k + 1) % 3] + sq[(k + 2) % 3] * cots[(k + 2) % 3]) / 8.0
        clamped = np.where(obtuse[:, k], face_areas / 2.0, face_areas / 4.0)
        contributions.append(np.where(any_obtuse, clamped, circumcentric))
    mass = np.zeros(n)
    for k in range(3):
        np.add.at(mass, faces[:, k], contributions[k])
    return mass


def gradient_operator(vertices, faces, face_areas, face_normals):
    n, n_faces = vertices.shape[0], faces.shape[0]
    x, opposite = _corner_vectors(vertices, faces)
    rows, cols, data = [], [], []
    face_index = np.arange(n_faces)
    for k in range(3):
        g = np.cross(face_normals, opposite[k]) / (2.0 * face_areas[:, None])
        for c in range(3):
            rows.append(c * n_faces + face_index)
            cols.append(faces[:, k])
            data.append(g[:, c])
    return sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(3 * n_faces, n)).tocsr()


def incidence_matrix(faces, n_vertices):
    n_faces = faces.shape[0]
    rows = faces.T.ravel()
    cols = np.tile(np.arange(n_faces), 3)
    return sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n_vertices, n_faces)).tocsr()


def build_fem_operators(mesh, bc=None):
    check_manifold(mesh)
    bc = bc or BoundaryCondition.neumann()
    if bc.vertices.size and (bc.vertices.min() < 0 or bc.vertices.max() >= mesh.n_vertices):
        raise MeshValidationError("Dirichlet vertex index out of range",
                                  {"n_vertices": mesh.n_vertices})

    areas = mesh.face_areas
    one_ring = incidence_matrix(mesh.faces, mesh.n_vertices)
    ring_area = one_ring @ areas
    if np.any(ring_area <= 0):
        isolated = int(np.flatnonzero(ring_area <= 0)[0])
        raise MeshValidationError(f"vertex {isolated} belongs to no face", {"vertex": isolated})

    ops = FemOperators(
        mesh=mesh,
        bc=bc,
        mass=voronoi_areas(mesh.vertices, mesh.faces, areas),
        L=cotangent_laplacian(mesh.vertices, mesh.faces),
        G=gradient_operator(mesh.vertices, mesh.faces, areas, mesh.face_normals),
        areas=areas,
        one_ring=one_ring,
        omega=1.0 / ring_area,
    )
    logger.info(f"Assembled FEM operators on {mesh} with {bc.kind} boundary "
                f"({bc.vertices.size} pinned vertices)")
    return ops


def vertex_to_face_average(per_face_values, ops):
    """Area-weighted average of face values over each vertex's one-ring."""
    per_face_values = np.asarray(per_face_values, dtype=float)
    if per_face_values.shape != (ops.n_faces,):
        raise ValueError(f"expected {ops.n_faces} face values, got shape {per_face_values.shape}")
    return ops.omega * (ops.one_ring @ (ops.areas * per_face_values))
