import numpy as np

from pde.mesh import TriangleMesh, generate_mesh


def single_triangle():
    return TriangleMesh([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [[0, 1, 2]], name="triangle")


def equilateral_triangle(area=1.0):
    side = np.sqrt(4.0 * area / np.sqrt(3.0))
    vertices = [[0.0, 0.0, 0.0], [side, 0.0, 0.0], [side / 2.0, side * np.sqrt(3.0) / 2.0, 0.0]]
    return TriangleMesh(vertices, [[0, 1, 2]], name="equilateral")


def unit_square():
    return generate_mesh("grid", nx=1, ny=1, spacing=1.0)


def identity_meshes():
    return [
        single_triangle(),
        unit_square(),
        generate_mesh("icosphere", level=2),
        generate_mesh("icosphere", level=3),
        generate_mesh("grid", nx=20, ny=20, spacing=0.05),
    ]


def face_gradients(mesh, u):
    """Gradient of the linear interpolant on every face, by a per-face least-squares solve."""
    out = np.zeros((mesh.n_faces, 3))
    for j, (a, b, c) in enumerate(mesh.faces):
        edges = np.array([mesh.vertices[b] - mesh.vertices[a], mesh.vertices[c] - mesh.vertices[a]])
        out[j] = np.linalg.lstsq(edges, [u[b] - u[a], u[c] - u[a]], rcond=None)[0]
    return out


def ring_average(mesh, per_face_values, vertex):
    faces = [j for j, face in enumerate(mesh.faces) if vertex in face]
    areas = mesh.face_areas[faces]
    return float(areas @ np.asarray(per_face_values)[faces] / areas.sum())


def write_text(path, text):
    with open(path, "w") as handle:
        handle.write(text)
    return path
