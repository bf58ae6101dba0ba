from pathlib import Path

import numpy as np

from .exceptions import ConfigError


def write_vertex_field(path, values):
    np.savetxt(path, np.asarray(values, dtype=float), fmt="%.17g")


def read_vertex_field(path, n_vertices=None):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"field file not found: {path}", {"path": str(path)})
    try:
        values = np.loadtxt(path, dtype=float, ndmin=1)
    except ValueError as e:
        raise ConfigError(f"malformed field file {path}: {e}", {"path": str(path)})
    if values.ndim != 1:
        raise ConfigError(f"{path}: expected one value per line", {"path": str(path)})
    if n_vertices is not None and values.size != n_vertices:
        raise ConfigError(f"{path}: has {values.size} values, mesh has {n_vertices} vertices",
                          {"path": str(path), "expected": n_vertices, "found": int(values.size)})
    return values


def write_face_field(path, phi):
    np.savetxt(path, np.asarray(phi, dtype=float).reshape(-1, 3), fmt="%.17g")


def read_face_field(path, n_faces=None):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"flow file not found: {path}", {"path": str(path)})
    try:
        phi = np.loadtxt(path, dtype=float, ndmin=2)
    except ValueError as e:
        raise ConfigError(f"malformed flow file {path}: {e}", {"path": str(path)})
    if phi.shape[1] != 3:
        raise ConfigError(f"{path}: expected three floats per line", {"path": str(path)})
    if n_faces is not None and phi.shape[0] != n_faces:
        raise ConfigError(f"{path}: has {phi.shape[0]} vectors, mesh has {n_faces} faces",
                          {"path": str(path), "expected": n_faces, "found": int(phi.shape[0])})
    return phi
