import logging

import numpy as np

logger = logging.getLogger(__name__)

FLOW_KINDS = ("zero", "constant", "shear", "cellular", "kolmogorov")


def chart_coordinates(mesh, points):
    """Normalized chart coordinates (x, y) of ``points`` and the 3D tangent frame of each axis.

    Planar and embedding charts use the bounding box of the vertices mapped to
    [0, 1]. Sphere and torus use angles divided by pi, so the periodic
    direction spans a length-2 interval and the analytic flows stay continuous
    across the seam.
    """
    if mesh.chart == "sphere":
        lon = np.arctan2(points[:, 1], points[:, 0])
        radius = np.linalg.norm(points, axis=1)
        lat = np.arcsin(np.clip(points[:, 2] / radius, -1.0, 1.0))
        e_x = np.column_stack([-np.sin(lon), np.cos(lon), np.zeros_like(lon)])
        e_y = np.column_stack([-np.sin(lat) * np.cos(lon), -np.sin(lat) * np.sin(lon), np.cos(lat)])
        return (lon + np.pi) / np.pi, (lat + np.pi / 2) / np.pi, e_x, e_y
    if mesh.chart == "torus":
        R = mesh.chart_params["R"]
        phi = np.arctan2(points[:, 1], points[:, 0])
        rho = np.hypot(points[:, 0], points[:, 1]) - R
        theta = np.arctan2(points[:, 2], rho)
        e_x = np.column_stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)])
        e_y = np.column_stack([-np.sin(theta) * np.cos(phi), -np.sin(theta) * np.sin(phi), np.cos(theta)])
        return phi / np.pi, theta / np.pi, e_x, e_y

    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    extent = np.where(hi - lo > 0, hi - lo, 1.0)
    x = (points[:, 0] - lo[0]) / extent[0]
    y = (points[:, 1] - lo[1]) / extent[1]
    ones, zeros = np.ones_like(x), np.zeros_like(x)
    return x, y, np.column_stack([ones, zeros, zeros]), np.column_stack([zeros, ones, zeros])


def project_to_faces(mesh, vectors):
    normals = mesh.face_normals
    return vectors - np.einsum("ij,ij->i", vectors, normals)[:, None] * normals


def make_flow(kind, mesh, velocity=(1.0, 0.0, 0.0), shear_rate=1.0, amplitude=1.0):
    """Analytic flow sampled at face barycenters and projected into each face plane."""
    if kind not in FLOW_KINDS:
        raise ValueError(f"unknown flow '{kind}', expected one of {FLOW_KINDS}")
    if kind == "zero":
        return np.zeros((mesh.n_faces, 3))
    if kind == "constant":
        vectors = np.broadcast_to(np.asarray(velocity, dtype=float), (mesh.n_faces, 3))
        return project_to_faces(mesh, vectors)

    x, y, e_x, e_y = chart_coordinates(mesh, mesh.barycenters)
    if kind == "shear":
        a, b = shear_rate * y, np.zeros_like(y)
    elif kind == "cellular":
        a = -np.sin(np.pi * x) * np.cos(np.pi * y)
        b = np.cos(np.pi * x) * np.sin(np.pi * y)
    else:
        a, b = np.sin(2 * np.pi * y), np.zeros_like(y)
    vectors = amplitude * (a[:, None] * e_x + b[:, None] * e_y)
    logger.debug(f"Sampled {kind} flow on {mesh} in the {mesh.chart} chart")
    return project_to_faces(mesh, vectors)


def tangency_error(mesh, phi):
    """Largest ``|phi_j . n_j| / |phi_j|`` over faces with nonzero vectors."""
    lengths = np.linalg.norm(phi, axis=1)
    normal = np.abs(np.einsum("ij,ij->i", phi, mesh.face_normals))
    nonzero = lengths > 0
    if not nonzero.any():
        return 0.0
    return float((normal[nonzero] / lengths[nonzero]).max())
