import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from pde.exceptions import ConfigError
from pde.fem import build_fem_operators
from pde.fields import read_face_field, read_vertex_field, write_face_field, write_vertex_field
from pde.flows import chart_coordinates, make_flow, tangency_error
from pde.hamiltonian import HamiltonianKind, eval_H, linear_operator
from pde.mesh import TriangleMesh, generate_mesh

from .helpers import face_gradients, ring_average


class HamiltonianTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.mesh = generate_mesh("grid", nx=3, ny=3, spacing=1.0 / 3.0)
        cls.ops = build_fem_operators(cls.mesh)
        rng = np.random.default_rng(1)
        cls.u = rng.standard_normal(cls.mesh.n_vertices)
        phi = rng.standard_normal((cls.mesh.n_faces, 3))
        phi[:, 2] = 0.0
        cls.phi = phi

    def test_constant_field_has_zero_hamiltonian(self):
        constant = np.full(self.mesh.n_vertices, 2.5)
        for kind in (HamiltonianKind.nonlinear_diffusion(), HamiltonianKind.g_equation(self.phi)):
            with self.subTest(kind=str(kind)):
                self.assertLessEqual(np.abs(eval_H(kind, constant, self.ops)).max(), 1e-12)

    def test_fokker_planck_without_flow_vanishes(self):
        kind = HamiltonianKind.fokker_planck(np.zeros((self.mesh.n_faces, 3)))
        np.testing.assert_array_equal(eval_H(kind, self.u, self.ops), 0.0)

    def test_nonlinear_diffusion_matches_explicit_loop(self):
        q = face_gradients(self.mesh, self.u)
        squared = np.einsum("ij,ij->i", q, q)
        expected = [-ring_average(self.mesh, squared, i) for i in range(self.mesh.n_vertices)]
        np.testing.assert_allclose(eval_H(HamiltonianKind.nonlinear_diffusion(), self.u, self.ops),
                                   expected, rtol=1e-10, atol=1e-12)

    def test_g_equation_matches_explicit_loop(self):
        q = face_gradients(self.mesh, self.u)
        per_face = np.einsum("ij,ij->i", self.phi, q) - np.linalg.norm(q, axis=1)
        expected = [ring_average(self.mesh, per_face, i) for i in range(self.mesh.n_vertices)]
        np.testing.assert_allclose(eval_H(HamiltonianKind.g_equation(self.phi), self.u, self.ops),
                                   expected, rtol=1e-10, atol=1e-12)

    def test_fokker_planck_matches_explicit_loop(self):
        q = face_gradients(self.mesh, self.u)
        advection = np.einsum("ij,ij->i", self.phi, q)
        divergence = np.zeros(self.mesh.n_vertices)
        for i in range(self.mesh.n_vertices):
            hat = face_gradients(self.mesh, np.eye(self.mesh.n_vertices)[i])
            divergence[i] = self.mesh.face_areas @ np.einsum("ij,ij->i", self.phi, hat)
        expected = [self.u[i] * divergence[i] + ring_average(self.mesh, advection, i)
                    for i in range(self.mesh.n_vertices)]
        np.testing.assert_allclose(eval_H(HamiltonianKind.fokker_planck(self.phi), self.u, self.ops),
                                   expected, rtol=1e-10, atol=1e-12)

    def test_lumped_divergence_scales_by_mass(self):
        weak = HamiltonianKind.fokker_planck(self.phi)
        lumped = HamiltonianKind.fokker_planck(self.phi, divergence="lumped")
        ones = np.ones(self.mesh.n_vertices)
        np.testing.assert_allclose(eval_H(lumped, ones, self.ops),
                                   -eval_H(weak, ones, self.ops) / self.ops.mass, rtol=1e-12, atol=1e-12)

    def test_g_equation_without_flow_is_positively_homogeneous(self):
        kind = HamiltonianKind.g_equation(np.zeros((self.mesh.n_faces, 3)))
        base = eval_H(kind, self.u, self.ops)
        for alpha in (0.5, 3.0):
            np.testing.assert_allclose(eval_H(kind, alpha * self.u, self.ops), alpha * base, rtol=1e-12)

    def test_fokker_planck_is_linear(self):
        kind = HamiltonianKind.fokker_planck(self.phi)
        v = np.random.default_rng(2).standard_normal(self.mesh.n_vertices)
        np.testing.assert_allclose(eval_H(kind, 2.0 * self.u - v, self.ops),
                                   2.0 * eval_H(kind, self.u, self.ops) - eval_H(kind, v, self.ops),
                                   rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(linear_operator(kind, self.ops) @ self.u, eval_H(kind, self.u, self.ops),
                                   rtol=1e-12, atol=1e-12)

    def test_nonlinear_diffusion_is_concave(self):
        kind = HamiltonianKind.nonlinear_diffusion()
        v = np.random.default_rng(4).standard_normal(self.mesh.n_vertices)
        midpoint = eval_H(kind, 0.5 * (self.u + v), self.ops)
        chord = 0.5 * (eval_H(kind, self.u, self.ops) + eval_H(kind, v, self.ops))
        self.assertTrue(np.all(midpoint >= chord - 1e-12))

    def test_kind_validation(self):
        with self.assertRaises(ValueError):
            HamiltonianKind("viscous_burgers")
        with self.assertRaises(ValueError):
            HamiltonianKind.g_equation(None)
        with self.assertRaises(ValueError):
            eval_H(HamiltonianKind.g_equation(np.zeros((3, 3))), self.u, self.ops)
        with self.assertRaises(ValueError):
            linear_operator(HamiltonianKind.nonlinear_diffusion(), self.ops)


class FlowTests(SimpleTestCase):
    def test_constant_flow_on_flat_grid(self):
        mesh = generate_mesh("grid", nx=4, ny=4)
        np.testing.assert_allclose(make_flow("constant", mesh, velocity=(0.3, -0.7, 0.0)),
                                   np.tile([0.3, -0.7, 0.0], (mesh.n_faces, 1)), atol=1e-15)
        np.testing.assert_allclose(make_flow("constant", mesh, velocity=(1.0, 1.0, 1.0)),
                                   np.tile([1.0, 1.0, 0.0], (mesh.n_faces, 1)), atol=1e-15)

    def test_cellular_flow_vanishes_at_the_cell_center(self):
        vertices = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.4, 0.4, 0], [0.7, 0.4, 0], [0.4, 0.7, 0]]
        mesh = TriangleMesh(vertices, [[0, 1, 2], [3, 4, 5]])
        x, y, _, _ = chart_coordinates(mesh, mesh.barycenters)
        self.assertAlmostEqual(x[1], 0.5)
        self.assertAlmostEqual(y[1], 0.5)
        self.assertLessEqual(np.abs(make_flow("cellular", mesh)[1]).max(), 1e-15)

    def test_flows_are_tangent(self):
        for mesh in (generate_mesh("icosphere", level=3), generate_mesh("torus", R=1.0, r=0.4, nu=24, nv=12)):
            for kind in ("constant", "shear", "cellular", "kolmogorov"):
                with self.subTest(mesh=str(mesh), flow=kind):
                    self.assertLessEqual(tangency_error(mesh, make_flow(kind, mesh)), 1e-8)

    def test_zero_flow(self):
        mesh = generate_mesh("icosphere", level=1)
        np.testing.assert_array_equal(make_flow("zero", mesh), 0.0)
        self.assertEqual(tangency_error(mesh, make_flow("zero", mesh)), 0.0)

    def test_unknown_flow(self):
        with self.assertRaises(ValueError):
            make_flow("vortex", generate_mesh("icosphere", level=0))


class FieldFileTests(SimpleTestCase):
    def test_fields_read_back_and_check_sizes(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp)
            u = np.random.default_rng(5).standard_normal(7)
            phi = np.random.default_rng(6).standard_normal((4, 3))
            write_vertex_field(path / "u.txt", u)
            write_face_field(path / "phi.txt", phi)
            np.testing.assert_array_equal(read_vertex_field(path / "u.txt", 7), u)
            np.testing.assert_array_equal(read_face_field(path / "phi.txt", 4), phi)
            with self.assertRaises(ConfigError):
                read_vertex_field(path / "u.txt", 8)
            with self.assertRaises(ConfigError):
                read_face_field(path / "phi.txt", 5)
            with self.assertRaises(ConfigError):
                read_vertex_field(path / "missing.txt")
