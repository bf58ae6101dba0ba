import tempfile
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from django.test import SimpleTestCase, tag
from scipy.optimize import linprog

from pde.conic import (
    INFEASIBLE,
    ConicProgram,
    SolverConfig,
    assemble_step,
    comparison_check,
    conic_step,
    dump_program,
    feasible_start,
    kkt_residuals,
    load_program,
    solve_conic,
    step_scaling,
    tightness_violations,
)
from pde.exceptions import ConfigError
from pde.fem import BoundaryCondition, build_fem_operators
from pde.flows import make_flow
from pde.hamiltonian import HamiltonianKind, linear_operator
from pde.mesh import generate_mesh

from .helpers import single_triangle


def second_order_cone_toy():
    """``min t`` subject to ``|(1, 1)| <= t``; the optimum is ``sqrt(2)``."""
    empty = sp.csr_matrix((0, 1))
    return ConicProgram(
        n_field=1,
        objective=np.array([1.0]),
        A_lin=empty,
        b_lin=np.zeros(0),
        soc_S=sp.csr_matrix(np.array([[1.0], [0.0], [0.0]])),
        soc_g=np.array([0.0, 1.0, 1.0]),
        soc_dims=[3],
        A_eq=empty,
        b_eq=np.zeros(0),
    )


class AssemblyTests(SimpleTestCase):
    def test_single_triangle_shapes(self):
        ops = build_fem_operators(single_triangle())
        program = assemble_step(HamiltonianKind.nonlinear_diffusion(), np.zeros(3), 0.1, ops)
        self.assertEqual(program.n_vars, 4)
        self.assertEqual(program.n_linear, 3)
        self.assertEqual(program.n_cones, 1)
        self.assertEqual(program.soc_dims, [5])

        program = assemble_step(HamiltonianKind.g_equation(np.zeros((1, 3))), np.zeros(3), 0.1, ops)
        self.assertEqual((program.n_vars, program.n_cones), (4, 1))
        self.assertEqual(program.soc_dims, [4])

        program = assemble_step(HamiltonianKind.fokker_planck(np.zeros((1, 3))), np.zeros(3), 0.1, ops)
        self.assertEqual((program.n_vars, program.n_cones, program.n_aux), (3, 0, 0))

    def test_dirichlet_vertices_become_equalities(self):
        ops = build_fem_operators(single_triangle(), BoundaryCondition.dirichlet([0], 1.5))
        program = assemble_step(HamiltonianKind.nonlinear_diffusion(), np.zeros(3), 0.1, ops)
        self.assertEqual(program.A_eq.shape[0], 1)
        self.assertEqual(program.n_linear, 2)
        np.testing.assert_array_equal(program.row_vertices, [1, 2])

    def test_nonpositive_step_is_rejected(self):
        ops = build_fem_operators(single_triangle())
        with self.assertRaises(ConfigError):
            assemble_step(HamiltonianKind.nonlinear_diffusion(), np.zeros(3), 0.0, ops)

    def test_feasible_start_is_feasible(self):
        mesh = generate_mesh("icosphere", level=1)
        ops = build_fem_operators(mesh)
        u_prev = mesh.vertices[:, 0] + 0.5 * mesh.vertices[:, 2] ** 2
        phi = make_flow("cellular", mesh, amplitude=0.5)
        kinds = (HamiltonianKind.nonlinear_diffusion(), HamiltonianKind.g_equation(phi),
                 HamiltonianKind.fokker_planck(phi))
        for kind in kinds:
            with self.subTest(kind=str(kind)):
                program = assemble_step(kind, u_prev, 0.05, ops)
                x0 = feasible_start(kind, u_prev, 0.05, ops)
                self.assertLessEqual(kkt_residuals(program, x0).primal, 1e-12)

    def test_dump_and_load(self):
        mesh = generate_mesh("icosphere", level=0)
        ops = build_fem_operators(mesh, BoundaryCondition.dirichlet([0, 3], 0.25))
        program = assemble_step(HamiltonianKind.g_equation(make_flow("shear", mesh)), mesh.vertices[:, 1], 0.1, ops)
        with tempfile.TemporaryDirectory() as tmp:
            dump_program(program, Path(tmp) / "step.txt")
            self.assertNotIn("np.", (Path(tmp) / "step.txt").read_text())
            loaded = load_program(Path(tmp) / "step.txt")
        self.assertEqual(loaded.kind, program.kind)
        self.assertEqual(loaded.soc_dims, program.soc_dims)
        np.testing.assert_array_equal(loaded.objective, program.objective)
        np.testing.assert_array_equal(loaded.b_lin, program.b_lin)
        np.testing.assert_array_equal(loaded.row_vertices, program.row_vertices)
        for name in ("A_lin", "soc_S", "A_eq"):
            self.assertEqual(abs(getattr(loaded, name) - getattr(program, name)).max(), 0.0)
        self.assertEqual(loaded.soc_g.tobytes(), program.soc_g.tobytes())
        self.assertEqual(loaded.b_eq.tobytes(), program.b_eq.tobytes())

    def test_load_rejects_garbage(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.txt"
            path.write_text("conic_program 1\nkind -\nobjective 1\n")
            with self.assertRaises(ConfigError):
                load_program(path)


class SolveTests(SimpleTestCase):
    def test_second_order_cone_toy(self):
        solution = solve_conic(second_order_cone_toy())
        self.assertTrue(solution.optimal)
        self.assertAlmostEqual(solution.x[0], np.sqrt(2.0), delta=1e-6)

    def test_residuals_of_the_analytic_optimum(self):
        x = np.array([np.sqrt(2.0)])
        y = np.array([1.0, -np.sqrt(0.5), -np.sqrt(0.5)])
        residuals = kkt_residuals(second_order_cone_toy(), x, y)
        self.assertLessEqual(max(residuals), 1e-12)

    def test_non_optimal_candidate_is_flagged(self):
        mesh = generate_mesh("icosphere", level=1)
        ops = build_fem_operators(mesh)
        u_prev = mesh.vertices[:, 2]
        program = assemble_step(HamiltonianKind.nonlinear_diffusion(), u_prev, 0.1, ops)
        q = ops.grad(u_prev)
        candidate = np.concatenate([u_prev, np.einsum("ij,ij->i", q, q)])
        residuals = kkt_residuals(program, candidate)
        self.assertGreater(residuals.primal, SolverConfig().eps_primal)
        self.assertGreater(residuals.dual, SolverConfig().eps_dual)

    def test_contradictory_equalities_are_infeasible(self):
        program = ConicProgram(
            n_field=1,
            objective=np.array([1.0]),
            A_lin=sp.csr_matrix((0, 1)),
            b_lin=np.zeros(0),
            soc_S=sp.csr_matrix((0, 1)),
            soc_g=np.zeros(0),
            soc_dims=[],
            A_eq=sp.csr_matrix(np.array([[1.0], [1.0]])),
            b_eq=np.array([0.0, 1.0]),
        )
        self.assertEqual(solve_conic(program).status, INFEASIBLE)

    def test_fokker_planck_without_flow_keeps_the_field(self):
        mesh = generate_mesh("icosphere", level=1)
        ops = build_fem_operators(mesh)
        u_prev = np.cos(3.0 * mesh.vertices[:, 0])
        _, solution = conic_step(HamiltonianKind.fokker_planck(np.zeros((mesh.n_faces, 3))), u_prev, 0.1, ops)
        self.assertTrue(solution.optimal)
        np.testing.assert_allclose(solution.u, u_prev, atol=1e-6)

    def test_fokker_planck_matches_linear_programming(self):
        mesh = generate_mesh("grid", nx=4, ny=1, spacing=0.25)
        ops = build_fem_operators(mesh)
        rng = np.random.default_rng(11)
        phi = rng.standard_normal((mesh.n_faces, 3))
        phi[:, 2] = 0.0
        kind = HamiltonianKind.fokker_planck(phi)
        u_prev = rng.standard_normal(mesh.n_vertices)
        h = 0.01
        program, solution = conic_step(kind, u_prev, h, ops)
        self.assertTrue(solution.optimal)

        reference = linprog(program.objective, A_ub=-program.A_lin.toarray(), b_ub=program.b_lin,
                            bounds=[(None, None)] * program.n_vars, method="highs")
        self.assertTrue(reference.success)
        np.testing.assert_allclose(solution.u, reference.x, rtol=1e-6, atol=1e-6)

    def test_fokker_planck_step_is_backward_euler(self):
        mesh = generate_mesh("grid", nx=4, ny=4, spacing=0.25)
        ops = build_fem_operators(mesh)
        kind = HamiltonianKind.fokker_planck(make_flow("constant", mesh, velocity=(1.0, 0.5, 0.0)))
        h = 1e-3
        system = (sp.identity(mesh.n_vertices) + h * linear_operator(kind, ops)).toarray()
        # All rows active is optimal when the dual point solving system^T y = 1 is nonnegative.
        self.assertTrue(np.all(np.linalg.solve(system.T, np.ones(mesh.n_vertices)) > 0))
        u_prev = np.sin(2.0 * mesh.vertices[:, 0]) + mesh.vertices[:, 1]
        _, solution = conic_step(kind, u_prev, h, ops)
        np.testing.assert_allclose(solution.u, np.linalg.solve(system, u_prev), rtol=1e-6, atol=1e-6)

    def test_dirichlet_values_are_kept(self):
        mesh = generate_mesh("icosphere", level=1)
        ops = build_fem_operators(mesh, BoundaryCondition.dirichlet([0, 5], [1.0, -1.0]))
        _, solution = conic_step(HamiltonianKind.nonlinear_diffusion(), mesh.vertices[:, 2], 0.05, ops)
        self.assertTrue(solution.optimal)
        np.testing.assert_allclose(solution.u[[0, 5]], [1.0, -1.0], atol=1e-6)

    def test_rows_are_tight_at_the_optimum(self):
        mesh = generate_mesh("icosphere", level=1)
        ops = build_fem_operators(mesh)
        u_prev = mesh.vertices[:, 0] + np.sin(2.0 * mesh.vertices[:, 2])
        phi = make_flow("cellular", mesh, amplitude=0.5)
        strict = SolverConfig(eps_primal=1e-8, eps_dual=1e-8, eps_gap=1e-8)
        kinds = (HamiltonianKind.nonlinear_diffusion(), HamiltonianKind.g_equation(phi),
                 HamiltonianKind.fokker_planck(phi))
        for kind in kinds:
            with self.subTest(kind=str(kind)):
                _, solution = conic_step(kind, u_prev, 1e-2, ops, strict)
                self.assertTrue(solution.optimal)
                self.assertEqual(tightness_violations(kind, solution.u, u_prev, 1e-2, ops).size, 0)

    def test_fokker_planck_preserves_order(self):
        mesh = generate_mesh("icosphere", level=1)
        ops = build_fem_operators(mesh)
        kind = HamiltonianKind.fokker_planck(make_flow("cellular", mesh, amplitude=0.5))
        u_prev = mesh.vertices[:, 1]
        w_prev = u_prev + 0.1 + 0.05 * mesh.vertices[:, 0] ** 2
        self.assertLessEqual(comparison_check(kind, u_prev, w_prev, 1e-2, ops), 1e-6)
        with self.assertRaises(ValueError):
            comparison_check(kind, w_prev, u_prev, 1e-2, ops)

    def test_iteration_cap_is_reported(self):
        mesh = generate_mesh("icosphere", level=1)
        ops = build_fem_operators(mesh)
        _, solution = conic_step(HamiltonianKind.nonlinear_diffusion(), mesh.vertices[:, 2], 0.1, ops,
                                 SolverConfig(max_iters=1, warm_start=False))
        self.assertFalse(solution.optimal)

    @tag("slow")
    def test_tightness_across_meshes_and_steps(self):
        for mesh in (generate_mesh("icosphere", level=2), generate_mesh("grid", nx=20, ny=20, spacing=0.05)):
            ops = build_fem_operators(mesh)
            u_prev = np.sin(3.0 * mesh.vertices[:, 0]) * np.cos(2.0 * mesh.vertices[:, 1])
            phi = make_flow("cellular", mesh, amplitude=0.5)
            kinds = (HamiltonianKind.nonlinear_diffusion(), HamiltonianKind.g_equation(phi),
                     HamiltonianKind.fokker_planck(phi))
            for kind in kinds:
                for h in (1e-3, 1e-2, 1e-1):
                    with self.subTest(mesh=str(mesh), kind=str(kind), h=h):
                        _, solution = conic_step(kind, u_prev, h, ops)
                        self.assertTrue(solution.optimal)
                        self.assertEqual(tightness_violations(kind, solution.u, u_prev, h, ops).size, 0)


class StepScalingTests(SimpleTestCase):
    def setUp(self):
        self.mesh = generate_mesh("icosphere", level=1)
        self.ops = build_fem_operators(self.mesh)

    def test_identity_where_no_homogeneity_applies(self):
        u_prev = 40.0 * self.mesh.vertices[:, 0]
        kind = HamiltonianKind.fokker_planck(make_flow("cellular", self.mesh, amplitude=0.5))
        self.assertEqual(step_scaling(kind, u_prev, 1e-3, self.ops), (0.0, 1.0, 1e-3))
        dirichlet = BoundaryCondition.dirichlet([0], 0.0)
        self.assertEqual(step_scaling(HamiltonianKind.nonlinear_diffusion(), u_prev, 1e-3, self.ops, dirichlet),
                         (0.0, 1.0, 1e-3))

    def test_gentle_fields_are_not_scaled(self):
        u_prev = 0.1 * self.mesh.vertices[:, 2]
        shift, scale, h = step_scaling(HamiltonianKind.nonlinear_diffusion(), u_prev, 1e-3, self.ops)
        self.assertEqual((shift, scale, h), (u_prev.max(), 1.0, 1e-3))

    def test_steep_fields_scale_by_the_largest_gradient(self):
        u_prev = 40.0 * self.mesh.vertices[:, 0]
        steepest = np.linalg.norm(self.ops.grad(u_prev), axis=1).max()
        shift, scale, h = step_scaling(HamiltonianKind.nonlinear_diffusion(), u_prev, 1e-3, self.ops)
        self.assertAlmostEqual(scale, steepest)
        self.assertAlmostEqual(h, 1e-3 * steepest)
        kind = HamiltonianKind.g_equation(make_flow("shear", self.mesh))
        self.assertEqual(step_scaling(kind, u_prev, 1e-3, self.ops)[2], 1e-3)

    def test_scaled_step_matches_the_direct_step(self):
        u_prev = 20.0 * self.mesh.vertices[:, 0] + 5.0 * np.sin(2.0 * self.mesh.vertices[:, 2])
        strict = SolverConfig(eps_primal=1e-9, eps_dual=1e-9, eps_gap=1e-9)
        kinds = (HamiltonianKind.nonlinear_diffusion(),
                 HamiltonianKind.g_equation(make_flow("shear", self.mesh)))
        for kind in kinds:
            with self.subTest(kind=str(kind)):
                _, direct = conic_step(kind, u_prev, 1e-3, self.ops, strict)
                shift, scale, h = step_scaling(kind, u_prev, 1e-3, self.ops)
                self.assertGreater(scale, 1.0)
                _, scaled = conic_step(kind, (u_prev - shift) / scale, h, self.ops, strict)
                self.assertTrue(direct.optimal and scaled.optimal)
                np.testing.assert_allclose(shift + scale * scaled.u, direct.u, rtol=1e-5, atol=1e-5 * scale)
