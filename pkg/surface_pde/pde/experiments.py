import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from rest_framework.exceptions import ParseError
from rest_framework.parsers import JSONParser
from scipy.spatial import cKDTree

from .conic import SolverConfig
from .exceptions import ConfigError
from .fem import BoundaryCondition, build_fem_operators
from .fields import read_face_field, read_vertex_field
from .flows import make_flow
from .hamiltonian import FOKKER_PLANCK, G_EQUATION, HamiltonianKind
from .mesh import generate_mesh, load_mesh, perturb_normal
from .strang import PdeProblem, estimate_order, evolve, heat_bump
from .transport import Distribution, SinkhornConfig, barycenter, interpolate

logger = logging.getLogger(__name__)

GENERATOR_PARAMS = {
    "icosphere": ("level",),
    "grid": ("nx", "ny", "spacing"),
    "torus": ("R", "r", "nu", "nv"),
    "unit_line": ("n",),
}


def load_config(path, serializer_class):
    """Parse a JSON experiment file and return the serializer's validated data."""
    try:
        with open(path, "rb") as handle:
            data = JSONParser().parse(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", {"path": str(path)})
    except ParseError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e.detail}", {"path": str(path)})
    serializer = serializer_class(data=data)
    serializer.is_valid(raise_exception=True)
    return serializer.validated_data


def build_mesh(spec, seed=0):
    if spec.get("file"):
        mesh = load_mesh(spec["file"], spec.get("format"))
    else:
        kind = spec["generator"]
        mesh = generate_mesh(kind, **{p: spec[p] for p in GENERATOR_PARAMS[kind] if p in spec})
    perturb = spec.get("perturb")
    if perturb:
        mesh = perturb_normal(mesh, perturb["amplitude"], perturb.get("seed", seed))
    return mesh


def refine_spec(spec):
    """Mesh source one refinement finer (halved edge length)."""
    if spec.get("file"):
        raise ConfigError("a file-based refinement ladder needs an explicit reference mesh")
    spec = dict(spec)
    kind = spec["generator"]
    if kind == "icosphere":
        spec["level"] += 1
    elif kind == "grid":
        spec["nx"], spec["ny"] = 2 * spec["nx"], 2 * spec["ny"]
        spec["spacing"] = spec.get("spacing", 1.0) / 2.0
    elif kind == "torus":
        spec["nu"], spec["nv"] = 2 * spec["nu"], 2 * spec["nv"]
    else:
        spec["n"] *= 2
    return spec


def build_bc(spec, mesh):
    if not spec or spec["kind"] == "neumann":
        return BoundaryCondition.neumann()
    if spec.get("vertices"):
        return BoundaryCondition.dirichlet(spec["vertices"], spec.get("value", 0.0))
    return BoundaryCondition.dirichlet_boundary(mesh, spec.get("value", 0.0))


def build_flow(spec, mesh):
    if spec["kind"] == "file":
        return read_face_field(spec["path"], mesh.n_faces)
    return make_flow(spec["kind"], mesh, velocity=spec.get("velocity", (1.0, 0.0, 0.0)),
                     shear_rate=spec.get("shear_rate", 1.0), amplitude=spec.get("amplitude", 1.0))


def build_kind(spec, mesh):
    tag = spec["kind"]
    if tag == G_EQUATION:
        return HamiltonianKind.g_equation(build_flow(spec["flow"], mesh))
    if tag == FOKKER_PLANCK:
        return HamiltonianKind.fokker_planck(build_flow(spec["flow"], mesh), spec.get("divergence", "weak"))
    return HamiltonianKind.nonlinear_diffusion()


def build_initial(spec, ops):
    kind = spec["kind"]
    vertices = ops.mesh.vertices
    if kind == "heat_bump":
        if spec["vertex"] >= ops.n_vertices:
            raise ConfigError(f"bump vertex {spec['vertex']} is outside the mesh", {"vertex": spec["vertex"]})
        return heat_bump(ops, spec["vertex"], spec["t"], log=spec.get("log", False))
    if kind == "gaussian":
        axes = list(spec.get("axes", [0, 1, 2]))
        offset = vertices[:, axes] - np.asarray(spec["center"], dtype=float)[axes]
        exponent = -np.einsum("ij,ij->i", offset, offset) / (2.0 * spec["sigma"] ** 2)
        return exponent if spec.get("log", False) else np.exp(exponent)
    if kind == "radial_cone":
        distance = np.linalg.norm(vertices - np.asarray(spec["center"], dtype=float), axis=1)
        return np.maximum(0.0, spec["radius"] - distance)
    if kind == "constant":
        return np.full(ops.n_vertices, float(spec.get("value", 0.0)))
    return read_vertex_field(spec["path"], ops.n_vertices)


def solver_config(spec):
    return SolverConfig(**(spec or {}))


def build_problem(config, mesh):
    pde = config["pde"]
    ops = build_fem_operators(mesh, build_bc(pde.get("boundary"), mesh))
    return PdeProblem(build_kind(pde, mesh), pde["epsilon"], ops, build_initial(config["initial"], ops))


def run_evolve(config, seed=0):
    mesh = build_mesh(config["mesh"], seed)
    problem = build_problem(config, mesh)
    trajectory = evolve(problem, config["h"], config["steps"], config.get("snapshot_every", 1),
                        solver_config(config.get("solver")))
    return mesh, trajectory


def run_converge_time(config, threads=1, seed=0):
    """Errors against a run at ``h0 / 2**(n_halvings + 1)``, all at ``t_final = h0 * steps``."""
    mesh = build_mesh(config["mesh"], seed)
    problem = build_problem(config, mesh)
    solver = solver_config(config.get("solver"))
    h0, n_halvings, steps = config["h0"], config["n_halvings"], config.get("steps", 1)
    levels = range(n_halvings + 2)

    def final_field(k):
        n_steps = steps * 2 ** k
        return evolve(problem, h0 / 2 ** k, n_steps, n_steps, solver).final

    with ThreadPoolExecutor(max_workers=threads) as pool:
        finals = list(pool.map(final_field, levels))
    reference = finals.pop()
    errors = [problem.ops.mass_norm(u - reference) for u in finals]
    orders = estimate_order(errors)
    logger.info(f"Time convergence orders: {', '.join(f'{r:.3f}' for r in orders)}")
    return [
        {"h": h0 / 2 ** k, "error": errors[k], "R": orders[k - 1] if k else None}
        for k in range(n_halvings + 1)
    ]


def run_converge_space(config, threads=1, seed=0):
    """Errors of each ladder mesh against a finer reference solve, sampled at the nearest reference vertex."""
    ladder = [build_mesh(spec, seed) for spec in config["ladder"]]
    reference_spec = config.get("reference") or refine_spec(config["ladder"][-1])
    reference = build_mesh(reference_spec, seed)
    solver = solver_config(config.get("solver"))
    h, steps = config.get("h", 1e-5), config.get("steps", 1)

    def final_field(mesh):
        problem = build_problem(config, mesh)
        return problem.ops, evolve(problem, h, steps, steps, solver).final

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(final_field, ladder + [reference]))
    _, reference_u = results.pop()
    tree = cKDTree(reference.vertices)
    errors = []
    for mesh, (ops, u) in zip(ladder, results):
        _, nearest = tree.query(mesh.vertices)
        errors.append(ops.mass_norm(u - reference_u[nearest]))
    orders = estimate_order(errors)
    logger.info(f"Space convergence orders: {', '.join(f'{r:.3f}' for r in orders)}")
    return [
        {"max_edge_length": mesh.max_edge_length, "error": errors[k], "R": orders[k - 1] if k else None}
        for k, mesh in enumerate(ladder)
    ]


def sinkhorn_config(config, threads):
    return SinkhornConfig(**config["sinkhorn"], threads=threads, solver=solver_config(config.get("solver")))


def build_distribution(spec, ops):
    return Distribution.normalized(build_initial({**spec, "log": False}, ops), ops)


def run_barycenter(config, threads=1, seed=0):
    mesh = build_mesh(config["mesh"], seed)
    ops = build_fem_operators(mesh)
    inputs = [build_distribution(spec, ops) for spec in config["inputs"]]
    weights = config.get("weights") or [1.0 / len(inputs)] * len(inputs)
    return mesh, inputs, barycenter(inputs, weights, sinkhorn_config(config, threads))


def run_interpolate(config, threads=1, seed=0):
    mesh = build_mesh(config["mesh"], seed)
    ops = build_fem_operators(mesh)
    mu0, mu1 = build_distribution(config["source"], ops), build_distribution(config["target"], ops)
    cfg = sinkhorn_config(config, threads)
    return mesh, [(t, interpolate(mu0, mu1, t, cfg)) for t in config["t"]]
