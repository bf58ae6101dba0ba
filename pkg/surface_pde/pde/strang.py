import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer
from scipy.sparse.linalg import splu

from .conic import SolverConfig, conic_step, step_scaling, tightness_violations
from .exceptions import ConfigError, DegenerateRefinementError, NonFiniteFieldError, SolverError
from .fem import BoundaryCondition
from .fields import read_vertex_field, write_vertex_field

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = ["step", "time", "status", "iterations", "primal", "dual", "gap",
                      "mass", "tightness_violations", "wall_time"]


@dataclass(eq=False)
class PdeProblem:
    """``u_t + H(x, grad u, u) = epsilon * Laplacian(u)`` with initial field ``u0``."""

    kind: object
    epsilon: float
    ops: object
    u0: np.ndarray
    bc: BoundaryCondition = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError(f"viscosity must be nonnegative, got {self.epsilon}", {"epsilon": self.epsilon})
        self.u0 = np.asarray(self.u0, dtype=float)
        if self.u0.shape != (self.ops.n_vertices,):
            raise ValueError(f"expected {self.ops.n_vertices} initial values, got shape {self.u0.shape}")
        if self.bc is None:
            self.bc = self.ops.bc
        self.kind.check(self.ops)


class HeatSolver:
    """Prefactored ``(M - tau*epsilon*L) x = M u`` with pinned vertices eliminated."""

    def __init__(self, ops, epsilon, tau, bc=None):
        if epsilon < 0 or tau <= 0:
            raise ConfigError("heat solver needs epsilon >= 0 and a positive step",
                              {"epsilon": epsilon, "tau": tau})
        self.ops = ops
        self.epsilon = epsilon
        self.tau = tau
        self.bc = bc or ops.bc
        self.free = np.ones(ops.n_vertices, dtype=bool)
        self.free[self.bc.vertices] = False
        self._lu = None
        if epsilon == 0:
            return

        system = (ops.M - (tau * epsilon) * ops.L).tocsc()
        self._coupling = (tau * epsilon) * ops.L.tocsr()[self.free][:, ~self.free]
        reduced = system[self.free][:, self.free].tocsc()
        try:
            self._lu = splu(reduced)
        except RuntimeError as e:
            diagonal = reduced.diagonal()
            logger.error(f"Heat factorization failed: {e}")
            raise SolverError(
                f"factorization of the heat operator failed: {e}",
                {"size": int(reduced.shape[0]), "min_diagonal": float(diagonal.min()),
                 "epsilon": epsilon, "tau": tau},
            )
        logger.debug(f"Factored heat operator ({reduced.shape[0]} unknowns, tau={tau}, epsilon={epsilon})")

    @property
    def h(self):
        return 2.0 * self.tau

    @property
    def operator(self):
        return (self.ops.M - (self.tau * self.epsilon) * self.ops.L).tocsr()

    def solve(self, u):
        u = np.asarray(u, dtype=float)
        if self._lu is None:
            return self.bc.apply(u)
        x = self.bc.apply(u)
        rhs = self.ops.mass[self.free] * u[self.free]
        if self.bc.is_dirichlet:
            rhs = rhs + self._coupling @ x[~self.free]
        x[self.free] = self._lu.solve(rhs)
        return x


def prefactor_heat(ops, epsilon, h, bc=None):
    """Half-step heat solver, ``M - (h/2)*epsilon*L``."""
    if h <= 0:
        raise ConfigError(f"time step must be positive, got {h}", {"h": h})
    return HeatSolver(ops, epsilon, h / 2.0, bc)


def implicit_heat(u, t_total, n_sub, ops, epsilon=1.0, bc=None):
    """``n_sub`` backward-Euler heat steps covering ``t_total``."""
    if t_total <= 0 or n_sub < 1:
        raise ConfigError("implicit_heat needs t_total > 0 and n_sub >= 1", {"t_total": t_total, "n_sub": n_sub})
    solver = HeatSolver(ops, epsilon, t_total / n_sub, bc)
    u = np.asarray(u, dtype=float)
    for _ in range(n_sub):
        u = solver.solve(u)
    return u


def heat_bump(ops, vertex, t, log=False, floor=None):
    """One-vertex indicator diffused for time ``t`` and normalized to unit mass."""
    indicator = np.zeros(ops.n_vertices)
    indicator[vertex] = 1.0
    u = implicit_heat(indicator, t, 1, ops, bc=BoundaryCondition.neumann())
    u /= ops.total_mass(u)
    if log:
        floor = settings.PDE_LOG_FLOOR if floor is None else floor
        return np.log(np.maximum(u, floor))
    return u


def advance(problem, heat, u, h, config=None):
    """One Strang step; returns the new field and the conic solution of the middle stage."""
    if heat.epsilon != problem.epsilon or not np.isclose(heat.h, h, rtol=1e-14, atol=0.0):
        raise ValueError(f"heat solver was built for (epsilon={heat.epsilon}, h={heat.h}), "
                         f"step uses (epsilon={problem.epsilon}, h={h})")
    config = config or SolverConfig()
    half = heat.solve(u)
    shift, scale, h_step = (step_scaling(problem.kind, half, h, problem.ops, problem.bc)
                            if config.rescale else (0.0, 1.0, h))
    v_prev = (half - shift) / scale
    _, solution = conic_step(problem.kind, v_prev, h_step, problem.ops, config, problem.bc)
    if not solution.optimal:
        logger.error(f"Conic step ended with status {solution.status} after {solution.iterations} iterations")
        raise SolverError(
            f"conic step did not reach optimality ({solution.status})",
            {"status": solution.status, "iterations": solution.iterations, "kkt": solution.kkt._asdict()},
        )
    violations = tightness_violations(problem.kind, solution.u, v_prev, h_step, problem.ops, config, problem.bc)
    if violations.size:
        logger.warning(f"{violations.size} vertices have inactive step constraints, first at vertex {violations[0]}")
    solution.tightness_violations = int(violations.size)
    return heat.solve(shift + scale * solution.u), solution


def strang_step(problem, heat, u, h, config=None):
    return advance(problem, heat, u, h, config)[0]


@dataclass
class Trajectory:
    times: list
    fields: list
    h: float
    epsilon: float
    kind: str
    diagnostics: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    @property
    def final(self):
        return self.fields[-1]

    @property
    def final_time(self):
        return self.times[-1]

    def export(self, out_dir, mesh_file=None, config=None):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        snapshots = []
        for step, u in zip(self.steps, self.fields):
            name = f"u_{step:05d}.txt"
            write_vertex_field(out_dir / name, u)
            snapshots.append(name)
        with open(out_dir / "diagnostics.csv", "w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=DIAGNOSTIC_COLUMNS)
            writer.writeheader()
            writer.writerows(self.diagnostics)
        manifest = {
            "times": [float(t) for t in self.times],
            "steps": [int(s) for s in self.steps],
            "snapshots": snapshots,
            "h": self.h,
            "epsilon": self.epsilon,
            "kind": self.kind,
            "mesh_file": str(mesh_file) if mesh_file else None,
            "diagnostics": "diagnostics.csv",
            "config": config or {},
        }
        (out_dir / "manifest.json").write_bytes(JSONRenderer().render(manifest))
        logger.info(f"Exported {len(snapshots)} snapshots to {out_dir}")
        return out_dir / "manifest.json"

    @classmethod
    def load(cls, out_dir):
        out_dir = Path(out_dir)
        with open(out_dir / "manifest.json", "rb") as handle:
            manifest = JSONParser().parse(handle)
        with open(out_dir / manifest["diagnostics"], newline="") as handle:
            diagnostics = list(csv.DictReader(handle))
        return cls(
            times=manifest["times"],
            fields=[read_vertex_field(out_dir / name) for name in manifest["snapshots"]],
            h=manifest["h"],
            epsilon=manifest["epsilon"],
            kind=manifest["kind"],
            diagnostics=diagnostics,
            steps=manifest["steps"],
        )


def evolve(problem, h, n_steps, snapshot_every=1, config=None):
    if n_steps < 1:
        raise ConfigError(f"evolve needs at least one step, got {n_steps}", {"n_steps": n_steps})
    if snapshot_every < 1:
        raise ConfigError("snapshot_every must be at least 1", {"snapshot_every": snapshot_every})
    config = config or SolverConfig()
    heat = prefactor_heat(problem.ops, problem.epsilon, h, problem.bc)
    ops = problem.ops

    u = problem.bc.apply(problem.u0)
    trajectory = Trajectory(times=[0.0], fields=[u.copy()], h=h, epsilon=problem.epsilon,
                            kind=str(problem.kind), steps=[0])
    logger.info(f"Evolving {problem.kind} on {ops.mesh} for {n_steps} steps of h={h}, epsilon={problem.epsilon}")
    started = time.perf_counter()
    for step in range(1, n_steps + 1):
        step_started = time.perf_counter()
        u, solution = advance(problem, heat, u, h, config)
        if not np.all(np.isfinite(u)):
            logger.error(f"Non-finite values after step {step}")
            raise NonFiniteFieldError(f"field became non-finite at step {step}", step)
        trajectory.diagnostics.append({
            "step": step,
            "time": step * h,
            "status": solution.status,
            "iterations": solution.iterations,
            "primal": solution.kkt.primal,
            "dual": solution.kkt.dual,
            "gap": solution.kkt.gap,
            "mass": ops.total_mass(u),
            "tightness_violations": solution.tightness_violations,
            "wall_time": time.perf_counter() - step_started,
        })
        logger.debug(f"Step {step}: {solution.iterations} iterations, mass {ops.total_mass(u):.12g}")
        if step % snapshot_every == 0 or step == n_steps:
            trajectory.times.append(step * h)
            trajectory.fields.append(u.copy())
            trajectory.steps.append(step)
    logger.info(f"Finished {n_steps} steps in {time.perf_counter() - started:.2f}s")
    return trajectory


def estimate_order(errors):
    """Observed orders ``log2(e_k / e_{k+1})`` for errors whose resolution halves each entry.

    Accepts bare errors or ``(N, error)`` pairs.
    """
    values = [e[1] if isinstance(e, (tuple, list)) else e for e in errors]
    if len(values) < 2:
        raise ConfigError("need at least two errors to estimate an order", {"errors": len(values)})
    orders = []
    for k, (coarse, fine) in enumerate(zip(values, values[1:])):
        if fine == 0 or coarse == 0 or coarse == fine:
            raise DegenerateRefinementError(
                f"errors {k} and {k + 1} are equal or zero ({coarse!r}, {fine!r})",
                {"index": k, "errors": [float(coarse), float(fine)]},
            )
        orders.append(float(np.log2(coarse / fine)))
    return orders


def mass_l2_error(u, reference, ops):
    return ops.mass_norm(np.asarray(u) - np.asarray(reference))
