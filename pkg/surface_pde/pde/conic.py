import logging
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scs
from django.conf import settings

from .exceptions import ConfigError, SolverError
from .hamiltonian import (
    FOKKER_PLANCK,
    G_EQUATION,
    NONLINEAR_DIFFUSION,
    advection_operator,
    divergence_term,
    eval_H,
    linear_operator,
)

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITERS = "max_iters"
INFEASIBLE = "infeasible"

_SCS_INFEASIBLE = {-1, -2, -6, -7}

# Degree p of positive homogeneity in grad u for Hamiltonians that ignore u itself.
HOMOGENEITY = {NONLINEAR_DIFFUSION: 2, G_EQUATION: 1}


class KktResiduals(NamedTuple):
    primal: float
    dual: float
    gap: float

    def within(self, config):
        return self.primal <= config.eps_primal and self.dual <= config.eps_dual and self.gap <= config.eps_gap


@dataclass(eq=False)
class ConicProgram:
    """``min c^T x`` over linear rows, second-order cones and equality rows.

    * linear rows: ``A_lin x + b_lin >= 0``, one per free vertex (``row_vertices``);
    * cones: block ``k`` of ``soc_S x + soc_g`` is ``(t, v)`` with ``|v| <= t``,
      i.e. a first row ``d^T x + e`` followed by the rows of ``A x + c``;
    * equality rows: ``A_eq x == b_eq`` (pinned vertices).

    ``x`` stacks the vertex field first and the auxiliary face variables after it.
    """

    n_field: int
    objective: np.ndarray
    A_lin: sp.csr_matrix
    b_lin: np.ndarray
    soc_S: sp.csr_matrix
    soc_g: np.ndarray
    soc_dims: list
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    row_vertices: np.ndarray = None
    kind: str = ""

    def __post_init__(self):
        n = self.n_vars
        for name in ("A_lin", "soc_S", "A_eq"):
            matrix = getattr(self, name)
            if matrix.shape[1] != n:
                raise ValueError(f"{name} has {matrix.shape[1]} columns, program has {n} variables")
        if self.A_lin.shape[0] != self.b_lin.size or self.A_eq.shape[0] != self.b_eq.size:
            raise ValueError("row counts and offsets disagree")
        if self.soc_S.shape[0] != self.soc_g.size or sum(self.soc_dims) != self.soc_g.size:
            raise ValueError("cone blocks and offsets disagree")
        if not np.all(np.isfinite(self.objective)):
            raise ValueError("objective must be finite")

    @property
    def n_vars(self):
        return self.objective.size

    @property
    def n_aux(self):
        return self.n_vars - self.n_field

    @property
    def n_linear(self):
        return self.b_lin.size

    @property
    def n_cones(self):
        return len(self.soc_dims)

    def cones(self):
        """Yield each cone as ``(A, c, d, e)`` encoding ``|A x + c| <= d^T x + e``."""
        start = 0
        for dim in self.soc_dims:
            block = self.soc_S[start:start + dim]
            yield block[1:], self.soc_g[start + 1:start + dim], block[0], self.soc_g[start]
            start += dim

    def to_standard_form(self):
        """``(A, b, c, cone)`` with ``A x + s = b``, ``s`` in zero x nonnegative x SOC cones."""
        A = sp.vstack([self.A_eq, -self.A_lin, -self.soc_S]).tocsc()
        b = np.concatenate([self.b_eq, self.b_lin, self.soc_g])
        cone = {"z": self.b_eq.size, "l": self.b_lin.size, "q": list(self.soc_dims)}
        return A, b, self.objective.copy(), cone


@dataclass
class StepSolution:
    u: np.ndarray
    aux: np.ndarray
    status: str
    kkt: KktResiduals
    iterations: int
    x: np.ndarray = None
    y: np.ndarray = None
    s: np.ndarray = None
    solve_time: float = 0.0
    tightness_violations: int = 0

    @property
    def optimal(self):
        return self.status == OPTIMAL


@dataclass
class SolverConfig:
    eps_primal: float = None
    eps_dual: float = None
    eps_gap: float = None
    max_iters: int = None
    warm_start: bool = None
    rescale: bool = False

    def __post_init__(self):
        eps = settings.PDE_SOLVER_EPS
        self.eps_primal = eps if self.eps_primal is None else self.eps_primal
        self.eps_dual = eps if self.eps_dual is None else self.eps_dual
        self.eps_gap = eps if self.eps_gap is None else self.eps_gap
        if self.max_iters is None:
            self.max_iters = settings.PDE_SOLVER_MAX_ITERS
        if self.warm_start is None:
            self.warm_start = settings.PDE_SOLVER_WARM_START
        if min(self.eps_primal, self.eps_dual, self.eps_gap) <= 0 or self.max_iters < 1:
            raise ConfigError("solver tolerances must be positive and max_iters at least 1")

    def as_dict(self):
        return {
            "eps_primal": self.eps_primal,
            "eps_dual": self.eps_dual,
            "eps_gap": self.eps_gap,
            "max_iters": self.max_iters,
            "warm_start": self.warm_start,
            "rescale": self.rescale,
        }


def _cone_block_matrix(ops, face_rows, width, extra=None):
    """Scatter ``G_k`` rows of face ``j`` to row ``width*j + face_rows + k`` of a cone block matrix."""
    n_faces = ops.n_faces
    G = ops.G.tocoo()
    k, j = G.row // n_faces, G.row % n_faces
    rows, cols, data = [width * j + face_rows + k], [G.col], [G.data]
    for row_offset, coefficient in extra or ():
        faces = np.arange(n_faces)
        rows.append(width * faces + row_offset)
        cols.append(ops.n_vertices + faces)
        data.append(np.full(n_faces, coefficient))
    return sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(width * n_faces, ops.n_vertices + n_faces),
    ).tocsr()


def assemble_step(kind, u_prev, h, ops, bc=None):
    """Convex program whose optimum is one implicit Hamilton-Jacobi step from ``u_prev``."""
    if h <= 0:
        raise ConfigError(f"time step must be positive, got {h}", {"h": h})
    u_prev = np.asarray(u_prev, dtype=float)
    if u_prev.shape != (ops.n_vertices,):
        raise ValueError(f"expected {ops.n_vertices} vertex values, got shape {u_prev.shape}")
    kind.check(ops)
    bc = bc or ops.bc
    n, n_faces = ops.n_vertices, ops.n_faces
    free = np.ones(n, dtype=bool)
    free[bc.vertices] = False
    identity = sp.identity(n, format="csr")
    R = ops.ring_average

    if kind.tag == NONLINEAR_DIFFUSION:
        n_aux = n_faces
        A_lin = sp.hstack([identity, -h * R])
        soc_S = _cone_block_matrix(ops, 2, 5, extra=[(0, 0.5), (1, -0.5)])
        soc_g = np.tile([0.5, 0.5, 0.0, 0.0, 0.0], n_faces)
        soc_dims = [5] * n_faces
    elif kind.tag == G_EQUATION:
        n_aux = n_faces
        A_lin = sp.hstack([identity + h * (R @ advection_operator(kind, ops)), -h * R])
        soc_S = _cone_block_matrix(ops, 1, 4, extra=[(0, 1.0)])
        soc_g = np.zeros(4 * n_faces)
        soc_dims = [4] * n_faces
    elif kind.tag == FOKKER_PLANCK:
        n_aux = 0
        A_lin = identity + h * linear_operator(kind, ops)
        soc_S = sp.csr_matrix((0, n))
        soc_g = np.zeros(0)
        soc_dims = []
    else:
        raise ValueError(f"unknown Hamiltonian '{kind.tag}'")

    A_lin = A_lin.tocsr()[free]
    pinned = bc.vertices
    A_eq = sp.coo_matrix(
        (np.ones(pinned.size), (np.arange(pinned.size), pinned)), shape=(pinned.size, n + n_aux)
    ).tocsr()
    program = ConicProgram(
        n_field=n,
        objective=np.concatenate([np.ones(n), np.zeros(n_aux)]),
        A_lin=A_lin,
        b_lin=-u_prev[free],
        soc_S=soc_S,
        soc_g=soc_g,
        soc_dims=soc_dims,
        A_eq=A_eq,
        b_eq=np.asarray(bc.values, dtype=float).copy(),
        row_vertices=np.flatnonzero(free),
        kind=kind.tag,
    )
    logger.debug(f"Assembled {kind} step: {program.n_vars} variables, {program.n_linear} rows, "
                 f"{program.n_cones} cones, {pinned.size} equalities")
    return program


def feasible_start(kind, u_prev, h, ops, bc=None):
    """Primal point ``u_prev + c`` with matching auxiliaries; feasible for Neumann problems.

    Pinned vertices take their boundary values, so with Dirichlet data the
    point is only a warm start.
    """
    bc = bc or ops.bc
    u_prev = np.asarray(u_prev, dtype=float)
    q = ops.grad(u_prev)
    R = ops.ring_average
    if kind.tag == NONLINEAR_DIFFUSION:
        aux = np.einsum("ij,ij->i", q, q)
        shift = h * (R @ aux).max()
    elif kind.tag == G_EQUATION:
        aux = np.linalg.norm(q, axis=1)
        shift = h * (R @ (aux - np.einsum("ij,ij->i", kind.phi, q))).max()
    else:
        aux = np.zeros(0)
        d = divergence_term(kind, ops)
        scale = 1.0 + h * d
        if scale.min() <= 0:
            raise SolverError(
                f"step h={h} is too large for the flow divergence: 1 + h*min(div) = {scale.min():.3e}",
                {"h": h, "min_divergence": float(d.min())},
            )
        deficit = -h * (linear_operator(kind, ops) @ u_prev)
        shift = (deficit / scale).max()
    u = bc.apply(u_prev + max(shift, 0.0))
    return np.concatenate([u, aux])


def _cone_violation(r, cone):
    """Largest amount by which ``r`` leaves the cone (zero rows must vanish)."""
    z, l = cone["z"], cone["l"]
    worst = [np.abs(r[:z]).max(initial=0.0), np.maximum(-r[z:z + l], 0.0).max(initial=0.0)]
    start = z + l
    for dim in cone["q"]:
        block = r[start:start + dim]
        worst.append(max(np.linalg.norm(block[1:]) - block[0], 0.0))
        start += dim
    return float(max(worst))


def _dual_cone_violation(y, cone):
    z, l = cone["z"], cone["l"]
    worst = [np.maximum(-y[z:z + l], 0.0).max(initial=0.0)]
    start = z + l
    for dim in cone["q"]:
        block = y[start:start + dim]
        worst.append(max(np.linalg.norm(block[1:]) - block[0], 0.0))
        start += dim
    return float(max(worst))


def kkt_residuals(program, x, y=None):
    A, b, c, cone = program.to_standard_form()
    x = np.asarray(x, dtype=float)
    y = np.zeros(b.size) if y is None else np.asarray(y, dtype=float)
    Ax = A @ x
    ATy = A.T @ y
    primal = _cone_violation(b - Ax, cone) / (1.0 + max(np.abs(b).max(initial=0.0), np.abs(Ax).max(initial=0.0)))
    dual = max(
        np.abs(ATy + c).max(initial=0.0) / (1.0 + max(np.abs(c).max(initial=0.0), np.abs(ATy).max(initial=0.0))),
        _dual_cone_violation(y, cone),
    )
    cx, by = float(c @ x), float(b @ y)
    gap = abs(cx + by) / (1.0 + max(abs(cx), abs(by)))
    return KktResiduals(float(primal), float(dual), float(gap))


def verify_kkt(program, solution):
    """Recompute primal, dual and gap residuals from the solution vectors alone."""
    return kkt_residuals(program, solution.x, solution.y)


def _contradictory_equalities(program):
    A = program.A_eq.tocoo()
    if A.nnz == 0:
        return None
    single = np.bincount(A.row, minlength=program.A_eq.shape[0]) == 1
    implied = {}
    for row, col, value in zip(A.row, A.col, A.data):
        if not single[row]:
            continue
        target = program.b_eq[row] / value
        if col in implied and not np.isclose(implied[col], target, rtol=0.0, atol=1e-14):
            return int(col)
        implied[col] = target
    return None


def _split(program, x, y, s, status, kkt, iterations, elapsed):
    return StepSolution(
        u=x[:program.n_field].copy(),
        aux=x[program.n_field:].copy(),
        status=status,
        kkt=kkt,
        iterations=iterations,
        x=x,
        y=y,
        s=s,
        solve_time=elapsed,
    )


def solve_conic(program, config=None, x0=None):
    config = config or SolverConfig()
    A, b, c, cone = program.to_standard_form()
    nan = np.full(program.n_vars, np.nan)

    clash = _contradictory_equalities(program)
    if clash is not None:
        logger.error(f"Equality rows pin variable {clash} to different values")
        return _split(program, nan, None, None, INFEASIBLE, KktResiduals(np.inf, np.inf, np.inf), 0, 0.0)

    # SCS bounds residuals in its own norms, which can understate our cone-distance measure several fold.
    eps = 0.125 * min(config.eps_primal, config.eps_dual, config.eps_gap)
    solver = scs.SCS(
        {"A": A, "b": b, "c": c},
        cone,
        eps_abs=eps,
        eps_rel=eps,
        max_iters=config.max_iters,
        verbose=False,
    )
    started = time.perf_counter()
    if config.warm_start and x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        result = solver.solve(warm_start=True, x=x0, y=np.zeros(b.size), s=b - A @ x0)
    else:
        result = solver.solve()
    elapsed = time.perf_counter() - started
    info = result["info"]

    if info["status_val"] in _SCS_INFEASIBLE:
        logger.error(f"Conic solver reported {info['status']} after {info['iter']} iterations")
        return _split(program, nan, result["y"], result["s"], INFEASIBLE,
                      KktResiduals(np.inf, np.inf, np.inf), info["iter"], elapsed)

    x, y = np.asarray(result["x"]), np.asarray(result["y"])
    kkt = kkt_residuals(program, x, y)
    status = OPTIMAL if info["status_val"] == 1 and kkt.within(config) else MAX_ITERS
    logger.debug(f"Conic solve {info['status']} in {info['iter']} iterations ({elapsed:.3f}s): "
                 f"primal={kkt.primal:.2e} dual={kkt.dual:.2e} gap={kkt.gap:.2e}")
    return _split(program, x, y, np.asarray(result["s"]), status, kkt, info["iter"], elapsed)


def conic_step(kind, u_prev, h, ops, config=None, bc=None):
    config = config or SolverConfig()
    program = assemble_step(kind, u_prev, h, ops, bc)
    x0 = feasible_start(kind, u_prev, h, ops, bc) if config.warm_start else None
    return program, solve_conic(program, config, x0)


def step_scaling(kind, u_prev, h, ops, bc=None):
    """Shift, scale and step size for solving one implicit step on ``(u_prev - shift) / scale``.

    For H depending on ``grad u`` alone and homogeneous of degree ``p``, the step
    from ``u_prev`` equals ``shift + scale * v`` where ``v`` is the step of size
    ``h * scale**(p - 1)`` from the rescaled field. The scale is the steepest face
    gradient (at least 1), so the rescaled program has unit-size data however
    steep ``u_prev`` is. Other kinds and pinned boundaries get the identity.
    """
    bc = bc or ops.bc
    degree = HOMOGENEITY.get(kind.tag)
    if degree is None or bc.is_dirichlet:
        return 0.0, 1.0, h
    u_prev = np.asarray(u_prev, dtype=float)
    scale = max(1.0, float(np.linalg.norm(ops.grad(u_prev), axis=1).max(initial=0.0)))
    return float(u_prev.max()), scale, h * scale ** (degree - 1)


def constraint_residuals(kind, u, u_prev, h, ops, bc=None):
    """``u - u_prev + h*H(u)`` at every free vertex, using the exact Hamiltonian."""
    bc = bc or ops.bc
    free = np.ones(ops.n_vertices, dtype=bool)
    free[bc.vertices] = False
    residual = np.asarray(u) - np.asarray(u_prev) + h * eval_H(kind, u, ops)
    return residual[free]


def tightness_bound(u, config):
    return 10.0 * config.eps_primal * (1.0 + np.abs(u).max())


def tightness_violations(kind, u, u_prev, h, ops, config=None, bc=None):
    """Free vertices whose implicit-step row is not active at ``u``."""
    config = config or SolverConfig()
    bc = bc or ops.bc
    free = np.flatnonzero(np.isin(np.arange(ops.n_vertices), bc.vertices, invert=True))
    residual = constraint_residuals(kind, u, u_prev, h, ops, bc)
    return free[np.abs(residual) > tightness_bound(u, config)]


def comparison_check(kind, u_prev, w_prev, h, ops, config=None):
    """Largest ``u - w`` after one step from ``u_prev <= w_prev``; nonpositive means order is kept."""
    if np.any(np.asarray(u_prev) > np.asarray(w_prev)):
        raise ValueError("comparison_check needs u_prev <= w_prev componentwise")
    config = config or SolverConfig()
    _, u = conic_step(kind, u_prev, h, ops, config)
    _, w = conic_step(kind, w_prev, h, ops, config)
    violation = float((u.u - w.u).max())
    if violation > 10.0 * config.eps_primal:
        logger.warning(f"{kind} step broke the ordering of its inputs by {violation:.3e}")
    return violation


def _write_matrix(handle, name, matrix):
    coo = matrix.tocoo()
    handle.write(f"{name} {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
    for i, j, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
        handle.write(f"{i} {j} {v!r}\n")


def _write_vector(handle, name, values, fmt=repr):
    handle.write(f"{name} {len(values)}\n")
    for v in values:
        handle.write(f"{fmt(v)}\n")


def dump_program(program, path):
    """Plain-text dump: one header line per block, then its entries one per line."""
    with open(path, "w") as handle:
        handle.write("conic_program 1\n")
        handle.write(f"kind {program.kind or '-'}\n")
        handle.write(f"n_field {program.n_field}\n")
        _write_vector(handle, "objective", program.objective.tolist())
        _write_matrix(handle, "linear", program.A_lin)
        _write_vector(handle, "linear_offset", program.b_lin.tolist())
        _write_vector(handle, "row_vertices", [int(v) for v in program.row_vertices], fmt=str)
        _write_vector(handle, "cone_dims", [int(d) for d in program.soc_dims], fmt=str)
        _write_matrix(handle, "cone", program.soc_S)
        _write_vector(handle, "cone_offset", program.soc_g.tolist())
        _write_matrix(handle, "equality", program.A_eq)
        _write_vector(handle, "equality_offset", program.b_eq.tolist())


def load_program(path):
    with open(path, "r") as handle:
        lines = iter(handle.read().splitlines())

    def header(expected):
        tokens = next(lines).split()
        if tokens[0] != expected:
            raise ConfigError(f"{path}: expected '{expected}' block, found '{tokens[0]}'")
        return tokens[1:]

    def vector(name, cast=float):
        (count,) = header(name)
        return np.array([cast(next(lines)) for _ in range(int(count))], dtype=cast)

    def matrix(name):
        rows, cols, nnz = (int(t) for t in header(name))
        entries = [next(lines).split() for _ in range(nnz)]
        i = np.array([int(e[0]) for e in entries], dtype=np.int64)
        j = np.array([int(e[1]) for e in entries], dtype=np.int64)
        v = np.array([float(e[2]) for e in entries])
        return sp.coo_matrix((v, (i, j)), shape=(rows, cols)).tocsr()

    try:
        header("conic_program")
        (kind,) = header("kind")
        (n_field,) = header("n_field")
        objective = vector("objective")
        A_lin = matrix("linear")
        b_lin = vector("linear_offset")
        row_vertices = vector("row_vertices", int)
        soc_dims = vector("cone_dims", int).tolist()
        soc_S = matrix("cone")
        soc_g = vector("cone_offset")
        A_eq = matrix("equality")
        b_eq = vector("equality_offset")
    except (StopIteration, ValueError, IndexError) as e:
        raise ConfigError(f"{path}: malformed conic program dump ({e})", {"path": str(path)})
    return ConicProgram(
        n_field=int(n_field),
        objective=objective,
        A_lin=A_lin,
        b_lin=b_lin,
        soc_S=soc_S,
        soc_g=soc_g,
        soc_dims=soc_dims,
        A_eq=A_eq,
        b_eq=b_eq,
        row_vertices=row_vertices,
        kind="" if kind == "-" else kind,
    )
