import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from django.conf import settings

from .conic import SolverConfig
from .exceptions import ConfigError, NumericalUnderflow
from .hamiltonian import HamiltonianKind
from .strang import HeatSolver, PdeProblem, advance, prefactor_heat

logger = logging.getLogger(__name__)

LINEAR = "linear"
LOG_DOMAIN = "log_domain"
MODES = (LINEAR, LOG_DOMAIN)


@dataclass(eq=False)
class Distribution:
    """Nonnegative vertex density with ``sum_i M_ii mu_i == 1``."""

    mu: np.ndarray
    ops: object
    residuals: list = field(default_factory=list)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if self.mu.shape != (self.ops.n_vertices,):
            raise ValueError(f"expected {self.ops.n_vertices} vertex values, got shape {self.mu.shape}")
        if np.any(self.mu < 0) or not np.all(np.isfinite(self.mu)):
            raise ConfigError("distribution values must be finite and nonnegative")
        mass = self.ops.total_mass(self.mu)
        if abs(mass - 1.0) > 1e-12:
            raise ConfigError(f"distribution has mass {mass!r}, expected 1", {"mass": mass})

    @classmethod
    def normalized(cls, values, ops):
        values = np.asarray(values, dtype=float)
        mass = ops.total_mass(values)
        if not mass > 0:
            raise ConfigError("cannot normalize a distribution with zero mass")
        return cls(values / mass, ops)

    @classmethod
    def from_function(cls, ops, fn):
        """Evaluate ``fn(vertices)`` on the mesh vertices and normalize."""
        return cls.normalized(fn(ops.mesh.vertices), ops)

    @property
    def argmax(self):
        return int(np.argmax(self.mu))


@dataclass
class SinkhornConfig:
    gamma: float
    outer_iters: int = 500
    n_sub: int = 1
    mode: str = LOG_DOMAIN
    tolerance: float = 1e-6
    threads: int = 1
    solver: SolverConfig = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}", {"gamma": self.gamma})
        if self.outer_iters < 1 or self.n_sub < 1:
            raise ConfigError("iteration counts must be at least 1")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode '{self.mode}', expected one of {MODES}")


def log_floor(values, floor=None):
    floor = settings.PDE_LOG_FLOOR if floor is None else floor
    return np.log(np.maximum(values, floor))


class LogHeatKernel:
    """Heat flow of ``exp(u)`` carried out on ``u`` itself, via ``u_t - |grad u|^2 = Laplacian(u)``."""

    def __init__(self, ops, t_total, n_sub, config=None):
        self.ops = ops
        self.h = t_total / n_sub
        self.n_sub = n_sub
        # log fields of concentrated densities are steep; solve each step on a rescaled copy
        self.config = replace(config or SolverConfig(), rescale=True)
        self.kind = HamiltonianKind.nonlinear_diffusion()
        self.heat = prefactor_heat(ops, 1.0, self.h)

    def __call__(self, u_log):
        problem = PdeProblem(self.kind, 1.0, self.ops, u_log)
        u = problem.u0
        for _ in range(self.n_sub):
            u, _ = advance(problem, self.heat, u, self.h, self.config)
        return u


class LinearHeatKernel:
    def __init__(self, ops, t_total, n_sub):
        self.solver = HeatSolver(ops, 1.0, t_total / n_sub)
        self.n_sub = n_sub

    def __call__(self, v):
        for _ in range(self.n_sub):
            v = self.solver.solve(v)
        return v


def log_heat(u_log, t_total, n_sub, ops, config=None):
    """Log of the heat flow of ``exp(u_log)`` after ``t_total``, in ``n_sub`` Strang steps."""
    if t_total <= 0 or n_sub < 1:
        raise ConfigError("log_heat needs t_total > 0 and n_sub >= 1", {"t_total": t_total, "n_sub": n_sub})
    return LogHeatKernel(ops, t_total, n_sub, config)(np.asarray(u_log, dtype=float))


def _check_inputs(inputs, weights):
    if len(inputs) < 2:
        raise ConfigError("a barycenter needs at least two input distributions")
    ops = inputs[0].ops
    if any(d.ops is not ops for d in inputs):
        raise ConfigError("all input distributions must live on the same mesh operators")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(inputs),) or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ConfigError("weights must be nonnegative, one per input, and sum to 1",
                          {"weights": weights.tolist()})
    return ops, weights


def _check_linear(name, values, iteration):
    if not np.all(np.isfinite(values)) or np.any(values == 0):
        logger.error(f"Linear Sinkhorn hit zero or non-finite {name} at iteration {iteration}")
        raise NumericalUnderflow(
            f"{name} underflowed at iteration {iteration}; use the log-domain mode or a larger gamma",
            {"iteration": iteration, "quantity": name},
        )


def _marginal_residual(mass, couplings):
    return float(mass @ np.std(couplings, axis=0))


def _linear_barycenter(A, weights, ops, cfg, pool):
    kernel = LinearHeatKernel(ops, cfg.gamma, cfg.n_sub)
    n_inputs = A.shape[0]
    U = np.ones_like(A)
    KU = np.stack(list(pool.map(kernel, U)))
    bar = np.ones(ops.n_vertices)
    residuals = []
    for iteration in range(cfg.outer_iters):
        V = bar[None, :] / KU
        KV = np.stack(list(pool.map(kernel, V)))
        _check_linear("kernel of V", KV, iteration)
        U = A / KV
        KU = np.stack(list(pool.map(kernel, U)))
        _check_linear("kernel of U", KU, iteration)
        bar = np.exp(weights @ np.log(KU))
        _check_linear("barycenter", bar, iteration)
        residuals.append(_marginal_residual(ops.mass, V * KU))
        logger.debug(f"Linear Sinkhorn iteration {iteration}: residual {residuals[-1]:.3e}")
        if residuals[-1] < cfg.tolerance:
            break
    logger.info(f"Linear Sinkhorn stopped after {len(residuals)} of {cfg.outer_iters} iterations "
                f"over {n_inputs} inputs, residual {residuals[-1]:.3e}")
    return bar, residuals


def _log_barycenter(A, weights, ops, cfg, pool):
    kernel = LogHeatKernel(ops, cfg.gamma, cfg.n_sub, cfg.solver)
    log_A = log_floor(A)
    G = np.zeros_like(A)

    def project(k):
        f = log_A[k] - kernel(G[k])
        return kernel(f)

    residuals = []
    for iteration in range(cfg.outer_iters):
        log_KU = np.stack(list(pool.map(project, range(A.shape[0]))))
        log_bar = weights @ log_KU
        residuals.append(_marginal_residual(ops.mass, np.exp(G + log_KU)))
        G = log_bar[None, :] - log_KU
        logger.debug(f"Log-domain Sinkhorn iteration {iteration}: residual {residuals[-1]:.3e}")
        if residuals[-1] < cfg.tolerance:
            break
    logger.info(f"Log-domain Sinkhorn stopped after {len(residuals)} of {cfg.outer_iters} iterations, "
                f"residual {residuals[-1]:.3e}")
    return np.exp(log_bar - log_bar.max()), residuals


def barycenter(inputs, weights, cfg):
    """Entropic barycenter where each kernel application is heat flow for time ``gamma``."""
    ops, weights = _check_inputs(inputs, weights)
    A = np.stack([d.mu for d in inputs])
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        if cfg.mode == LINEAR:
            bar, residuals = _linear_barycenter(A, weights, ops, cfg, pool)
        else:
            bar, residuals = _log_barycenter(A, weights, ops, cfg, pool)
    result = Distribution.normalized(bar, ops)
    result.residuals = residuals
    return result


def interpolate(mu0, mu1, t, cfg):
    if not 0.0 <= t <= 1.0:
        raise ConfigError(f"interpolation time must lie in [0, 1], got {t}", {"t": t})
    return barycenter([mu0, mu1], [1.0 - t, t], cfg)
