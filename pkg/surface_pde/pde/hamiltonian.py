import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import flatten_face_field

logger = logging.getLogger(__name__)

NONLINEAR_DIFFUSION = "nonlinear_diffusion"
G_EQUATION = "g_equation"
FOKKER_PLANCK = "fokker_planck"
KINDS = (NONLINEAR_DIFFUSION, G_EQUATION, FOKKER_PLANCK)
DIVERGENCE_FORMS = ("weak", "lumped")


@dataclass(frozen=True, eq=False)
class HamiltonianKind:
    """Which first-order term the PDE carries, plus its per-face flow when it needs one.

    ``phi`` is an ``(F, 3)`` array of face-tangent vectors. ``divergence`` only
    matters for Fokker-Planck: ``weak`` multiplies ``u`` by ``G^T M_F phi`` as is,
    ``lumped`` by the pointwise estimate ``-M^{-1} G^T M_F phi``.
    """

    tag: str
    phi: np.ndarray = None
    divergence: str = "weak"

    def __post_init__(self):
        if self.tag not in KINDS:
            raise ValueError(f"unknown Hamiltonian '{self.tag}', expected one of {KINDS}")
        if self.tag == NONLINEAR_DIFFUSION and self.phi is not None:
            raise ValueError("nonlinear diffusion takes no flow field")
        if self.tag != NONLINEAR_DIFFUSION:
            if self.phi is None:
                raise ValueError(f"{self.tag} needs a flow field")
            phi = np.asarray(self.phi, dtype=float)
            if phi.ndim != 2 or phi.shape[1] != 3:
                raise ValueError(f"flow field must have shape (F, 3), got {phi.shape}")
            object.__setattr__(self, "phi", phi)
        if self.divergence not in DIVERGENCE_FORMS:
            raise ValueError(f"divergence must be one of {DIVERGENCE_FORMS}")

    @classmethod
    def nonlinear_diffusion(cls):
        return cls(NONLINEAR_DIFFUSION)

    @classmethod
    def g_equation(cls, phi):
        return cls(G_EQUATION, phi)

    @classmethod
    def fokker_planck(cls, phi, divergence="weak"):
        return cls(FOKKER_PLANCK, phi, divergence)

    @property
    def is_linear(self):
        return self.tag == FOKKER_PLANCK

    def check(self, ops):
        if self.phi is not None and self.phi.shape[0] != ops.n_faces:
            raise ValueError(f"flow field has {self.phi.shape[0]} faces, mesh has {ops.n_faces}")

    def __str__(self):
        return self.tag


def _check_field(u, ops):
    u = np.asarray(u, dtype=float)
    if u.shape != (ops.n_vertices,):
        raise ValueError(f"expected {ops.n_vertices} vertex values, got shape {u.shape}")
    return u


def divergence_term(kind, ops):
    """Per-vertex coefficient multiplying ``u`` in the Fokker-Planck Hamiltonian."""
    weak = ops.D @ flatten_face_field(kind.phi)
    if kind.divergence == "lumped":
        return -weak / ops.mass
    return weak


def advection_operator(kind, ops):
    """Sparse ``(F, V)`` map ``u -> sum_k phi_k * (G_k u)``."""
    phi = kind.phi
    return (sp.hstack([sp.diags(phi[:, k]) for k in range(3)]) @ ops.G).tocsr()


def linear_operator(kind, ops):
    """Sparse ``A`` with ``eval_H(kind, u, ops) == A @ u`` for the linear (Fokker-Planck) kind."""
    if not kind.is_linear:
        raise ValueError(f"{kind} is not linear in u")
    kind.check(ops)
    return (sp.diags(divergence_term(kind, ops)) + ops.ring_average @ advection_operator(kind, ops)).tocsr()


def eval_H(kind, u, ops):
    u = _check_field(u, ops)
    kind.check(ops)
    q = ops.grad(u)
    if kind.tag == NONLINEAR_DIFFUSION:
        return -ops.face_sum(np.einsum("ij,ij->i", q, q))
    if kind.tag == G_EQUATION:
        return ops.face_sum(np.einsum("ij,ij->i", kind.phi, q) - np.linalg.norm(q, axis=1))
    return u * divergence_term(kind, ops) + ops.face_sum(np.einsum("ij,ij->i", q, kind.phi))
