"""Two axisymmetric rods joined by a ball-and-socket joint.

Configuration space SO(3)^2 with body angular velocities Om1, Om2 and the
configuration-dependent kinetic metric J(A), A = A1^T A2.  The symmetry
group SO(3) x (S^1)^2 acts by (B, t1, t2).(A1, A2) = (B A1 e^{-t1 k},
B A2 e^{-t2 k}).

Phase points use left-trivialized (body) momenta Pi_i = (J(A) Om)_i.
Tangent vectors at a phase point are 12-vectors (d1, d2, dPi1, dPi2) with
A_i -> A_i exp(d_i) and Pi_i -> Pi_i + dPi_i.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .liegroup import E1, E3, exp_so3, hat, rot_y

__all__ = [
    "SingularMassMatrix",
    "RodParams",
    "RodPhasePoint",
    "RodVelocityPoint",
    "ReFamily",
    "Generator",
    "RodTangent",
    "mass_matrix",
    "to_momentum",
    "to_velocity",
    "energy",
    "momentum_map",
    "eom",
    "generator_field",
    "relative_equilibrium",
    "resonant_parameters",
    "kappa_family",
    "retract",
    "tangent_vector",
    "symplectic_matrix",
    "momentum_map_derivative",
    "group_generators",
]


class SingularMassMatrix(ArithmeticError):
    pass


@dataclass(frozen=True)
class RodParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        # J(A) is positive definite for any alpha > 0 once beta < 1; the
        # tighter bound alpha < 2 - 2 beta is not imposed (the resonant set
        # used throughout violates it)
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class RodPhasePoint:
    A1: np.ndarray
    A2: np.ndarray
    Pi1: np.ndarray
    Pi2: np.ndarray

    def left(self, B):
        """Left action of B in SO(3); body momenta are unchanged."""
        return RodPhasePoint(B @ self.A1, B @ self.A2, self.Pi1.copy(), self.Pi2.copy())


@dataclass(frozen=True)
class RodVelocityPoint:
    A1: np.ndarray
    A2: np.ndarray
    Om1: np.ndarray
    Om2: np.ndarray


@dataclass(frozen=True)
class ReFamily:
    t1: float
    t2: float
    theta: float

    def __post_init__(self):
        if self.t1 == 0 or self.t2 == 0:
            raise ValueError("t1 and t2 must be nonzero")
        if not 0.0 < self.theta < np.pi:
            raise ValueError("theta must lie in (0, pi)")


class Generator(NamedTuple):
    """Element (Omega, s1, s2) of so(3) x R^2."""

    Omega: np.ndarray
    s1: float
    s2: float

    def as_vector(self):
        return np.concatenate([self.Omega, [self.s1, self.s2]])


class RodTangent(NamedTuple):
    """Left-trivialized phase-space velocity: dA_i/dt = A_i hat(Om_i)."""

    Om1: np.ndarray
    Om2: np.ndarray
    dPi1: np.ndarray
    dPi2: np.ndarray

    def as_vector(self):
        return np.concatenate([self.Om1, self.Om2, self.dPi1, self.dPi2])


def _coupling_block(A):
    return np.array([[-A[1, 1], A[1, 0], 0.0],
                     [A[0, 1], -A[0, 0], 0.0],
                     [0.0, 0.0, 0.0]])


def mass_matrix(A, params):
    """6x6 kinetic metric J(A) for relative orientation A = A1^T A2."""
    a, b = params.alpha, params.beta
    J = np.diag([1.0, 1.0, a, 1.0, 1.0, a])
    C = b * _coupling_block(A)
    J[:3, 3:] = C
    J[3:, :3] = C.T
    return J


def _solve(J, rhs):
    if np.linalg.cond(J) > 1e12:
        raise SingularMassMatrix("kinetic metric is numerically singular")
    return np.linalg.solve(J, rhs)


def to_momentum(v, params):
    J = mass_matrix(v.A1.T @ v.A2, params)
    Pi = J @ np.concatenate([v.Om1, v.Om2])
    return RodPhasePoint(v.A1, v.A2, Pi[:3], Pi[3:])


def to_velocity(p, params):
    J = mass_matrix(p.A1.T @ p.A2, params)
    Om = _solve(J, np.concatenate([p.Pi1, p.Pi2]))
    return RodVelocityPoint(p.A1, p.A2, Om[:3], Om[3:])


def energy(p, params):
    """Kinetic energy; accepts either a phase point or a velocity point."""
    if isinstance(p, RodVelocityPoint):
        Om = np.concatenate([p.Om1, p.Om2])
        return 0.5 * Om @ mass_matrix(p.A1.T @ p.A2, params) @ Om
    Pi = np.concatenate([p.Pi1, p.Pi2])
    return 0.5 * Pi @ _solve(mass_matrix(p.A1.T @ p.A2, params), Pi)


def momentum_map(p, params=None):
    """(spatial angular momentum, sigma1, sigma2) with sigma_i = -k.Pi_i."""
    mu = p.A1 @ p.Pi1 + p.A2 @ p.Pi2
    return mu, -p.Pi1[2], -p.Pi2[2]


def metric_gradients(A, Om1, Om2, beta):
    """Left-trivialized gradients of 1/2 Om^T J(A) Om in A1 and A2.

    The coupling part of the metric is -beta (Om1 x k)^T A (Om2 x k).
    """
    u = np.cross(Om1, E3)
    v = np.cross(Om2, E3)
    g1 = -beta * np.cross(u, A @ v)
    g2 = -beta * np.cross(v, A.T @ u)
    return g1, g2


def eom(p, params):
    """Hamilton's equations in body form.

    dA_i/dt = A_i hat(Om_i), dPi_i/dt = Pi_i x Om_i + grad_i(1/2 Om^T J Om).
    """
    A = p.A1.T @ p.A2
    Om = _solve(mass_matrix(A, params), np.concatenate([p.Pi1, p.Pi2]))
    Om1, Om2 = Om[:3], Om[3:]
    g1, g2 = metric_gradients(A, Om1, Om2, params.beta)
    return RodTangent(Om1, Om2, np.cross(p.Pi1, Om1) + g1, np.cross(p.Pi2, Om2) + g2)


def generator_field(p, gen):
    """Infinitesimal generator of (Omega, s1, s2) at p, in the same form as :func:`eom`."""
    k = E3
    return RodTangent(p.A1.T @ gen.Omega - gen.s1 * k,
                      p.A2.T @ gen.Omega - gen.s2 * k,
                      gen.s1 * np.cross(k, p.Pi1),
                      gen.s2 * np.cross(k, p.Pi2))


def kappa_family(ta, tb, theta, gamma, params):
    return ((ta * np.cos(theta) - tb) * (params.beta * tb - gamma * ta)
            / (params.alpha * ta * np.sin(theta)))


def relative_equilibrium(fam, params):
    """Relative equilibrium (Id, exp(theta j), Om1, Om2) and its generator."""
    t1, t2, th = fam.t1, fam.t2, fam.theta
    Om1 = t1 * E1 - kappa_family(t1, t2, th, 1.0, params) * E3
    Om2 = t2 * E1 + kappa_family(t2, t1, th, 1.0, params) * E3
    v = RodVelocityPoint(np.eye(3), rot_y(th), Om1, Om2)
    gen = Generator(t1 * E1 + (t1 * np.cos(th) - t2) / np.sin(th) * E3,
                    kappa_family(t1, t2, th, 1.0 - params.alpha, params),
                    -kappa_family(t2, t1, th, 1.0 - params.alpha, params))
    return to_momentum(v, params), gen


def resonant_parameters():
    """Family member and rod parameters of the 1:1 resonant equilibrium studied."""
    t1, t2, th = 1.0, (1.0 + np.sqrt(5.0)) / 2.0, np.pi / 3.0
    fam = ReFamily(t1, t2, th)
    params = RodParams(alpha=0.5, beta=2.0 / np.sqrt(5.0))
    assert abs(params.beta - 2 * t1 * t2 / (t1**2 + t2**2)) < 1e-14
    quartic = 3 * t1**4 + t1**2 * t2**2 * (4 * np.cos(th) ** 2 - 10) + 3 * t2**4
    assert abs(quartic) < 1e-12
    return fam, params


# --- tangent-space plumbing used by the linearization and the embedding ---

def retract(p, v):
    """Exponential retraction of a 12-vector tangent at p."""
    v = np.asarray(v, dtype=float)
    return RodPhasePoint(p.A1 @ exp_so3(v[0:3]), p.A2 @ exp_so3(v[3:6]),
                         p.Pi1 + v[6:9], p.Pi2 + v[9:12])


def tangent_vector(t):
    return t.as_vector()


def symplectic_matrix(p):
    """Matrix W with omega(u, w) = u^T W w for the canonical form at p.

    In left trivialization omega((v1, n1), (v2, n2)) = <n2, v1> - <n1, v2>
    + <Pi, v1 x v2>, which gives i_{X_H} omega = dH for the field of :func:`eom`.
    """
    W = np.zeros((12, 12))
    W[0:3, 0:3] = -hat(p.Pi1)
    W[3:6, 3:6] = -hat(p.Pi2)
    W[0:6, 6:12] = np.eye(6)
    W[6:12, 0:6] = -np.eye(6)
    return W


def momentum_map_derivative(p):
    """5x12 derivative of (mu, sigma1, sigma2) at p in tangent coordinates."""
    D = np.zeros((5, 12))
    # d(A_i Pi_i) = A_i (d_i x Pi_i) + A_i dPi_i
    D[0:3, 0:3] = -p.A1 @ hat(p.Pi1)
    D[0:3, 3:6] = -p.A2 @ hat(p.Pi2)
    D[0:3, 6:9] = p.A1
    D[0:3, 9:12] = p.A2
    D[3, 8] = -1.0
    D[4, 11] = -1.0
    return D


def group_generators(p):
    """12x5 matrix whose columns are the generators of e1, e2, e3, s1, s2 at p."""
    G = np.zeros((12, 5))
    for j in range(5):
        e = np.zeros(5)
        e[j] = 1.0
        G[:, j] = generator_field(p, Generator(e[:3], e[3], e[4])).as_vector()
    return G
