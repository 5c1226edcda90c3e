"""Partial reduction of the drift system by the normal-form circle action.

A drift state (x, A, pi) on the level j_nf = sigma maps to (y, alpha, z) =
(A k, A(pi - pi3 k), A x) in T*S^2 + TS^2, which is read as a particle on the
unit sphere carrying a magnetic moment in the field of a radial monopole.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .drift import j_nf, vector_field
from .liegroup import E3

__all__ = [
    "MomentumMismatch",
    "WrongGauge",
    "MonopoleState",
    "ParticleParams",
    "project",
    "pushforward",
    "pi3_of",
    "eom",
    "velocity",
    "conserved",
    "particle_params",
    "second_order_rhs",
    "second_order_from_eom",
    "energy_balance",
    "constraint_residual",
    "project_constraints",
    "write_trajectory_csv",
    "TRAJECTORY_COLUMNS",
]


class MomentumMismatch(ValueError):
    pass


class WrongGauge(ValueError):
    pass


@dataclass(frozen=True)
class MonopoleState:
    y: np.ndarray
    alpha: np.ndarray
    z: np.ndarray
    sigma: float

    def rotate(self, B):
        return MonopoleState(B @ self.y, B @ self.alpha, B @ self.z, self.sigma)


@dataclass(frozen=True)
class ParticleParams:
    mass: float
    charge_over_c: float
    gyro: float
    internal_energy: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")


def _x3(x):
    return np.array([x[0], x[1], 0.0])


def project(s, sigma, tol=1e-10):
    if abs(j_nf(s) - sigma) > tol:
        raise MomentumMismatch(f"j_nf = {j_nf(s)!r} differs from sigma = {sigma!r}")
    pi_perp = s.pi - s.pi[2] * E3
    return MonopoleState(s.A @ E3, s.A @ pi_perp, s.A @ _x3(s.x), float(sigma))


def pushforward(s, p):
    """Derivative of the projection applied to the drift vector field at s."""
    dx, Om, dpi = vector_field(s.x, s.pi, p)
    pi_perp = s.pi - s.pi[2] * E3
    dpi_perp = dpi - dpi[2] * E3
    A = s.A
    return (A @ np.cross(Om, E3),
            A @ (np.cross(Om, pi_perp) + dpi_perp),
            A @ (_x3(dx) + np.cross(Om, _x3(s.x))))


def pi3_of(m):
    return -(m.sigma + 0.5 * (m.z @ m.z))


def velocity(m, p):
    """dy/dt."""
    return np.cross(p.I1 * m.alpha + p.kappa * m.z, m.y)


def eom(m, p):
    """(dy/dt, dalpha/dt, dz/dt)."""
    pi3 = pi3_of(m)
    v = p.I1 * m.alpha + p.kappa * m.z
    dy = np.cross(v, m.y)
    dalpha = -pi3 * dy + p.kappa * np.cross(m.z, m.alpha)
    dz = (np.cross(p.kappa * m.alpha - (p.I2 * pi3 + p.a) * m.z, m.y)
          + p.I1 * np.cross(m.alpha, m.z))
    return dy, dalpha, dz


def _field_strength(m, p):
    return p.kappa**2 / p.I1 + p.I2 * pi3_of(m) + p.a


def conserved(m, p):
    """(energy, J) with energy in the particle form and J = A pi = alpha + pi3 y."""
    ydot = velocity(m, p)
    c = _field_strength(m, p)
    E = ydot @ ydot / (2 * p.I1) + c * c / (2 * p.I2) + p.kappa**2 * m.sigma / p.I1
    return float(E), m.alpha + pi3_of(m) * m.y


def particle_params(m, p, tol=1e-10):
    if abs(p.I1 - p.kappa**2 / 3) > tol * max(1.0, p.kappa**2):
        raise WrongGauge(f"I1 = {p.I1!r} is not kappa^2/3 = {p.kappa**2 / 3!r}")
    pi3 = pi3_of(m)
    c = _field_strength(m, p)
    return ParticleParams(mass=1.0 / p.I1,
                          charge_over_c=pi3 - p.kappa**2 / p.I1**2,
                          gyro=p.I1**2 / p.kappa**2 * c,
                          internal_energy=c * c / (2 * p.I2))


def magnetic_moment(m, p):
    """Gamma L with L = -(kappa/I1) z."""
    return particle_params(m, p).gyro * (-p.kappa / p.I1) * m.z


def inductive_term(m, p):
    return -(p.kappa**2 / p.I1**2) * velocity(m, p)


def second_order_rhs(m, p):
    """Covariant acceleration of y and covariant derivative of z in closed form."""
    ydot = velocity(m, p)
    pi3 = pi3_of(m)
    c = _field_strength(m, p)
    acc = (p.I1**2 * pi3 - p.kappa**2) / p.I1 * np.cross(m.y, ydot) + p.kappa * c * m.z
    dz = p.kappa / p.I1 * ydot + c * np.cross(m.y, m.z)
    return acc, dz


def second_order_from_eom(m, p):
    """Same quantities obtained by differentiating the first-order equations."""
    dy, dalpha, dz = eom(m, p)
    v = p.I1 * m.alpha + p.kappa * m.z
    ydd = np.cross(p.I1 * dalpha + p.kappa * dz, m.y) + np.cross(v, dy)
    y = m.y
    return ydd - (ydd @ y) * y, dz - (dz @ y) * y


def energy_balance(m, p):
    """(d E_int/dt, rate of work by the moment force on the particle); they sum to zero."""
    dy, _, dz = eom(m, p)
    c = _field_strength(m, p)
    dpi3 = -(m.z @ dz)
    dEint = c * dpi3
    work = dy @ (p.kappa * c * m.z) / p.I1
    return float(dEint), float(work)


def constraint_residual(m):
    return max(abs(m.y @ m.y - 1.0), abs(m.y @ m.alpha), abs(m.y @ m.z))


def project_constraints(m):
    y = m.y / np.linalg.norm(m.y)
    return MonopoleState(y, m.alpha - (m.alpha @ y) * y, m.z - (m.z @ y) * y, m.sigma)


TRAJECTORY_COLUMNS = (["t", "y1", "y2", "y3", "alpha1", "alpha2", "alpha3", "z1", "z2", "z3",
                       "energy", "J1", "J2", "J3"])


def write_trajectory_csv(path, t, states, p):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for ti, m in zip(t, states):
            E, J = conserved(m, p)
            w.writerow([repr(float(v)) for v in [ti, *m.y, *m.alpha, *m.z, E, *J]])
