"""Injection of drift-system initial data into the rod phase space, and the observable tau."""

from dataclasses import dataclass

import numpy as np

from . import rods
from .liegroup import E3

__all__ = [
    "RefinementDivergence",
    "ZeroTau",
    "Embedding",
    "make_embedding",
    "psi_linear",
    "psi_embed",
    "tau",
    "tau_bar",
]


class RefinementDivergence(ArithmeticError):
    pass


class ZeroTau(ArithmeticError):
    pass


@dataclass(frozen=True)
class Embedding:
    """What the embedding needs from a calibration."""

    p_e: rods.RodPhasePoint
    E: np.ndarray  # 12x2, x directions
    Zf: np.ndarray  # 12x5, momentum directions dual to (f1, f2, f3, s1, s2)
    F: np.ndarray  # 5x5 algebra frame; F[:3, :3] = [f1 f2 f3]
    rod_params: rods.RodParams
    family: rods.ReFamily

    @property
    def R0(self):
        return self.F[:3, :3]


def make_embedding(cal, gauge="spherical"):
    """Embedding from a :func:`resdrift.splitting.calibrate` result.

    ``gauge`` is 'spherical' or 'natural' (the W_red of the splitting before
    the gauge shift).
    """
    rb = cal["refined"] if gauge == "spherical" else cal["refined_pre_gauge"]
    return Embedding(cal["p_e"], rb.E, rb.Zf, rb.F, cal["rod_params"], cal["family"])


def psi_linear(emb, x, nu):
    """Tangent vector E x + Zf nu at p_e; nu = (pi in the f frame, S^1 momentum offsets)."""
    return emb.E @ np.asarray(x, dtype=float) + emb.Zf @ np.asarray(nu, dtype=float)


def _target(emb, pi, A):
    mu_e, s1e, s2e = rods.momentum_map(emb.p_e)
    return np.concatenate([mu_e + emb.R0 @ (A @ pi), [s1e, s2e]])


def _momenta(p):
    mu, s1, s2 = rods.momentum_map(p)
    return np.concatenate([mu, [s1, s2]])


def _fiber_correct(p, target):
    """Least-norm change of (Pi1, Pi2) at fixed configuration hitting the momentum target.

    The momentum map is linear in the body momenta, so one solve is exact.
    """
    M = np.zeros((5, 6))
    M[:3, :3] = p.A1
    M[:3, 3:] = p.A2
    M[3, 2] = M[4, 5] = -1.0
    m = np.concatenate([p.Pi1, p.Pi2])
    if np.linalg.matrix_rank(M) < 5:
        raise RefinementDivergence("momentum map is not submersive at this configuration")
    m = m - np.linalg.lstsq(M, M @ m - target, rcond=None)[0]
    return rods.RodPhasePoint(p.A1, p.A2, m[:3], m[3:])


def psi_embed(emb, x, pi, A=None, refine=True, tol=1e-14, max_iter=30):
    """Rod phase point for the drift data (x, A, pi).

    The drift data maps through the splitting basis to a tangent vector at
    p_e, which is retracted by exponential updates.  With ``refine`` the
    momentum coordinates of that tangent vector are corrected by damped
    Newton iteration until the rod momentum map equals (R0 A pi, sigma_e)
    to ``tol``.  For large x that family can fold before reaching the
    target; Newton then stops at its best iterate and the remaining
    (second order) mismatch is removed by a least-norm change of the body
    momenta.  A != Id is applied as the left rotation R0 A R0^T.
    """
    A = np.eye(3) if A is None else np.asarray(A, dtype=float)
    pi = np.asarray(pi, dtype=float)
    x = np.asarray(x, dtype=float)
    B = emb.R0 @ A @ emb.R0.T
    nu = np.concatenate([pi, [0.0, 0.0]])
    base = rods.retract(emb.p_e, psi_linear(emb, x, nu))
    if not refine:
        return base.left(B)
    target = _target(emb, pi, np.eye(3))
    scale = 1.0 + np.abs(target).max()

    def resid(v):
        return _momenta(rods.retract(emb.p_e, psi_linear(emb, x, v))) - target

    r = resid(nu)
    for _ in range(max_iter):
        if np.abs(r).max() <= tol * scale:
            return rods.retract(emb.p_e, psi_linear(emb, x, nu)).left(B)
        # forward-difference Jacobian in the momentum coordinates
        D = np.empty((5, 5))
        for j in range(5):
            e = np.zeros(5)
            e[j] = 1e-7
            D[:, j] = (resid(nu + e) - r) / 1e-7
        step = np.linalg.solve(D, r)
        # backtrack until the residual decreases
        t = 1.0
        while True:
            trial = nu - t * step
            rt = resid(trial)
            if np.abs(rt).max() < np.abs(r).max():
                break
            t *= 0.5
            if t < 1e-6:
                break
        if t < 1e-6:
            break
        nu, r = trial, rt
    p = _fiber_correct(rods.retract(emb.p_e, psi_linear(emb, x, nu)), target)
    res = np.abs(_momenta(p) - target).max()
    if res > max(tol, 1e-13) * scale:
        raise RefinementDivergence(f"momentum residual {res:.3g} after refinement")
    return p.left(B)


def tau(p, fam):
    """(t1 A2 k - t2 A1 k)/sin(theta): the rotation vector of the family at p."""
    return (fam.t1 * (p.A2 @ E3) - fam.t2 * (p.A1 @ E3)) / np.sin(fam.theta)


def tau_bar(p, fam):
    t = tau(p, fam)
    n = np.linalg.norm(t)
    if n < 1e-12:
        raise ZeroTau("tau vanishes")
    return t / n
