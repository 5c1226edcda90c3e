"""SO(3) / so(3) primitives.

Rotations are plain 3x3 numpy arrays; so(3) elements are 3-vectors
identified with skew matrices through ``hat``/``vee``.
"""

import numpy as np

__all__ = [
    "AngleNearPi",
    "hat",
    "vee",
    "exp_so3",
    "log_so3",
    "right_jacobian",
    "right_jacobian_inv",
    "left_jacobian_inv",
    "rot_x",
    "rot_y",
    "rot_z",
    "polar_project",
    "is_rotation",
]

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


class AngleNearPi(ValueError):
    """Raised when the logarithm is requested for a rotation angle near pi."""


def hat(v):
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def vee(m):
    m = np.asarray(m)
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _sinc_terms(theta):
    # a = sin(t)/t, b = (1 - cos t)/t^2, c = (t - sin t)/t^3
    if theta < 1e-4:
        t2 = theta * theta
        return 1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, 1.0 / 6.0 - t2 / 120.0
    return (np.sin(theta) / theta, (1.0 - np.cos(theta)) / theta**2,
            (theta - np.sin(theta)) / theta**3)


def exp_so3(v):
    """Rodrigues' formula."""
    v = np.asarray(v, dtype=float)
    theta = np.sqrt(v @ v)
    a, b, _ = _sinc_terms(theta)
    K = hat(v)
    return np.eye(3) + a * K + b * (K @ K)


def log_so3(R):
    """Inverse of :func:`exp_so3` for rotation angles strictly below pi.

    Raises :class:`AngleNearPi` when ``trace(R) <= -1 + 1e-10``.
    """
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr <= -1.0 + 1e-10:
        raise AngleNearPi(f"rotation angle too close to pi (trace={tr!r})")
    c = np.clip(0.5 * (tr - 1.0), -1.0, 1.0)
    theta = np.arccos(c)
    w = vee(R - R.T)
    if theta < 1e-4:
        # sin(t)/t expansion keeps full precision near the identity
        return 0.5 * w / (1.0 - theta**2 / 6.0 + theta**4 / 120.0)
    if theta > np.pi - 1e-3:
        # axis from the symmetric part; vee(R - R^T) loses precision here
        B = 0.5 * (R + R.T) - c * np.eye(3)
        i = int(np.argmax(np.diag(B)))
        axis = B[:, i] / np.sqrt(B[i, i])
        if axis @ w < 0:
            axis = -axis
        return theta * axis / np.linalg.norm(axis)
    return 0.5 * theta / np.sin(theta) * w


def right_jacobian(v):
    """J_r with exp(v + d) = exp(v) exp(J_r(v) d) + O(d^2)."""
    v = np.asarray(v, dtype=float)
    theta = np.sqrt(v @ v)
    _, b, c = _sinc_terms(theta)
    K = hat(v)
    return np.eye(3) - b * K + c * (K @ K)


def right_jacobian_inv(v):
    v = np.asarray(v, dtype=float)
    theta = np.sqrt(v @ v)
    K = hat(v)
    if theta < 1e-4:
        d = 1.0 / 12.0 + theta**2 / 720.0
    else:
        d = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) + 0.5 * K + d * (K @ K)


def left_jacobian_inv(v):
    return right_jacobian_inv(-np.asarray(v, dtype=float))


def rot_x(t):
    return exp_so3(t * E1)


def rot_y(t):
    return exp_so3(t * E2)


def rot_z(t):
    return exp_so3(t * E3)


def polar_project(R):
    """Nearest rotation matrix (orthogonal polar factor)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] = -U[:, -1]
        Q = U @ Vt
    return Q


def is_rotation(R, tol=1e-12):
    R = np.asarray(R)
    return (np.abs(R.T @ R - np.eye(3)).max() < tol
            and abs(np.linalg.det(R) - 1.0) < tol)
