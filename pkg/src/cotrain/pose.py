"""Relative-pose algebra for trajectory processing.

Poses are either planar (x, y, theta) or spatial (x, y, z, qw, qx, qy, qz).
Deltas are expressed in the base frame: compose(base, delta) == target with
the rotation applied on the right.  Quaternions use (w, x, y, z) ordering
and are canonicalized to w >= 0 after every operation.
"""

from __future__ import annotations

import numpy as np

QUAT_NORM_TOL = 1e-6


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - theta, 2.0 * np.pi)


# ---------------------------------------------------------------------------
# planar mode: pose = (x, y, theta)

def compose_2d(base: np.ndarray, delta: np.ndarray) -> np.ndarray:
    x, y, th = base
    dx, dy, dth = delta
    c, s = np.cos(th), np.sin(th)
    return np.array([x + c * dx - s * dy, y + s * dx + c * dy, wrap_angle(th + dth)])


def relative_2d(base: np.ndarray, target: np.ndarray) -> np.ndarray:
    x, y, th = base
    tx, ty, tth = target
    c, s = np.cos(th), np.sin(th)
    ex, ey = tx - x, ty - y
    return np.array([c * ex + s * ey, -s * ex + c * ey, wrap_angle(tth - th)])


# ---------------------------------------------------------------------------
# spatial mode: pose = (x, y, z, qw, qx, qy, qz)

def quat_canonical(q: np.ndarray) -> np.ndarray:
    q = q / np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def quat_check(q: np.ndarray, name: str) -> None:
    n = np.linalg.norm(q)
    if abs(n - 1.0) > QUAT_NORM_TOL:
        raise ValueError(f"{name} quaternion has norm {n:.3e}, not unit")


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    qv = np.array([0.0, v[0], v[1], v[2]])
    return quat_mul(quat_mul(q, qv), quat_conj(q))[1:]


def compose_3d(base: np.ndarray, delta: np.ndarray) -> np.ndarray:
    qb, qd = base[3:], delta[3:]
    quat_check(qb, "base")
    quat_check(qd, "delta")
    t = base[:3] + quat_rotate(qb, delta[:3])
    q = quat_canonical(quat_mul(qb, qd))
    return np.concatenate([t, q])


def relative_3d(base: np.ndarray, target: np.ndarray) -> np.ndarray:
    qb, qt = base[3:], target[3:]
    quat_check(qb, "base")
    quat_check(qt, "target")
    dt = quat_rotate(quat_conj(qb), target[:3] - base[:3])
    dq = quat_canonical(quat_mul(quat_conj(qb), qt))
    return np.concatenate([dt, dq])


# ---------------------------------------------------------------------------
# mode dispatch

def compose(base: np.ndarray, delta: np.ndarray) -> np.ndarray:
    base, delta = np.asarray(base, dtype=float), np.asarray(delta, dtype=float)
    if base.shape != delta.shape:
        raise ValueError(f"pose shapes differ: {base.shape} vs {delta.shape}")
    if base.shape == (3,):
        return compose_2d(base, delta)
    if base.shape == (7,):
        return compose_3d(base, delta)
    raise ValueError(f"pose must have 3 (planar) or 7 (spatial) entries, got {base.shape}")


def relative_action(base: np.ndarray, target: np.ndarray) -> np.ndarray:
    base, target = np.asarray(base, dtype=float), np.asarray(target, dtype=float)
    if base.shape != target.shape:
        raise ValueError(f"pose shapes differ: {base.shape} vs {target.shape}")
    if base.shape == (3,):
        return relative_2d(base, target)
    if base.shape == (7,):
        return relative_3d(base, target)
    raise ValueError(f"pose must have 3 (planar) or 7 (spatial) entries, got {base.shape}")


def identity_pose(mode: str) -> np.ndarray:
    if mode == "2d":
        return np.zeros(3)
    if mode == "3d":
        return np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    raise ValueError(f"unknown pose mode {mode!r}")
