"""Hyperboloid-model kernel for the hyperbolic plane.

Points live on the upper sheet of x0^2 - x1^2 - x2^2 = 1 with the
Minkowski form of signature (-,+,+).  Isometries are linear maps
preserving the form; geodesic mirrors are spacelike unit vectors and
reflection through a mirror is a rank-one correction.  The Poincare
disk appears only as a bounded chart (dedup keys, rendering).

Everything here is pure-functional on numpy arrays and safe to call
from concurrent workers.
"""

from __future__ import annotations

import math

import numpy as np

INVARIANT_TOL = 1e-9   # form / sheet invariants
DEDUP_TOL = 1e-6       # disk-chart separation used by the lattice builder

_METRIC = np.array([-1.0, 1.0, 1.0])
_J = np.diag(_METRIC)


def mink(p, q):
    """Bilinear form -p0*q0 + p1*q1 + p2*q2.

    Works on single vectors or stacked (..., 3) arrays.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return -p[..., 0] * q[..., 0] + p[..., 1] * q[..., 1] + p[..., 2] * q[..., 2]


def hpoint(x0: float, x1: float, x2: float) -> np.ndarray:
    p = np.array([x0, x1, x2], dtype=float)
    if abs(mink(p, p) + 1.0) > INVARIANT_TOL or p[0] < 1.0 - INVARIANT_TOL:
        raise ValueError(f"not a point on the upper sheet: {p}")
    return p


def origin() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0])


def hyp_dist(p, q):
    """Geodesic distance arccosh(-mink(p,q)).

    The argument is clamped at 1 from below (within 1e-12) to absorb
    rounding on near-equal points; genuinely invalid arguments still
    produce nan rather than a silent answer.
    """
    c = -mink(p, q)
    c = np.where((c < 1.0) & (c > 1.0 - 1e-12), 1.0, c)
    return np.arccosh(c)


def reflect(m, p):
    """Reflect point(s) p through the geodesic with spacelike unit normal m."""
    m = np.asarray(m, dtype=float)
    p = np.asarray(p, dtype=float)
    return p - 2.0 * mink(p, m)[..., None] * m


def reflection_matrix(m) -> np.ndarray:
    """The reflection through mirror m as a 3x3 form-preserving matrix."""
    m = np.asarray(m, dtype=float)
    # p - 2 <p,m> m  with <p,m> = p^T J m
    return np.eye(3) - 2.0 * np.outer(m, _METRIC * m)


def rotation_matrix(theta: float) -> np.ndarray:
    """Rotation about the basepoint o = (1,0,0) by angle theta."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def form_error(M: np.ndarray) -> float:
    """Max-abs deviation of M^T J M from J."""
    return float(np.abs(M.T @ _J @ M - _J).max())


def renormalize(M: np.ndarray) -> np.ndarray:
    """Project an approximately form-preserving matrix back onto O(1,2).

    One step of the Newton iteration for the J-polar decomposition,
    M <- M (I - J(M^T J M - J)/2), repeated to convergence.  Idempotent
    within 1e-12 on matrices that already preserve the form.  Matrices
    with form error above 1e-3 are rejected: that much drift means the
    caller should rebuild from generators instead of patching.
    """
    M = np.asarray(M, dtype=float)
    err = form_error(M)
    if err > 1e-3:
        raise ValueError(f"form error {err:.3e} exceeds 1e-3; rebuild from generators")
    for _ in range(6):
        E = M.T @ _J @ M - _J
        M = M @ (np.eye(3) - 0.5 * (_J @ E))
        if form_error(M) < 1e-15:
            break
    return M


def to_disk(p):
    """Poincare-disk chart (x1/(1+x0), x2/(1+x0)); strictly inside the unit disk."""
    p = np.asarray(p, dtype=float)
    d = 1.0 + p[..., 0]
    return np.stack([p[..., 1] / d, p[..., 2] / d], axis=-1)


def from_disk(uv):
    """Inverse chart of to_disk."""
    uv = np.asarray(uv, dtype=float)
    s = (uv ** 2).sum(axis=-1)
    f = 1.0 - s
    return np.stack(
        [(1.0 + s) / f, 2.0 * uv[..., 0] / f, 2.0 * uv[..., 1] / f], axis=-1
    )


def edge_length() -> float:
    """Edge length of the {3,7} tiling: 2*arccosh(cos(pi/3)/sin(pi/7))."""
    return 2.0 * math.acosh(math.cos(math.pi / 3) / math.sin(math.pi / 7))


def triangle_mirrors():
    """Mirrors of the (2,3,7) fundamental triangle.

    Returned as (m_vertex1, m_vertex2, m_opposite) where the two vertex
    mirrors pass through the basepoint o = (1,0,0) at dihedral angle
    pi/7 (their intersection is the 7-valent lattice vertex), and the
    opposite mirror meets them at angles pi/2 and pi/3.  Reflecting o
    through the opposite mirror lands on the slot-0 neighbor at
    distance edge_length() along the positive x1 axis.
    """
    sp = math.sin(math.pi / 7)
    m1 = np.array([0.0, 0.0, 1.0])
    m2 = np.array([0.0, sp, -math.cos(math.pi / 7)])
    half = 0.5 * edge_length()
    # spacelike unit: -a^2 + b^2 = 1 with |b| = cosh(l/2) = cos(pi/3)/sin(pi/7)
    m3 = np.array([-math.sinh(half), -math.cosh(half), 0.0])
    return m1, m2, m3


def base_neighbors() -> np.ndarray:
    """The 7 neighbor points of the basepoint, slot k at angle 2*pi*k/7."""
    ell = edge_length()
    k = np.arange(7)
    ang = 2.0 * math.pi * k / 7.0
    return np.stack(
        [np.full(7, math.cosh(ell)),
         math.sinh(ell) * np.cos(ang),
         math.sinh(ell) * np.sin(ang)],
        axis=-1,
    )


def neighbor_isometries():
    """Isometries T_k with T_k(o) = base_neighbors()[k].

    T_k = Rot(2 pi k / 7) . Refl(m3): each maps the basepoint onto its
    slot-k neighbor, and the whole orbit of o under the group they
    generate is the vertex set of the {3,7} tiling.
    """
    _, _, m3 = triangle_mirrors()
    refl = reflection_matrix(m3)
    return [rotation_matrix(2.0 * math.pi * k / 7.0) @ refl for k in range(7)]
