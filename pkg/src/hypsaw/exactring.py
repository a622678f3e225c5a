"""Exact arithmetic for the (2,3,7) reflection group.

Group elements are 3x3 matrices over Z[c], c = 2 cos(pi/7), acting on
the root basis of the group's geometric representation.  Since c has
minimal polynomial c^3 - c^2 - 2c + 1, every ring element is an integer
triple (a0, a1, a2) meaning a0 + a1 c + a2 c^2, and all group/lattice
computations reduce to integer arithmetic: vertex identity is exact at
any distance from the basepoint, with no float drift ever.

The doubled Gram form 2B stays integral (B has half-integer entries),
and every lattice vertex key g.x0 has the same timelike norm, so
cosh(dist(u, v)) = B(u, v) / B(x0, x0) is a ratio of ring values.

Python-int implementation here (arbitrary precision); the numba kernels
mirror the same formulas on int64 with overflow guards.
"""

from __future__ import annotations

import math

import numpy as np

# float value of c and of the basis monomials
C_VAL = 2.0 * math.cos(math.pi / 7.0)
_C2_VAL = C_VAL * C_VAL

Triple = tuple  # (a0, a1, a2) integers

ZERO = (0, 0, 0)
ONE = (1, 0, 0)
C = (0, 1, 0)


def radd(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def rsub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def rneg(a):
    return (-a[0], -a[1], -a[2])


def rmul(a, b):
    """Product in Z[c]: convolve, then reduce with c^3 = c^2 + 2c - 1."""
    p0 = a[0] * b[0]
    p1 = a[0] * b[1] + a[1] * b[0]
    p2 = a[0] * b[2] + a[1] * b[1] + a[2] * b[0]
    p3 = a[1] * b[2] + a[2] * b[1]
    p4 = a[2] * b[2]
    # c^3 = -1 + 2c + c^2 ; c^4 = -1 + c + 3c^2
    return (p0 - p3 - p4, p1 + 2 * p3 + p4, p2 + p3 + 3 * p4)


def feval(a) -> float:
    return a[0] + a[1] * C_VAL + a[2] * _C2_VAL


def mat_mul(A, B):
    return tuple(
        tuple(
            radd(radd(rmul(A[i][0], B[0][j]), rmul(A[i][1], B[1][j])), rmul(A[i][2], B[2][j]))
            for j in range(3)
        )
        for i in range(3)
    )


def mat_vec(A, x):
    return tuple(
        radd(radd(rmul(A[i][0], x[0]), rmul(A[i][1], x[1])), rmul(A[i][2], x[2]))
        for i in range(3)
    )


def mat_max_abs(A) -> int:
    return max(abs(v) for row in A for t in row for v in t)


IDENTITY = ((ONE, ZERO, ZERO), (ZERO, ONE, ZERO), (ZERO, ZERO, ONE))

# Simple reflections in the root basis (rows act on column coordinate
# vectors): s_i(x) = x - 2B(x, alpha_i) alpha_i with B(a1,a2) = -c/2,
# B(a2,a3) = -1/2, B(a1,a3) = 0.
S1 = (((-1, 0, 0), C, ZERO), (ZERO, ONE, ZERO), (ZERO, ZERO, ONE))
S2 = ((ONE, ZERO, ZERO), (C, (-1, 0, 0), ONE), (ZERO, ZERO, ONE))
S3 = ((ONE, ZERO, ZERO), (ZERO, ONE, ZERO), (ZERO, ONE, (-1, 0, 0)))

# Doubled Gram form, integral over Z[c].
TWOG = ((( 2, 0, 0), (0, -1, 0), ZERO),
        ((0, -1, 0), ( 2, 0, 0), (-1, 0, 0)),
        (ZERO, (-1, 0, 0), ( 2, 0, 0)))

# Basepoint of the lattice: the 7-valent vertex fixed by <s1, s2>.
X0 = (C, (2, 0, 0), (4, 0, -1))

# Doubled norm 2B(X0, X0) = 2c^4 - 14c^2 + 24, a negative (timelike) value.
Q2 = (22, 2, -8)
Q2_VAL = feval(Q2)


def bilin2(x, y):
    """Doubled form value 2B(x, y) as a ring element."""
    gy = mat_vec(TWOG, y)
    return radd(radd(rmul(x[0], gy[0]), rmul(x[1], gy[1])), rmul(x[2], gy[2]))


def cosh_dist(x, y) -> float:
    """cosh of the hyperbolic distance between two vertex keys."""
    return feval(bilin2(x, y)) / Q2_VAL


# Rotation by one slot around X0 and the slot-0 step (the product of
# the two reflections through the X0-nb0 edge's endpoints' mirrors).
ROT = mat_mul(S1, S2)
T0 = mat_mul(S3, S1)

_rk = IDENTITY
_rot_pows = []
for _ in range(7):
    _rot_pows.append(_rk)
    _rk = mat_mul(_rk, ROT)
ROT_POW = tuple(_rot_pows)  # ROT^k, k = 0..6

# STEP[r]: walk to the neighbor at relative slot r; after arriving,
# relative slot 0 points back along the traversed edge.
STEP = tuple(mat_mul(ROT_POW[r], T0) for r in range(7))

# MIRROR[j]: the reflection fixing X0 and its relative-slot-j neighbor;
# maps relative slot a to (2j - a) mod 7.
MIRROR = tuple(
    mat_mul(mat_mul(ROT_POW[j], S1), ROT_POW[(7 - j) % 7]) for j in range(7)
)


def key(g) -> tuple:
    """Flattened 9-integer vertex key g(X0); exact vertex identity."""
    v = mat_vec(g, X0)
    return v[0] + v[1] + v[2]


def key_vec(g):
    return mat_vec(g, X0)


# int64 numpy copies of the constant tables for the jit kernels:
# shape (3,3,3), [i, j, coefficient].
def _np_mat(A):
    return np.array([[list(t) for t in row] for row in A], dtype=np.int64)


NP_STEP = np.stack([_np_mat(m) for m in STEP])
NP_MIRROR = np.stack([_np_mat(m) for m in MIRROR])
NP_ROT_POW = np.stack([_np_mat(m) for m in ROT_POW])
NP_IDENTITY = _np_mat(IDENTITY)
NP_X0 = np.array([list(t) for t in X0], dtype=np.int64)
NP_TWOG = _np_mat(TWOG)
