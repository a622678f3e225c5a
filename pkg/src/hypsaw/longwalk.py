"""Sampling and per-walk reports at lengths beyond any prebuilt ball.

Walks are turn sequences; geometry is reconstructed on the fly from
step matrices, so nothing here needs a vertex table.  Vertex identity
is decided on double-double coordinates and search heuristics read
the invariant bilinear form; see _lazy for the precision layout.
"""

import numpy as np

from . import exactring
from ._lazy import (lw_frames_dd, lw_rel_chains, lw_pair_setup,
                    lw_self_avoiding, lw_astar, lw_pivot_chain,
                    lw_walk_metrics, lw_hull_report)


# ---------------------------------------------------------------------------
# double-double constants
# ---------------------------------------------------------------------------
# The ring constant is refined to ~1e-33 with one Newton step carried
# in double-double; every matrix entry is then an integer combination
# of its powers, evaluated in the same arithmetic.


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _two_prod(a, b):
    p = a * b
    t = 134217729.0 * a
    ahi = t - (t - a)
    alo = a - ahi
    t = 134217729.0 * b
    bhi = t - (t - b)
    blo = b - bhi
    return p, ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo


def _dd_add(x, y):
    s, e = _two_sum(x[0], y[0])
    e += x[1] + y[1]
    s2 = s + e
    return s2, e - (s2 - s)


def _dd_mul(x, y):
    p, e = _two_prod(x[0], y[0])
    e += x[0] * y[1] + x[1] * y[0]
    s = p + e
    return s, e - (s - p)


def _dd_neg(x):
    return -x[0], -x[1]


def _dd_div(x, y):
    q1 = x[0] / y[0]
    r = _dd_add(x, _dd_neg(_dd_mul((q1, 0.0), y)))
    q2 = r[0] / y[0]
    r = _dd_add(r, _dd_neg(_dd_mul((q2, 0.0), y)))
    q3 = r[0] / y[0]
    s, e = _two_sum(q1, q2)
    e += q3
    s2 = s + e
    return s2, e - (s2 - s)


def _refine_c():
    c = (exactring.C_VAL, 0.0)
    for _ in range(2):
        c2 = _dd_mul(c, c)
        c3 = _dd_mul(c2, c)
        f = _dd_add(_dd_add(c3, _dd_neg(c2)),
                    _dd_add(_dd_mul((-2.0, 0.0), c), (1.0, 0.0)))
        fp = 3.0 * c2[0] - 2.0 * c[0] - 2.0
        q = f[0] / fp
        c = _dd_add(c, (-q, 0.0))
    return c


_C_DD = _refine_c()
_C2_DD = _dd_mul(_C_DD, _C_DD)


def _dd_eval(a0, a1, a2):
    r = _dd_add((float(a0), 0.0), _dd_mul((float(a1), 0.0), _C_DD))
    return _dd_add(r, _dd_mul((float(a2), 0.0), _C2_DD))


def _dd_mat(A):
    out = np.empty(A.shape[:-1] + (2,))
    flat = A.reshape(-1, 3)
    oflat = out.reshape(-1, 2)
    for k in range(flat.shape[0]):
        oflat[k] = _dd_eval(*flat[k])
    return out


def _feval(coeffs):
    c = exactring.C_VAL
    return (coeffs[..., 0] + coeffs[..., 1] * c
            + coeffs[..., 2] * (c * c)).astype(np.float64)


_T0_INV = exactring.mat_mul(exactring.S1, exactring.S3)
_STEP_INV = tuple(
    exactring.mat_mul(_T0_INV, exactring.ROT_POW[(7 - r) % 7])
    for r in range(7)
)
for _r in range(7):
    if exactring.mat_mul(exactring.STEP[_r], _STEP_INV[_r]) \
            != exactring.IDENTITY:
        raise AssertionError("step inverse tables are inconsistent")
NP_STEP_INV = np.stack([np.array([[list(e) for e in row] for row in m],
                                 dtype=np.int64) for m in _STEP_INV])

STEP_DD = np.ascontiguousarray(_dd_mat(exactring.NP_STEP))
STEP_INV_DD = np.ascontiguousarray(_dd_mat(NP_STEP_INV))
MIRROR_DD = np.ascontiguousarray(_dd_mat(exactring.NP_MIRROR))
X0_DD = np.ascontiguousarray(_dd_mat(exactring.NP_X0))

STEP_F = np.ascontiguousarray(STEP_DD[..., 0])
STEP_INV_F = np.ascontiguousarray(STEP_INV_DD[..., 0])
MIRROR_F = np.ascontiguousarray(MIRROR_DD[..., 0])
X0_F = np.ascontiguousarray(X0_DD[..., 0])
TWOG_F = _feval(exactring.NP_TWOG)
Q2_F = exactring.Q2_VAL

# bilinear form contracted with the base point, absorbing the norm:
# cosh d(origin, v) = CROW @ v for any relative position v
CROW = np.ascontiguousarray((X0_F @ TWOG_F) / Q2_F)

# the same form between two absolute positions, cosh d(u, v) = u' G2 v,
# in double-double: the contraction cancels from |u||v| down to e^d,
# which float64 cannot survive past modest radii
_Q2_DD = _dd_eval(*exactring.Q2)
G2_DD = np.empty((3, 3, 2))
for _i in range(3):
    for _j in range(3):
        G2_DD[_i, _j] = _dd_div(_dd_eval(*exactring.NP_TWOG[_i, _j]),
                                _Q2_DD)
G2_DD = np.ascontiguousarray(G2_DD)
if abs(float(X0_F @ G2_DD[..., 0] @ X0_F) - 1.0) > 1e-12:
    raise AssertionError("bilinear form normalization is inconsistent")

EDGE_LEN = float(np.arccosh(CROW @ (STEP_F[0] @ X0_F)))


def _max_reach_table() -> np.ndarray:
    # reach[k]: exact maximum hyperbolic displacement of any k-step
    # lattice path, k <= 6; the search heuristic divides by these
    # instead of the edge length, which no long path can sustain
    tab = np.zeros(7)
    s1 = np.asarray(STEP_F)
    p2 = np.einsum("aij,bjk->abik", s1, s1).reshape(-1, 3, 3)
    p3 = np.einsum("aij,bjk->abik", p2, s1).reshape(-1, 3, 3)
    p4 = np.einsum("aij,bjk->abik", p3, s1).reshape(-1, 3, 3)
    p5 = np.einsum("aij,bjk->abik", p3, p2).reshape(-1, 3, 3)
    p6 = np.einsum("aij,bjk->abik", p3, p3).reshape(-1, 3, 3)
    for k, p in enumerate((s1, p2, p3, p4, p5, p6), start=1):
        ch = float(np.max((p @ X0_F) @ CROW))
        tab[k] = np.arccosh(ch) + 1e-9
    return np.ascontiguousarray(tab)


REACH = _max_reach_table()


# ---------------------------------------------------------------------------
# scratch buffers
# ---------------------------------------------------------------------------


class SearchScratch:
    """Reusable work arrays for graph-distance searches.

    Not thread-safe; give each worker its own instance.
    """

    def __init__(self, cap: int = 1 << 16):
        cap = int(cap)
        hsize = 1
        while hsize < 4 * cap:
            hsize *= 2
        self.cap = cap
        self.hkey = np.zeros(hsize, np.int64)
        self.hep = np.zeros(hsize, np.int64)
        self.hval = np.zeros(hsize, np.int64)
        self.epoch_io = np.zeros(3, np.int64)
        self.frm = np.empty((cap, 3, 3, 2))
        self.pos = np.empty((cap, 3, 2))
        self.gsco = np.empty(cap, np.int64)
        hcap = 8 * cap
        self.hf = np.empty(hcap, np.int64)
        self.hg = np.empty(hcap, np.int64)
        self.hx = np.empty(hcap, np.int64)

    def astar(self, f0, tgt):
        self.epoch_io[0] += 1
        return int(lw_astar(f0, tgt, STEP_DD, X0_DD, G2_DD, EDGE_LEN,
                            REACH, self.hkey, self.hep, self.hval,
                            int(self.epoch_io[0]),
                            self.frm, self.pos,
                            self.gsco, self.hf, self.hg, self.hx))


class ReportScratch:
    """Work arrays for hull reports on walks of one fixed length."""

    def __init__(self, n: int, astar_cap: int = 1 << 18,
                 region_cap: int = 1 << 16, hull_cap: int = 1 << 13):
        self.n = int(n)
        self.search = SearchScratch(astar_cap)
        rcap = int(region_cap)
        kcap = int(hull_cap)
        self.region_cap = rcap
        self.hull_cap = kcap
        rhsize = 1
        while rhsize < 4 * rcap:
            rhsize *= 2
        self.rhkey = np.zeros(rhsize, np.int64)
        self.rhep = np.zeros(rhsize, np.int64)
        self.rhval = np.zeros(rhsize, np.int64)
        self.rfrm = np.empty((rcap, 3, 3, 2))
        self.rpos = np.empty((rcap, 3, 2))
        self.rtau = np.empty((rcap, n + 1, 3))
        self.rpar = np.empty(rcap, np.int64)
        self.rpslot = np.empty(rcap, np.int8)
        self.radj = np.empty((rcap, 7), np.int32)
        self.rq = np.empty(rcap, np.int32)
        self.dfield = np.empty((n + 1, rcap), np.int16)
        khsize = 1
        while khsize < 4 * kcap:
            khsize *= 2
        self.khkey = np.zeros(khsize, np.int64)
        self.khep = np.zeros(khsize, np.int64)
        self.khval = np.zeros(khsize, np.int64)
        self.kpos = np.empty((kcap, 3, 2))
        self.karr = np.empty(kcap, np.int32)
        self.hflag = np.empty(rcap, np.uint8)
        self.out_tslot = np.empty(n + 1, np.int64)
        self.out_defect = np.empty(n + 1, np.int64)
        self.out_defimg = np.empty(n + 1, np.int64)
        self.out_valid = np.empty(n + 1, np.int64)
        self.out_exposed = np.empty(n + 1, np.int64)


# ---------------------------------------------------------------------------
# basic walk utilities
# ---------------------------------------------------------------------------


def _as_turns(turns) -> np.ndarray:
    a = np.asarray(turns, dtype=np.int8)
    if a.ndim != 1 or len(a) == 0:
        raise ValueError("turns must be a non-empty 1-d sequence")
    if not (0 <= a[0] <= 6):
        raise ValueError("first entry must be a slot in 0..6")
    if len(a) > 1 and (a[1:].min() < 0 or a[1:].max() > 5):
        raise ValueError("turns after the first must lie in 0..5")
    return a


def walk_positions(turns) -> np.ndarray:
    """Vertex positions of a walk in the root frame, float64."""
    a = _as_turns(turns)
    n = len(a)
    f = np.empty((n + 1, 3, 3, 2))
    p = np.empty((n + 1, 3, 2))
    lw_frames_dd(a, STEP_DD, X0_DD, f, p)
    return np.ascontiguousarray(p[:, :, 0])


def is_self_avoiding(turns) -> bool:
    """Whether the walk visits no vertex twice."""
    a = _as_turns(turns)
    scratch = np.empty((2, 3, 3))
    r = int(lw_self_avoiding(a, STEP_F, X0_F, CROW, 0, scratch))
    if r < 0:
        raise FloatingPointError("vertex identity test hit the dead band")
    return bool(r)


def straight_walk(n: int) -> np.ndarray:
    """A length-n walk along a graph geodesic ray.

    Alternating turns keep consecutive steps at the flattest available
    angle on a degree-7 vertex, tacking left and right so the walk
    tracks a geodesic instead of curling.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    t = np.zeros(n, dtype=np.int8)
    for k in range(1, n):
        t[k] = 2 if k % 2 == 1 else 3
    return t


def graph_distance(turns, i: int, j: int, *, cap: int = 1 << 16,
                   scratch: SearchScratch | None = None) -> int:
    """Graph distance between vertices i and j of a walk."""
    a = _as_turns(turns)
    n = len(a)
    if not (0 <= i <= n and 0 <= j <= n):
        raise ValueError("vertex index out of range")
    if i == j:
        return 0
    if i > j:
        i, j = j, i
    if scratch is None:
        scratch = SearchScratch(cap)
    f0 = np.empty((3, 3, 2))
    tgt = np.empty((3, 2))
    lw_pair_setup(a, i, j, STEP_DD, X0_DD, f0, tgt)
    d = scratch.astar(f0, tgt)
    if d == -1:
        raise RuntimeError("graph search capacity exceeded; raise cap")
    if d == -2:
        raise RuntimeError("graph search drained without reaching target")
    return d


# ---------------------------------------------------------------------------
# pivot sampling
# ---------------------------------------------------------------------------


def pivot_sample(n: int, samples: int, *, seed: int, thin: int | None = None,
                 burn: int | None = None, dihedral: bool = True,
                 start=None):
    """Sample self-avoiding walks of length n by the pivot chain.

    Returns (walks, info): walks is (samples, n) int8; info records
    acceptance counts.  Deterministic for a given seed.  thin defaults
    to n//2 moves between samples, burn to 20n moves.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if thin is None:
        thin = max(n // 2, 1)
    if burn is None:
        burn = 20 * n
    if start is None:
        start = straight_walk(n)
    start = _as_turns(start)
    if len(start) != n:
        raise ValueError("start walk has the wrong length")
    if not is_self_avoiding(start):
        raise ValueError("start walk is not self-avoiding")
    total = burn + samples * thin
    words = 2 * total + 64
    out = np.empty((samples, n), np.int8)
    while True:
        rng = np.random.default_rng(seed).integers(
            0, 1 << 64, size=words, dtype=np.uint64)
        emitted, accepted, status = lw_pivot_chain(
            start, samples, burn, thin, 1 if dihedral else 0, rng, out,
            STEP_F, X0_F, CROW)
        if status == 2:
            raise FloatingPointError(
                "vertex identity test hit the dead band")
        if status == 0 and emitted == samples:
            break
        words *= 2
    info = {"moves": total, "accepted": int(accepted),
            "acceptance": float(accepted) / float(total),
            "burn": int(burn), "thin": int(thin), "seed": int(seed)}
    return out, info


def walk_metrics(walks, *, defect_cap: int = 2, defect_every: int = 1,
                 want_defects=None, cap: int = 1 << 16,
                 scratch: SearchScratch | None = None) -> dict:
    """Displacement and interior near-geodesic counts for many walks.

    Returns {"displacement": int64 (W,), "iti_count": int64 (W,)};
    iti_count[w] counts interior vertices (every defect_every-th)
    whose detour defect is at most defect_cap, or -1 where
    want_defects is false.
    """
    w = np.asarray(walks, dtype=np.int8)
    if w.ndim == 1:
        w = w[None, :]
    W = w.shape[0]
    if want_defects is None:
        wd = np.ones(W, np.uint8)
    else:
        wd = np.asarray(want_defects).astype(np.uint8)
        if wd.shape != (W,):
            raise ValueError("want_defects has the wrong shape")
    if scratch is None:
        scratch = SearchScratch(cap)
    disp = np.empty(W, np.int64)
    iti = np.empty(W, np.int64)
    bad, status = lw_walk_metrics(
        w, defect_cap, defect_every, wd,
        STEP_DD, X0_DD, G2_DD, EDGE_LEN, REACH,
        scratch.hkey, scratch.hep, scratch.hval, scratch.epoch_io,
        scratch.frm, scratch.pos,
        scratch.gsco, scratch.hf, scratch.hg, scratch.hx,
        disp, iti)
    if status == 1:
        raise RuntimeError(
            f"graph search capacity exceeded on walk {bad}; raise cap")
    if status == 2:
        raise RuntimeError(
            f"graph search drained without reaching target on walk {bad}")
    return {"displacement": disp, "iti_count": iti}


# ---------------------------------------------------------------------------
# hull reports
# ---------------------------------------------------------------------------


_HULL_STATUS = {
    1: "region capacity exceeded; raise region_cap",
    2: "pairwise distance search failed; raise astar_cap",
    3: "walk repeats a vertex",
    4: "restricted distances disagree with free ones",
    5: "hull replay inconsistency",
    6: "hull capacity exceeded; raise hull_cap",
    7: "walk vertex outside its own hull",
    8: "distance search drained without reaching its target",
}


def walk_report(turns, *, scratch: ReportScratch | None = None,
                astar_cap: int = 1 << 16, region_cap: int = 1 << 16,
                hull_cap: int = 1 << 13) -> dict:
    """Hull geometry of one self-avoiding walk: sizes, per-vertex
    exposure, tangent mirrors, detour defects and mirror-image
    defects.  Region growth is
    bounded by a tube test that provably contains every pairwise graph
    interval, and invariant checks turn any breakage into an exception
    instead of a wrong number.
    """
    a = _as_turns(turns)
    n = len(a)
    if scratch is None:
        scratch = ReportScratch(n, astar_cap, region_cap, hull_cap)
    if scratch.n != n:
        raise ValueError("scratch was sized for a different walk length")
    s = scratch
    se = s.search
    nk, nr, status = lw_hull_report(
        a,
        STEP_DD, STEP_INV_DD, STEP_F, STEP_INV_F, MIRROR_DD,
        X0_DD, X0_F, G2_DD, CROW, EDGE_LEN, REACH,
        se.hkey, se.hep, se.hval, se.epoch_io,
        se.frm, se.pos, se.gsco, se.hf, se.hg, se.hx,
        s.rhkey, s.rhep, s.rhval, s.rfrm, s.rpos, s.rtau, s.rpar,
        s.rpslot, s.radj, s.rq, s.dfield,
        s.khkey, s.khep, s.khval, s.kpos, s.karr, s.hflag,
        s.out_tslot, s.out_defect, s.out_defimg, s.out_valid,
        s.out_exposed)
    if status != 0:
        msg = _HULL_STATUS.get(int(status), "unknown failure")
        if status == 3:
            raise ValueError(f"hull report: {msg}")
        raise RuntimeError(f"hull report: {msg}")
    tangent = s.out_tslot >= 0
    return {
        "hull_size": int(nk),
        "region_size": int(nr),
        "tangent_slot": s.out_tslot.copy(),
        "tangent": tangent.copy(),
        "exposed": s.out_exposed.astype(bool),
        "defect": s.out_defect.copy(),
        "image_defect": s.out_defimg.copy(),
        "image_valid": s.out_valid.copy(),
        "boundary_tangent": int(tangent.sum()),
        "boundary_exposed": int(s.out_exposed.sum()),
    }
