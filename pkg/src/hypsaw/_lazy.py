"""Coordinate kernels for walks beyond any prebuilt ball.

Vertices live on the hyperboloid as images of a base point under frame
matrices.  Two precision regimes coexist, each used only where it is
sound:

* Vertex identity (dedup, membership, collision tests) runs on
  double-double coordinates, about 31 decimal digits.  Two routes to
  the same vertex agree to ~1e-28 relative, while distinct vertices at
  radius r differ by ~exp(-1.09 r) relative, which stays above 1e-22
  out to radius 45.  Comparisons use a threshold of 1e-25, orders of
  magnitude from both walls.  Plain float64 cannot do this: beyond
  radius ~28 distinct vertices can share every coordinate bit.

* Distance estimates fall in two camps.  Estimates that ride along a
  transport (tube gates, collision reads) use float relative-frame
  chains, sound only while the chained value grows or the chain stays
  short; a chain toward its target decays while noise is amplified by
  ~e^ell per step and rots after ~14 steps.  The A* heuristic instead
  takes cosh of the distance between two double-double positions
  straight from the invariant bilinear form.  The contraction cancels
  from the product of the operand magnitudes down to e^(distance), so
  its absolute noise is bounded by eps times that product; subtracting
  the bound keeps the heuristic admissible at any depth, with slack
  far below one lattice step everywhere the searches run (sources sit
  at the origin, so magnitudes stay at e^(radius), never e^(2 radius)).

Estimates only shape how much gets explored.  Every reported number is
decided by identity tests or exhaustive expansion, so a failure of the
layout shows up as an explicit status code, never as a quietly wrong
answer.
"""

import numpy as np
from numba import njit

# double-double identity threshold: route noise ~1e-28, distinct
# vertices differ by >= ~1e-22 relative out to radius 45
DD_TOL = 1e-25

# relative-chain cosh margins: same vertex reads 1 +- ~1e-12, distinct
# vertices read >= cosh(edge) = 1.6565...; the gap flags corruption
SAME_HI = 1.05
DIST_LO = 1.30

# route-noise coefficient of a double-double bilinear-form contraction:
# absolute error <= BILIN_EPS * (product of operand cosh magnitudes);
# per-op rounding is ~1e-32, kept at x1000
BILIN_EPS = 1e-29

CELL_BITS = 20


# ---------------------------------------------------------------------------
# double-double primitives (Dekker splits; no fma assumed)
# ---------------------------------------------------------------------------


@njit(inline="always")
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@njit(inline="always")
def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


@njit(inline="always")
def _two_prod(a, b):
    p = a * b
    t = 134217729.0 * a
    ahi = t - (t - a)
    alo = a - ahi
    t = 134217729.0 * b
    bhi = t - (t - b)
    blo = b - bhi
    return p, ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo


@njit(inline="always")
def _dd_add(ahi, alo, bhi, blo):
    s, e = _two_sum(ahi, bhi)
    e += alo + blo
    return _quick_two_sum(s, e)


@njit(inline="always")
def _dd_mul(ahi, alo, bhi, blo):
    p, e = _two_prod(ahi, bhi)
    e += ahi * blo + alo * bhi
    return _quick_two_sum(p, e)


@njit(inline="always")
def _dd_mat_mul(A, B, C):
    # C = A @ B on (3,3,2) double-double matrices; C distinct from A, B
    for i in range(3):
        for j in range(3):
            shi = 0.0
            slo = 0.0
            for k in range(3):
                phi, plo = _dd_mul(A[i, k, 0], A[i, k, 1],
                                   B[k, j, 0], B[k, j, 1])
                shi, slo = _dd_add(shi, slo, phi, plo)
            C[i, j, 0] = shi
            C[i, j, 1] = slo


@njit(inline="always")
def _dd_mat_vec(A, x, y):
    # y = A @ x on (3,3,2) x (3,2); y distinct from x
    for i in range(3):
        shi = 0.0
        slo = 0.0
        for k in range(3):
            phi, plo = _dd_mul(A[i, k, 0], A[i, k, 1], x[k, 0], x[k, 1])
            shi, slo = _dd_add(shi, slo, phi, plo)
        y[i, 0] = shi
        y[i, 1] = slo


@njit(inline="always")
def _dd_copy_mat(src, dst):
    for i in range(3):
        for j in range(3):
            dst[i, j, 0] = src[i, j, 0]
            dst[i, j, 1] = src[i, j, 1]


@njit(inline="always")
def _dd_close(a, b):
    """Same-vertex test for two (3,2) double-double positions."""
    m = 0.0
    for i in range(3):
        aa = abs(a[i, 0])
        if aa > m:
            m = aa
        bb = abs(b[i, 0])
        if bb > m:
            m = bb
    for i in range(3):
        dhi, _ = _dd_add(a[i, 0], a[i, 1], -b[i, 0], -b[i, 1])
        if abs(dhi) > DD_TOL * m:
            return False
    return True


# ---------------------------------------------------------------------------
# float helpers on relative-chain vectors
# ---------------------------------------------------------------------------


@njit(inline="always")
def _fmat_mul(A, B, C):
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for k in range(3):
                acc += A[i, k] * B[k, j]
            C[i, j] = acc


@njit(inline="always")
def _fmat_vec(A, x, y):
    for i in range(3):
        acc = 0.0
        for k in range(3):
            acc += A[i, k] * x[k]
        y[i] = acc


@njit(inline="always")
def _cosh_rel(crow, v):
    # cosh distance from the frame origin to relative position v;
    # crow bakes the bilinear form contracted with the base point
    return crow[0] * v[0] + crow[1] * v[1] + crow[2] * v[2]


@njit(inline="always")
def _dd_bilin(g2, u, v):
    # cosh distance between double-double positions u and v: the
    # normalized bilinear form u' g2 v, contracted in double-double
    # so the cancellation from |u||v| down to e^(distance) is real
    thi = 0.0
    tlo = 0.0
    for i in range(3):
        shi = 0.0
        slo = 0.0
        for k in range(3):
            phi, plo = _dd_mul(g2[i, k, 0], g2[i, k, 1], v[k, 0], v[k, 1])
            shi, slo = _dd_add(shi, slo, phi, plo)
        phi, plo = _dd_mul(u[i, 0], u[i, 1], shi, slo)
        thi, tlo = _dd_add(thi, tlo, phi, plo)
    return thi


@njit(inline="always")
def _steps_for(reach, dh):
    """Least k whose k-step maximum reach covers distance dh.

    reach[r] holds the exact maximum hyperbolic displacement of any
    r-step lattice path for r <= 6; longer paths are bounded by
    splitting into blocks of six.  Tighter than dh/edge because no
    path sustains full edge speed: the six-step average is ~2% short,
    which is what keeps near-geodesic frontiers thin.
    """
    f6 = reach[6]
    q = np.int64(dh / f6)
    rem = dh - q * f6
    r = np.int64(0)
    while r < 6 and reach[r] < rem:
        r += 1
    return 6 * q + r


@njit(inline="always")
def _heur(g2, p, p0, tgt, dh0t, r0, rt, ell, g, reach):
    """Admissible steps-remaining bound for a non-target vertex.

    p is the vertex position, p0 the source, tgt the target, all
    double-double; dh0t the source-target distance, r0 and rt the
    ambient radii of source and target.  Both estimates read the
    invariant form of two positions, so nothing is carried and nothing
    rots.  The contraction noise is bounded by BILIN_EPS times the
    operand magnitudes; subtracting it keeps the direct bound
    admissible, adding it keeps the triangle bound through the source
    admissible.
    """
    h = np.int64(1)
    ch = _dd_bilin(g2, p, tgt)
    noise = BILIN_EPS * np.exp(r0 + ell * g + rt) + 1e-12 * np.abs(ch)
    chl = ch - noise
    if chl >= DIST_LO:
        ht = _steps_for(reach, np.arccosh(chl))
        if ht > h:
            h = ht
    chs = _dd_bilin(g2, p, p0)
    chs += BILIN_EPS * np.exp(2.0 * r0 + ell * g) + 1e-12 * np.abs(chs)
    ds = np.arccosh(chs) if chs > 1.0 else 0.0
    rem = dh0t - ds - 1e-9 * (1.0 + dh0t + ds)
    if rem > 0.0:
        hs = _steps_for(reach, rem)
        if hs > h:
            h = hs
    return h


# ---------------------------------------------------------------------------
# hash set over double-double positions
# ---------------------------------------------------------------------------
# Keys quantize the hi components on a relative grid; a hit must also
# pass the double-double closeness test, so a coarse cell can only cost
# probe time, never correctness.  Epoch stamps make clearing free.


@njit(inline="always")
def _cell_hash(q0, q1, q2):
    h = np.uint64(q0) * np.uint64(0x9E3779B97F4A7C15)
    h ^= np.uint64(q1) * np.uint64(0xC2B2AE3D27D4EB4F)
    h ^= np.uint64(q2) * np.uint64(0x165667B19E3779F9)
    h ^= h >> np.uint64(29)
    return np.int64(h & np.uint64(0x7FFFFFFFFFFFFFFF))


@njit(inline="always")
def _cell_of(p):
    s = max(abs(p[0, 0]), abs(p[1, 0]), abs(p[2, 0]))
    e = np.int64(np.floor(np.log2(s)))
    sc = 2.0 ** (CELL_BITS - e)
    return (np.int64(np.rint(p[0, 0] * sc)),
            np.int64(np.rint(p[1, 0] * sc)),
            np.int64(np.rint(p[2, 0] * sc)))


@njit(inline="always")
def _dd_set_lookup(hkey, hep, hval, epoch, p, pool):
    """Pool index of the vertex at position p, or -1.

    Probes the 27 cells around p's quantization: representations of one
    vertex land within a cell width of each other, so the true cell is
    always among them.
    """
    mask = np.int64(len(hkey) - 1)
    q0, q1, q2 = _cell_of(p)
    for d0 in range(-1, 2):
        for d1 in range(-1, 2):
            for d2 in range(-1, 2):
                key = _cell_hash(q0 + d0, q1 + d1, q2 + d2)
                slot = key & mask
                while True:
                    if hep[slot] != epoch:
                        break
                    if hkey[slot] == key:
                        idx = hval[slot]
                        if _dd_close(pool[idx], p):
                            return idx
                    slot = (slot + 1) & mask
    return np.int64(-1)


@njit(inline="always")
def _dd_set_insert(hkey, hep, hval, epoch, p, pool, n_pool):
    """Insert position p (known absent) at pool slot n_pool."""
    mask = np.int64(len(hkey) - 1)
    q0, q1, q2 = _cell_of(p)
    key = _cell_hash(q0, q1, q2)
    slot = key & mask
    while hep[slot] == epoch:
        slot = (slot + 1) & mask
    hkey[slot] = key
    hep[slot] = epoch
    hval[slot] = n_pool
    for i in range(3):
        pool[n_pool, i, 0] = p[i, 0]
        pool[n_pool, i, 1] = p[i, 1]


# ---------------------------------------------------------------------------
# walk chains
# ---------------------------------------------------------------------------
# turns[0] is the absolute slot of the first step; turns[t] for t >= 1
# is a turn 0..5, step slot = turn + 1 in the arrival gauge.  The step
# convention puts the reverse edge at local slot 0 of every non-root
# frame, so frame gauge and arrival gauge coincide.


@njit(inline="always")
def _slot(turns, t):
    # slot of step t, 1-based
    return turns[0] if t == 1 else turns[t - 1] + 1


@njit(cache=True, nogil=True)
def lw_frames_dd(turns, step_dd, x0_dd, out_f, out_p):
    """Frames and positions along a walk, double-double, root gauge.

    out_f: (n+1,3,3,2), out_p: (n+1,3,2).
    """
    n = len(turns)
    for i in range(3):
        for j in range(3):
            out_f[0, i, j, 0] = 1.0 if i == j else 0.0
            out_f[0, i, j, 1] = 0.0
        out_p[0, i, 0] = x0_dd[i, 0]
        out_p[0, i, 1] = x0_dd[i, 1]
    for t in range(1, n + 1):
        _dd_mat_mul(out_f[t - 1], step_dd[_slot(turns, t)], out_f[t])
        _dd_mat_vec(out_f[t], x0_dd, out_p[t])


@njit(cache=True, nogil=True)
def lw_rel_chains(turns, step_f, step_inv_f, x0_f, rel):
    """rel[t, j] = position of vertex j as seen from vertex t.

    Every entry comes from a product of per-step matrices whose size
    tracks the pair distance, so the relative accuracy is uniform in
    walk length.  rel: (n+1, n+1, 3).
    """
    n = len(turns)
    M = np.empty((3, 3))
    T = np.empty((3, 3))
    for t in range(n + 1):
        for i in range(3):
            rel[t, t, i] = x0_f[i]
            for j in range(3):
                M[i, j] = 1.0 if i == j else 0.0
        for j in range(t + 1, n + 1):
            _fmat_mul(M, step_f[_slot(turns, j)], T)
            for a in range(3):
                for b in range(3):
                    M[a, b] = T[a, b]
            _fmat_vec(M, x0_f, rel[t, j])
        for i in range(3):
            for j in range(3):
                M[i, j] = 1.0 if i == j else 0.0
        for j in range(t - 1, -1, -1):
            _fmat_mul(M, step_inv_f[_slot(turns, j + 1)], T)
            for a in range(3):
                for b in range(3):
                    M[a, b] = T[a, b]
            _fmat_vec(M, x0_f, rel[t, j])


@njit(cache=True, nogil=True)
def lw_pair_setup(turns, a, b, step_dd, x0_dd, f0, tgt):
    """Stage a graph-distance query from walk vertex a to vertex b.

    Works in vertex a's gauge: f0 becomes the identity frame and tgt
    the double-double position of b, so search noise stays pinned to
    the pair distance instead of the depth along the walk.
    """
    G = np.empty((3, 3, 2))
    T = np.empty((3, 3, 2))
    for i in range(3):
        for j in range(3):
            G[i, j, 0] = 1.0 if i == j else 0.0
            G[i, j, 1] = 0.0
            f0[i, j, 0] = 1.0 if i == j else 0.0
            f0[i, j, 1] = 0.0
    for t in range(a + 1, b + 1):
        _dd_mat_mul(G, step_dd[_slot(turns, t)], T)
        _dd_copy_mat(T, G)
    _dd_mat_vec(G, x0_dd, tgt)


# ---------------------------------------------------------------------------
# self-avoidance
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def lw_self_avoiding(turns, step_f, x0_f, crow, lo, scratch):
    """1 if no vertex repeats, 0 on a repeat, -1 on a dead-band reading.

    With lo > 0 only pairs (u, t) with u < lo < t are tested, for
    proposals that moved the suffix past vertex lo rigidly: a rigid
    motion preserves the suffix's internal distances and the prefix is
    untouched.  lo <= 0 tests every pair.  Each pair is read off a
    running relative-frame product, so accuracy does not degrade with
    distance from the root.  scratch: (2, 3, 3) float.
    """
    n = len(turns)
    M = scratch[0]
    T = scratch[1]
    t0 = lo + 1 if lo > 0 else 1
    for t in range(t0, n + 1):
        for i in range(3):
            for j in range(3):
                M[i, j] = 1.0 if i == j else 0.0
        u_hi = lo - 1 if lo > 0 else t - 1
        for u in range(t - 1, -1, -1):
            _fmat_mul(step_f[_slot(turns, u + 1)], M, T)
            for a in range(3):
                for b in range(3):
                    M[a, b] = T[a, b]
            if u > u_hi:
                continue
            ch = (crow[0] * (M[0, 0] * x0_f[0] + M[0, 1] * x0_f[1]
                             + M[0, 2] * x0_f[2])
                  + crow[1] * (M[1, 0] * x0_f[0] + M[1, 1] * x0_f[1]
                               + M[1, 2] * x0_f[2])
                  + crow[2] * (M[2, 0] * x0_f[0] + M[2, 1] * x0_f[1]
                               + M[2, 2] * x0_f[2]))
            if ch < SAME_HI:
                return np.int64(0)
            if ch < DIST_LO:
                return np.int64(-1)
    return np.int64(1)


# ---------------------------------------------------------------------------
# A* graph distance
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def lw_astar(f0, tgt, step_dd, x0_dd, g2_dd, ell, reach,
             hkey, hep, hval, epoch, frm, pos, gsco, hf, hg, hx):
    """Graph distance from the vertex of frame f0 to position tgt.

    tgt is a double-double position in f0's ambient coordinates.
    Expansion carries only the frame (for exact identity); the
    heuristic reads distances off the invariant form of the stored
    positions.  Unit edges, a consistent heuristic and h >= 1
    off-target make return-on-generation exact.

    Returns the distance, -1 on capacity, -2 if the frontier drains.
    """
    cap = pos.shape[0]
    hcap = hf.shape[0]
    F = np.empty((3, 3, 2))
    P = np.empty((3, 2))
    p0 = np.empty((3, 2))

    _dd_mat_vec(f0, x0_dd, p0)
    if _dd_close(p0, tgt):
        return np.int64(0)
    _dd_copy_mat(f0, frm[0])
    chr_ = _dd_bilin(g2_dd, x0_dd, p0)
    r0 = np.arccosh(chr_) if chr_ > 1.0 else 0.0
    chrt = _dd_bilin(g2_dd, x0_dd, tgt)
    rt = np.arccosh(chrt) if chrt > 1.0 else 0.0
    # the triangle bound needs a lower bound on the source-target
    # distance, so the seed contraction's noise is subtracted
    ch0 = _dd_bilin(g2_dd, p0, tgt) - BILIN_EPS * np.exp(r0 + rt)
    dh0t = np.arccosh(ch0) if ch0 > 1.0 else 0.0
    _dd_set_insert(hkey, hep, hval, epoch, p0, pos, 0)
    gsco[0] = 0
    nst = 1
    hf[0] = _heur(g2_dd, p0, p0, tgt, dh0t, r0, rt, ell, 0, reach)
    hg[0] = 0
    hx[0] = 0
    nh = 1
    while nh > 0:
        cf = hf[0]
        cg = hg[0]
        cx = hx[0]
        nh -= 1
        f_ = hf[nh]
        g_ = hg[nh]
        x_ = hx[nh]
        # sift down, ordering by (f asc, g desc)
        k = 0
        while True:
            c = 2 * k + 1
            if c >= nh:
                break
            if c + 1 < nh and (hf[c + 1] < hf[c]
                               or (hf[c + 1] == hf[c] and hg[c + 1] > hg[c])):
                c += 1
            if hf[c] < f_ or (hf[c] == f_ and hg[c] > g_):
                hf[k] = hf[c]
                hg[k] = hg[c]
                hx[k] = hx[c]
                k = c
            else:
                break
        hf[k] = f_
        hg[k] = g_
        hx[k] = x_
        if cg > gsco[cx]:
            continue
        ng = cg + 1
        for s in range(7):
            _dd_mat_mul(frm[cx], step_dd[s], F)
            _dd_mat_vec(F, x0_dd, P)
            if _dd_close(P, tgt):
                return ng
            j = _dd_set_lookup(hkey, hep, hval, epoch, P, pos)
            if j >= 0:
                if ng >= gsco[j]:
                    continue
            else:
                if nst >= cap:
                    return np.int64(-1)
                j = nst
                _dd_set_insert(hkey, hep, hval, epoch, P, pos, j)
                nst += 1
            _dd_copy_mat(F, frm[j])
            gsco[j] = ng
            nf = ng + _heur(g2_dd, P, p0, tgt, dh0t, r0, rt, ell, ng, reach)
            if nh >= hcap:
                return np.int64(-1)
            k = nh
            nh += 1
            while k > 0:
                par = (k - 1) // 2
                if hf[par] > nf or (hf[par] == nf and hg[par] < ng):
                    hf[k] = hf[par]
                    hg[k] = hg[par]
                    hx[k] = hx[par]
                    k = par
                else:
                    break
            hf[k] = nf
            hg[k] = ng
            hx[k] = j
    return np.int64(-2)


# ---------------------------------------------------------------------------
# bounded RNG draws
# ---------------------------------------------------------------------------


@njit(inline="always")
def _lw_bounded(buf, pos, bound):
    """Unbiased draw in [0, bound) from 32-bit halves of a word buffer.

    Lemire multiply-shift with rejection.  Returns (-1, pos) when the
    buffer is exhausted.
    """
    nb = 2 * len(buf)
    while True:
        if pos >= nb:
            return np.int64(-1), pos
        w = buf[pos >> 1]
        if pos & 1:
            half = np.uint64(w) >> np.uint64(32)
        else:
            half = np.uint64(w) & np.uint64(0xFFFFFFFF)
        pos += 1
        m = half * np.uint64(bound)
        lo = m & np.uint64(0xFFFFFFFF)
        if lo < np.uint64(bound):
            t = (np.uint64(0x100000000) - np.uint64(bound)) % np.uint64(bound)
            if lo < t:
                continue
        return np.int64(m >> np.uint64(32)), pos


# ---------------------------------------------------------------------------
# pivot chain
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def lw_pivot_chain(turns0, steps, burn, thin, dihedral, rng, out,
                   step_f, x0_f, crow):
    """Pivot Markov chain over self-avoiding walks of fixed length.

    Each move draws a pivot vertex i in 1..n-1 and a point-group
    element there: a rotation k (k = 0 is the identity and always
    accepted) or, with dihedral, also a reflection.  The element acts
    on the arrival slot at i; a reflection additionally flips every
    later turn.  Proposals that would re-enter the reverse edge or
    collide are rejected.  Emits a row into out every thin moves after
    burn.  Returns (emitted, accepted, status): status 1 means the rng
    buffer ran dry, 2 a dead-band reading (corruption; never expected).
    """
    n = turns0.shape[0]
    cur = np.empty(n, np.int8)
    prop = np.empty(n, np.int8)
    for t in range(n):
        cur[t] = turns0[t]
    scratch = np.empty((2, 3, 3))
    nsym = 14 if dihedral else 7
    pos = 0
    accepted = np.int64(0)
    emitted = np.int64(0)
    total = burn + steps * thin
    for mv in range(1, total + 1):
        i, pos = _lw_bounded(rng, pos, n - 1)
        if i < 0:
            return emitted, accepted, np.int64(1)
        i += 1
        sym, pos = _lw_bounded(rng, pos, nsym)
        if sym < 0:
            return emitted, accepted, np.int64(1)
        a = cur[i] + 1
        ok = False
        if sym == 0:
            accepted += 1
        elif sym < 7:
            na = (a + sym) % 7
            if na != 0:
                for t in range(n):
                    prop[t] = cur[t]
                prop[i] = na - 1
                ok = True
        else:
            jm = sym - 7
            na = (2 * jm - a) % 7
            if na < 0:
                na += 7
            if na != 0:
                for t in range(i):
                    prop[t] = cur[t]
                prop[i] = na - 1
                for t in range(i + 1, n):
                    prop[t] = 5 - cur[t]
                ok = True
        if ok:
            sa = lw_self_avoiding(prop, step_f, x0_f, crow, i, scratch)
            if sa < 0:
                return emitted, accepted, np.int64(2)
            if sa == 1:
                tmp = cur
                cur = prop
                prop = tmp
                accepted += 1
        if mv > burn and (mv - burn) % thin == 0:
            for t in range(n):
                out[emitted, t] = cur[t]
            emitted += 1
            if emitted == out.shape[0]:
                break
    return emitted, accepted, np.int64(0)


# ---------------------------------------------------------------------------
# per-walk metrics
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def lw_walk_metrics(walks, cdef, stride, want_defects,
                    step_dd, x0_dd, g2_dd, ell,
                    reach, hkey, hep, hval, epoch_io,
                    frm, pos, gsco, hf, hg, hx,
                    out_disp, out_iti):
    """End-to-end displacement and interior near-geodesic counts.

    For each walk, out_disp gets the graph distance between the two
    ends.  Where want_defects is set, out_iti counts interior vertices
    i (every stride-th) whose detour defect d(0,i) + d(i,n) - d(0,n)
    is at most cdef; elsewhere out_iti is -1.  Returns (bad, status):
    status 1 capacity, 2 drained frontier, with bad the walk index.
    """
    W, n = walks.shape
    f0 = np.empty((3, 3, 2))
    tgt = np.empty((3, 2))
    for w in range(W):
        turns = walks[w]
        epoch_io[0] += 1
        lw_pair_setup(turns, 0, n, step_dd, x0_dd, f0, tgt)
        dn = lw_astar(f0, tgt, step_dd, x0_dd, g2_dd, ell,
                      reach, hkey, hep, hval, epoch_io[0],
                      frm, pos, gsco, hf, hg, hx)
        if dn < 0:
            return w, np.int64(1 if dn == -1 else 2)
        out_disp[w] = dn
        if want_defects[w] == 0:
            out_iti[w] = -1
            continue
        cnt = np.int64(0)
        for i in range(1, n, stride):
            if i == n:
                break
            epoch_io[0] += 1
            lw_pair_setup(turns, 0, i, step_dd, x0_dd, f0, tgt)
            d0 = lw_astar(f0, tgt, step_dd, x0_dd, g2_dd, ell,
                          reach, hkey, hep, hval, epoch_io[0],
                          frm, pos, gsco, hf, hg, hx)
            if d0 < 0:
                return w, np.int64(1 if d0 == -1 else 2)
            epoch_io[0] += 1
            lw_pair_setup(turns, i, n, step_dd, x0_dd, f0, tgt)
            d1 = lw_astar(f0, tgt, step_dd, x0_dd, g2_dd, ell,
                          reach, hkey, hep, hval, epoch_io[0],
                          frm, pos, gsco, hf, hg, hx)
            if d1 < 0:
                return w, np.int64(1 if d1 == -1 else 2)
            if d0 + d1 - dn <= cdef:
                cnt += 1
        out_iti[w] = cnt
    return np.int64(-1), np.int64(0)


# ---------------------------------------------------------------------------
# hull, tangency and image-defect report
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def lw_hull_report(turns,
                   step_dd, step_inv_dd, step_f, step_inv_f, mirror_dd,
                   x0_dd, x0_f, g2_dd, crow, ell, reach,
                   hkey, hep, hval, epoch_io,
                   afrm, apos, agsco, ahf, ahg, ahx,
                   rhkey, rhep, rhval, rfrm, rpos, rtau, rpar, rpslot,
                   radj, rq, dfield,
                   khkey, khep, khval, kpos, karr, hflag,
                   out_tslot, out_defect, out_defimg, out_valid,
                   out_exposed):
    """Convex-hull geometry of one walk, certified by construction.

    Builds the hull of the walk's vertex set inside a region that
    provably contains every pairwise graph interval, takes restricted
    distance fields, and reports per vertex: exposure (a lattice
    neighbor outside the hull), the first tangent mirror in arrival
    gauge (a reflection fixing the vertex that moves the rest of the
    hull entirely off itself), the detour defect, and the defect of
    the walk's image under the tangent mirror together with a validity
    bit (image suffix avoiding the prefix).

    Estimates only size the region; membership, distances, tangency
    and image tests are all decided by identity or exhaustive search.
    Returns (hull_size, region_size, status); nonzero status aborts:
    1 region capacity, 2 distance search failure, 3 repeated walk
    vertex, 4 restricted distance mismatch, 5 replay inconsistency,
    6 hull capacity, 7 walk vertex outside its own hull.
    """
    n = len(turns)
    rcap = rpos.shape[0]
    kcap = kpos.shape[0]

    wf = np.empty((n + 1, 3, 3, 2))
    wp = np.empty((n + 1, 3, 2))
    lw_frames_dd(turns, step_dd, x0_dd, wf, wp)
    rel = np.empty((n + 1, n + 1, 3))
    lw_rel_chains(turns, step_f, step_inv_f, x0_f, rel)

    # pairwise graph distances; every search runs in its source's own
    # frame (identity at a, target chained along the walk) so that
    # route noise stays pinned to the target scale, never to the
    # source's depth
    Dm = np.empty((n + 1, n + 1), np.int64)
    iden = np.empty((3, 3, 2))
    for i in range(3):
        for j in range(3):
            iden[i, j, 0] = 1.0 if i == j else 0.0
            iden[i, j, 1] = 0.0
    dmM = np.empty((3, 3, 2))
    dmM2 = np.empty((3, 3, 2))
    dmT = np.empty((3, 2))
    for a in range(n + 1):
        Dm[a, a] = 0
    for a in range(n + 1):
        _dd_copy_mat(iden, dmM)
        for b in range(a + 1, n + 1):
            _dd_mat_mul(dmM, step_dd[_slot(turns, b)], dmM2)
            _dd_copy_mat(dmM2, dmM)
            _dd_mat_vec(dmM, x0_dd, dmT)
            epoch_io[0] += 1
            d = lw_astar(iden, dmT, step_dd, x0_dd, g2_dd, ell, reach,
                         hkey, hep, hval, epoch_io[0],
                         afrm, apos, agsco, ahf, ahg, ahx)
            if d < 0:
                return np.int64(0), np.int64(0), np.int64(2 if d == -1 else 8)
            Dm[a, b] = d
            Dm[b, a] = d

    # region: every vertex whose summed hyperbolic distances to some
    # walk pair fit under that pair's graph length; any vertex of a
    # graph geodesic between walk vertices passes, so restricted
    # distances between walk vertices are exact
    epoch_io[1] += 1
    repo = epoch_io[1]
    F = np.empty((3, 3, 2))
    P = np.empty((3, 2))
    taub = np.empty((n + 1, 3))
    dh = np.empty(n + 1)
    nr = np.int64(0)
    for t in range(n + 1):
        if _dd_set_lookup(rhkey, rhep, rhval, repo, wp[t], rpos) >= 0:
            return np.int64(0), np.int64(0), np.int64(3)
        _dd_set_insert(rhkey, rhep, rhval, repo, wp[t], rpos, nr)
        _dd_copy_mat(wf[t], rfrm[nr])
        for j in range(n + 1):
            for i in range(3):
                rtau[nr, j, i] = rel[t, j, i]
        rpar[nr] = -t - 1
        rpslot[nr] = 0
        nr += 1
    qh = np.int64(0)
    while qh < nr:
        q = qh
        qh += 1
        for s in range(7):
            _dd_mat_mul(rfrm[q], step_dd[s], F)
            _dd_mat_vec(F, x0_dd, P)
            if _dd_set_lookup(rhkey, rhep, rhval, repo, P, rpos) >= 0:
                continue
            for j in range(n + 1):
                _fmat_vec(step_inv_f[s], rtau[q, j], taub[j])
                ch = _cosh_rel(crow, taub[j])
                dh[j] = np.arccosh(ch) if ch > 1.0 else 0.0
            keep = False
            for a in range(n + 1):
                if keep:
                    break
                for b in range(a + 1, n + 1):
                    if dh[a] + dh[b] <= ell * Dm[a, b] + 1e-6:
                        keep = True
                        break
            if not keep:
                continue
            if nr >= rcap:
                return np.int64(0), np.int64(0), np.int64(1)
            _dd_set_insert(rhkey, rhep, rhval, repo, P, rpos, nr)
            _dd_copy_mat(F, rfrm[nr])
            for j in range(n + 1):
                for i in range(3):
                    rtau[nr, j, i] = taub[j, i]
            rpar[nr] = q
            rpslot[nr] = s
            nr += 1

    # region adjacency
    for r in range(nr):
        for s in range(7):
            _dd_mat_mul(rfrm[r], step_dd[s], F)
            _dd_mat_vec(F, x0_dd, P)
            radj[r, s] = _dd_set_lookup(rhkey, rhep, rhval, repo, P, rpos)

    # restricted breadth-first distance fields from each walk vertex
    for t in range(n + 1):
        for r in range(nr):
            dfield[t, r] = -1
        dfield[t, t] = 0
        rq[0] = t
        ql = np.int64(0)
        qr = np.int64(1)
        while ql < qr:
            v = rq[ql]
            ql += 1
            dv = dfield[t, v]
            for s in range(7):
                u = radj[v, s]
                if u >= 0 and dfield[t, u] < 0:
                    dfield[t, u] = dv + 1
                    rq[qr] = u
                    qr += 1
    for a in range(n + 1):
        for b in range(n + 1):
            if dfield[a, b] != Dm[a, b]:
                return np.int64(0), np.int64(0), np.int64(4)

    # hull membership: on some walk-pair interval
    nk = np.int64(0)
    for v in range(nr):
        hflag[v] = 0
        for a in range(n + 1):
            if hflag[v]:
                break
            da = dfield[a, v]
            if da < 0:
                continue
            for b in range(a + 1, n + 1):
                db = dfield[b, v]
                if db >= 0 and da + db == Dm[a, b]:
                    hflag[v] = 1
                    nk += 1
                    break
    for t in range(n + 1):
        if hflag[t] == 0:
            return np.int64(0), np.int64(0), np.int64(7)
    if nk > kcap:
        return nk, nr, np.int64(6)

    # per-vertex reports
    xh = np.empty((n + 1, 3, 3, 2))
    wpx = np.empty((n + 1, 3, 2))
    stack = np.empty(512, np.int8)
    nbk = np.empty(7, np.uint8)
    endp = np.empty((3, 2))
    endw = np.empty((3, 2))
    img = np.empty((3, 2))
    G = np.empty((3, 3, 2))
    G2 = np.empty((3, 3, 2))
    for x in range(n + 1):
        exp_ = 0
        for s in range(7):
            nb = radj[x, s]
            inh = nb >= 0 and hflag[nb] == 1
            nbk[s] = 1 if inh else 0
            if not inh:
                exp_ = 1
        out_exposed[x] = exp_

        # hull in vertex x's gauge, by replaying region parent paths
        for i in range(3):
            for j in range(3):
                xh[x, i, j, 0] = 1.0 if i == j else 0.0
                xh[x, i, j, 1] = 0.0
        for t in range(x + 1, n + 1):
            _dd_mat_mul(xh[t - 1], step_dd[_slot(turns, t)], xh[t])
        for t in range(x - 1, -1, -1):
            _dd_mat_mul(xh[t + 1], step_inv_dd[_slot(turns, t + 1)], xh[t])
        for t in range(n + 1):
            _dd_mat_vec(xh[t], x0_dd, wpx[t])
        epoch_io[2] += 1
        kepo = epoch_io[2]
        kn = np.int64(0)
        xown = np.int64(-1)
        for v in range(nr):
            if hflag[v] == 0:
                continue
            depth = np.int64(0)
            r = v
            while rpar[r] >= 0:
                if depth >= 512:
                    return nk, nr, np.int64(5)
                stack[depth] = rpslot[r]
                depth += 1
                r = rpar[r]
            anchor = -rpar[r] - 1
            _dd_copy_mat(xh[anchor], G)
            for d_ in range(depth - 1, -1, -1):
                _dd_mat_mul(G, step_dd[stack[d_]], G2)
                _dd_copy_mat(G2, G)
            _dd_mat_vec(G, x0_dd, P)
            if _dd_set_lookup(khkey, khep, khval, kepo, P, kpos) >= 0:
                return nk, nr, np.int64(5)
            _dd_set_insert(khkey, khep, khval, kepo, P, kpos, kn)
            karr[kn] = v
            if v == x:
                xown = kn
            kn += 1
        if xown < 0:
            return nk, nr, np.int64(5)

        # first tangent mirror in the frame (= arrival) gauge
        tslot = np.int64(-1)
        for jm in range(7):
            broken = False
            for s in range(7):
                if nbk[s] == 1 and nbk[(2 * jm - s) % 7] == 1:
                    broken = True
                    break
            if not broken:
                for ki in range(kn):
                    if ki == xown:
                        continue
                    _dd_mat_vec(mirror_dd[jm], kpos[ki], img)
                    if _dd_set_lookup(khkey, khep, khval, kepo, img,
                                      kpos) >= 0:
                        broken = True
                        break
            if not broken:
                tslot = jm
                break
        out_tslot[x] = tslot

        if x == 0 or x == n:
            out_defect[x] = -1
            out_defimg[x] = -1
            out_valid[x] = -1
            continue
        defect = Dm[0, x] + Dm[x, n] - Dm[0, n]
        out_defect[x] = defect
        if tslot < 0:
            # the reflection fixes the whole hull pointwise only in
            # the degenerate sense; treat the image as the walk itself
            out_defimg[x] = defect
            out_valid[x] = 1
            continue
        # image end carried to vertex 0's own frame by the growing
        # (stable) transport, then searched source-locally
        _dd_mat_vec(mirror_dd[tslot], wpx[n], endp)
        for t in range(x, 0, -1):
            _dd_mat_vec(step_dd[_slot(turns, t)], endp, endw)
            for i in range(3):
                endp[i, 0] = endw[i, 0]
                endp[i, 1] = endw[i, 1]
        epoch_io[0] += 1
        d0e = lw_astar(iden, endp, step_dd, x0_dd, g2_dd, ell, reach,
                       hkey, hep, hval, epoch_io[0],
                       afrm, apos, agsco, ahf, ahg, ahx)
        if d0e < 0:
            return nk, nr, np.int64(2 if d0e == -1 else 8)
        out_defimg[x] = Dm[0, x] + Dm[x, n] - d0e
        valid = np.int64(1)
        for u in range(x + 1, n + 1):
            if valid == 0:
                break
            _dd_mat_vec(mirror_dd[tslot], wpx[u], img)
            for t in range(x):
                if _dd_close(img, wpx[t]):
                    valid = 0
                    break
        out_valid[x] = valid
    return nk, nr, np.int64(0)
