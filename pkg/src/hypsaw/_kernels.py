"""Compiled inner loops for enumeration, sampling, and pivot moves.

Everything here operates on the plain arrays of a built Lattice (rot,
rev, layer) so the kernels hold no Python state.  Walks are encoded two
ways: as vertex id sequences, and as turn keys — the first step's
absolute rotation slot followed by turns r in 1..6 relative to the
arrival edge (0 would be the backtrack), packed 3 bits per step into an
int64.  Turn-order DFS therefore emits walks in sorted key order.

All kernels are deterministic; randomized ones consume pre-generated
uint64 blocks so results are reproducible bit-for-bit from the seed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def count_walks(rot, rev, n_max, prefix_slots):
    """Count SAWs from the root by depth, turn-order DFS.

    prefix_slots restricts the DFS to walks extending that turn-key
    prefix (empty array = full count).  counts[k] is the number of
    k-step SAWs; under a length-p prefix, counts[k] for k < p is just
    0 or 1 (the truncated prefix), so parallel merges must sum only
    the k >= p entries.
    """
    counts = np.zeros(n_max + 1, dtype=np.int64)
    V = rot.shape[0]
    stamp = np.full(V, -1, dtype=np.int32)
    verts = np.empty(n_max + 1, dtype=np.int32)
    backs = np.empty(n_max + 1, dtype=np.int32)   # arrival slot at verts[t]
    turn = np.empty(n_max + 1, dtype=np.int32)    # current child turn per level
    p = len(prefix_slots)
    verts[0] = 0
    stamp[0] = 0
    backs[0] = -1
    counts[0] = 1
    turn[0] = prefix_slots[0] if p > 0 else 0
    t = 0
    while t >= 0:
        r = turn[t]
        lim = 7 if t == 0 else 6
        # a constrained level allows exactly one turn value
        if r >= lim or t >= n_max or (t < p and r > prefix_slots[t]):
            stamp[verts[t]] = -1
            t -= 1
            if t >= 0:
                turn[t] += 1
            continue
        v = verts[t]
        a = r if t == 0 else (backs[t] + 1 + r) % 7
        u = rot[v, a]
        if u >= 0 and stamp[u] < 0:
            nt = t + 1
            verts[nt] = u
            backs[nt] = rev[v, a]
            stamp[u] = nt
            counts[nt] += 1
            turn[nt] = prefix_slots[nt] if nt < p else 0
            t = nt
        else:
            turn[t] += 1
    return counts


@njit(cache=True, nogil=True)
def count_walks_naive(nbr_sorted, deg, n_max):
    """Independent SAW counter: plain DFS over id-sorted adjacency.

    Shares no traversal conventions with count_walks: neighbors come
    sorted by vertex id from a dense table, self-avoidance is checked
    by scanning the current path, and there is no turn bookkeeping.
    """
    counts = np.zeros(n_max + 1, dtype=np.int64)
    path = np.empty(n_max + 1, dtype=np.int32)
    choice = np.zeros(n_max + 1, dtype=np.int32)
    path[0] = 0
    counts[0] = 1
    t = 0
    while t >= 0:
        c = choice[t]
        if c >= deg[path[t]] or t >= n_max:
            t -= 1
            if t >= 0:
                choice[t] += 1
            continue
        u = nbr_sorted[path[t], c]
        fresh = True
        for s in range(t + 1):
            if path[s] == u:
                fresh = False
                break
        if fresh:
            t += 1
            path[t] = u
            choice[t] = 0
            counts[t] += 1
        else:
            choice[t] += 1
    return counts


@njit(cache=True, nogil=True)
def enumerate_keys(rot, rev, n, out_keys):
    """All n-step walk turn keys in sorted order; returns the count."""
    V = rot.shape[0]
    stamp = np.full(V, -1, dtype=np.int32)
    verts = np.empty(n + 1, dtype=np.int32)
    backs = np.empty(n + 1, dtype=np.int32)
    turn = np.empty(n + 1, dtype=np.int32)
    verts[0] = 0
    stamp[0] = 0
    turn[0] = 0
    key = np.int64(0)
    m = 0
    t = 0
    while t >= 0:
        r = turn[t]
        lim = 7 if t == 0 else 6
        if r >= lim or t >= n:
            stamp[verts[t]] = -1
            t -= 1
            if t >= 0:
                key >>= 3
                turn[t] += 1
            continue
        a = r if t == 0 else (backs[t] + 1 + r) % 7
        u = rot[verts[t], a]
        if u >= 0 and stamp[u] < 0:
            key = (key << 3) | r
            t += 1
            verts[t] = u
            backs[t] = rev[verts[t - 1], a]
            stamp[u] = t
            turn[t] = 0
            if t == n:
                out_keys[m] = key
                m += 1
        else:
            turn[t] += 1
    return m


@njit(cache=True, nogil=True)
def key_to_vertices(rot, rev, key, n, out):
    """Decode a turn key into its vertex sequence; True if walkable."""
    out[0] = 0
    back = -1
    for t in range(n):
        r = (key >> np.int64(3 * (n - 1 - t))) & np.int64(7)
        a = r if t == 0 else (back + 1 + r) % 7
        u = rot[out[t], a]
        if u < 0:
            return False
        back = rev[out[t], a]
        out[t + 1] = u
    return True


# ---------------------------------------------------------------------------
# exact sampling: subtree-count tree + unranking descents
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def build_count_tree(rot, rev, n, max_nodes):
    """BFS table of all SAW prefixes up to depth n.

    BFS order keeps each node's children contiguous, so the tree is
    just (vert, parent, first_child, n_children) plus completions[x] =
    the number of depth-n walks through node x.  Self-avoidance is
    checked against the parent chain (depth is small).  Returns
    node_count = -1 if max_nodes was exceeded.
    """
    vert = np.empty(max_nodes, dtype=np.int32)
    back = np.empty(max_nodes, dtype=np.int8)
    depth = np.empty(max_nodes, dtype=np.int8)
    parent = np.full(max_nodes, -1, dtype=np.int32)
    first_child = np.full(max_nodes, -1, dtype=np.int32)
    n_children = np.zeros(max_nodes, dtype=np.int8)
    completions = np.zeros(max_nodes, dtype=np.int64)

    vert[0] = 0
    back[0] = -1
    depth[0] = 0
    cnt = np.int64(1)
    head = np.int64(0)
    while head < cnt:
        x = head
        head += 1
        d = depth[x]
        if d >= n:
            completions[x] = 1
            continue
        lim = 7 if d == 0 else 6
        for r in range(lim):
            a = r if d == 0 else (back[x] + 1 + r) % 7
            u = rot[vert[x], a]
            if u < 0:
                continue
            fresh = True
            anc = x
            while anc >= 0:
                if vert[anc] == u:
                    fresh = False
                    break
                anc = parent[anc]
            if not fresh:
                continue
            if cnt >= max_nodes:
                return vert, back, parent, first_child, n_children, completions, np.int64(-1)
            vert[cnt] = u
            back[cnt] = rev[vert[x], a]
            depth[cnt] = d + 1
            parent[cnt] = x
            if first_child[x] < 0:
                first_child[x] = cnt
            n_children[x] += 1
            cnt += 1
    # children always follow parents in BFS order
    for x in range(cnt - 1, 0, -1):
        completions[parent[x]] += completions[x]
    return vert, back, parent, first_child, n_children, completions, cnt


@njit(cache=True, nogil=True)
def sample_descents(vert, first_child, n_children, completions,
                    n, k, rand_blocks, out_walks):
    """Draw k walks uniformly by unranking root-to-leaf descents.

    Bounded draws take the top 32 bits of a uint64 word and map them by
    multiply-shift with rejection, exact for bounds below 2**32 (the
    caller checks completions[0]).  Returns words consumed, or -1 if
    the stream ran dry.
    """
    cursor = np.int64(0)
    nwords = len(rand_blocks)
    B32 = np.uint64(1) << np.uint64(32)
    M32 = B32 - np.uint64(1)
    for s in range(k):
        node = np.int64(0)
        out_walks[s, 0] = vert[0]
        for t in range(n):
            total = np.uint64(completions[node])
            thresh = (B32 - total) % total
            m = np.uint64(0)
            while True:
                if cursor >= nwords:
                    return np.int64(-1)
                w = np.uint64(rand_blocks[cursor]) >> np.uint64(32)
                cursor += 1
                m = w * total
                if (m & M32) >= thresh:
                    break
            pick = np.int64(m >> np.uint64(32))
            fc = np.int64(first_child[node])
            nxt = np.int64(-1)
            for c in range(n_children[node]):
                wgt = completions[fc + c]
                if pick < wgt:
                    nxt = fc + c
                    break
                pick -= wgt
            node = nxt
            out_walks[s, t + 1] = vert[node]
    return cursor


# ---------------------------------------------------------------------------
# pivot chain on an eager ball
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def pivot_chain_run(rot, rev, layer, walk0, steps, burn, thin,
                    dihedral, rand_blocks, out_walks, out_disp):
    """Metropolis chain on n-step SAWs with vertex-fixing symmetries.

    Proposal: i uniform in 1..n-1, then one of the 7 reflections at
    walk[i] (or one of the 14 dihedral elements, identity included).
    The suffix image comes from frame transport along the suffix edges;
    accept iff the image stays on complete rows and is self-avoiding.
    For walks inside the interior radius the transport never leaves the
    ball, so the only rejections are genuine self-intersections.  After
    burn, every thin-th state is emitted.  Returns (accepted, emitted,
    words used), words = -1 meaning the random stream ran dry.
    """
    n = len(walk0) - 1
    V = rot.shape[0]
    walk = walk0.copy()
    prop = np.empty(n + 1, dtype=np.int32)
    islot = np.empty(n, dtype=np.int32)
    stamp = np.full(V, np.int64(-1), dtype=np.int64)
    for t in range(n + 1):
        stamp[walk[t]] = 0
    # arrival slots: aslot[t] = slot of edge t -> t+1 within rot[walk[t]]
    aslot = np.empty(n, dtype=np.int32)
    for t in range(n):
        for s in range(7):
            if rot[walk[t], s] == walk[t + 1]:
                aslot[t] = s
                break

    cursor = np.int64(0)
    nwords = len(rand_blocks)
    accepted = np.int64(0)
    emitted = np.int64(0)
    epoch = np.int64(1)
    nsym = 14 if dihedral else 7
    for step in range(steps):
        if cursor + 2 > nwords:
            return accepted, emitted, np.int64(-1)
        i = 1 + np.int64(((np.uint64(rand_blocks[cursor]) >> np.uint64(32))
                          * np.uint64(n - 1)) >> np.uint64(32))
        sym = np.int64(((np.uint64(rand_blocks[cursor + 1]) >> np.uint64(32))
                        * np.uint64(nsym)) >> np.uint64(32))
        cursor += 2

        if dihedral and sym < 7:
            sg = 1
            c = np.int64(sym)  # rotation at walk[i] by sym slots
        else:
            kk = sym - 7 if dihedral else sym
            sg = -1
            c = np.int64(2 * kk)  # reflection fixing slot kk: a -> 2kk - a
        if sg == 1 and c == 0:
            accepted += 1      # identity element of the dihedral group
        else:
            ok = True
            img = walk[i]
            ct = c
            for t in range(i, n):
                a = aslot[t]
                ia = (sg * a + ct) % 7
                nxt = rot[img, ia]
                if nxt < 0:
                    ok = False
                    break
                ct = (rev[img, ia] - sg * rev[walk[t], a]) % 7
                img = nxt
                prop[t + 1] = img
                islot[t] = ia
            if ok:
                for t in range(i + 1, n + 1):
                    stamp[walk[t]] = np.int64(-1)
                dup = False
                for t in range(i + 1, n + 1):
                    if stamp[prop[t]] >= 0:
                        dup = True
                        break
                    stamp[prop[t]] = epoch
                if dup:
                    for t in range(i + 1, n + 1):
                        if stamp[prop[t]] == epoch:
                            stamp[prop[t]] = np.int64(-1)
                    for t in range(i + 1, n + 1):
                        stamp[walk[t]] = epoch
                else:
                    for t in range(i + 1, n + 1):
                        walk[t] = prop[t]
                    for t in range(i, n):
                        aslot[t] = islot[t]
                    accepted += 1
                epoch += 1
            else:
                epoch += 1
        if step >= burn and (step - burn) % thin == 0:
            if emitted < out_walks.shape[0]:
                for t in range(n + 1):
                    out_walks[emitted, t] = walk[t]
                out_disp[emitted] = layer[walk[n]]
                emitted += 1
    return accepted, emitted, cursor


# ---------------------------------------------------------------------------
# geodesic interval tables
#
# For every vertex v with layer(v) <= max processed layer, I(root, v)
# is stored as a tree in BFS-discovery order: entry 0 is v, and every
# later entry names its tree parent (index within the interval) plus
# the rotation slot at the parent's vertex leading to it.  Root
# geodesics ascend layers strictly, so I(root, v) = {v} + union of
# I(root, p) over layer-(k-1) neighbors p, all of which have smaller
# ids (ids are layer-ordered) and are already built.  The tree lets a
# frame anchored at v map the entire interval one rotation-step per
# entry.
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def build_interval_table(rot, rev, layer, v_sub, vert, par, slot):
    """Fill the interval CSR for ids 0..v_sub-1; returns (off, status).

    vert/par/slot are preallocated to sum(2*layer+2); status 1 means a
    bound was violated (intervals wider than the two-per-layer ladder),
    status 2 that an interval was disconnected.  Both are impossible on
    a correctly built ball and abort the fill.
    """
    V = rot.shape[0]
    off = np.zeros(v_sub + 1, dtype=np.int64)
    mark = np.full(V, -1, dtype=np.int64)    # candidate epoch
    placed = np.full(V, -1, dtype=np.int64)  # BFS-placement epoch
    maxl = int(layer[v_sub - 1])
    cap = 2 * maxl + 2
    cand = np.empty(cap, dtype=np.int32)

    vert[0] = 0
    par[0] = -1
    slot[0] = -1
    off[1] = 1
    for v in range(1, v_sub):
        base = off[v]
        # candidates: v plus every member of each one-layer-up parent
        nc = 0
        mark[v] = v
        cand[nc] = v
        nc += 1
        for s in range(7):
            p = rot[v, s]
            if p < 0 or p >= v_sub or layer[p] != layer[v] - 1:
                continue
            for e in range(off[p], off[p + 1]):
                w = vert[e]
                if mark[w] != v:
                    mark[w] = v
                    if nc >= cap:
                        return off, 1
                    cand[nc] = w
                    nc += 1
        if base + nc > len(vert):
            return off, 1
        # tree in discovery order: parent entries precede children
        vert[base] = v
        par[base] = -1
        slot[base] = -1
        placed[v] = v
        filled = 1
        head = 0
        while head < filled:
            e = base + head
            x = vert[e]
            head += 1
            for s in range(7):
                y = rot[x, s]
                if y < 0 or mark[y] != v or placed[y] == v:
                    continue
                placed[y] = v
                vert[base + filled] = y
                par[base + filled] = head - 1   # parent's index in interval
                slot[base + filled] = s
                filled += 1
        if filled != nc:
            return off, 2
        off[v + 1] = base + nc
    return off, 0


# ---------------------------------------------------------------------------
# hull + tangency sweep over all walks
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _tangent_probe(rot, rev, hstamp, hull_size, x, m, hvis, epoch,
                   qv, qi, qs):
    """Is the slot-m reflection at x tangent to the hull?

    1 tangent, 0 not, -1 undetermined (an image escaped the ball before
    the rest of the hull could be reached).  The hull is connected, so
    a full traversal with determined frames settles the question.
    """
    # quick reject: images of in-hull neighbors of x are neighbors too
    for s in range(7):
        y = rot[x, s]
        if y >= 0 and hstamp[y] == 1:
            z = rot[x, (2 * m - s) % 7]
            if z >= 0 and hstamp[z] == 1:
                return 0
    hvis[x] = epoch
    qv[0] = x
    qi[0] = x
    qs[0] = (2 * m) % 7
    head = 0
    tail = 1
    seen = 1
    while head < tail:
        u = qv[head]
        iu = qi[head]
        cu = qs[head]
        head += 1
        if iu < 0:
            continue  # image of u escaped; u cannot carry frames onward
        for s in range(7):
            nb = rot[u, s]
            if nb < 0 or hstamp[nb] != 1 or hvis[nb] == epoch:
                continue
            ia = (cu - s) % 7
            inb = rot[iu, ia]
            hvis[nb] = epoch
            qv[tail] = nb
            qi[tail] = inb
            if inb >= 0:
                qs[tail] = (rev[iu, ia] + rev[u, s]) % 7
                if hstamp[inb] == 1 and inb != x:
                    return 0
            else:
                qs[tail] = 0
            tail += 1
            seen += 1
    if seen == hull_size:
        return 1
    return -1


@njit(cache=True, nogil=True)
def _tangent_probe_local(rot, rev, it_off, it_vert, it_par, it_slot,
                         fr_img, fr_sh, d, i, m, hull_size,
                         lstamp, lbuf, lib_img, lib_sh,
                         hvis, epoch, qv, qi, qs):
    """Settle a tangency probe in the frame of walk vertex i.

    The hull is re-emitted with vertex i at the origin, where every
    member and every mirror image sits within hull-diameter distance of
    the root, so no lookup can leave a ball whose radius exceeds that
    diameter.  Returns 1 tangent / 0 not; -2 flags a transport
    inconsistency (member count mismatch or an image off the ball),
    which indicates a too-small ball rather than a soft failure.
    """
    lhn = 0
    for tt in range(d + 1):
        v = fr_img[i, tt]
        if lstamp[v] == 0:
            lstamp[v] = 1
            lbuf[lhn] = v
            lhn += 1
    for j in range(d + 1):
        for tt in range(j + 1, d + 1):
            w = fr_img[j, tt]
            lo = it_off[w]
            cnt = it_off[w + 1] - lo
            if it_vert[lo] != w:
                for e in range(lhn):
                    lstamp[lbuf[e]] = 0
                return -2
            lib_img[0] = fr_img[i, tt]
            lib_sh[0] = ((7 - fr_sh[j, tt]) + fr_sh[i, tt]) % 7
            for e in range(cnt):
                if e > 0:
                    pi = it_par[lo + e]
                    s = it_slot[lo + e]
                    srcv = it_vert[lo + pi]
                    ia = (s + lib_sh[pi]) % 7
                    im = rot[lib_img[pi], ia]
                    if im < 0:
                        return -2
                    lib_sh[e] = (rev[lib_img[pi], ia] - rev[srcv, s]) % 7
                    lib_img[e] = im
                v = lib_img[e]
                if lstamp[v] == 0:
                    lstamp[v] = 1
                    lbuf[lhn] = v
                    lhn += 1
    ok = lhn == hull_size and lstamp[0] == 1
    res = np.int64(-2)
    if ok:
        res = _tangent_probe(rot, rev, lstamp, lhn, 0, m,
                             hvis, epoch, qv, qi, qs)
        if res == -1:
            res = np.int64(-2)
    for e in range(lhn):
        lstamp[lbuf[e]] = 0
    return res


@njit(cache=True, nogil=True)
def walk_sweep(rot, rev, layer, it_off, it_vert, it_par, it_slot, n_max,
               node_depth, node_key, node_hull, node_btan, node_bexp,
               pair_defect, pair_tslot, pair_defimg, pair_key, pair_valid,
               undet_node, undet_i):
    """DFS over all walks of length <= n_max with full per-walk reports.

    Per node (walk gamma of length d, in turn order): depth, turn key,
    hull size, and how many of the d+1 walk vertices lie on the
    tangent/exposed hull boundary.  Per pair (node, i) for 0 < i < d,
    in ascending i within the node: the triangle defect at i, the first
    tangent mirror slot (-1 when none acts), the image walk's turn key
    and its defect at i (own key/defect when no mirror acts), and
    whether the reflected walk stayed self-avoiding.

    The walk frames tau_i (walk vertex i -> root) are carried along the
    DFS, so every distance d(gamma_i, gamma_t) is a layer lookup; the
    hull is grown incrementally from transported root-interval trees
    and rolled back on backtrack.  Probes whose mirror images escape
    the ball are settled in the frame of the probed vertex, so every
    tangency question gets a definite answer.  Returns (nodes, pairs,
    undet_count, status) with undet_count always 0; status != 0 aborts:
    1 hull buffer, 3 interval anchor mismatch, 4 reflected image left
    the ball, 5 frame transport inconsistency.
    """
    V = rot.shape[0]
    NP1 = n_max + 1
    verts = np.empty(NP1, dtype=np.int32)
    backs = np.empty(NP1, dtype=np.int32)
    turn = np.empty(NP1, dtype=np.int32)
    keys = np.empty(NP1, dtype=np.int64)   # key at each depth
    stamp = np.full(V, -1, dtype=np.int32)
    fr_img = np.empty((NP1, NP1), dtype=np.int32)
    fr_sh = np.empty((NP1, NP1), dtype=np.int8)
    hstamp = np.zeros(V, dtype=np.uint8)
    HCAP = 8192
    hull_buf = np.empty(HCAP, dtype=np.int32)
    h_before = np.empty(NP1 + 1, dtype=np.int64)
    ICAP = 64
    ib_img = np.empty(ICAP, dtype=np.int32)
    ib_sh = np.empty(ICAP, dtype=np.int8)
    hvis = np.full(V, -1, dtype=np.int64)
    qv = np.empty(HCAP, dtype=np.int32)
    qi = np.empty(HCAP, dtype=np.int32)
    qs = np.empty(HCAP, dtype=np.int8)
    sfx_img = np.empty(NP1, dtype=np.int32)
    lstamp = np.zeros(V, dtype=np.uint8)
    lbuf = np.empty(HCAP, dtype=np.int32)
    lib_img = np.empty(ICAP, dtype=np.int32)
    lib_sh = np.empty(ICAP, dtype=np.int8)

    epoch = np.int64(0)
    nodes = np.int64(0)
    pairs = np.int64(0)
    undet = np.int64(0)
    hn = np.int64(0)

    verts[0] = 0
    backs[0] = -1
    stamp[0] = 0
    keys[0] = 0
    fr_img[0, 0] = 0
    fr_sh[0, 0] = 0
    hstamp[0] = 1
    hull_buf[0] = 0
    hn = 1
    h_before[0] = 1

    t = 0
    turn[0] = 0
    # evaluate a node, then iterate its children; pops roll back
    evaluate = True
    while t >= 0:
        if evaluate:
            evaluate = False
            d = t
            hull_size = hn
            btan = 0
            bexp = 0
            node_ok = True
            for i in range(d + 1):
                x = verts[i]
                exposed = False
                for s in range(7):
                    nb = rot[x, s]
                    if nb < 0 or hstamp[nb] == 0:
                        exposed = True
                        break
                if exposed:
                    bexp += 1
                tslot = np.int64(-1)
                # mirrors are tried in the walk's arrival gauge (local
                # slot 0 = the edge back toward the previous vertex) so
                # the first acting mirror does not depend on how verts
                # happen to be laid out in the ball
                shx = fr_sh[i, i]
                for ml in range(7):
                    m = (ml + 7 - shx) % 7
                    epoch += 1
                    res = _tangent_probe(rot, rev, hstamp, hull_size, x, m,
                                         hvis, epoch, qv, qi, qs)
                    if res == -1:
                        # an image escaped the ball; settle the same
                        # question in the frame of x where nothing can
                        epoch += 1
                        res = _tangent_probe_local(
                            rot, rev, it_off, it_vert, it_par, it_slot,
                            fr_img, fr_sh, d, i, ml, hull_size,
                            lstamp, lbuf, lib_img, lib_sh,
                            hvis, epoch, qv, qi, qs)
                        if res == -2:
                            return nodes, pairs, undet, 5
                    if res == 1:
                        tslot = m
                        break
                if tslot >= 0:
                    btan += 1
                if 0 < i < d:
                    defect = layer[x] + layer[fr_img[i, d]] - layer[verts[d]]
                    pair_defect[pairs] = defect
                    pair_tslot[pairs] = tslot
                    if tslot < 0:
                        pair_defimg[pairs] = defect
                        pair_key[pairs] = keys[d]
                        pair_valid[pairs] = 1
                    else:
                        # transport the suffix through the mirror frame
                        img = x
                        csh = (2 * tslot) % 7
                        ikey = keys[d] >> np.int64(3 * (d - i))
                        valid = 1
                        back_im = backs[i]
                        for tt in range(i, d):
                            src = verts[tt]
                            rsym = (keys[d] >> np.int64(3 * (d - 1 - tt))) \
                                & np.int64(7)
                            a = rsym if tt == 0 else (backs[tt] + 1 + rsym) % 7
                            ia = (csh - a) % 7
                            nxt = rot[img, ia]
                            if nxt < 0:
                                return nodes, pairs, undet, 4
                            nb_im = rev[img, ia]
                            csh = (nb_im + rev[src, a]) % 7
                            # 0 < i == tt keeps the original arrival slot
                            rturn = (ia - (back_im + 1)) % 7
                            ikey = (ikey << 3) | rturn
                            img = nxt
                            back_im = nb_im
                            sfx_img[tt + 1] = img
                            st = stamp[img]
                            if 0 <= st <= i:
                                valid = 0
                        pair_defimg[pairs] = layer[x] + layer[fr_img[i, d]] \
                            - layer[img]
                        pair_key[pairs] = ikey
                        pair_valid[pairs] = valid
                    pairs += 1
            node_depth[nodes] = d
            node_key[nodes] = keys[d]
            node_hull[nodes] = hull_size
            node_btan[nodes] = btan
            node_bexp[nodes] = bexp
            nodes += 1
            turn[t] = 0
        r = turn[t]
        lim = 7 if t == 0 else 6
        if r >= lim or t >= n_max:
            # roll back this node
            for e in range(h_before[t], hn):
                hstamp[hull_buf[e]] = 0
            if t > 0:
                hn = h_before[t]
            stamp[verts[t]] = -1
            t -= 1
            if t >= 0:
                turn[t] += 1
            continue
        v = verts[t]
        a = r if t == 0 else (backs[t] + 1 + r) % 7
        u = rot[v, a]
        if u >= 0 and stamp[u] < 0:
            nt = t + 1
            h_before[nt] = hn
            verts[nt] = u
            backs[nt] = rev[v, a]
            stamp[u] = nt
            keys[nt] = (keys[t] << 3) | r
            fr_img[nt, nt] = 0
            fr_sh[nt, nt] = (7 - backs[nt]) % 7
            for i in range(nt):
                im = fr_img[i, t]
                c = fr_sh[i, t]
                ia = (a + c) % 7
                fr_img[i, nt] = rot[im, ia]
                fr_sh[i, nt] = (rev[im, ia] - rev[v, a]) % 7
            # and the new vertex's own frame at every earlier vertex,
            # filled backward along the walk edges
            for tt in range(nt - 1, -1, -1):
                im = fr_img[nt, tt + 1]
                c = fr_sh[nt, tt + 1]
                ab = backs[tt + 1]
                ia = (ab + c) % 7
                fr_img[nt, tt] = rot[im, ia]
                fr_sh[nt, tt] = (rev[im, ia] - rev[verts[tt + 1], ab]) % 7
            # hull gains the intervals from every earlier walk vertex
            for j in range(nt):
                w = fr_img[j, nt]
                lo = it_off[w]
                cnt = it_off[w + 1] - lo
                if it_vert[lo] != w:
                    return nodes, pairs, undet, 3
                ib_img[0] = u
                ib_sh[0] = (7 - fr_sh[j, nt]) % 7
                if hstamp[u] == 0:
                    hstamp[u] = 1
                    if hn >= HCAP:
                        return nodes, pairs, undet, 1
                    hull_buf[hn] = u
                    hn += 1
                for e in range(1, cnt):
                    pi = it_par[lo + e]
                    s = it_slot[lo + e]
                    srcv = it_vert[lo + pi]
                    ia = (s + ib_sh[pi]) % 7
                    im = rot[ib_img[pi], ia]
                    ib_sh[e] = (rev[ib_img[pi], ia] - rev[srcv, s]) % 7
                    ib_img[e] = im
                    if hstamp[im] == 0:
                        hstamp[im] = 1
                        if hn >= HCAP:
                            return nodes, pairs, undet, 1
                        hull_buf[hn] = im
                        hn += 1
            t = nt
            evaluate = True
        else:
            turn[t] += 1
    return nodes, pairs, undet, 0


# ---------------------------------------------------------------------------
# streaming defect statistics (no hulls): feasible to depth ~12
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def iti_stream(rot, rev, layer, n_max, prefix_slots,
               defect_hist, disp_hist):
    """Accumulate triangle-defect and displacement histograms per depth.

    For every walk of every length d <= n_max (restricted to the given
    turn-key prefix if nonempty): disp_hist[d, layer(end)] += 1, and
    for each 0 < i < d, defect_hist[d, i, defect] += 1 with defect =
    d(0,i) + d(i,end) - d(0,end) from carried walk frames.  Histograms
    merge across prefixes by addition on depths >= prefix length.
    """
    V = rot.shape[0]
    NP1 = n_max + 1
    verts = np.empty(NP1, dtype=np.int32)
    backs = np.empty(NP1, dtype=np.int32)
    turn = np.empty(NP1, dtype=np.int32)
    stamp = np.full(V, -1, dtype=np.int32)
    fr_img = np.empty((NP1, NP1), dtype=np.int32)
    fr_sh = np.empty((NP1, NP1), dtype=np.int8)

    p = len(prefix_slots)
    verts[0] = 0
    backs[0] = -1
    stamp[0] = 0
    fr_img[0, 0] = 0
    fr_sh[0, 0] = 0
    disp_hist[0, 0] += 1
    turn[0] = prefix_slots[0] if p > 0 else 0
    t = 0
    while t >= 0:
        r = turn[t]
        lim = 7 if t == 0 else 6
        if r >= lim or t >= n_max or (t < p and r > prefix_slots[t]):
            stamp[verts[t]] = -1
            t -= 1
            if t >= 0:
                turn[t] += 1
            continue
        v = verts[t]
        a = r if t == 0 else (backs[t] + 1 + r) % 7
        u = rot[v, a]
        if u >= 0 and stamp[u] < 0:
            nt = t + 1
            verts[nt] = u
            backs[nt] = rev[v, a]
            stamp[u] = nt
            fr_img[nt, nt] = 0
            fr_sh[nt, nt] = (7 - backs[nt]) % 7
            for i in range(nt):
                im = fr_img[i, t]
                c = fr_sh[i, t]
                ia = (a + c) % 7
                fr_img[i, nt] = rot[im, ia]
                fr_sh[i, nt] = (rev[im, ia] - rev[v, a]) % 7
            disp_hist[nt, layer[u]] += 1
            for i in range(1, nt):
                defect = layer[verts[i]] + layer[fr_img[i, nt]] - layer[u]
                defect_hist[nt, i, defect] += 1
            turn[nt] = prefix_slots[nt] if nt < p else 0
            t = nt
        else:
            turn[t] += 1
    return 0


# ---------------------------------------------------------------------------
# per-walk hull/boundary report (for sampled ensembles on a built ball)
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def batch_walk_stats(rot, rev, layer, it_off, it_vert, it_par, it_slot,
                     walks, out_hull, out_btan, out_bexp, out_defect,
                     out_tslot, out_defimg, out_valid):
    """walk_sweep's per-walk report for an explicit batch of walks.

    walks: (k, n+1) vertex ids, each a valid root walk.  Fills, per
    walk: hull size, tangent/exposed boundary counts over all n+1
    vertices, and per index 1..n-1 the defect, first tangent mirror
    slot (-1 when none acts), image defect, and image validity.
    Returns (undetermined count, status) with undetermined always 0;
    nonzero status aborts as in walk_sweep.
    """
    V = rot.shape[0]
    k = walks.shape[0]
    NP1 = walks.shape[1]
    n = NP1 - 1
    backs = np.empty(NP1, dtype=np.int32)
    stamp = np.full(V, -1, dtype=np.int32)
    fr_img = np.empty((NP1, NP1), dtype=np.int32)
    fr_sh = np.empty((NP1, NP1), dtype=np.int8)
    hstamp = np.zeros(V, dtype=np.uint8)
    HCAP = 16384
    hull_buf = np.empty(HCAP, dtype=np.int32)
    ICAP = 64
    ib_img = np.empty(ICAP, dtype=np.int32)
    ib_sh = np.empty(ICAP, dtype=np.int8)
    hvis = np.full(V, -1, dtype=np.int64)
    qv = np.empty(HCAP, dtype=np.int32)
    qi = np.empty(HCAP, dtype=np.int32)
    qs = np.empty(HCAP, dtype=np.int8)
    lstamp = np.zeros(V, dtype=np.uint8)
    lbuf = np.empty(HCAP, dtype=np.int32)
    lib_img = np.empty(ICAP, dtype=np.int32)
    lib_sh = np.empty(ICAP, dtype=np.int8)
    epoch = np.int64(0)
    undet = np.int64(0)

    for w in range(k):
        # arrival slots and occupancy
        hn = np.int64(0)
        stamp[0] = 0
        for tt in range(n):
            src = walks[w, tt]
            a = np.int64(-1)
            for s in range(7):
                if rot[src, s] == walks[w, tt + 1]:
                    a = s
                    break
            backs[tt + 1] = rev[src, a]
            stamp[walks[w, tt + 1]] = tt + 1
        backs[0] = -1
        # frames
        fr_img[0, 0] = 0
        fr_sh[0, 0] = 0
        for nt in range(1, NP1):
            fr_img[nt, nt] = 0
            fr_sh[nt, nt] = (7 - backs[nt]) % 7
            v = walks[w, nt - 1]
            a = np.int64(-1)
            for s in range(7):
                if rot[v, s] == walks[w, nt]:
                    a = s
                    break
            for i in range(nt):
                im = fr_img[i, nt - 1]
                c = fr_sh[i, nt - 1]
                ia = (a + c) % 7
                fr_img[i, nt] = rot[im, ia]
                fr_sh[i, nt] = (rev[im, ia] - rev[v, a]) % 7
            for tt in range(nt - 1, -1, -1):
                im = fr_img[nt, tt + 1]
                c = fr_sh[nt, tt + 1]
                ab = backs[tt + 1]
                ia = (ab + c) % 7
                fr_img[nt, tt] = rot[im, ia]
                fr_sh[nt, tt] = (rev[im, ia] - rev[walks[w, tt + 1], ab]) % 7
        # hull
        for tt in range(NP1):
            u = walks[w, tt]
            for j in range(tt + 1):
                ww = fr_img[j, tt]
                lo = it_off[ww]
                cnt = it_off[ww + 1] - lo
                if it_vert[lo] != ww:
                    return undet, 3
                ib_img[0] = u
                ib_sh[0] = (7 - fr_sh[j, tt]) % 7
                if hstamp[u] == 0:
                    hstamp[u] = 1
                    if hn >= HCAP:
                        return undet, 1
                    hull_buf[hn] = u
                    hn += 1
                for e in range(1, cnt):
                    pi = it_par[lo + e]
                    s = it_slot[lo + e]
                    srcv = it_vert[lo + pi]
                    ia = (s + ib_sh[pi]) % 7
                    im = rot[ib_img[pi], ia]
                    ib_sh[e] = (rev[ib_img[pi], ia] - rev[srcv, s]) % 7
                    ib_img[e] = im
                    if hstamp[im] == 0:
                        hstamp[im] = 1
                        if hn >= HCAP:
                            return undet, 1
                        hull_buf[hn] = im
                        hn += 1
        out_hull[w] = hn
        # boundary + per-i records
        btan = 0
        bexp = 0
        for i in range(NP1):
            x = walks[w, i]
            exposed = False
            for s in range(7):
                nb = rot[x, s]
                if nb < 0 or hstamp[nb] == 0:
                    exposed = True
                    break
            if exposed:
                bexp += 1
            tslot = np.int64(-1)
            # same arrival-gauge mirror order as the exhaustive sweep
            shx = fr_sh[i, i]
            for ml in range(7):
                m = (ml + 7 - shx) % 7
                epoch += 1
                res = _tangent_probe(rot, rev, hstamp, hn, x, m,
                                     hvis, epoch, qv, qi, qs)
                if res == -1:
                    epoch += 1
                    res = _tangent_probe_local(
                        rot, rev, it_off, it_vert, it_par, it_slot,
                        fr_img, fr_sh, n, i, ml, hn,
                        lstamp, lbuf, lib_img, lib_sh,
                        hvis, epoch, qv, qi, qs)
                    if res == -2:
                        return undet, 5
                if res == 1:
                    tslot = m
                    break
            if tslot >= 0:
                btan += 1
            if 0 < i < n:
                defect = layer[x] + layer[fr_img[i, n]] - layer[walks[w, n]]
                out_defect[w, i] = defect
                out_tslot[w, i] = tslot
                if tslot < 0:
                    out_defimg[w, i] = defect
                    out_valid[w, i] = 1
                else:
                    img = x
                    csh = (2 * tslot) % 7
                    valid = 1
                    for tt in range(i, n):
                        src = walks[w, tt]
                        a = np.int64(-1)
                        for s in range(7):
                            if rot[src, s] == walks[w, tt + 1]:
                                a = s
                                break
                        ia = (csh - a) % 7
                        nxt = rot[img, ia]
                        if nxt < 0:
                            return undet, 4
                        csh = (rev[img, ia] + rev[src, a]) % 7
                        img = nxt
                        st = stamp[img]
                        if 0 <= st <= i:
                            valid = 0
                    out_defimg[w, i] = layer[x] + layer[fr_img[i, n]] \
                        - layer[img]
                    out_valid[w, i] = valid
        out_btan[w] = btan
        out_bexp[w] = bexp
        # reset
        for e in range(hn):
            hstamp[hull_buf[e]] = 0
        for tt in range(NP1):
            stamp[walks[w, tt]] = -1
    return undet, 0
