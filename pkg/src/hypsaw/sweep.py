"""Exhaustive per-walk reports: hulls, tangency, defects, fibers.

One DFS pass over all walks up to a chosen length records, for every
walk and every interior index, the triangle defect, the first tangent
mirror at each vertex, the reflected walk's key/defect/validity, and
boundary counts against the walk's convex hull.  Downstream consumers
slice these flat arrays; exact probabilities come out as Fractions.

Requires a combinatorial-mode ball: the sweep treats a missing rim
entry as proof that the neighbor lies outside the ball, which is how
the combinatorial builder fills rim rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels
from .lattice import Lattice


def interval_table(L: Lattice, max_layer: int):
    """Root-interval trees for every vertex with layer <= max_layer."""
    ckey = ("itab", max_layer)
    tab = L._cache.get(ckey)
    if tab is not None:
        return tab
    if max_layer > L.interior_radius:
        raise ValueError(
            f"interval table to layer {max_layer} needs interior radius "
            f">= {max_layer}, have {L.interior_radius}")
    v_sub = int(np.searchsorted(L.layer, max_layer + 1))
    cap = int((2 * L.layer[:v_sub].astype(np.int64) + 2).sum())
    vert = np.empty(cap, dtype=np.int32)
    par = np.empty(cap, dtype=np.int16)
    slot = np.empty(cap, dtype=np.int8)
    off, status = _kernels.build_interval_table(
        L.rot, L.rev, L.layer, v_sub, vert, par, slot)
    if status != 0:
        raise RuntimeError(f"interval table build failed (status {status})")
    tab = (off, vert, par, slot)
    L._cache[ckey] = tab
    return tab


_SWEEP_STATUS = {
    1: "hull scratch overflow",
    2: "undetermined-case buffer overflow",
    3: "interval anchor mismatch",
    4: "reflected image left the ball",
}


@dataclass(frozen=True)
class SweepResult:
    """Flat per-node and per-(node, index) arrays from one DFS pass.

    Nodes appear in turn order; node v of depth d owns the pair rows
    pair_off[v] .. pair_off[v]+d-2, one per index i = 1..d-1 ascending.
    pair_key holds the reflected walk's turn key (the walk's own key
    where no mirror acts), so fibers of the reflection map are run
    lengths of the sorted keys.
    """

    lattice: Lattice
    n_max: int
    counts: tuple[int, ...]
    node_depth: np.ndarray
    node_key: np.ndarray
    node_hull: np.ndarray
    node_btan: np.ndarray
    node_bexp: np.ndarray
    pair_off: np.ndarray
    pair_defect: np.ndarray
    pair_tslot: np.ndarray
    pair_defimg: np.ndarray
    pair_key: np.ndarray
    pair_valid: np.ndarray

    def nodes_at(self, n: int) -> np.ndarray:
        if not 0 <= n <= self.n_max:
            raise ValueError(f"depth {n} outside the swept range")
        return np.nonzero(self.node_depth == n)[0]

    def pair_index(self, n: int) -> np.ndarray:
        """(c_n, n-1) indices into the pair arrays; column i-1 is index i."""
        if n < 2:
            raise ValueError("no interior indices below length 2")
        nodes = self.nodes_at(n)
        return self.pair_off[nodes][:, None] + np.arange(n - 1)[None, :]

    def fiber_histogram(self, n: int, i: int) -> dict[int, int]:
        """{fiber size: number of images} of the reflection map on Λ_n."""
        if not 0 < i < n:
            raise ValueError("index must satisfy 0 < i < n")
        keys = self.pair_key[self.pair_index(n)[:, i - 1]]
        keys = np.sort(keys)
        edges = np.nonzero(np.diff(keys))[0]
        sizes = np.diff(np.concatenate(([-1], edges, [len(keys) - 1])))
        hist: dict[int, int] = {}
        for s in sizes:
            hist[int(s)] = hist.get(int(s), 0) + 1
        return hist

    def chain_triple(self, n: int, i: int, C: int):
        """Exact (P(A_i), P(R_i γ in A_i), P(γ(i) on tangent boundary))."""
        idx = self.pair_index(n)[:, i - 1]
        cn = len(idx)
        p_event = Fraction(int((self.pair_defect[idx] <= C).sum()), cn)
        p_image = Fraction(int((self.pair_defimg[idx] <= C).sum()), cn)
        p_bound = Fraction(int((self.pair_tslot[idx] >= 0).sum()), cn)
        return p_event, p_image, p_bound

    def calibrated_C(self, n: int | None = None) -> int:
        """Smallest C making every acting reflection land inside A_i."""
        if n is None:
            n = self.n_max
        idx = self.pair_index(n).ravel()
        acting = self.pair_tslot[idx] >= 0
        if not acting.any():
            return 0
        return int(self.pair_defimg[idx][acting].max())

    def boundary_fractions(self, n: int, mode: str = "tangent") -> np.ndarray:
        """Per-walk |A ∩ boundary| / |A| over Λ_n."""
        nodes = self.nodes_at(n)
        if mode == "tangent":
            cnt = self.node_btan[nodes]
        elif mode == "exposed":
            cnt = self.node_bexp[nodes]
        else:
            raise ValueError("mode must be 'tangent' or 'exposed'")
        return cnt.astype(np.float64) / (n + 1)

    def all_images_valid(self) -> bool:
        return bool(self.pair_valid.all())


def full_sweep(L: Lattice, n_max: int) -> SweepResult:
    """Run (or fetch) the exhaustive sweep to depth n_max."""
    for ckey, res in list(L._cache.items()):
        if isinstance(ckey, tuple) and ckey[0] == "sweep" and ckey[1] >= n_max:
            return res
    if L.mode != "combinatorial":
        raise ValueError("sweep requires a combinatorial-mode ball")
    if n_max + 2 > L.interior_radius:
        raise ValueError(
            f"sweep to depth {n_max} keeps hulls within layer {n_max + 2}; "
            f"interior radius {L.interior_radius} is too small")
    itab = interval_table(L, n_max)
    counts = _kernels.count_walks(L.rot, L.rev, n_max,
                                  np.empty(0, dtype=np.int64))
    n_nodes = int(counts.sum())
    n_pairs = int(sum(c * max(0, k - 1) for k, c in enumerate(counts)))
    node_depth = np.empty(n_nodes, dtype=np.int8)
    node_key = np.empty(n_nodes, dtype=np.int64)
    node_hull = np.empty(n_nodes, dtype=np.int16)
    node_btan = np.empty(n_nodes, dtype=np.int8)
    node_bexp = np.empty(n_nodes, dtype=np.int8)
    pair_defect = np.empty(n_pairs, dtype=np.int8)
    pair_tslot = np.empty(n_pairs, dtype=np.int8)
    pair_defimg = np.empty(n_pairs, dtype=np.int8)
    pair_key = np.empty(n_pairs, dtype=np.int64)
    pair_valid = np.empty(n_pairs, dtype=np.int8)
    undet_node = np.empty(4096, dtype=np.int64)
    undet_i = np.empty(4096, dtype=np.int8)
    nodes, pairs, undet, status = _kernels.walk_sweep(
        L.rot, L.rev, L.layer, itab[0], itab[1], itab[2], itab[3], n_max,
        node_depth, node_key, node_hull, node_btan, node_bexp,
        pair_defect, pair_tslot, pair_defimg, pair_key, pair_valid,
        undet_node, undet_i)
    if status != 0:
        raise RuntimeError(
            f"walk sweep aborted: {_SWEEP_STATUS.get(status, status)}")
    if nodes != n_nodes or pairs != n_pairs:
        raise RuntimeError("sweep emission disagrees with walk counts")
    if undet > 0:
        raise RuntimeError(
            f"{undet} (walk, index) tangency cases undetermined inside this "
            "ball; rebuild with a larger radius")
    deg = np.maximum(node_depth.astype(np.int64) - 1, 0)
    pair_off = np.concatenate(([0], np.cumsum(deg)))
    res = SweepResult(L, n_max, tuple(int(c) for c in counts),
                      node_depth, node_key, node_hull, node_btan, node_bexp,
                      pair_off[:-1], pair_defect, pair_tslot, pair_defimg,
                      pair_key, pair_valid)
    L._cache[("sweep", n_max)] = res
    return res


def iti_histograms(L: Lattice, n_max: int, workers: int = 1,
                   prefix_len: int = 4):
    """Defect and displacement histograms per depth, up to n_max.

    defect_hist[d, i, c] counts walks of length d whose triangle defect
    at index i equals c; disp_hist[d, m] counts walks of length d with
    displacement m.  Deterministic for any worker count: partial
    histograms from turn-key prefixes merge by addition.
    """
    if n_max > L.interior_radius:
        raise ValueError("depth exceeds the interior radius")
    dh = np.zeros((n_max + 1, n_max + 1, 2 * n_max + 2), dtype=np.int64)
    ph = np.zeros((n_max + 1, n_max + 1), dtype=np.int64)
    p = min(prefix_len, n_max)
    if workers <= 1 or p == 0:
        _kernels.iti_stream(L.rot, L.rev, L.layer, n_max,
                            np.empty(0, dtype=np.int64), dh, ph)
        return dh, ph
    nprefix = int(_kernels.count_walks(L.rot, L.rev, p,
                                       np.empty(0, dtype=np.int64))[p])
    keys = np.empty(nprefix, dtype=np.int64)
    _kernels.enumerate_keys(L.rot, L.rev, p, keys)
    from concurrent.futures import ThreadPoolExecutor

    def job(key):
        slots = np.asarray([(int(key) >> (3 * (p - 1 - t))) & 7
                            for t in range(p)], dtype=np.int64)
        d = np.zeros_like(dh)
        m = np.zeros_like(ph)
        _kernels.iti_stream(L.rot, L.rev, L.layer, n_max, slots, d, m)
        return d, m

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for d, m in pool.map(job, keys):
            dh[p:] += d[p:]
            ph[p:] += m[p:]
    # depths below the prefix length, once, from an unrestricted run
    dh_s = np.zeros((p, n_max + 1, 2 * n_max + 2), dtype=np.int64)
    ph_s = np.zeros((p, n_max + 1), dtype=np.int64)
    dcut = np.zeros((p, p, 2 * p), dtype=np.int64)
    pcut = np.zeros((p, p), dtype=np.int64)
    _kernels.iti_stream(L.rot, L.rev, L.layer, p - 1,
                        np.empty(0, dtype=np.int64), dcut, pcut)
    dh_s[:, :p, :2 * p] = dcut
    ph_s[:, :p] = pcut
    dh[:p] = dh_s
    ph[:p] = ph_s
    return dh, ph


def walk_stats(L: Lattice, walks: np.ndarray):
    """Hull/boundary/defect report for an explicit batch of walks.

    walks: (k, n+1) int32 vertex ids (each row a valid root walk whose
    hull stays in the interior region).  Returns a dict of arrays:
    hull_size, boundary_tangent, boundary_exposed (per walk), and
    defect, tangent_slot, image_defect, image_valid (per walk, index).
    """
    walks = np.ascontiguousarray(walks, dtype=np.int32)
    k, np1 = walks.shape
    n = np1 - 1
    itab = interval_table(L, n)
    out_hull = np.zeros(k, dtype=np.int32)
    out_btan = np.zeros(k, dtype=np.int32)
    out_bexp = np.zeros(k, dtype=np.int32)
    out_defect = np.zeros((k, np1), dtype=np.int8)
    out_tslot = np.full((k, np1), -1, dtype=np.int8)
    out_defimg = np.zeros((k, np1), dtype=np.int8)
    out_valid = np.ones((k, np1), dtype=np.int8)
    undet, status = _kernels.batch_walk_stats(
        L.rot, L.rev, L.layer, itab[0], itab[1], itab[2], itab[3],
        walks, out_hull, out_btan, out_bexp, out_defect, out_tslot,
        out_defimg, out_valid)
    if status != 0:
        raise RuntimeError(
            f"walk stats aborted: {_SWEEP_STATUS.get(status, status)}")
    if undet > 0:
        raise RuntimeError(
            f"{undet} tangency cases undetermined; rebuild with a larger "
            "radius")
    return {"hull_size": out_hull, "boundary_tangent": out_btan,
            "boundary_exposed": out_bexp, "defect": out_defect,
            "tangent_slot": out_tslot, "image_defect": out_defimg,
            "image_valid": out_valid}
