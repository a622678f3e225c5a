"""Self-avoiding walks rooted at the ball center.

A walk is a vertex sequence starting at the root with distinct
vertices and consecutive vertices adjacent.  Enumeration follows turn
order (first the absolute slot of the opening step, then the turn
relative to the arrival edge), which makes every listing deterministic
and lexicographic in the packed turn key.  Counting, exact sampling,
and the pivot chain run in compiled kernels; reflections go through
the automorphism machinery of the lattice module.
"""

from __future__ import annotations

import builtins
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .lattice import (Lattice, HullReport, apply, convex_hull, graph_dist,
                      tangent_reflection)

# exact sampling keeps the whole prefix tree in memory; past this many
# nodes the pivot chain is the intended tool
SAMPLE_TREE_NODE_CAP = 20_000_000


@dataclass(frozen=True)
class Walk:
    """Immutable root-based walk, indexable by time: w[i] is gamma(i)."""

    vertices: tuple[int, ...]

    def __post_init__(self):
        if len(self.vertices) == 0 or self.vertices[0] != 0:
            raise ValueError("walks start at the root vertex 0")

    @property
    def n(self) -> int:
        """Number of steps."""
        return len(self.vertices) - 1

    def __getitem__(self, i):
        return self.vertices[i]

    def __len__(self):
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def to_json(self) -> str:
        return json.dumps(list(self.vertices))

    @staticmethod
    def from_json(text: str) -> "Walk":
        return Walk(tuple(int(v) for v in json.loads(text)))


@dataclass(frozen=True)
class CountVector:
    """Walk counts by length, exact integers.

    Growth is pinned at construction: c_0 = 1, c_1 <= 7, and each
    further length gains at most a factor 6 (the step into the arrival
    edge is never available).
    """

    counts: tuple[int, ...]

    def __post_init__(self):
        c = self.counts
        if len(c) == 0 or c[0] != 1:
            raise ValueError("counts must start with c_0 = 1")
        if len(c) > 1 and not 0 <= c[1] <= 7:
            raise ValueError("c_1 exceeds the vertex degree")
        for k in range(2, len(c)):
            if not 0 <= c[k] <= 6 * c[k - 1]:
                raise ValueError(f"c_{k} = {c[k]} violates the factor-6 bound")

    def __getitem__(self, k: int) -> int:
        return self.counts[k]

    def __len__(self) -> int:
        return len(self.counts)

    def to_csv(self) -> str:
        lines = ["n,c_n"]
        lines += [f"{k},{ck}" for k, ck in builtins.enumerate(self.counts)]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_csv(text: str) -> "CountVector":
        rows = [ln for ln in text.strip().splitlines()[1:] if ln]
        vals = {int(a): int(b) for a, b in (ln.split(",") for ln in rows)}
        return CountVector(tuple(vals[k] for k in range(len(vals))))


def _require_steps(L: Lattice, n: int):
    if n < 0:
        raise ValueError("negative walk length")
    if n > L.interior_radius:
        raise ValueError(
            f"length {n} exceeds the interior radius {L.interior_radius}; "
            "walks could touch rim rows where adjacency is incomplete")


def _int_counts(raw: np.ndarray) -> tuple[int, ...]:
    return tuple(int(x) for x in raw)


def enumerate(L: Lattice, n: int, visitor=None, workers: int = 1,
              prefix_len: int = 4) -> CountVector:
    """Count (and optionally visit) all walks of up to n steps.

    With a visitor, every n-step walk is passed to it in turn order.
    workers > 1 splits the count across turn-key prefixes of length
    prefix_len; partial counts merge by addition, so the result is
    identical for any worker count.
    """
    _require_steps(L, n)
    if visitor is not None:
        m = 0
        for w in iter_walks(L, n):
            visitor(w)
            m += 1
        counts = _kernels.count_walks(L.rot, L.rev, n,
                                      np.empty(0, dtype=np.int64))
        if m != int(counts[n]):
            raise RuntimeError("visitor pass disagrees with the DFS count")
        return CountVector(_int_counts(counts))
    p = min(prefix_len, n)
    if workers <= 1 or p == 0:
        counts = _kernels.count_walks(L.rot, L.rev, n,
                                      np.empty(0, dtype=np.int64))
        return CountVector(_int_counts(counts))
    # one job per walkable prefix; nogil kernels run concurrently
    nprefix = int(_kernels.count_walks(L.rot, L.rev, p,
                                       np.empty(0, dtype=np.int64))[p])
    keys = np.empty(nprefix, dtype=np.int64)
    _kernels.enumerate_keys(L.rot, L.rev, p, keys)
    jobs = []
    for key in keys:
        slots = [(int(key) >> (3 * (p - 1 - t))) & 7 for t in range(p)]
        jobs.append(np.asarray(slots, dtype=np.int64))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(
            lambda pre: _kernels.count_walks(L.rot, L.rev, n, pre), jobs))
    head = _kernels.count_walks(L.rot, L.rev, p - 1,
                                np.empty(0, dtype=np.int64))
    total = np.zeros(n + 1, dtype=np.int64)
    total[:p] = head[:p]
    for part in parts:
        total[p:] += part[p:]
    return CountVector(_int_counts(total))


def naive_counts(L: Lattice, n: int) -> CountVector:
    """Independent counting route: id-sorted adjacency, path-scan DFS.

    Deliberately shares nothing with enumerate() beyond the lattice
    arrays; agreement between the two is a standing cross-check.
    """
    _require_steps(L, n)
    V = L.num_vertices
    nbr = np.full((V, 7), -1, dtype=np.int32)
    deg = np.zeros(V, dtype=np.int32)
    for v in range(V):
        row = np.sort(L.rot[v][L.rot[v] >= 0])
        nbr[v, :len(row)] = row
        deg[v] = len(row)
    counts = _kernels.count_walks_naive(nbr, deg, n)
    return CountVector(_int_counts(counts))


def iter_walks(L: Lattice, n: int):
    """Yield every n-step walk in turn-key order."""
    _require_steps(L, n)
    cn = int(_kernels.count_walks(L.rot, L.rev, n,
                                  np.empty(0, dtype=np.int64))[n])
    if cn > 50_000_000:
        raise ValueError(f"{cn} walks is past the in-memory key budget")
    keys = np.empty(cn, dtype=np.int64)
    m = _kernels.enumerate_keys(L.rot, L.rev, n, keys)
    if m != cn:
        raise RuntimeError("key enumeration disagrees with the DFS count")
    buf = np.empty(n + 1, dtype=np.int32)
    for key in keys:
        _kernels.key_to_vertices(L.rot, L.rev, np.int64(key), n, buf)
        yield Walk(tuple(int(v) for v in buf))


def displacement(L: Lattice, walk: Walk) -> int:
    """Graph distance between the endpoints of the walk."""
    vs = walk.vertices
    if vs[0] == 0:
        return int(L.layer[vs[-1]])
    return graph_dist(L, vs[0], vs[-1])


# ---------------------------------------------------------------------------
# uniform exact sampling
# ---------------------------------------------------------------------------


def _count_tree(L: Lattice, n: int):
    cached = L._cache.get(("count_tree", n))
    if cached is not None:
        return cached
    counts = _kernels.count_walks(L.rot, L.rev, n, np.empty(0, dtype=np.int64))
    nodes = int(counts.sum())
    if nodes > SAMPLE_TREE_NODE_CAP:
        raise ValueError(
            f"prefix tree would hold {nodes} nodes (cap "
            f"{SAMPLE_TREE_NODE_CAP}); use pivot_chain for this length")
    tree = _kernels.build_count_tree(L.rot, L.rev, n, nodes + 1)
    if int(tree[-1]) < 0:
        raise RuntimeError("prefix tree overflowed its counted size")
    total = int(tree[5][0])
    if total != int(counts[n]):
        raise RuntimeError("completion count disagrees with the DFS count")
    if total >= 2 ** 32:
        raise ValueError("completion count too large for exact unranking")
    L._cache[("count_tree", n)] = tree
    return tree


def sample_exact(L: Lattice, n: int, k: int, seed: int) -> list[Walk]:
    """k independent uniform draws from the n-step walks.

    Unranks root-to-leaf descents against exact subtree counts, so the
    law is uniform and the output is a pure function of the seed.
    """
    _require_steps(L, n)
    if n < 1 or k < 0:
        raise ValueError("need n >= 1 and k >= 0")
    vert, back, parent, first_child, n_children, completions, cnt = \
        _count_tree(L, n)
    if completions[0] == 0:
        raise ValueError(f"no walks of length {n}")
    out = np.empty((k, n + 1), dtype=np.int32)
    words = int(k * n * 1.01) + 128
    while True:
        blocks = np.random.default_rng(seed).integers(
            0, 2 ** 64, size=words, dtype=np.uint64)
        used = _kernels.sample_descents(vert, first_child, n_children,
                                        completions, n, k, blocks, out)
        if used >= 0:
            break
        words *= 2      # same stream prefix, so the draws are unchanged
    return [Walk(tuple(int(v) for v in row)) for row in out]


# ---------------------------------------------------------------------------
# reflections
# ---------------------------------------------------------------------------


def _hull_vertices(L: Lattice, walk: Walk, hull) -> np.ndarray:
    if hull is None:
        return convex_hull(L, np.asarray(walk.vertices, dtype=np.int64)).hull
    if isinstance(hull, HullReport):
        return hull.hull
    return np.asarray(hull, dtype=np.int64)


def reflect_at(L: Lattice, walk: Walk, i: int, hull=None) -> Walk:
    """Reflect the suffix at gamma(i) in the first tangent mirror.

    Tangency is tested against the hull of the walk (computed here
    unless passed in).  Without a tangent mirror the walk is returned
    unchanged.  A tangent reflection always yields a valid walk; that
    is re-checked and a violation raises as an internal error.
    """
    n = walk.n
    if not 0 < i < n:
        raise ValueError("reflection index must satisfy 0 < i < n")
    K = _hull_vertices(L, walk, hull)
    g = tangent_reflection(L, K, walk[i])
    if g is None:
        return walk
    suffix = apply(L, g, np.asarray(walk.vertices[i + 1:], dtype=np.int64))
    new_vs = walk.vertices[:i + 1] + tuple(int(v) for v in suffix)
    if len(set(new_vs)) != len(new_vs):
        raise RuntimeError("tangent reflection produced a self-intersection")
    for t in range(n):
        if new_vs[t + 1] not in L.rot[new_vs[t]]:
            raise RuntimeError("tangent reflection broke an adjacency")
    return Walk(new_vs)


def fiber_histogram(L: Lattice, n: int, i: int) -> dict[int, int]:
    """Multiplicities of the reflection map over all n-step walks.

    Applies the suffix reflection at index i to every walk and counts
    how many preimages each image has; returns {fiber size: number of
    images}.  Sum of size*count recovers the walk count.
    """
    _require_steps(L, n)
    if not 0 < i < n:
        raise ValueError("reflection index must satisfy 0 < i < n")
    images: dict[tuple[int, ...], int] = {}
    for w in iter_walks(L, n):
        rw = reflect_at(L, w, i)
        images[rw.vertices] = images.get(rw.vertices, 0) + 1
    hist: dict[int, int] = {}
    for m in images.values():
        hist[m] = hist.get(m, 0) + 1
    return hist


# ---------------------------------------------------------------------------
# pivot chain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PivotRun:
    """Thinned pivot-chain output plus acceptance accounting."""

    n: int
    steps: int
    accepted: int
    moves: str
    walks: np.ndarray          # (samples, n+1) vertex ids
    displacements: np.ndarray  # (samples,) endpoint layer

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.steps if self.steps else 0.0

    def walk(self, j: int) -> Walk:
        return Walk(tuple(int(v) for v in self.walks[j]))


def first_walk(L: Lattice, n: int) -> Walk:
    """Lexicographically first n-step walk in turn order."""
    _require_steps(L, n)
    vs = [0]
    back = -1
    occupied = {0}
    for t in range(n):
        placed = False
        for r in range(7 if t == 0 else 6):
            a = r if t == 0 else (back + 1 + r) % 7
            u = int(L.rot[vs[-1], a])
            if u >= 0 and u not in occupied:
                back = int(L.rev[vs[-1], a])
                vs.append(u)
                occupied.add(u)
                placed = True
                break
        if not placed:
            raise RuntimeError(f"no walk of length {n} found")
    return Walk(tuple(vs))


def pivot_chain(L: Lattice, n: int, steps: int, seed: int,
                moves: str = "reflections", burn: int = 0, thin: int = 1,
                start: Walk | None = None) -> PivotRun:
    """Run the vertex-fixing pivot chain and return thinned samples.

    Each step draws a pivot index uniformly from 1..n-1 and a symmetry
    uniformly from the 7 reflections at that vertex (moves =
    "reflections") or from the full 14-element dihedral stabilizer
    (moves = "dihedral").  The proposal reflects the suffix; it is
    accepted iff the image is a walk.  Determinism: the whole run is a
    pure function of (seed, start).
    """
    _require_steps(L, n)
    if n < 2:
        raise ValueError("the pivot index range 1..n-1 needs n >= 2")
    if moves not in ("reflections", "dihedral"):
        raise ValueError("moves must be 'reflections' or 'dihedral'")
    if steps < 0 or burn < 0 or thin < 1:
        raise ValueError("bad chain parameters")
    w0 = start if start is not None else first_walk(L, n)
    if w0.n != n:
        raise ValueError("start walk has the wrong length")
    walk0 = np.asarray(w0.vertices, dtype=np.int32)
    n_out = max(0, (steps - burn + thin - 1) // thin)
    out_walks = np.empty((n_out, n + 1), dtype=np.int32)
    out_disp = np.empty(n_out, dtype=np.int32)
    blocks = np.random.default_rng(seed).integers(
        0, 2 ** 64, size=2 * steps + 2, dtype=np.uint64)
    accepted, emitted, used = _kernels.pivot_chain_run(
        L.rot, L.rev, L.layer, walk0, steps, burn, thin,
        moves == "dihedral", blocks, out_walks, out_disp)
    if used < 0:
        raise RuntimeError("random stream exhausted mid-chain")
    return PivotRun(n, steps, int(accepted), moves,
                    out_walks[:emitted], out_disp[:emitted])
