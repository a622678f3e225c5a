"""Finite balls of the 7-regular hyperbolic triangulation.

Two independent builders produce the ball of graph radius R around a
root vertex:

* combinatorial: layer-by-layer integer construction from the local
  rule that every vertex link is a 7-cycle.  No floats.  Authoritative
  for graph structure; rotation rows carry a fixed slot layout (parent
  first) that downstream walk code relies on.
* geometric: orbit BFS of a basepoint under the (2,3,7) reflection
  group on the hyperboloid, deduplicating points in the Poincare disk
  chart.  Supplies exact-to-float coordinates; cross-validated against
  the combinatorial build via a canonical rotation-system digest.

A Lattice is immutable after build; all queries are read-only.
Automorphism image tables are filled by an idempotent whole-ball pass,
so concurrent readers always observe consistent images.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import geom

RIM = -1          # rot entry for a neighbor outside the built ball
ESCAPED = -2      # automorphism image provably outside the built ball
UNKNOWN = -3      # image not derivable inside the ball (path blocked)

COMBINATORIAL_MAX_RADIUS = 25
# Disk-chart gap between distinct vertices shrinks like ~2.2*e^-R; the
# dedup logic needs it above the 3e-6 ambiguity band (match tol 1e-6
# with a 3x dead band).  Measured: closest distinct pair 6.5e-6 at
# R=12, 2.6e-6 at R=13, so 13 would abort in the dead band.
GEOMETRIC_MAX_RADIUS = 12

_MATCH_TOL = 1e-6
_AMBIG_TOL = 3e-6
_CELL = 4e-6      # grid cell >= ambiguity radius so a 3x3 probe is complete


def layer_sizes(R: int) -> list[int]:
    """Vertex counts per BFS layer: 1, 7, 21, 56, 147, ...

    From layer 2 on, a_{k+1} = 3 a_k - a_{k-1} (every ring vertex has
    3 outward slots on average; the two-parent correction cancels).
    """
    if R < 0:
        raise ValueError("negative radius")
    out = [1, 7, 21]
    for _ in range(3, R + 1):
        out.append(3 * out[-1] - out[-2])
    return out[:R + 1]


@dataclass(frozen=True)
class Lattice:
    """A ball of the triangulation with its rotation system.

    rot[v] lists the 7 neighbors of v in cyclic (counterclockwise)
    order; entries are RIM (-1) where the neighbor lies outside the
    built ball.  Vertex ids are dense, root = 0, sorted by layer.
    """

    rot: np.ndarray            # (V, 7) int32, RIM-padded on the rim
    layer: np.ndarray          # (V,) int32 graph distance from root
    radius: int
    interior_radius: int       # all vertices out to this layer have degree 7
    mode: str                  # "combinatorial" | "geometric"
    coords: np.ndarray | None = None   # (V, 3) hyperboloid points
    diagnostics: dict = field(default_factory=dict, compare=False)
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def num_vertices(self) -> int:
        return self.rot.shape[0]

    def neighbors(self, v: int) -> np.ndarray:
        row = self.rot[v]
        return row[row >= 0]

    def is_interior(self, v: int) -> bool:
        return bool((self.rot[v] >= 0).all())

    @property
    def rev(self) -> np.ndarray:
        """rev[v,k] = slot of v in rot[rot[v,k]]; RIM where no neighbor."""
        r = self._cache.get("rev")
        if r is None:
            r = _reverse_slots(self.rot)
            self._cache["rev"] = r
        return r

    def ring(self, k: int) -> np.ndarray:
        """Vertex ids at exactly layer k."""
        return np.nonzero(self.layer == k)[0].astype(np.int32)

    # -- canonical form -------------------------------------------------

    def canonical_digest(self) -> str:
        d = self._cache.get("digest")
        if d is None:
            d = _canonical_digest(self.rot, self.rev)
            self._cache["digest"] = d
        return d

    # -- serialization --------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "format": "hypsaw-lattice",
            "version": 1,
            "radius": self.radius,
            "mode": self.mode,
            "rot": self.rot.tolist(),
        }
        if self.coords is not None:
            doc["coords"] = [
                [float(f"{x:.12g}") for x in p] for p in self.coords
            ]
        return json.dumps(doc, separators=(",", ":"), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Lattice":
        doc = json.loads(text)
        if doc.get("format") != "hypsaw-lattice" or doc.get("version") != 1:
            raise ValueError("not a lattice document")
        rot = np.asarray(doc["rot"], dtype=np.int32)
        coords = None
        if "coords" in doc:
            coords = np.asarray(doc["coords"], dtype=np.float64)
        layer = _bfs_layers(rot)
        interior = np.int32((rot >= 0).all(axis=1))
        full_to = int(layer[interior == 0].min()) - 1 if (interior == 0).any() else int(layer.max())
        return Lattice(
            rot=rot,
            layer=layer,
            radius=int(layer.max()),
            interior_radius=full_to,
            mode=doc.get("mode", "combinatorial"),
            coords=coords,
        )


# ---------------------------------------------------------------------------
# combinatorial builder
# ---------------------------------------------------------------------------

def _build_combinatorial(R: int) -> Lattice:
    sizes = layer_sizes(R)
    V = int(sum(sizes))
    rot = np.full((V, 7), RIM, dtype=np.int32)
    layer = np.zeros(V, dtype=np.int32)

    rot[0] = np.arange(1, 8)
    if R == 0:
        return Lattice(rot=rot[:1], layer=layer[:1], radius=0,
                       interior_radius=0, mode="combinatorial")

    # Ring 1: seven children of the root, pairwise consecutive.
    # Slot layout for a one-parent ring vertex: (parent, prev-sibling,
    # child*4, next-sibling); child slots of the rim stay RIM.
    ids = np.arange(1, 8, dtype=np.int32)
    layer[ids] = 1
    rot[ids, 0] = 0
    rot[ids, 1] = np.roll(ids, 1)    # counterclockwise-previous sibling
    rot[ids, 6] = np.roll(ids, -1)

    cur = ids
    # one-parent vertices get 2 interior children, two-parent get 1
    is_one_parent = np.ones(7, dtype=bool)
    base = 8
    for k in range(1, R):
        m = len(cur)
        n_int = np.where(is_one_parent, 2, 1).astype(np.int64)
        block = n_int + 1                        # +1 shared child per ring edge
        offs = base + np.concatenate(([0], np.cumsum(block)[:-1]))
        S = int(block.sum())
        new_ids = np.arange(base, base + S, dtype=np.int32)
        layer[new_ids] = k + 1

        shared = offs.astype(np.int32)           # child shared by (prev, cur_j)
        nxt_shared = np.roll(shared, -1)

        # fill the parents' child slots
        one = is_one_parent
        two = ~is_one_parent
        rot[cur[one], 2] = shared[one]
        rot[cur[one], 3] = (offs[one] + 1).astype(np.int32)
        rot[cur[one], 4] = (offs[one] + 2).astype(np.int32)
        rot[cur[one], 5] = nxt_shared[one]
        rot[cur[two], 2] = shared[two]
        rot[cur[two], 3] = (offs[two] + 1).astype(np.int32)
        rot[cur[two], 4] = nxt_shared[two]

        # fill the new ring's own rows; ids are consecutive in cyclic order
        prev_id = np.roll(new_ids, 1)
        next_id = np.roll(new_ids, -1)
        is_shared_new = np.zeros(S, dtype=bool)
        is_shared_new[offs - base] = True
        parent_here = np.repeat(cur, block)      # cur_j for every slot of block j
        parent_prev = np.repeat(np.roll(cur, 1), block)

        sn = is_shared_new
        # two-parent layout: (p1, prev-sib, child*3, next-sib, p2)
        rot[new_ids[sn], 0] = parent_prev[sn]
        rot[new_ids[sn], 1] = prev_id[sn]
        rot[new_ids[sn], 5] = next_id[sn]
        rot[new_ids[sn], 6] = parent_here[sn]
        # one-parent layout as in ring 1
        rot[new_ids[~sn], 0] = parent_here[~sn]
        rot[new_ids[~sn], 1] = prev_id[~sn]
        rot[new_ids[~sn], 6] = next_id[~sn]

        cur = new_ids
        is_one_parent = ~is_shared_new
        base += S

    return Lattice(rot=rot, layer=layer, radius=R,
                   interior_radius=max(R - 1, 0), mode="combinatorial")


# ---------------------------------------------------------------------------
# geometric builder
# ---------------------------------------------------------------------------

def _renormalize_batch(mats: np.ndarray) -> np.ndarray:
    J = np.diag([-1.0, 1.0, 1.0])
    M = mats
    for _ in range(6):
        E = np.einsum("nji,jk,nkl->nil", M, J, M) - J
        err = np.abs(E).max()
        if err > 1e-3:
            raise RuntimeError(f"isometry drift beyond repair: form error {err:.3e}")
        if err < 1e-15:
            break
        M = M - 0.5 * np.einsum("nij,jk,nkl->nil", M, J, E)
    return M


class _DiskGrid:
    """Uniform-grid point index over the Poincare disk chart."""

    def __init__(self):
        self.cells: dict[tuple[int, int], list[int]] = {}
        self.pts: list[np.ndarray] = []

    def _cell(self, p):
        return (int(np.floor(p[0] / _CELL)), int(np.floor(p[1] / _CELL)))

    def probe(self, p) -> list[tuple[float, int]]:
        """(distance, id) for stored points within the 3x3 cell block."""
        cx, cy = self._cell(p)
        out = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for i in self.cells.get((cx + dx, cy + dy), ()):
                    d = float(np.hypot(*(self.pts[i] - p)))
                    out.append((d, i))
        out.sort()
        return out

    def insert(self, p, idx: int):
        self.cells.setdefault(self._cell(p), []).append(idx)
        self.pts.append(np.asarray(p, dtype=np.float64))


def _build_geometric(R: int) -> Lattice:
    steps = np.stack(geom.neighbor_isometries())        # (7,3,3)
    o = geom.origin()

    grid = _DiskGrid()
    grid.insert(geom.to_disk(o), 0)
    rot_rows: list[list[int]] = [[RIM] * 7]
    layer_list = [0]
    coords = [o]
    mats = np.eye(3)[None, :, :]                        # frames of current ring
    ring_ids = np.array([0])
    next_id = 1
    max_match = 0.0
    min_new_gap = np.inf

    for k in range(R + 1):
        if len(ring_ids) == 0:
            break
        closing = k == R                 # classify rim neighbors, spawn nothing
        child_mats = _renormalize_batch(
            np.einsum("nij,sjk->nsik", mats, steps).reshape(-1, 3, 3)
        ).reshape(len(ring_ids), 7, 3, 3)
        child_pts = child_mats @ o
        disk = np.stack(
            [child_pts[..., 1] / (1.0 + child_pts[..., 0]),
             child_pts[..., 2] / (1.0 + child_pts[..., 0])], axis=-1)

        new_mats = []
        new_ids = []
        for i, v in enumerate(ring_ids):
            row = []
            for s in range(7):
                p = disk[i, s]
                cand = grid.probe(p)
                if cand and cand[0][0] < _MATCH_TOL:
                    if len(cand) > 1 and cand[1][0] < _AMBIG_TOL:
                        raise RuntimeError(
                            f"dedup collision near vertex {v}: two points within "
                            f"{cand[1][0]:.2e} of a candidate (drift diagnostic)")
                    max_match = max(max_match, cand[0][0])
                    row.append(cand[0][1])
                elif cand and cand[0][0] < _AMBIG_TOL:
                    raise RuntimeError(
                        f"dedup ambiguity near vertex {v}: nearest point at "
                        f"{cand[0][0]:.2e}, inside the match/new dead band")
                elif closing:
                    row.append(RIM)
                else:
                    if cand:
                        min_new_gap = min(min_new_gap, cand[0][0])
                    grid.insert(p, next_id)
                    rot_rows.append([RIM] * 7)
                    layer_list.append(k + 1)
                    coords.append(child_pts[i, s])
                    new_mats.append(child_mats[i, s])
                    new_ids.append(next_id)
                    row.append(next_id)
                    next_id += 1
            # frames of odd layers reverse orientation; flip to counterclockwise
            rot_rows[v] = row[::-1] if k % 2 == 1 else row
        mats = np.stack(new_mats) if new_mats else np.empty((0, 3, 3))
        ring_ids = np.array(new_ids, dtype=np.int64)

    rot = np.asarray(rot_rows, dtype=np.int32)
    lat = Lattice(
        rot=rot,
        layer=np.asarray(layer_list, dtype=np.int32),
        radius=R,
        interior_radius=max(R - 1, 0),
        mode="geometric",
        coords=np.asarray(coords),
        diagnostics={"max_match_err": max_match,
                     "min_new_gap": float(min_new_gap)},
    )
    return lat


def build_ball(R: int, mode: str = "combinatorial") -> Lattice:
    """Ball of graph radius R around the root vertex.

    Geometric mode carries hyperboloid coordinates and is capped at
    R = 12, where chart dedup is still unambiguous; combinatorial mode
    is pure integer work and allows R up to 25 (memory is the
    practical limit).
    """
    if mode == "combinatorial":
        if not 1 <= R <= COMBINATORIAL_MAX_RADIUS:
            raise ValueError(f"radius must be in 1..{COMBINATORIAL_MAX_RADIUS}")
        return _build_combinatorial(R)
    if mode == "geometric":
        if not 1 <= R <= GEOMETRIC_MAX_RADIUS:
            raise ValueError(
                f"geometric mode supports radius 1..{GEOMETRIC_MAX_RADIUS}; "
                "combinatorial mode goes further")
        return _build_geometric(R)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# shared low-level helpers
# ---------------------------------------------------------------------------

def _reverse_slots(rot: np.ndarray) -> np.ndarray:
    V = rot.shape[0]
    rev = np.full((V, 7), RIM, dtype=np.int32)
    # chunked so the (chunk, 7, 7) comparison tensor stays small
    for lo in range(0, V, 65536):
        hi = min(lo + 65536, V)
        nb = rot[lo:hi]                                  # (c,7)
        valid = nb >= 0
        rows = rot[np.where(valid, nb, 0)]               # (c,7,7)
        me = np.arange(lo, hi, dtype=np.int32)[:, None, None]
        hit = rows == me                                 # (c,7,7)
        slot = np.argmax(hit, axis=2).astype(np.int32)
        found = hit.any(axis=2) & valid
        rev[lo:hi][found] = slot[found]
    return rev


def _bfs_layers(rot: np.ndarray) -> np.ndarray:
    return bfs_distances(rot, np.array([0]))


def bfs_distances(rot: np.ndarray, sources: np.ndarray,
                  stop_at: int | None = None) -> np.ndarray:
    """Graph distance from a source set to every vertex (-1 unreachable)."""
    V = rot.shape[0]
    dist = np.full(V, -1, dtype=np.int32)
    frontier = np.asarray(sources, dtype=np.int64)
    dist[frontier] = 0
    d = 0
    while len(frontier):
        if stop_at is not None and dist[stop_at] >= 0:
            break
        nb = rot[frontier].ravel()
        nb = nb[nb >= 0]
        nb = nb[dist[nb] < 0]
        if len(nb) == 0:
            break
        frontier = np.unique(nb)
        d += 1
        dist[frontier] = d
    return dist


# ---------------------------------------------------------------------------
# metric queries
# ---------------------------------------------------------------------------

def graph_dist(L: Lattice, u: int, v: int) -> int:
    if u == v:
        return 0
    d = bfs_distances(L.rot, np.array([u]), stop_at=v)
    if d[v] < 0:
        raise ValueError(f"no path between {u} and {v}")
    return int(d[v])


def interval(L: Lattice, u: int, v: int) -> np.ndarray:
    """All vertices on some geodesic from u to v (two-BFS sandwich)."""
    du = bfs_distances(L.rot, np.array([u]))
    dv = bfs_distances(L.rot, np.array([v]))
    if du[v] < 0:
        raise ValueError(f"no path between {u} and {v}")
    on = (du >= 0) & (dv >= 0) & (du + dv == du[v])
    return np.nonzero(on)[0].astype(np.int32)


@dataclass
class HullReport:
    """Convex hull of a vertex set with its two boundary notions.

    boundary_exposed: hull members with a neighbor outside the hull.
    boundary_tangent: hull members x admitting a reflection g fixing x
    with g(K) meeting K only at x.  The tangent notion is the one the
    reflection argument consumes; exposed is the graph-topological one.
    """

    lattice: Lattice
    source: np.ndarray
    hull: np.ndarray
    iterations: int
    closed: bool
    _tangent: np.ndarray | None = field(default=None, repr=False)

    @property
    def boundary_exposed(self) -> np.ndarray:
        K = self.hull
        mask = np.zeros(self.lattice.num_vertices, dtype=bool)
        mask[K] = True
        nb = self.lattice.rot[K]
        outside = (nb == RIM) | ~mask[np.where(nb >= 0, nb, 0)]
        return K[outside.any(axis=1)]

    @property
    def boundary_tangent(self) -> np.ndarray:
        if self._tangent is None:
            hits = [x for x in self.hull
                    if tangent_reflection(self.lattice, self.hull, int(x)) is not None]
            self._tangent = np.asarray(hits, dtype=np.int32)
        return self._tangent

    def shell(self, d: int) -> np.ndarray:
        """Hull members within graph distance d of the exposed boundary."""
        be = self.boundary_exposed
        if len(be) == 0:
            return self.hull.copy()
        dist = bfs_distances(self.lattice.rot, be)
        inK = np.zeros(self.lattice.num_vertices, dtype=bool)
        inK[self.hull] = True
        ok = inK & (dist >= 0) & (dist <= d)
        return np.nonzero(ok)[0].astype(np.int32)


def _closure_step(L: Lattice, cur: np.ndarray) -> np.ndarray:
    mask = np.zeros(L.num_vertices, dtype=bool)
    mask[cur] = True
    dists = {int(u): bfs_distances(L.rot, np.array([int(u)])) for u in cur}
    for ai in range(len(cur)):
        du = dists[int(cur[ai])]
        for v in cur[ai + 1:]:
            dv = dists[int(v)]
            mask |= (du >= 0) & (dv >= 0) & (du + dv == du[int(v)])
    return np.nonzero(mask)[0].astype(np.int32)


def convex_hull(L: Lattice, A, iterate: bool = False) -> HullReport:
    """Union of geodesic intervals over pairs of A (one closure step).

    iterate=True repeats the step until a fixed point.  Errors out if
    the hull touches the rim region where distances would be unreliable.
    """
    A = np.unique(np.asarray(A, dtype=np.int64))
    if len(A) == 0:
        raise ValueError("empty source set")
    cur = A.astype(np.int32)
    iterations = 0
    while True:
        nxt = _closure_step(L, cur)
        iterations += 1
        worst = int(L.layer[nxt].max())
        if worst > L.interior_radius:
            raise ValueError(
                f"hull reaches layer {worst} beyond the interior region "
                f"(radius {L.interior_radius}); rebuild with a larger ball")
        if len(nxt) == len(cur) and (nxt == cur).all():
            return HullReport(L, A.astype(np.int32), nxt, iterations, True)
        if not iterate:
            try:
                probe = _closure_step(L, nxt)
                closed = len(probe) == len(nxt)
            except ValueError:
                closed = False
            return HullReport(L, A.astype(np.int32), nxt, iterations, closed)
        cur = nxt


# ---------------------------------------------------------------------------
# automorphisms
# ---------------------------------------------------------------------------

class Automorphism:
    """Ball automorphism pinned by one dart and a sign.

    The automorphism maps the anchor dart (v, slot k) to the target
    dart; sign +1 preserves rotation offsets, sign -1 reverses them
    (a reflection).  Images are produced by propagating frames over a
    BFS tree rooted at the anchor, so every propagation path is a
    geodesic from the anchor; whenever dist(anchor, x) keeps the image
    inside the ball, the table entry is the true image.  A step onto a
    missing rotation entry proves the image is outside the built ball
    (ESCAPED).  Vertices only reachable through escaped images stay
    UNKNOWN: their true image may re-enter the ball, we just cannot
    derive it here.  The table is filled once by an idempotent pass,
    so concurrent use is safe.
    """

    def __init__(self, L: Lattice, anchor: tuple[int, int], sign: int,
                 target: tuple[int, int] | None = None):
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        self.lattice = L
        self.anchor = (int(anchor[0]), int(anchor[1]))
        self.target = (int(target[0]), int(target[1])) if target else self.anchor
        self.sign = int(sign)
        self._img: np.ndarray | None = None

    def _fill(self):
        if self._img is not None:
            return
        L = self.lattice
        rot, rev = L.rot, L.rev
        V = L.num_vertices
        img = np.full(V, UNKNOWN, dtype=np.int32)
        shift = np.zeros(V, dtype=np.int32)   # image slot = (sign*a + shift) mod 7
        av, ak = self.anchor
        tv, tk = self.target
        img[av] = tv
        shift[av] = (tk - self.sign * ak) % 7
        frontier = np.array([av], dtype=np.int64)
        while len(frontier):
            islot = (self.sign * np.arange(7)[None, :]
                     + shift[frontier][:, None]) % 7
            nb = rot[frontier]                           # (F,7) source side
            nb_img = rot[img[frontier][:, None], islot]  # (F,7) image side
            unseen = (nb >= 0) & (img[np.where(nb >= 0, nb, 0)] == UNKNOWN)
            if not unseen.any():
                break
            # first discovery position per new vertex, in scan order
            pos_all = np.nonzero(unseen.ravel())[0]
            flat_ids = nb.ravel()[pos_all]
            first: dict[int, int] = {}
            for p, u in zip(pos_all.tolist(), flat_ids.tolist()):
                if u not in first:
                    first[u] = p
            new_arr = np.array(list(first.keys()), dtype=np.int64)
            p_arr = np.array(list(first.values()), dtype=np.int64)
            fi, fj = p_arr // 7, p_arr % 7
            src = frontier[fi]
            timg = nb_img[fi, fj]
            good = timg >= 0
            img[new_arr] = np.where(good, timg, ESCAPED)
            # frame of a good new vertex: its back edge to src must map
            # onto the image's back edge to img[src]
            back_here = rev[src, fj]
            back_img = rev[img[src], islot[fi, fj]]
            shift[new_arr[good]] = ((back_img - self.sign * back_here) % 7)[good]
            frontier = new_arr[good]
        self._img = img

    def vertex_image(self, x: int) -> int:
        """Image vertex id, ESCAPED if outside the ball, UNKNOWN if blocked."""
        self._fill()
        return int(self._img[x])

    def image_table(self) -> np.ndarray:
        self._fill()
        return self._img

    def __call__(self, x: int) -> int:
        return self.vertex_image(x)


def reflections_at(L: Lattice, v: int):
    """The 7 edge reflections fixing v, ordered by rotation slot."""
    if not L.is_interior(v):
        raise ValueError(f"vertex {v} has rim neighbors; no full reflection set")
    return [Automorphism(L, (v, k), -1) for k in range(7)]


def apply(L: Lattice, g: Automorphism, x):
    """Image of a vertex or of a vertex sequence under g.

    Raises if any image leaves the built ball, naming the first vertex
    whose image escapes.
    """
    seq = np.atleast_1d(np.asarray(x, dtype=np.int64))
    out = np.empty(len(seq), dtype=np.int32)
    for i, xv in enumerate(seq):
        im = g.vertex_image(int(xv))
        if im < 0:
            raise ValueError(f"image of vertex {int(xv)} leaves the built ball")
        out[i] = im
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return int(out[0])
    return out


def tangent_reflection(L: Lattice, K, x0: int):
    """First reflection at x0 whose image of K meets K only at x0.

    An image vertex outside the built ball cannot lie in K (K is in the
    ball), so escaped images count as off-K rather than as errors.
    """
    K = np.asarray(K, dtype=np.int64)
    if x0 not in K:
        raise ValueError("x0 must belong to K")
    inK = np.zeros(L.num_vertices, dtype=bool)
    inK[K] = True
    for g in reflections_at(L, x0):
        img = g.image_table()[K]
        if (img == UNKNOWN).any():
            bad = int(K[img == UNKNOWN][0])
            raise ValueError(
                f"image of vertex {bad} cannot be derived inside the ball; "
                "rebuild with a larger radius")
        # an ESCAPED image is outside the ball, hence outside K
        hits = inK[np.where(img >= 0, img, 0)] & (img >= 0)
        # the fixed point x0 maps to itself; any other hit kills tangency
        if hits.sum() == 1:
            return g
    return None


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

def thinness_audit(L: Lattice, R_audit: int, delta: int = 1) -> dict:
    """Max over triples (u,v,x) and w on I(u,v) of dist(w, I(u,x) u I(x,v)).

    Intervals stand in for the union of all geodesics on each side.
    Returns the observed maximum, a worst triple, and the pass flag.
    """
    if R_audit > L.interior_radius:
        raise ValueError("audit radius exceeds the interior region")
    verts = np.nonzero(L.layer <= R_audit)[0]
    n = len(verts)
    V = L.num_vertices

    # Interval bitmasks index the whole ball: geodesics between audited
    # vertices may bulge past the audit radius and must not be dropped.
    dist_rows = [bfs_distances(L.rot, np.array([int(v)])) for v in verts]
    masks = {}
    for i in range(n):
        di = dist_rows[i]
        for j in range(i, n):
            dj = dist_rows[j]
            on = (di >= 0) & (dj >= 0) & (di + dj == di[int(verts[j])])
            b = 0
            for w in np.nonzero(on)[0]:
                b |= 1 << int(w)
            masks[(i, j)] = b

    nb_full = []
    for v in range(V):
        b = 1 << v
        for u in L.neighbors(v):
            b |= 1 << int(u)
        nb_full.append(b)

    def pair(i, j):
        return masks[(i, j)] if i <= j else masks[(j, i)]

    worst = 0
    worst_triple = (int(verts[0]),) * 3
    for i in range(n):
        for j in range(i, n):
            side = pair(i, j)
            for k in range(n):
                other = pair(i, k) | pair(k, j)
                resid = side & ~other
                defect = 0
                while resid:
                    low = resid & -resid
                    w = low.bit_length() - 1
                    resid ^= low
                    if nb_full[w] & other:
                        defect = max(defect, 1)
                        continue
                    # farther than 1 from both comparison sides: measure
                    dw = bfs_distances(L.rot, np.array([w]))
                    dvals = [int(dw[x]) for x in range(V) if (other >> x) & 1]
                    defect = max(defect, min(dvals))
                if defect > worst:
                    worst = defect
                    worst_triple = (int(verts[i]), int(verts[j]), int(verts[k]))
    return {"max_thinness": worst,
            "worst_triple": worst_triple,
            "delta": delta,
            "passed": worst <= delta}


def metric_distortion(L: Lattice) -> dict:
    """Fit of graph distance against hyperbolic distance over all pairs.

    Reports the least-squares line graph = C*hyp/ell + K plus worst-case
    ratio bounds.  Needs coordinates, so geometric mode only.
    """
    if L.coords is None:
        raise ValueError("coordinates required; build with mode='geometric'")
    V = L.num_vertices
    ell = geom.edge_length()
    sum_x = sum_y = sum_xx = sum_xy = 0.0
    count = 0
    worst_hi = 0.0
    worst_lo = np.inf
    adj_err = 0.0
    for u in range(V - 1):
        gd = bfs_distances(L.rot, np.array([u]))
        hd = geom.hyp_dist(L.coords[u], L.coords[u + 1:])
        g = gd[u + 1:].astype(np.float64)
        steps = hd / ell
        ratio = np.divide(g, steps, out=np.ones_like(g), where=steps > 1e-12)
        worst_hi = max(worst_hi, float(ratio.max()))
        worst_lo = min(worst_lo, float(ratio[steps > 1e-12].min()))
        one = gd[u + 1:] == 1
        if one.any():
            adj_err = max(adj_err, float(np.abs(hd[one] - ell).max()))
        sum_x += float(steps.sum())
        sum_y += float(g.sum())
        sum_xx += float((steps * steps).sum())
        sum_xy += float((steps * g).sum())
        count += len(g)
    mx = sum_x / count
    my = sum_y / count
    C = (sum_xy / count - mx * my) / (sum_xx / count - mx * mx)
    K = my - C * mx
    return {"C_fit": C, "K_fit": K,
            "worst_ratio_hi": worst_hi, "worst_ratio_lo": worst_lo,
            "adjacent_abs_err": adj_err, "pairs": count}


# ---------------------------------------------------------------------------
# canonical digest
# ---------------------------------------------------------------------------

def _relabel_serialization(rot: np.ndarray, rev: np.ndarray,
                           start: int, sg: int) -> bytes:
    """BFS-relabeled rotation rows for one start-slot/orientation choice.

    Each visited vertex's row is read starting at the slot of its BFS
    discovery edge (the root starts at `start`), stepping by sg.  Rows
    are emitted in discovery order with labels substituted; rim entries
    become a sentinel.
    """
    V = rot.shape[0]
    label = np.full(V, -1, dtype=np.int64)
    sslot = np.zeros(V, dtype=np.int64)
    label[0] = 0
    sslot[0] = start
    order = [np.array([0], dtype=np.int64)]
    frontier = order[0]
    nxt = 1
    offs = (sg * np.arange(7)) % 7
    while len(frontier):
        slots = (sslot[frontier][:, None] + offs[None, :]) % 7
        seq = rot[frontier[:, None], slots]              # (F,7) neighbor ids
        flat = seq.ravel()
        valid = flat >= 0
        fsafe = np.where(valid, flat, 0)
        unseen = valid & (label[fsafe] < 0)
        if not unseen.any():
            break
        pos_all = np.nonzero(unseen)[0]
        flat_ids = flat[pos_all]
        # first discovery position per new vertex, in scan order
        first = {}
        for p, u in zip(pos_all.tolist(), flat_ids.tolist()):
            if u not in first:
                first[u] = p
        new_vs = sorted(first, key=first.get)
        new_arr = np.array(new_vs, dtype=np.int64)
        p_arr = np.array([first[u] for u in new_vs], dtype=np.int64)
        label[new_arr] = np.arange(nxt, nxt + len(new_arr))
        nxt += len(new_arr)
        src = frontier[p_arr // 7]
        abs_slot = slots[p_arr // 7, p_arr % 7]
        sslot[new_arr] = rev[src, abs_slot]
        order.append(new_arr)
        frontier = new_arr
    visit = np.concatenate(order)
    slots = (sslot[visit][:, None] + offs[None, :]) % 7
    seq = rot[visit[:, None], slots]
    out = np.where(seq >= 0, label[np.where(seq >= 0, seq, 0)], V).astype(np.int64)
    return out.astype(np.int32).tobytes()


def _canonical_digest(rot: np.ndarray, rev: np.ndarray) -> str:
    best = None
    for start in range(7):
        for sg in (1, -1):
            b = _relabel_serialization(rot, rev, start, sg)
            if best is None or b < best:
                best = b
    return hashlib.sha256(best).hexdigest()
