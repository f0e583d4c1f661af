"""Labelled plane trees and pointed bipartite maps.

Geometry of the forward direction.  Put the tree vertices ``u_0..u_N`` on a
circle at positions ``0..N`` (counter-clockwise) and join each ``u_i``,
``i < N``, by a chord to the next ``u_j`` in cyclic order with label one less,
or to the extra vertex ``star`` when ``u_i`` has minimal label.  Labels read in
lexicographic order never drop by more than one, so these chords are nested.
The star sits on the circle just after the last minimal position, which no
chord encloses.  Every vertex is then merged with the leaf that ends its
rightmost descending path; these classes form a non-crossing partition of the
circle, so the merge can be drawn outside the disc and the result is planar.
Going counter-clockwise around a merged vertex one meets its circle points in
decreasing order, and at each point the chords in increasing cyclic distance
to their other end.

Half-edge conventions: edge ``e`` has half-edges ``2e`` and ``2e + 1``,
``sigma`` is the counter-clockwise successor around the origin, and faces are
the orbits of ``phi = sigma o twin``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .labels import LabelledTree
from .trees import PlaneTree

__all__ = [
    "PointedMap",
    "MapError",
    "ValidationReport",
    "tree_to_map",
    "map_to_tree",
    "validate_map",
    "label_distance_identity",
    "canonical_code",
]


class MapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PointedMap:
    """Half-edge structure of a pointed planar map.

    ``origin[h]`` is the vertex where half-edge ``h`` starts, ``h ^ 1`` is its
    twin and ``sigma[h]`` the next half-edge counter-clockwise around
    ``origin[h]``.  Vertices are ``0..n_vertices-1``; ``star`` is the pointed
    vertex.  The root half-edge goes from ``e_+`` to ``e_-``.
    """

    origin: np.ndarray
    sigma: np.ndarray | None
    star: int
    root: int
    dist_to_star: np.ndarray
    tree_class: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("origin", "sigma", "dist_to_star", "tree_class"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.array(arr, dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.origin.size % 2:
            raise MapError("half-edges come in pairs")

    @property
    def n_edges(self) -> int:
        return self.origin.size // 2

    @property
    def n_vertices(self) -> int:
        return int(self.dist_to_star.size)

    @property
    def target(self) -> np.ndarray:
        return self.origin[np.arange(self.origin.size) ^ 1]

    @property
    def e_plus(self) -> int:
        return int(self.origin[self.root])

    @property
    def e_minus(self) -> int:
        return int(self.origin[self.root ^ 1])

    def edges(self) -> np.ndarray:
        """``(E, 2)`` array of endpoints, edge ``e`` from half-edge ``2e``."""
        return self.origin.reshape(-1, 2).copy()

    def _need_rotation(self):
        if self.sigma is None:
            raise MapError("unsupported representation: map has no rotation system")

    @cached_property
    def phi(self) -> np.ndarray:
        self._need_rotation()
        return self.sigma[np.arange(self.origin.size) ^ 1]

    @cached_property
    def face_of(self) -> np.ndarray:
        """Face id of every half-edge; faces are numbered by first appearance."""
        phi = self.phi.tolist()
        face = [-1] * len(phi)
        nf = 0
        for h in range(len(phi)):
            if face[h] >= 0:
                continue
            x = h
            while face[x] < 0:
                face[x] = nf
                x = phi[x]
            nf += 1
        return np.array(face, dtype=np.int64)

    @property
    def n_faces(self) -> int:
        return int(self.face_of.max()) + 1 if self.origin.size else 1

    @cached_property
    def face_degrees(self) -> np.ndarray:
        return np.bincount(self.face_of, minlength=self.n_faces)

    @property
    def root_face(self) -> int:
        return int(self.face_of[self.root])

    @cached_property
    def adjacency(self):
        """Symmetric sparse adjacency matrix (multi-edges collapse)."""
        from scipy.sparse import csr_matrix

        V = self.n_vertices
        ones = np.ones(self.origin.size, dtype=np.int8)
        return csr_matrix((ones, (self.origin, self.target)), shape=(V, V))

    def rotation(self, v: int) -> list[int]:
        """Half-edges around ``v`` in counter-clockwise order."""
        self._need_rotation()
        hs = np.flatnonzero(self.origin == v)
        if hs.size == 0:
            return []
        out = [int(hs.min())]
        while True:
            nxt = int(self.sigma[out[-1]])
            if nxt == out[0]:
                return out
            out.append(nxt)

    def rotation_cycles(self) -> list[list[int]]:
        """Counter-clockwise half-edge cycle of every vertex, each starting at its smallest half-edge."""
        self._need_rotation()
        sigma = self.sigma.tolist()
        org = self.origin.tolist()
        out: list[list[int]] = [[] for _ in range(self.n_vertices)]
        seen = [False] * len(sigma)
        for h in range(len(sigma)):
            if seen[h]:
                continue
            cyc = out[org[h]]
            x = h
            while not seen[x]:
                seen[x] = True
                cyc.append(x)
                x = sigma[x]
        return out

    def reversed_root(self) -> "PointedMap":
        """The positive-convention twin: same map, root half-edge reversed."""
        return PointedMap(self.origin, self.sigma, self.star, self.root ^ 1,
                          self.dist_to_star, self.tree_class)


# ---------------------------------------------------------------------------
# tree -> map


def _successors(labels: list[int], lo: int) -> list[int]:
    """Cyclic successor index for each position; ``-1`` for minimal labels."""
    c = len(labels)
    nxt: dict[int, int] = {}
    succ = [-1] * c
    for t in range(2 * c - 1, -1, -1):
        v = labels[t % c]
        if t < c and v > lo:
            succ[t] = nxt[v - 1] % c
        nxt[v] = t
    return succ


def tree_to_map(lt: LabelledTree) -> PointedMap:
    tree = lt.tree
    n_pos = tree.n_vertices  # circumference C = N + 1
    if n_pos < 2:
        raise MapError("invalid input: the tree needs at least one edge")
    lab = lt.labels
    labels = lab.tolist()
    lo = int(lab.min())
    succ = _successors(labels, lo)

    leaves = np.flatnonzero(tree.k == 0)
    n_leaves = leaves.size
    vid_of_leaf = np.full(n_pos, -1, dtype=np.int64)
    vid_of_leaf[leaves] = np.arange(n_leaves)
    cls = vid_of_leaf[tree.last_leaf]  # map vertex of every tree vertex
    star = n_leaves
    star_pos = int(np.flatnonzero(lab == lo)[-1])  # star at star_pos + 1/2

    n_e = n_pos - 1
    i = np.arange(n_e, dtype=np.int64)
    succ_arr = np.array(succ[:n_e], dtype=np.int64)
    to_star = succ_arr < 0
    origin = np.empty(2 * n_e, dtype=np.int64)
    origin[0::2] = cls[i]
    origin[1::2] = np.where(to_star, star, cls[np.maximum(succ_arr, 0)])
    # circle position of each half-edge end and of the opposite end
    pos = np.empty(2 * n_e, dtype=np.int64)
    pos[0::2] = i
    pos[1::2] = np.where(to_star, -1, succ_arr)
    other = pos[np.arange(2 * n_e) ^ 1]

    at_star = origin == star
    # doubled cyclic distance from this end to the other one; the star sits at star_pos + 1/2
    key_dir = np.where(
        at_star,
        (other - star_pos - 1) % n_pos,
        np.where(other < 0, 2 * ((star_pos - pos) % n_pos) + 1, 2 * ((other - pos) % n_pos)),
    )
    key_pos = np.where(at_star, 0, -pos)
    order = np.lexsort((key_dir, key_pos, origin))
    sigma = np.empty(2 * n_e, dtype=np.int64)
    grp = origin[order]
    start = np.r_[True, grp[1:] != grp[:-1]]
    nxt = np.r_[order[1:], order[:1]]
    # wrap the last element of each group to the group's first element
    group_first = order[np.maximum.accumulate(np.where(start, np.arange(order.size), 0))]
    end = np.r_[grp[1:] != grp[:-1], True]
    nxt = np.where(end, group_first, nxt)
    sigma[order] = nxt

    dist = np.empty(n_leaves + 1, dtype=np.int64)
    dist[:n_leaves] = lab[leaves] - lo + 1
    dist[star] = 0
    return PointedMap(origin, sigma, star, 0, dist, cls)


# ---------------------------------------------------------------------------
# map -> tree


def map_to_tree(m: PointedMap, *, positive: bool = False) -> LabelledTree:
    """Inverse construction.

    Marked corners are half-edges pointing one step closer to the star.  The
    tree is grown from the root face: the children of a face are its marked
    corners (in face order, starting right after the anchor), and a corner
    either becomes a leaf or hands over to the face holding the next marked
    corner around the same vertex.
    """
    m._need_rotation()
    root = m.root ^ 1 if positive else m.root
    d = m.dist_to_star
    origin = m.origin
    tgt = m.target
    if d[tgt[root]] != d[origin[root]] - 1:
        if d[tgt[root]] == d[origin[root]] + 1:
            raise MapError("map is not negative: reverse the root half-edge")
        raise MapError("root edge does not join consecutive distances")
    marked = (d[tgt] == d[origin] - 1)
    face_of = m.face_of.tolist()
    phi = m.phi.tolist()
    sigma_inv = np.empty_like(m.sigma)
    sigma_inv[m.sigma] = np.arange(m.sigma.size)
    sigma_inv = sigma_inv.tolist()
    mk = marked.tolist()
    org = origin.tolist()

    def next_marked_face(h: int) -> int:
        x = phi[h]
        while not mk[x]:
            x = phi[x]
        return x

    # the hand-over goes to the next marked corner clockwise around the vertex
    def next_marked_vertex(h: int) -> int:
        x = sigma_inv[h]
        while not mk[x]:
            x = sigma_inv[x]
        return x

    start = {org[root]: root}
    k_out: list[int] = []
    lab_out: list[int] = []
    # each stack frame: (anchor, next corner to emit); a face's children run
    # from the marked corner after its anchor up to the anchor itself
    def face_children(anchor: int) -> list[int]:
        out = []
        x = next_marked_face(anchor)
        while True:
            out.append(x)
            if x == anchor:
                return out
            x = next_marked_face(x)

    ch = face_children(root)
    k_out.append(len(ch))
    lab_out.append(int(d[org[root]]))
    stack = [iter(ch)]
    visited_faces = {face_of[root]}
    while stack:
        c = next(stack[-1], None)
        if c is None:
            stack.pop()
            continue
        w = org[c]
        start.setdefault(w, c)
        nx = next_marked_vertex(c)
        if nx == start[w]:
            k_out.append(0)
            lab_out.append(int(d[w]))
            continue
        f = face_of[nx]
        if f in visited_faces:
            raise MapError("face visited twice; not a valid negative pointed map")
        visited_faces.add(f)
        ch = face_children(nx)
        k_out.append(len(ch))
        lab_out.append(int(d[w]))
        stack.append(iter(ch))
    shift = lab_out[0]
    return LabelledTree(PlaneTree(k_out), [x - shift for x in lab_out])


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    checks: dict[str, bool]
    details: dict[str, object]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]


def _graph_distances(m: PointedMap, source: int) -> np.ndarray:
    from .metrics import bfs  # local import: metrics depends on this module

    return bfs(m, source)


def validate_map(m: PointedMap, lt: LabelledTree | None = None) -> ValidationReport:
    checks: dict[str, bool] = {}
    details: dict[str, object] = {}
    V, E = m.n_vertices, m.n_edges
    used = np.bincount(m.origin, minlength=V)
    checks["vertices_used"] = bool(np.all(used > 0))
    if m.sigma is not None:
        F = m.n_faces
        checks["euler"] = V - E + F == 2
        details["euler"] = {"V": V, "E": E, "F": F}
        degs = m.face_degrees
        checks["even_faces"] = bool(np.all(degs % 2 == 0))
        checks["handshake"] = int(degs.sum()) == 2 * E
        # sigma must permute the half-edges at each vertex
        checks["rotation_consistent"] = bool(np.all(m.origin[m.sigma] == m.origin))
    dist = _graph_distances(m, m.star)
    checks["dist_is_graph_distance"] = bool(np.array_equal(dist, m.dist_to_star))
    ends = m.dist_to_star[m.origin.reshape(-1, 2)]
    checks["edges_join_consecutive_distances"] = bool(np.all(np.abs(ends[:, 0] - ends[:, 1]) == 1))
    checks["negative_root"] = int(m.dist_to_star[m.e_minus]) == int(m.dist_to_star[m.e_plus]) - 1
    if lt is not None:
        tree = lt.tree
        checks["edges_equal_tree_edges"] = E == tree.n_edges
        checks["vertices_equal_leaves_plus_one"] = V == tree.n_leaves + 1
        if m.sigma is not None:
            checks["faces_equal_internal"] = m.n_faces == tree.n_internal
            want = np.sort(2 * tree.k[tree.k > 0])
            checks["face_degrees_match"] = bool(np.array_equal(np.sort(m.face_degrees), want))
            checks["root_face_degree"] = int(m.face_degrees[m.root_face]) == 2 * int(tree.k[0])
        checks["labels_are_distances"] = label_distance_identity(lt, m, dist=dist)
    for name, ok in checks.items():
        if not ok and name not in details:
            details[name] = "failed"
    return ValidationReport(checks, details)


def label_distance_identity(lt: LabelledTree, m: PointedMap, *, dist: np.ndarray | None = None) -> bool:
    """Shifted leaf labels equal graph distances to the star, for every leaf."""
    if dist is None:
        dist = _graph_distances(m, m.star)
    leaves = np.flatnonzero(lt.tree.k == 0)
    if leaves.size + 1 != m.n_vertices:
        return False
    lo = int(lt.labels.min())
    want = lt.labels[leaves] - lo + 1
    vids = m.tree_class[leaves] if m.tree_class is not None else np.arange(leaves.size)
    return bool(np.array_equal(dist[vids], want))


def canonical_code(m: PointedMap) -> tuple:
    """Relabelling-invariant encoding of the rooted, pointed map."""
    m._need_rotation()
    sigma = m.sigma.tolist()
    new = {m.root: 0}
    order = [m.root]
    i = 0
    while i < len(order):
        h = order[i]
        for x in (sigma[h], h ^ 1):
            if x not in new:
                new[x] = len(order)
                order.append(x)
        i += 1
    code = tuple((new[sigma[h]], new[h ^ 1]) for h in order)
    star_mark = min(new[h] for h in np.flatnonzero(m.origin == m.star).tolist())
    return code + (star_mark,)
