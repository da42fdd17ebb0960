"""Signed graph families: random regular, periodic grid, star, and tree
generators, plus coupling assignment and JSON serialization.

Vertices are 0-based integers. Edges are unordered pairs stored once as
(r, t) with r < t. A graph either has no couplings at all (fresh from a
generator) or a nonzero coupling on every edge (after assign_couplings).
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

REGULAR_RETRY_CAP = 1000

Edge = tuple[int, int]


def _canonical_edge(r: int, t: int) -> Edge:
    return (r, t) if r < t else (t, r)


@dataclass(frozen=True)
class CouplingScheme:
    """How coupling values are assigned to edges.

    kind:
        "uniform"       -- every edge gets +value
        "mixed"         -- magnitude value, sign drawn i.i.d. (+1 with
                           probability sign_probability)
        "degree_scaled" -- every edge gets value / sqrt(max degree)
    """

    kind: str
    value: float
    sign_probability: float = 0.5

    def __post_init__(self):
        if self.kind not in ("uniform", "mixed", "degree_scaled"):
            raise ValueError(f"unknown coupling scheme kind: {self.kind!r}")
        if self.value <= 0:
            raise ValueError("coupling magnitude must be positive")
        if not 0.0 <= self.sign_probability <= 1.0:
            raise ValueError("sign_probability must be in [0, 1]")

    @classmethod
    def uniform(cls, theta0: float) -> CouplingScheme:
        return cls("uniform", theta0)

    @classmethod
    def mixed(cls, theta0: float, sign_probability: float = 0.5) -> CouplingScheme:
        return cls("mixed", theta0, sign_probability)

    @classmethod
    def degree_scaled(cls, amplitude: float) -> CouplingScheme:
        return cls("degree_scaled", amplitude)


@dataclass(frozen=True)
class SignedGraph:
    """Undirected simple graph with optional nonzero edge couplings."""

    p: int
    edges: tuple[Edge, ...]
    couplings: dict[Edge, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("vertex count must be >= 1")
        seen = set()
        for r, t in self.edges:
            if r == t:
                raise ValueError(f"self-loop at vertex {r}")
            if not (0 <= r < t < self.p):
                raise ValueError(f"edge ({r},{t}) not canonical or out of range")
            if (r, t) in seen:
                raise ValueError(f"duplicate edge ({r},{t})")
            seen.add((r, t))
        if self.couplings:
            if set(self.couplings) != seen:
                raise ValueError("couplings must cover exactly the edge set")
            for e, j in self.couplings.items():
                if j == 0.0:
                    raise ValueError(f"zero coupling on edge {e}")
        # canonical storage order for deterministic serialization
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))

    @property
    def has_couplings(self) -> bool:
        return bool(self.couplings) or not self.edges

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.p, dtype=np.int64)
        for r, t in self.edges:
            deg[r] += 1
            deg[t] += 1
        deg.setflags(write=False)
        return deg

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.p else 0

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.p)]
        for r, t in self.edges:
            adj[r].append(t)
            adj[t].append(r)
        return tuple(tuple(sorted(a)) for a in adj)

    def coupling(self, r: int, t: int) -> float:
        """Coupling of the unordered pair {r, t}; 0.0 for non-edges."""
        return self.couplings.get(_canonical_edge(r, t), 0.0)

    def coupling_matrix(self) -> np.ndarray:
        """Dense symmetric p x p matrix of couplings (zero diagonal)."""
        self._require_couplings()
        J = np.zeros((self.p, self.p))
        for (r, t), j in self.couplings.items():
            J[r, t] = j
            J[t, r] = j
        return J

    def is_acyclic(self) -> bool:
        """Union-find cycle check; True for forests (trees included)."""
        parent = list(range(self.p))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for r, t in self.edges:
            ra, rb = find(r), find(t)
            if ra == rb:
                return False
            parent[ra] = rb
        return True

    def _require_couplings(self):
        if not self.has_couplings:
            raise ValueError("graph has no couplings assigned")

    def to_json(self) -> str:
        rows = []
        for r, t in self.edges:
            j = self.couplings.get((r, t))
            rows.append([r, t, j])
        return json.dumps({"p": self.p, "edges": rows})

    @classmethod
    def from_json(cls, text: str) -> SignedGraph:
        obj = json.loads(text)
        edges = []
        couplings = {}
        for row in obj["edges"]:
            r, t, j = row
            edges.append((int(r), int(t)))
            if j is not None:
                couplings[(int(r), int(t))] = float(j)
        return cls(p=int(obj["p"]), edges=tuple(edges), couplings=couplings)


def generate_random_regular(p: int, d: int, seed: int) -> SignedGraph:
    """Uniform-ish simple d-regular graph on p vertices via the
    configuration (pairing) model with rejection of self-loops and
    multi-edges.

    Raises ValueError when p*d is odd or d is out of range, RuntimeError
    if no simple pairing is found within REGULAR_RETRY_CAP attempts.
    """
    if d < 3:
        raise ValueError("degree must be >= 3")
    if d >= p:
        raise ValueError("degree must be < p")
    if (p * d) % 2 != 0:
        raise ValueError("p*d must be even")
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(p, dtype=np.int64), d)
    for _ in range(REGULAR_RETRY_CAP):
        rng.shuffle(stubs)
        edges = set()
        ok = True
        for i in range(0, stubs.size, 2):
            u, v = int(stubs[i]), int(stubs[i + 1])
            if u == v:
                ok = False
                break
            e = _canonical_edge(u, v)
            if e in edges:
                ok = False
                break
            edges.add(e)
        if ok:
            return SignedGraph(p=p, edges=tuple(sorted(edges)))
    raise RuntimeError(
        f"failed to generate a simple {d}-regular graph on {p} vertices "
        f"within {REGULAR_RETRY_CAP} pairing attempts"
    )


def generate_grid_periodic(rows: int, cols: int) -> SignedGraph:
    """rows x cols square lattice with periodic boundary (torus, degree 4).

    Both dimensions must be >= 3; shorter wrap-arounds would duplicate
    edges and break simplicity.
    """
    if rows < 3 or cols < 3:
        raise ValueError("periodic grid needs rows >= 3 and cols >= 3")
    p = rows * cols
    edges = set()
    for i in range(rows):
        for j in range(cols):
            v = i * cols + j
            right = i * cols + (j + 1) % cols
            down = ((i + 1) % rows) * cols + j
            edges.add(_canonical_edge(v, right))
            edges.add(_canonical_edge(v, down))
    return SignedGraph(p=p, edges=tuple(sorted(edges)))


def generate_star(p: int, d: int) -> SignedGraph:
    """Hub vertex 0 joined to vertices 1..d; the remaining p-1-d vertices
    stay isolated so the nominal problem size is p."""
    if d < 1:
        raise ValueError("hub degree must be >= 1")
    if d > p - 1:
        raise ValueError("hub degree must be <= p-1")
    edges = tuple((0, t) for t in range(1, d + 1))
    return SignedGraph(p=p, edges=edges)


def generate_random_tree(p: int, d_max: int, seed: int) -> SignedGraph:
    """Random labelled tree on p vertices with maximum degree <= d_max,
    grown by attaching each new vertex to a uniformly random vertex that
    still has spare degree."""
    if p < 2:
        raise ValueError("tree needs p >= 2")
    if d_max < 2:
        raise ValueError("d_max must be >= 2")
    rng = np.random.default_rng(seed)
    deg = np.zeros(p, dtype=np.int64)
    edges = []
    for v in range(1, p):
        eligible = np.flatnonzero(deg[:v] < d_max)
        u = int(eligible[rng.integers(eligible.size)])
        edges.append((u, v))
        deg[u] += 1
        deg[v] += 1
    return SignedGraph(p=p, edges=tuple(edges))


def generate_bethe_tree(p: int, d: int) -> SignedGraph:
    """Deterministic tree whose interior vertices all have degree exactly d
    (root included), filled breadth-first until p vertices.

    This is the regular-tree surrogate used for population-level analyses
    of degree-d regular graphs: any closed form that depends only on the
    local degree-d branching holds exactly on its interior.
    """
    if p < 2:
        raise ValueError("tree needs p >= 2")
    if d < 2:
        raise ValueError("degree must be >= 2")
    edges = []
    queue = deque([0])
    deg = [0] * p
    nxt = 1
    while nxt < p:
        v = queue[0]
        edges.append((v, nxt))
        deg[v] += 1
        deg[nxt] += 1
        queue.append(nxt)
        nxt += 1
        if deg[v] >= d:
            queue.popleft()
    return SignedGraph(p=p, edges=tuple(edges))


def assign_couplings(graph: SignedGraph, scheme: CouplingScheme, seed: int = 0) -> SignedGraph:
    """Return a copy of the graph with couplings drawn per the scheme.

    Signs for the mixed scheme are drawn i.i.d. in sorted edge order, so
    the result is deterministic given the seed.
    """
    if not graph.edges:
        raise ValueError("graph has no edges to assign couplings to")
    rng = np.random.default_rng(seed)
    couplings: dict[Edge, float] = {}
    if scheme.kind == "uniform":
        for e in graph.edges:
            couplings[e] = scheme.value
    elif scheme.kind == "mixed":
        signs = np.where(rng.random(len(graph.edges)) < scheme.sign_probability, 1.0, -1.0)
        for e, s in zip(graph.edges, signs):
            couplings[e] = s * scheme.value
    else:  # degree_scaled
        j = scheme.value / math.sqrt(graph.max_degree)
        for e in graph.edges:
            couplings[e] = j
    return SignedGraph(p=graph.p, edges=graph.edges, couplings=couplings)


def signed_edge_set(graph: SignedGraph) -> dict[Edge, int]:
    """Map each edge to the sign of its coupling."""
    graph._require_couplings()
    return {e: (1 if j > 0 else -1) for e, j in sorted(graph.couplings.items())}


def signed_neighborhood_sets(graph: SignedGraph) -> dict[int, dict[int, int]]:
    """Per-vertex signed neighborhoods {r: {t: sign(J_rt)}}; isolated
    vertices map to empty dicts."""
    graph._require_couplings()
    out: dict[int, dict[int, int]] = {r: {} for r in range(graph.p)}
    for (r, t), j in graph.couplings.items():
        s = 1 if j > 0 else -1
        out[r][t] = s
        out[t][r] = s
    return out


def path_length(graph: SignedGraph, r: int, t: int) -> int | None:
    """Shortest-path edge count between r and t; None if unreachable."""
    if r == t:
        raise ValueError("endpoints must differ")
    if not (0 <= r < graph.p and 0 <= t < graph.p):
        raise ValueError("vertex index out of range")
    dist = {r: 0}
    queue = deque([r])
    while queue:
        v = queue.popleft()
        if v == t:
            return dist[v]
        for u in graph.neighbors[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    return None
