"""Directed graphs, incidence matrices, and active-set machinery.

Vertices are labeled 1..n and edges 1..m throughout, matching the usual
convention for edge-difference penalties; all arrays handed to numpy are
0-based internally.  Edge order is canonical per family and defines the row
order of the incidence matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    """Raised for invalid graph constructions or malformed graph files."""


@dataclass(frozen=True)
class DirectedGraph:
    """A directed graph on vertices 1..n with an ordered edge list.

    Parameters
    ----------
    n : int
        Number of vertices.
    edges : tuple[tuple[int, int], ...]
        Ordered list of (tail, head) pairs, 1-indexed, no self-loops.
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("vertex count must be >= 1")
        for k, (u, v) in enumerate(self.edges, start=1):
            if not (1 <= u <= self.n and 1 <= v <= self.n):
                raise GraphError(f"edge {k} endpoint out of range: ({u}, {v})")
            if u == v:
                raise GraphError(f"edge {k} is a self-loop at vertex {u}")

    @property
    def m(self) -> int:
        return len(self.edges)


def path_graph(n: int) -> DirectedGraph:
    """Path graph with edges (i, i+1) for i = 1..n-1."""
    if n < 2:
        raise GraphError("path graph needs n >= 2")
    return DirectedGraph(n, tuple((i, i + 1) for i in range(1, n)))


def cycle_graph(n: int) -> DirectedGraph:
    """Cycle graph: path edges plus the closing edge (n, 1) as edge m = n."""
    if n < 3:
        raise GraphError("cycle graph needs n >= 3")
    return DirectedGraph(n, tuple((i, i + 1) for i in range(1, n)) + ((n, 1),))


def grid_graph(height: int, width: int) -> DirectedGraph:
    """Two dimensional grid, vertices numbered row-major.

    Canonical edge order: all horizontal edges (row-major) first, then all
    vertical edges (row-major).
    """
    if height < 1 or width < 1 or height * width < 2:
        raise GraphError("grid graph needs height*width >= 2")

    def vid(r: int, c: int) -> int:
        return (r - 1) * width + c

    horizontal = [(vid(r, c), vid(r, c + 1))
                  for r in range(1, height + 1) for c in range(1, width)]
    vertical = [(vid(r, c), vid(r + 1, c))
                for r in range(1, height) for c in range(1, width + 1)]
    return DirectedGraph(height * width, tuple(horizontal + vertical))


def tree_graph(parents: Sequence[int]) -> DirectedGraph:
    """Rooted tree from a parent array.

    ``parents[k]`` is the parent of vertex k+2, so the tree has n =
    len(parents)+1 vertices rooted at vertex 1, and edge i = (parent(i+1), i+1).
    Parents may reference any vertex; the array must describe a tree (every
    vertex reaches the root, no cycles).
    """
    n = len(parents) + 1
    if n < 2:
        raise GraphError("tree graph needs n >= 2")
    par = {v: int(parents[v - 2]) for v in range(2, n + 1)}
    for v, p in par.items():
        if not (1 <= p <= n):
            raise GraphError(f"parent of vertex {v} out of range: {p}")
        if p == v:
            raise GraphError(f"vertex {v} is its own parent")
    # every vertex must reach the root without revisiting
    state = {1: 2}  # 0 = in progress, 2 = done
    for v0 in range(2, n + 1):
        chain = []
        v = v0
        while state.get(v, -1) != 2:
            if state.get(v, -1) == 0:
                raise GraphError(f"cycle detected in parent array at vertex {v}")
            state[v] = 0
            chain.append(v)
            v = par[v]
        for w in chain:
            state[w] = 2
    return DirectedGraph(n, tuple((par[v], v) for v in range(2, n + 1)))


def build_graph(family: str, **params) -> DirectedGraph:
    """Build a canonical graph. family is one of path, cycle, grid, tree."""
    if family == "path":
        return path_graph(int(params["n"]))
    if family == "cycle":
        return cycle_graph(int(params["n"]))
    if family == "grid":
        return grid_graph(int(params["height"]), int(params["width"]))
    if family == "tree":
        return tree_graph(list(params["parents"]))
    raise GraphError(f"unknown graph family: {family!r}")


def incidence(graph: DirectedGraph) -> sp.csr_matrix:
    """Incidence matrix of the graph: row i has -1 at the tail of edge i
    and +1 at its head.  Shape (m, n), dtype float64, CSR."""
    m, n = graph.m, graph.n
    rows = np.repeat(np.arange(m), 2)
    cols = np.empty(2 * m, dtype=np.int64)
    data = np.empty(2 * m, dtype=np.float64)
    for i, (u, v) in enumerate(graph.edges):
        cols[2 * i] = u - 1
        cols[2 * i + 1] = v - 1
        data[2 * i] = -1.0
        data[2 * i + 1] = 1.0
    return sp.csr_matrix((data, (rows, cols)), shape=(m, n))


def edge_endpoints(D: sp.spmatrix) -> np.ndarray:
    """Recover 0-based (tail, head) pairs from an incidence matrix.

    Returns an (m, 2) int array; column 0 is the -1 position, column 1 the +1.
    """
    D = sp.csr_matrix(D)
    m = D.shape[0]
    out = np.empty((m, 2), dtype=np.int64)
    for i in range(m):
        sl = slice(D.indptr[i], D.indptr[i + 1])
        idx = D.indices[sl]
        val = D.data[sl]
        nz = val != 0
        idx, val = idx[nz], val[nz]
        if len(idx) != 2 or not set(np.sign(val)) == {-1.0, 1.0}:
            raise GraphError(f"row {i + 1} is not an incidence row")
        out[i, 0] = idx[val < 0][0]
        out[i, 1] = idx[val > 0][0]
    return out


class _UnionFind:
    """Union-find with path compression, for component labeling."""

    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


@dataclass(frozen=True)
class ActiveSet:
    """An active edge subset S together with the component structure of the
    graph with those edges removed.

    Attributes
    ----------
    S : tuple[int, ...]
        Sorted active edge indices, 1-based subset of [m].
    n, m : int
        Vertex and edge counts of the ambient graph.
    comp_label : np.ndarray
        Length-n array, 0-based component id per vertex (ids ordered by the
        smallest vertex in each component).
    comp_sizes : tuple[int, ...]
        Vertices per component; r_S entries.
    inactive : tuple[int, ...]
        Sorted edges not in S; position k of this tuple is row k of the
        reduced operator (the index map i*).
    """

    S: tuple[int, ...]
    n: int
    m: int
    comp_label: np.ndarray
    comp_sizes: tuple[int, ...]
    inactive: tuple[int, ...]

    @property
    def s(self) -> int:
        return len(self.S)

    @property
    def r_S(self) -> int:
        return len(self.comp_sizes)

    @property
    def n_min(self) -> int:
        return min(self.comp_sizes)

    @property
    def n_max(self) -> int:
        return max(self.comp_sizes)

    def i_star(self, i: int) -> int:
        """0-based row index of (1-based) edge i within the reduced operator."""
        k = int(np.searchsorted(np.asarray(self.inactive), i))
        if k >= len(self.inactive) or self.inactive[k] != i:
            raise ValueError(f"edge {i} is active; i* is defined on -S only")
        return k

    def component_vertices(self) -> list[np.ndarray]:
        """0-based vertex arrays per component, ordered by component id."""
        order = np.argsort(self.comp_label, kind="stable")
        bounds = np.searchsorted(self.comp_label[order], np.arange(self.r_S + 1))
        return [order[bounds[c]:bounds[c + 1]] for c in range(self.r_S)]


def active_set(graph: DirectedGraph, S: Iterable[int]) -> ActiveSet:
    """Component structure of the graph after deleting the edges in S."""
    S_sorted = tuple(sorted(set(int(i) for i in S)))
    for i in S_sorted:
        if not (1 <= i <= graph.m):
            raise GraphError(f"active edge index {i} outside 1..{graph.m}")
    uf = _UnionFind(graph.n)
    active = set(S_sorted)
    for i, (u, v) in enumerate(graph.edges, start=1):
        if i not in active:
            uf.union(u - 1, v - 1)
    roots = np.array([uf.find(v) for v in range(graph.n)])
    _, labels = np.unique(roots, return_inverse=True)
    # relabel so component ids follow the smallest contained vertex
    first_seen = {}
    remap = np.empty(labels.max() + 1, dtype=np.int64)
    next_id = 0
    for v in range(graph.n):
        if labels[v] not in first_seen:
            first_seen[labels[v]] = next_id
            remap[labels[v]] = next_id
            next_id += 1
    labels = remap[labels]
    sizes = tuple(int(c) for c in np.bincount(labels))
    inactive = tuple(i for i in range(1, graph.m + 1) if i not in active)
    return ActiveSet(S=S_sorted, n=graph.n, m=graph.m, comp_label=labels,
                     comp_sizes=sizes, inactive=inactive)


def is_admissible(D: sp.spmatrix, active: ActiveSet) -> bool:
    """Whether S is realizable as the exact support of Df for some f.

    S is realizable iff for every i in S the projection of row d_i onto the
    nullspace of the reduced operator is nonzero.  For an incidence matrix
    that projection is the componentwise mean of d_i, which vanishes exactly
    when both endpoints of edge i fall in the same component; the test below
    evaluates that projection criterion exactly.
    """
    if not active.S:
        return True
    ends = edge_endpoints(D)
    lab = active.comp_label
    for i in active.S:
        u, v = ends[i - 1]
        if lab[u] == lab[v]:
            return False
    return True


def write_graph(graph: DirectedGraph, path: str) -> None:
    """Write the plain-text graph format: 'n m' then one 'tail head' per edge."""
    with open(path, "w") as fh:
        fh.write(f"{graph.n} {graph.m}\n")
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


def read_graph(path: str) -> DirectedGraph:
    """Read the plain-text graph format written by :func:`write_graph`."""
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise GraphError(f"{path}: missing 'n m' header")
    n, m = int(tokens[0]), int(tokens[1])
    if len(tokens) != 2 + 2 * m:
        raise GraphError(f"{path}: expected {m} edges, found {(len(tokens) - 2) // 2}")
    vals = [int(t) for t in tokens[2:]]
    edges = tuple((vals[2 * i], vals[2 * i + 1]) for i in range(m))
    return DirectedGraph(n, edges)


def read_active_set(path: str) -> tuple[int, ...]:
    """Read an active-set file: one 1-based edge index per line."""
    with open(path) as fh:
        return tuple(int(line) for line in fh.read().split())


def write_active_set(S: Iterable[int], path: str) -> None:
    with open(path, "w") as fh:
        for i in sorted(set(int(j) for j in S)):
            fh.write(f"{i}\n")
