"""Blockwise pseudoinverses of reduced incidence matrices, nullspace
projections, antiprojection lengths, the inverse scaling factor, and weights.

The reduced operator splits into independent blocks, one per connected
component left after deleting the active edges.  Tree components admit an
exact combinatorial pseudoinverse (each column is a centered, signed subtree
indicator), so their column norms and noise correlations come out in O(n_i)
without materializing anything dense.  Components containing cycles fall
back to a dense SVD pseudoinverse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graphs import ActiveSet, edge_endpoints

# singular values below RANK_RTOL * largest are treated as zero
RANK_RTOL = 1e-10


class _TreeBlock:
    """Pseudoinverse block of a tree component, kept in implicit form.

    Column for edge e equals sign_e * (1_B - |B|/n_c) restricted to the
    component, where B is the vertex set cut off from the (local) root by
    deleting e and sign_e is +1 when the edge head lies in B.
    """

    def __init__(self, vertices: np.ndarray, ends_local: np.ndarray):
        # vertices: global 0-based ids; ends_local: (k, 2) local (tail, head)
        self.vertices = vertices
        self.nc = len(vertices)
        k = len(ends_local)
        if k != self.nc - 1:
            raise ValueError("tree block must have n_c - 1 edges")
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.nc)]
        for e, (u, v) in enumerate(ends_local):
            adj[u].append((v, e))
            adj[v].append((u, e))
        # iterative DFS from local root 0: preorder, parent pointers
        preorder = np.empty(self.nc, dtype=np.int64)
        parent = np.full(self.nc, -1, dtype=np.int64)
        parent_edge = np.full(self.nc, -1, dtype=np.int64)
        seen = np.zeros(self.nc, dtype=bool)
        stack = [0]
        seen[0] = True
        pos = 0
        while stack:
            v = stack.pop()
            preorder[pos] = v
            pos += 1
            for w, e in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    parent[w] = v
                    parent_edge[w] = e
                    stack.append(w)
        if pos != self.nc:
            raise ValueError("component is not connected")
        self.preorder = preorder
        self.parent = parent
        # subtree sizes by reverse preorder accumulation
        sub = np.ones(self.nc, dtype=np.int64)
        for v in preorder[::-1]:
            if parent[v] >= 0:
                sub[parent[v]] += sub[v]
        # per edge: the child vertex (far side from root) and orientation sign
        child = np.empty(k, dtype=np.int64)
        sign = np.empty(k, dtype=np.float64)
        for e, (u, v) in enumerate(ends_local):
            if parent[v] == u:
                child[e] = v
                sign[e] = 1.0   # head on the far side
            elif parent[u] == v:
                child[e] = u
                sign[e] = -1.0  # tail on the far side
            else:
                raise ValueError("edge does not match tree structure")
        self.child = child
        self.sign = sign
        self.cut_size = sub[child]

    def column_norms_sq(self) -> np.ndarray:
        """Squared l2 norms of the pseudoinverse columns: b*(n_c-b)/n_c."""
        b = self.cut_size.astype(np.float64)
        return b * (self.nc - b) / self.nc

    def apply_transpose(self, V: np.ndarray) -> np.ndarray:
        """Column-wise inner products (D+)' V for V of shape (n, B).

        Uses subtree sums: col_e' v = sign_e * (sum_B v - |B|/n_c * sum_C v).
        """
        sub_sum = V[self.vertices].astype(np.float64, copy=True)
        for v in self.preorder[::-1]:
            p = self.parent[v]
            if p >= 0:
                sub_sum[p] += sub_sum[v]
        total = sub_sum[0]
        frac = self.cut_size / self.nc
        return self.sign[:, None] * (sub_sum[self.child] - frac[:, None] * total[None, :])

    def to_dense(self, n: int) -> np.ndarray:
        """Materialized (n, k) block embedded at the component's vertices."""
        out = np.zeros((n, len(self.child)), dtype=np.float64)
        members = self._cut_members()
        for e in range(len(self.child)):
            col = np.full(self.nc, -self.cut_size[e] / self.nc)
            col[members[e]] += 1.0
            out[self.vertices, e] = self.sign[e] * col
        return out

    def _cut_members(self) -> list[np.ndarray]:
        # subtree membership via preorder intervals
        tin = np.empty(self.nc, dtype=np.int64)
        tin[self.preorder] = np.arange(self.nc)
        # subtree of v occupies preorder positions [tin[v], tin[v]+sub[v])
        sub = np.ones(self.nc, dtype=np.int64)
        for v in self.preorder[::-1]:
            if self.parent[v] >= 0:
                sub[self.parent[v]] += sub[v]
        return [self.preorder[tin[c]:tin[c] + sub[c]] for c in self.child]


class _DenseBlock:
    """SVD pseudoinverse block for a component containing cycles."""

    def __init__(self, vertices: np.ndarray, block_incidence: np.ndarray):
        self.vertices = vertices
        self.pinv = np.linalg.pinv(block_incidence, rcond=RANK_RTOL)

    def column_norms_sq(self) -> np.ndarray:
        return np.sum(self.pinv ** 2, axis=0)

    def apply_transpose(self, V: np.ndarray) -> np.ndarray:
        return self.pinv.T @ V[self.vertices]

    def to_dense(self, n: int) -> np.ndarray:
        out = np.zeros((n, self.pinv.shape[1]), dtype=np.float64)
        out[self.vertices, :] = self.pinv
        return out


@dataclass
class PseudoInverse:
    """Block-structured Moore-Penrose pseudoinverse of a reduced incidence
    matrix, with columns ordered like the rows of the reduced operator."""

    n: int
    n_cols: int
    blocks: list
    col_of_block: list[np.ndarray]  # per block: global column positions

    def column_norms(self) -> np.ndarray:
        """l2 norms of the n_cols pseudoinverse columns."""
        out = np.empty(self.n_cols)
        for blk, cols in zip(self.blocks, self.col_of_block):
            out[cols] = np.sqrt(blk.column_norms_sq())
        return out

    def apply_transpose(self, V: np.ndarray) -> np.ndarray:
        """(D+)' V, shape (n_cols,) or (n_cols, B) matching V."""
        V = np.asarray(V, dtype=np.float64)
        single = V.ndim == 1
        V2 = V[:, None] if single else V
        out = np.empty((self.n_cols, V2.shape[1]))
        for blk, cols in zip(self.blocks, self.col_of_block):
            out[cols] = blk.apply_transpose(V2)
        return out[:, 0] if single else out

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n_cols))
        for blk, cols in zip(self.blocks, self.col_of_block):
            out[:, cols] = blk.to_dense(self.n)
        return out


def pseudoinverse(D: sp.spmatrix, active: ActiveSet) -> PseudoInverse:
    """Blockwise pseudoinverse of the reduced operator D with the rows in S
    removed.  Tree components use the exact combinatorial construction;
    components with cycles use a dense SVD pseudoinverse."""
    if len(active.inactive) == 0:
        raise ValueError("no rows to invert: every edge is active")
    ends = edge_endpoints(D)
    lab = active.comp_label
    comp_vertices = active.component_vertices()
    # local vertex index within each component
    local = np.empty(active.n, dtype=np.int64)
    for verts in comp_vertices:
        local[verts] = np.arange(len(verts))
    # group inactive edges by component
    edge_comp = [[] for _ in range(active.r_S)]
    for k, i in enumerate(active.inactive):
        u, v = ends[i - 1]
        if lab[u] != lab[v]:
            raise ValueError(f"inactive edge {i} spans two components")
        edge_comp[lab[u]].append((k, local[u], local[v]))
    blocks, col_of_block = [], []
    for c, items in enumerate(edge_comp):
        if not items:
            continue
        cols = np.array([k for k, _, _ in items], dtype=np.int64)
        ends_local = np.array([(u, v) for _, u, v in items], dtype=np.int64)
        verts = comp_vertices[c]
        if len(items) == len(verts) - 1:
            blocks.append(_TreeBlock(verts, ends_local))
        else:
            B = np.zeros((len(items), len(verts)))
            B[np.arange(len(items)), ends_local[:, 0]] = -1.0
            B[np.arange(len(items)), ends_local[:, 1]] = 1.0
            blocks.append(_DenseBlock(verts, B))
        col_of_block.append(cols)
    return PseudoInverse(n=active.n, n_cols=len(active.inactive),
                         blocks=blocks, col_of_block=col_of_block)


def project_nullspace(active: ActiveSet, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection of v onto the nullspace of the reduced operator:
    the componentwise mean of v replicated on each component."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != active.n:
        raise ValueError(f"vector length {v.shape[0]} != n = {active.n}")
    lab = active.comp_label
    sizes = np.asarray(active.comp_sizes, dtype=np.float64)
    if v.ndim == 1:
        sums = np.bincount(lab, weights=v, minlength=active.r_S)
        return (sums / sizes)[lab]
    out = np.empty_like(v)
    for j in range(v.shape[1]):
        sums = np.bincount(lab, weights=v[:, j], minlength=active.r_S)
        out[:, j] = (sums / sizes)[lab]
    return out


def antiproject_nullspace(active: ActiveSet, v: np.ndarray) -> np.ndarray:
    """v minus its nullspace projection (the rowspan part of v)."""
    return np.asarray(v, dtype=np.float64) - project_nullspace(active, v)


@dataclass(frozen=True)
class TheoryReport:
    """Antiprojection lengths, inverse scaling factor, and weights for a
    reduced operator.

    omega[i-1] is the scaled norm of the pseudoinverse column matched to edge
    i (zero on active edges), gamma is its maximum over inactive edges, and
    weights[i-1] = 1 - omega[i-1]/gamma (so active edges carry weight 1).
    """

    omega: np.ndarray
    gamma: float
    weights: np.ndarray
    r_S: int
    component_sizes: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "omega": self.omega.tolist(),
            "gamma": self.gamma,
            "weights": self.weights.tolist(),
            "r_S": self.r_S,
            "component_sizes": list(self.component_sizes),
        }


def theory_report(D: sp.spmatrix, active: ActiveSet) -> TheoryReport:
    """Compute omega, gamma and the weight vector for (D, S)."""
    if len(active.inactive) == 0:
        raise ValueError("no rows to invert: every edge is active")
    pinv = pseudoinverse(D, active)
    col_norms = pinv.column_norms()          # l2 norms
    omega = np.zeros(active.m)
    omega[np.asarray(active.inactive) - 1] = col_norms / math.sqrt(active.n)
    gamma = float(omega.max())
    if gamma <= 0.0:
        raise ValueError("inverse scaling factor is zero; reduced operator is degenerate")
    weights = 1.0 - omega / gamma
    return TheoryReport(omega=omega, gamma=gamma, weights=weights,
                        r_S=active.r_S, component_sizes=active.comp_sizes)


def gamma_bound(family: str, n: int, n_max: int, grid_constant: float | None = None) -> float:
    """Closed-form upper bound on the inverse scaling factor.

    Trees and cycles (cycle requires a nonempty active set): sqrt((n_max+1)/(4n)).
    Grids: grid_constant * sqrt(log(n_max)/n); the multiplicative constant is
    not pinned down by theory and must be supplied by the caller.
    """
    if family in ("tree", "path", "cycle"):
        return math.sqrt((n_max + 1) / (4.0 * n))
    if family == "grid":
        if grid_constant is None or grid_constant <= 0:
            raise ValueError("grid family requires a positive grid_constant")
        return grid_constant * math.sqrt(math.log(n_max) / n)
    raise ValueError(f"no scaling-factor bound for family {family!r}")
