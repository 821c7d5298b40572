import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sparse
from scipy.spatial import cKDTree

from core.errors import EmptyPointSetError, DimensionMismatchError
from core.pcgeom import morton_codes

logger = logging.getLogger("Graph")

# Extra candidates fetched per query so distance ties at the k-th
# neighbour are usually resolved without a second lookup
TIE_CUSHION = 2


@dataclass(frozen=True, eq=False)
class PointGraph:
    """
    Directed weighted graph stored as a flat edge list.
    Row i's out-edges are rows == i, ordered nearest first.
    """
    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    degrees: np.ndarray

    @property
    def n(self):
        return self.n_rows

    @property
    def edges(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.weights.tolist()))

    def neighbors(self, i):
        mask = self.rows == i
        return self.cols[mask], self.weights[mask]

    @cached_property
    def matrix(self):
        return sparse.csr_matrix(
            (self.weights, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols))


def _as_points(points):
    points = np.asarray(points, dtype=np.float64)
    return points.reshape(-1, 3)


def _rank_neighbors(query, reference, k, exclude_self, workers=1):
    """
    Returns (idx, d2) of shape (M, k): the k nearest reference points of every
    query, ranked by exact squared distance, then Morton code, then index.
    """
    n_ref = len(reference)
    codes = morton_codes(np.floor(reference).astype(np.int64))
    tree = cKDTree(reference)

    m = min(n_ref, k + int(exclude_self) + TIE_CUSHION * k)
    _, cand = tree.query(query, k=m, workers=workers)
    cand = np.asarray(cand, dtype=np.int64).reshape(len(query), m)

    diff = reference[cand] - query[:, None, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    d2_raw = d2.copy()
    if exclude_self:
        d2[cand == np.arange(len(query))[:, None]] = np.inf

    idx, ranked_d2 = _lexsort_rows(cand, d2, codes, k)

    # A row may have lost tied candidates beyond the m-th neighbour unless
    # its farthest candidate is strictly farther than its k-th neighbour
    if m < n_ref:
        incomplete = np.flatnonzero(d2_raw.max(axis=1) <= ranked_d2[:, -1])
        if len(incomplete):
            logger.debug(f"KNN tie fallback for {len(incomplete)} rows")
        for i in incomplete:
            radius = np.sqrt(ranked_d2[i, -1]) * (1 + 1e-9) + 1e-9
            ball = np.asarray(tree.query_ball_point(query[i], radius), dtype=np.int64)
            bdiff = reference[ball] - query[i]
            bd2 = np.einsum("jk,jk->j", bdiff, bdiff)
            if exclude_self:
                bd2[ball == i] = np.inf
            row_idx, row_d2 = _lexsort_rows(ball[None, :], bd2[None, :], codes, k)
            idx[i], ranked_d2[i] = row_idx[0], row_d2[0]

    return idx, ranked_d2


def _lexsort_rows(cand, d2, codes, k):
    n_rows, m = cand.shape
    row_ids = np.repeat(np.arange(n_rows), m)
    flat = cand.ravel()
    order = np.lexsort((flat, codes[flat], d2.ravel(), row_ids)).reshape(n_rows, m)
    order = order[:, :k]
    return flat[order], d2.ravel()[order]


def build_knn_graph(points, k, workers=1):
    """Directed k-nearest-neighbour graph with 1/distance weights and no self edges."""
    points = _as_points(points)
    n = len(points)
    if n == 0:
        raise EmptyPointSetError("Cannot build a KNN graph over zero points")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")

    kk = min(k, n - 1)
    if kk == 0:
        empty = np.zeros(0, dtype=np.int64)
        return PointGraph(n, n, empty, empty, np.zeros(0), np.zeros(n))

    idx, d2 = _rank_neighbors(points, points, kk, exclude_self=True, workers=workers)
    weights = 1.0 / np.sqrt(d2)
    rows = np.repeat(np.arange(n), kk)
    return PointGraph(n, n, rows, idx.ravel(), weights.ravel(), weights.sum(axis=1))


def build_cross_knn(query, reference, k, workers=1):
    """
    Bipartite graph from each query point to its min(k, N) nearest reference
    points. A query coincident with a reference point keeps only that edge,
    with weight 1.
    """
    query = _as_points(query)
    reference = _as_points(reference)
    if len(reference) == 0:
        raise EmptyPointSetError("Cross KNN needs at least one reference point")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")

    kk = min(k, len(reference))
    if len(query) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return PointGraph(0, len(reference), empty, empty, np.zeros(0), np.zeros(0))

    idx, d2 = _rank_neighbors(query, reference, kk, exclude_self=False, workers=workers)

    coincident = d2[:, 0] == 0
    with np.errstate(divide="ignore"):
        weights = 1.0 / np.sqrt(d2)
    keep = np.ones_like(idx, dtype=bool)
    keep[coincident, 1:] = False
    weights[coincident, 0] = 1.0

    rows = np.repeat(np.arange(len(query)), kk).reshape(-1, kk)
    weights = np.where(keep, weights, 0.0)
    graph = PointGraph(
        len(query), len(reference),
        rows[keep], idx[keep], weights[keep], weights.sum(axis=1))
    if coincident.any():
        logger.debug(f"{int(coincident.sum())} query points coincide with a reference point")
    return graph


def smooth(graph, signal):
    """Row-normalised one-hop average D^-1 W x. Isolated rows pass through unchanged."""
    signal = np.asarray(signal, dtype=np.float64)
    flat = signal.ndim == 1
    x = signal.reshape(len(signal), -1)
    if len(x) != graph.n_cols:
        raise DimensionMismatchError(
            f"Signal has {len(x)} rows, graph expects {graph.n_cols}")

    out = graph.matrix @ x
    isolated = graph.degrees == 0
    out[~isolated] /= graph.degrees[~isolated, None]
    if isolated.any():
        if graph.n_rows != graph.n_cols:
            raise DimensionMismatchError("Isolated rows in a bipartite graph have no pass-through value")
        out[isolated] = x[isolated]
    return out.ravel() if flat else out
