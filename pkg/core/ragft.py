import logging
from dataclasses import dataclass

import numpy as np

from core.errors import (
    BlockSizeError, BlockGeometryError, LayoutMismatchError, CloudInvariantError
)
from core.pcgeom import morton_codes

logger = logging.getLogger("RAGFT")

# Upper bound on B * m * m entries per batched eigen problem
BATCH_ENTRIES = 1 << 21
# Eigenvalues closer than this (relative) are treated as tied
TIE_TOLERANCE = 1e-8


def resolve_block_sizes(block_sizes, depth):
    """
    Normalises block sizes to a coarsest-first tuple.
    An int b means b at every level; a sequence is read finest level first
    and may end with Ellipsis to repeat its last size up to the root.
    """
    if isinstance(block_sizes, (int, np.integer)):
        block_sizes = (int(block_sizes), ...)
    sizes = list(block_sizes)
    repeat = bool(sizes) and sizes[-1] is Ellipsis
    if repeat:
        sizes.pop()
        if not sizes:
            raise BlockSizeError("Nothing to repeat in block sizes")
    finest_first = [int(b) for b in sizes]
    for b in finest_first:
        if b < 2 or b & (b - 1):
            raise BlockSizeError(f"Block size must be a power of two >= 2, got {b}")

    if repeat:
        used = sum(b.bit_length() - 1 for b in finest_first)
        shift = finest_first[-1].bit_length() - 1
        if used > depth or (depth - used) % shift:
            raise BlockSizeError(
                f"Block sizes {finest_first}... cannot tile depth {depth}")
        finest_first += [finest_first[-1]] * ((depth - used) // shift)

    total = int(np.prod(finest_first)) if finest_first else 1
    if total != 1 << depth:
        raise BlockSizeError(
            f"Block sizes {finest_first} multiply to {total}, expected 2^{depth}")
    return tuple(reversed(finest_first))


@dataclass(frozen=True, eq=False)
class Level:
    points: np.ndarray      # N_l x 3 in level-l voxel units, Morton sorted
    weights: np.ndarray     # N_l importance weights q_{i,l}
    parent_of: np.ndarray   # parent index at level l-1 (None at level 0)
    child_ptr: np.ndarray   # children of i at level l+1: child_ptr[i]:child_ptr[i+1] (None at level L)

    @property
    def n(self):
        return len(self.points)

    def children_of(self, i):
        return np.arange(self.child_ptr[i], self.child_ptr[i + 1])


@dataclass(frozen=True, eq=False)
class ResolutionHierarchy:
    levels: tuple
    block_sizes: tuple  # b_l for l = 0 .. L-1, coarsest first
    depth: int

    @property
    def L(self):
        return len(self.block_sizes)

    @property
    def counts(self):
        return [lvl.n for lvl in self.levels]

    def detail_count(self, level):
        return self.levels[level + 1].n - self.levels[level].n


def build_hierarchy(cloud, block_sizes):
    """Octree-style decomposition: parents are distinct coordinate quotients by b_l."""
    sizes = resolve_block_sizes(block_sizes, cloud.depth)
    if cloud.n == 0:
        raise CloudInvariantError("Cannot build a hierarchy over an empty cloud")

    codes = morton_codes(cloud.coords, cloud.depth)
    if np.any(np.diff(codes) <= 0):
        raise CloudInvariantError("build_hierarchy expects a Morton-sorted cloud")

    points = cloud.coords
    weights = np.ones(cloud.n)
    finest_to_coarsest = []
    parent_links = []

    for b in reversed(sizes):
        shift = b.bit_length() - 1
        parent_codes = codes >> (3 * shift)
        is_start = np.empty(len(parent_codes), dtype=bool)
        is_start[0] = True
        is_start[1:] = parent_codes[1:] != parent_codes[:-1]
        starts = np.flatnonzero(is_start)

        finest_to_coarsest.append((points, weights))
        parent_links.append((np.cumsum(is_start) - 1, np.append(starts, len(codes))))

        points = points[starts] >> shift
        weights = np.add.reduceat(weights, starts)
        codes = parent_codes[starts]

    finest_to_coarsest.append((points, weights))
    finest_to_coarsest.reverse()
    parent_links.reverse()

    levels = []
    for l, (pts, w) in enumerate(finest_to_coarsest):
        parent_of = parent_links[l - 1][0] if l > 0 else None
        child_ptr = parent_links[l][1] if l < len(sizes) else None
        levels.append(Level(pts, w, parent_of, child_ptr))

    hier = ResolutionHierarchy(tuple(levels), sizes, cloud.depth)
    logger.debug(f"Hierarchy with block sizes {sizes}: level counts {hier.counts}")
    return hier


# --- Block transforms ---

def _block_bases(coords, weights):
    """
    Batched block GFT: eigenvectors of Q^-1/2 (D - W) Q^-1/2 for B blocks of m
    points each, W the complete inverse-distance graph. Returns (B, m, m).
    """
    B, m = weights.shape
    if m == 1:
        return np.ones((B, 1, 1))

    diff = coords[:, :, None, :] - coords[:, None, :, :]
    dist = np.sqrt(np.einsum("bijk,bijk->bij", diff, diff))
    off_diag = ~np.eye(m, dtype=bool)
    if np.any(dist[:, off_diag] == 0):
        raise BlockGeometryError("Block contains repeated coordinates")

    adjacency = np.zeros_like(dist)
    adjacency[:, off_diag] = 1.0 / dist[:, off_diag]
    laplacian = -adjacency
    diag = np.arange(m)
    laplacian[:, diag, diag] = adjacency.sum(axis=2)

    inv_sqrt_q = 1.0 / np.sqrt(weights)
    normalized = inv_sqrt_q[:, :, None] * laplacian * inv_sqrt_q[:, None, :]
    vals, vecs = np.linalg.eigh(normalized)

    # Null vector of the normalised Laplacian is sqrt(q) up to rounding
    vecs[:, :, 0] = np.sqrt(weights) / np.sqrt(weights.sum(axis=1, keepdims=True))

    pivot = np.argmax(np.round(np.abs(vecs), 12), axis=1)
    signs = np.sign(np.take_along_axis(vecs, pivot[:, None, :], axis=1))
    signs[signs == 0] = 1.0
    vecs *= signs

    scale = np.maximum(1.0, np.abs(vals).max(axis=1, keepdims=True))
    tied = np.diff(vals[:, 1:], axis=1) < TIE_TOLERANCE * scale
    for b in np.flatnonzero(tied.any(axis=1)):
        _order_tied_columns(vecs[b], tied[b])
    return vecs


def _order_tied_columns(U, tied):
    # tied[j] means eigenvalues of columns j+1 and j+2 coincide
    m = U.shape[1]
    start = 1
    while start < m:
        end = start + 1
        while end < m and tied[end - 2]:
            end += 1
        if end - start > 1:
            cols = list(range(start, end))
            keys = {c: tuple(np.round(U[:, c], 8)) for c in cols}
            U[:, start:end] = U[:, sorted(cols, key=keys.get)]
        start = end


def block_gft(child_coords, child_weights):
    """Orthonormal block transform whose first column is the DC vector sqrt(q)/||sqrt(q)||."""
    coords = np.asarray(child_coords, dtype=np.float64).reshape(-1, 3)
    weights = np.asarray(child_weights, dtype=np.float64).ravel()
    if len(coords) == 0:
        raise BlockGeometryError("Block has no points")
    if len(weights) != len(coords):
        raise LayoutMismatchError("One weight per block point is required")
    if np.any(weights <= 0):
        raise BlockGeometryError("Block weights must be positive")
    return _block_bases(coords[None], weights[None])[0]


class LevelTransform:
    """
    T_l for one level: per-block orthonormal matrices grouped by block size.
    Details are laid out by parent (Morton order), then eigenvalue index.
    """

    def __init__(self, hier, level):
        self.level = level
        parent_level = hier.levels[level]
        child_level = hier.levels[level + 1]
        self.n_parents = parent_level.n
        self.n_children = child_level.n

        ptr = parent_level.child_ptr
        sizes = np.diff(ptr)
        detail_ptr = np.concatenate([[0], np.cumsum(sizes - 1)])
        self.n_details = int(detail_ptr[-1])

        self.groups = []
        for m in np.unique(sizes):
            m = int(m)
            parents = np.flatnonzero(sizes == m)
            child_idx = ptr[parents][:, None] + np.arange(m)
            det_idx = detail_ptr[parents][:, None] + np.arange(m - 1)
            bases = self._bases(child_level, child_idx)
            self.groups.append((parents, child_idx, det_idx, bases))

    @staticmethod
    def _bases(child_level, child_idx):
        B, m = child_idx.shape
        chunk = max(1, BATCH_ENTRIES // (m * m))
        out = np.empty((B, m, m))
        coords = child_level.points.astype(np.float64)
        for s in range(0, B, chunk):
            idx = child_idx[s:s + chunk]
            out[s:s + chunk] = _block_bases(coords[idx], child_level.weights[idx])
        return out

    @property
    def blocks(self):
        """(child indices, U) per parent block in parent order."""
        out = [None] * self.n_parents
        for parents, child_idx, _, bases in self.groups:
            for p, idx, U in zip(parents, child_idx, bases):
                out[p] = (idx, U)
        return out

    def forward(self, attrs):
        attrs, flat = _as_matrix(attrs)
        if len(attrs) != self.n_children:
            raise LayoutMismatchError(
                f"Level {self.level} expects {self.n_children} rows, got {len(attrs)}")
        approx = np.zeros((self.n_parents, attrs.shape[1]))
        detail = np.zeros((self.n_details, attrs.shape[1]))
        for parents, child_idx, det_idx, bases in self.groups:
            coeffs = np.einsum("bji,bjc->bic", bases, attrs[child_idx])
            approx[parents] = coeffs[:, 0]
            detail[det_idx] = coeffs[:, 1:]
        return _restore(approx, flat), _restore(detail, flat)

    def inverse(self, approx, detail):
        approx, flat = _as_matrix(approx)
        detail, _ = _as_matrix(detail, approx.shape[1])
        if len(approx) != self.n_parents or len(detail) != self.n_details:
            raise LayoutMismatchError(
                f"Level {self.level} expects ({self.n_parents}, {self.n_details}) "
                f"coefficients, got ({len(approx)}, {len(detail)})")
        out = np.zeros((self.n_children, approx.shape[1]))
        for parents, child_idx, det_idx, bases in self.groups:
            coeffs = np.concatenate([approx[parents][:, None, :], detail[det_idx]], axis=1)
            out[child_idx] = np.einsum("bij,bjc->bic", bases, coeffs)
        return _restore(out, flat)


def _as_matrix(x, channels=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if channels is not None and channels != 1:
            return x.reshape(-1, channels), False
        return x.reshape(-1, 1), True
    return x, False


def _restore(x, flat):
    return x[:, 0] if flat else x


# --- Coefficient layout and full transforms ---

@dataclass(frozen=True, eq=False)
class CoefficientLayout:
    """[a_0 | d_0 | ... | d_{L-1}] with offsets[i] the start of segment i."""
    values: np.ndarray
    offsets: np.ndarray

    @property
    def n_segments(self):
        return len(self.offsets)

    def segment(self, i):
        end = self.offsets[i + 1] if i + 1 < len(self.offsets) else len(self.values)
        return self.values[self.offsets[i]:end]

    @property
    def approx(self):
        return self.segment(0)

    def detail(self, level):
        return self.segment(level + 1)

    @classmethod
    def from_segments(cls, segments):
        lengths = [len(s) for s in segments]
        offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
        return cls(np.concatenate(segments, axis=0), offsets)


class MultiResolutionTransform:
    """Shared L-level analysis / synthesis over a ResolutionHierarchy."""

    def __init__(self, hier):
        self.hierarchy = hier
        self._levels = {}

    def _build_level(self, level):
        raise NotImplementedError

    def level_transform(self, level):
        if level not in self._levels:
            self._levels[level] = self._build_level(level)
        return self._levels[level]

    def detail_count(self, level):
        return self.hierarchy.detail_count(level)

    def forward_level(self, level, attrs):
        return self.level_transform(level).forward(attrs)

    def inverse_level(self, level, approx, detail):
        return self.level_transform(level).inverse(approx, detail)

    def forward_full(self, attrs):
        hier = self.hierarchy
        if len(attrs) != hier.levels[-1].n:
            raise LayoutMismatchError(
                f"Expected {hier.levels[-1].n} attribute rows, got {len(attrs)}")
        approx = np.asarray(attrs, dtype=np.float64)
        details = []
        for level in range(hier.L - 1, -1, -1):
            approx, detail = self.forward_level(level, approx)
            details.append(detail)
        return CoefficientLayout.from_segments([approx] + details[::-1])

    def inverse_full(self, layout):
        hier = self.hierarchy
        if layout.n_segments != hier.L + 1 or len(layout.values) != hier.levels[-1].n:
            raise LayoutMismatchError("Coefficient layout does not match the hierarchy")
        approx = layout.approx
        for level in range(hier.L):
            approx = self.inverse_level(level, approx, layout.detail(level))
        return approx


class RagftTransform(MultiResolutionTransform):
    name = "ragft"

    def _build_level(self, level):
        return LevelTransform(self.hierarchy, level)


def forward_level(hier, level, attrs):
    return RagftTransform(hier).forward_level(level, attrs)


def inverse_level(hier, level, approx, detail):
    return RagftTransform(hier).inverse_level(level, approx, detail)


def forward_full(hier, attrs):
    return RagftTransform(hier).forward_full(attrs)


def inverse_full(hier, layout):
    return RagftTransform(hier).inverse_full(layout)


def zero_pad_closed_form(hier, level, approx):
    """b_j = sqrt(q_j / q_parent) * a_parent for every child j of level+1."""
    approx, flat = _as_matrix(approx)
    child = hier.levels[level + 1]
    parent_w = hier.levels[level].weights[child.parent_of]
    scale = np.sqrt(child.weights / parent_w)
    return _restore(scale[:, None] * approx[child.parent_of], flat)
