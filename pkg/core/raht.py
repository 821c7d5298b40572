import logging
from dataclasses import dataclass

import numpy as np

from core.errors import LayoutMismatchError, TransformConfigError
from core.ragft import MultiResolutionTransform, _as_matrix, _restore

logger = logging.getLogger("RAHT")


@dataclass(frozen=True, eq=False)
class HaarStep:
    """One merge stage: weighted two-point rotations over sibling pairs."""
    left: np.ndarray       # pair members with the lower key
    right: np.ndarray
    singles: np.ndarray    # unpaired nodes passed through
    out_pos: np.ndarray    # output node of every input node
    n_in: int
    n_out: int
    cos: np.ndarray        # sqrt(q_l / (q_l + q_r))
    sin: np.ndarray        # sqrt(q_r / (q_l + q_r))


class RahtLevel:
    """
    One octree level of RAHT: 2x2x2 blocks merged along x, then y, then z.
    Per parent the details are x-stage first, then y, then z.
    """

    def __init__(self, hier, level):
        self.level = level
        child = hier.levels[level + 1]
        self.n_children = child.n
        self.n_parents = hier.levels[level].n

        local = (child.points[:, 0] & 1) | ((child.points[:, 1] & 1) << 1) | ((child.points[:, 2] & 1) << 2)
        key = child.parent_of.astype(np.int64) * 8 + local
        weights = child.weights.astype(np.float64)

        self.steps = []
        parent_ids, stage_ids, pair_keys = [], [], []
        for stage in range(3):
            step, key, weights, group = self._merge(key, weights)
            self.steps.append(step)
            parent_ids.append(group >> (2 - stage))
            stage_ids.append(np.full(len(group), stage))
            pair_keys.append(group)

        self.n_details = sum(len(s.left) for s in self.steps)
        self.order = np.lexsort((
            np.concatenate(pair_keys), np.concatenate(stage_ids), np.concatenate(parent_ids)))

    @staticmethod
    def _merge(key, weights):
        group = key >> 1
        n = len(key)
        is_left = np.zeros(n, dtype=bool)
        is_left[:-1] = group[:-1] == group[1:]
        is_right = np.zeros(n, dtype=bool)
        is_right[1:] = is_left[:-1]
        is_first = np.ones(n, dtype=bool)
        is_first[1:] = group[1:] != group[:-1]

        out_pos = np.cumsum(is_first) - 1
        n_out = int(out_pos[-1]) + 1 if n else 0
        left = np.flatnonzero(is_left)
        right = left + 1
        total = weights[left] + weights[right]
        step = HaarStep(
            left=left, right=right, singles=np.flatnonzero(~(is_left | is_right)),
            out_pos=out_pos, n_in=n, n_out=n_out,
            cos=np.sqrt(weights[left] / total), sin=np.sqrt(weights[right] / total))
        merged = np.bincount(out_pos, weights=weights, minlength=n_out)
        return step, group[is_first], merged, group[left]

    def forward(self, attrs):
        v, flat = _as_matrix(attrs)
        if len(v) != self.n_children:
            raise LayoutMismatchError(
                f"Level {self.level} expects {self.n_children} rows, got {len(v)}")
        highs = []
        for step in self.steps:
            c, s = step.cos[:, None], step.sin[:, None]
            vl, vr = v[step.left], v[step.right]
            out = np.zeros((step.n_out, v.shape[1]))
            out[step.out_pos[step.singles]] = v[step.singles]
            out[step.out_pos[step.left]] = c * vl + s * vr
            highs.append(-s * vl + c * vr)
            v = out
        detail = np.concatenate(highs, axis=0)[self.order]
        return _restore(v, flat), _restore(detail, flat)

    def inverse(self, approx, detail):
        v, flat = _as_matrix(approx)
        detail, _ = _as_matrix(detail, v.shape[1])
        if len(v) != self.n_parents or len(detail) != self.n_details:
            raise LayoutMismatchError(
                f"Level {self.level} expects ({self.n_parents}, {self.n_details}) "
                f"coefficients, got ({len(v)}, {len(detail)})")
        highs = np.empty_like(detail)
        highs[self.order] = detail
        bounds = np.cumsum([0] + [len(s.left) for s in self.steps])

        for stage in range(2, -1, -1):
            step = self.steps[stage]
            high = highs[bounds[stage]:bounds[stage + 1]]
            low = v[step.out_pos[step.left]]
            c, s = step.cos[:, None], step.sin[:, None]
            prev = np.zeros((step.n_in, v.shape[1]))
            prev[step.left] = c * low - s * high
            prev[step.right] = s * low + c * high
            prev[step.singles] = v[step.out_pos[step.singles]]
            v = prev
        return _restore(v, flat)


class RahtTransform(MultiResolutionTransform):
    name = "raht"

    def __init__(self, hier):
        if any(b != 2 for b in hier.block_sizes):
            raise TransformConfigError(
                f"RAHT needs block size 2 at every level, got {hier.block_sizes}")
        super().__init__(hier)

    def _build_level(self, level):
        return RahtLevel(self.hierarchy, level)


def raht_forward(hier, attrs):
    return RahtTransform(hier).forward_full(attrs)


def raht_inverse(hier, layout):
    return RahtTransform(hier).inverse_full(layout)
