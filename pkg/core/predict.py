import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from core.errors import LayoutMismatchError
from core.graph import build_knn_graph, build_cross_knn, smooth
from core.ragft import _as_matrix, _restore
from shared.config import PROPOSED_K, LOWRES_K

logger = logging.getLogger("Predictor")


class PredictorKind(Enum):
    NONE = 0
    PROPOSED = 1
    LOWRES = 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        return cls[str(value).strip().upper()]


DEFAULT_K = {
    PredictorKind.NONE: 0,
    PredictorKind.PROPOSED: PROPOSED_K,
    PredictorKind.LOWRES: LOWRES_K,
}


@dataclass(frozen=True)
class PredictorConfig:
    kind: PredictorKind = PredictorKind.PROPOSED
    k: int = None

    def __post_init__(self):
        kind = PredictorKind.parse(self.kind)
        k = DEFAULT_K[kind] if self.k is None else int(self.k)
        if kind != PredictorKind.NONE and k < 1:
            raise ValueError(f"Predictor k must be >= 1, got {k}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "k", k)


def interpolate_zero_pad(transform, level, approx):
    """b_{l+1} = T_l^-1 [a_l; 0]: the piecewise constant (after Q^-1/2) interpolation."""
    approx = np.asarray(approx, dtype=np.float64)
    hier = transform.hierarchy
    if len(approx) != hier.levels[level].n:
        raise LayoutMismatchError(
            f"Level {level} has {hier.levels[level].n} points, got {len(approx)} coefficients")
    zeros = np.zeros((transform.detail_count(level),) + approx.shape[1:])
    return transform.inverse_level(level, approx, zeros)


def predict_proposed(transform, level, approx, graph=None, k=PROPOSED_K):
    """
    Interpolate, smooth the weight-normalised signal over the level-(l+1)
    KNN graph, scale back and re-analyse. Returns (detail, approx) predictions.
    """
    child = transform.hierarchy.levels[level + 1]
    if graph is None:
        graph = build_knn_graph(child.points, k)
    b, flat = _as_matrix(interpolate_zero_pad(transform, level, approx))
    sqrt_q = np.sqrt(child.weights)[:, None]
    smoothed = sqrt_q * smooth(graph, b / sqrt_q)
    approx_pred, detail_pred = transform.forward_level(level, _restore(smoothed, flat))
    return detail_pred, approx_pred


def lowres_reference(hier, level):
    """Level-l points expressed in the level-(l+1) frame at their block centres."""
    b = hier.block_sizes[level]
    return hier.levels[level].points * b + (b - 1) / 2.0


def predict_lowres(transform, level, approx, graph=None, k=LOWRES_K):
    """
    Each fine point averages the normalised approximations of its nearest
    low-resolution block centres; the result is re-analysed for details.
    """
    hier = transform.hierarchy
    parent = hier.levels[level]
    child = hier.levels[level + 1]
    if graph is None:
        graph = build_cross_knn(child.points, lowres_reference(hier, level), k)
    approx, flat = _as_matrix(approx)
    if len(approx) != parent.n:
        raise LayoutMismatchError(
            f"Level {level} has {parent.n} points, got {len(approx)} coefficients")

    normalized = approx / np.sqrt(parent.weights)[:, None]
    predicted = np.sqrt(child.weights)[:, None] * smooth(graph, normalized)
    _, detail_pred = transform.forward_level(level, _restore(predicted, flat))
    return detail_pred


def predict_none(transform, level, approx):
    approx = np.asarray(approx, dtype=np.float64)
    return np.zeros((transform.detail_count(level),) + approx.shape[1:])


class Predictor:
    """
    P_l for every level of one transform. Graphs depend only on geometry,
    so each is built once and reused by all channels.
    """

    def __init__(self, transform, config, workers=1):
        self.transform = transform
        self.config = config
        self.workers = workers
        self._graphs = {}

    def graph(self, level):
        if level not in self._graphs:
            hier = self.transform.hierarchy
            kind = self.config.kind
            if kind == PredictorKind.PROPOSED:
                points = hier.levels[level + 1].points
                graph = build_knn_graph(points, self.config.k, workers=self.workers)
            elif kind == PredictorKind.LOWRES:
                graph = build_cross_knn(
                    hier.levels[level + 1].points, lowres_reference(hier, level),
                    self.config.k, workers=self.workers)
            else:
                graph = None
            self._graphs[level] = graph
            if graph is not None:
                logger.debug(f"Level {level}: {kind.name} graph with {len(graph.rows)} edges")
        return self._graphs[level]

    def predict(self, level, approx):
        kind = self.config.kind
        if kind == PredictorKind.NONE or self.transform.detail_count(level) == 0:
            return predict_none(self.transform, level, approx)
        if kind == PredictorKind.PROPOSED:
            detail, _ = predict_proposed(self.transform, level, approx, self.graph(level))
            return detail
        return predict_lowres(self.transform, level, approx, self.graph(level))
