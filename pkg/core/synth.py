import logging

import numpy as np

from core.pcgeom import VoxelCloud, morton_sort
from shared.config import SYNTH_SEED, SYNTH_POINTS, SYNTH_DEPTH

logger = logging.getLogger("Synth")

KINDS = ("sphere", "cube", "plane")
FIELDS = ("constant", "trilinear-ramp", "smooth-sinusoid", "random")
CONSTANT_RGB = (180.0, 120.0, 60.0)

# Oversampling cap: stop drawing once this many samples per requested point were tried
MAX_OVERSAMPLE = 64


def _sample_surface(kind, rng, count, side):
    """Continuous samples on the surface, in grid units [0, side)."""
    center = side / 2.0
    if kind == "sphere":
        radius = 0.45 * side
        direction = rng.normal(size=(count, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return center + radius * direction
    if kind == "cube":
        lo, hi = 0.1 * side, 0.9 * side
        pts = rng.uniform(lo, hi, size=(count, 3))
        axis = rng.integers(0, 3, size=count)
        face = np.where(rng.integers(0, 2, size=count) == 0, lo, hi)
        pts[np.arange(count), axis] = face
        return pts
    if kind == "plane":
        xy = rng.uniform(0, side, size=(count, 2))
        z = 0.3 * side + 0.25 * xy[:, 0] + 0.15 * xy[:, 1]
        return np.column_stack([xy, np.clip(z, 0, side - 1)])
    raise ValueError(f"Unknown synthetic kind {kind!r}; choose from {KINDS}")


def _voxelize(kind, rng, points, depth):
    side = 1 << depth
    voxels = np.zeros((0, 3), dtype=np.int64)
    draws = 2 * points
    while True:
        samples = _sample_surface(kind, rng, draws, side)
        voxels = np.unique(np.clip(np.floor(samples), 0, side - 1).astype(np.int64), axis=0)
        if len(voxels) >= points or draws >= MAX_OVERSAMPLE * points:
            break
        draws *= 2

    if len(voxels) < points:
        logger.warning(
            f"{kind} at depth {depth} has only {len(voxels)} distinct voxels; {points} requested")
        return voxels
    keep = np.sort(rng.choice(len(voxels), size=points, replace=False))
    return voxels[keep]


def _evaluate_field(name, coords, depth, rng):
    t = (coords + 0.5) / float(1 << depth)
    if name == "constant":
        return np.tile(CONSTANT_RGB, (len(coords), 1))
    if name == "trilinear-ramp":
        return 255.0 * np.column_stack([t[:, 0], t[:, 1], 1.0 - t[:, 2]])
    if name == "smooth-sinusoid":
        phase = 2.0 * np.pi * t
        return np.column_stack([
            128 + 90 * np.sin(phase[:, 0]) * np.cos(phase[:, 1]),
            128 + 90 * np.sin(phase[:, 1] + 0.5 * phase[:, 2]),
            128 + 90 * np.cos(phase[:, 2] - 0.3 * phase[:, 0]),
        ])
    if name == "random":
        return rng.uniform(0.0, 255.0, size=(len(coords), 3))
    raise ValueError(f"Unknown attribute field {name!r}; choose from {FIELDS}")


def synth_cloud(kind="sphere", points=SYNTH_POINTS, depth=SYNTH_DEPTH,
                field="smooth-sinusoid", seed=SYNTH_SEED):
    """
    Voxelised surface with an RGB field sampled at voxel centres,
    returned in Morton order. Identical arguments give identical clouds.
    """
    if points < 1:
        raise ValueError(f"points must be positive, got {points}")
    if field not in FIELDS:
        raise ValueError(f"Unknown attribute field {field!r}; choose from {FIELDS}")
    rng = np.random.default_rng(seed)
    coords = _voxelize(kind, rng, points, depth)
    attrs = _evaluate_field(field, coords, depth, rng)

    cloud = VoxelCloud(coords, attrs, depth)
    cloud = cloud.reordered(morton_sort(cloud).permutation)
    logger.info(f"Synthesised {cloud.n} point {kind} (depth {depth}, {field} field)")
    return cloud
