import os
import logging
from dataclasses import dataclass, field

import numpy as np
from plyfile import PlyData, PlyElement, PlyParseError

from core.errors import (
    PlyFormatError, NonIntegralCoordinateError, DuplicateVoxelError,
    ColorChannelError, CloudInvariantError
)

logger = logging.getLogger("PointCloud")

MAX_DEPTH = 21  # 3 * 21 bits fit a signed 64-bit Morton code


def morton_codes(coords, depth=None):
    """
    Interleaves coordinate bits into Morton codes.
    Bit 3b holds x_b, bit 3b+1 holds y_b, bit 3b+2 holds z_b (x least significant).
    """
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    if depth is None:
        depth = _depth_for(coords)
    if depth > MAX_DEPTH:
        raise CloudInvariantError(f"Depth {depth} exceeds Morton limit {MAX_DEPTH}")

    codes = np.zeros(len(coords), dtype=np.int64)
    for b in range(depth):
        codes |= ((coords[:, 0] >> b) & 1) << (3 * b)
        codes |= ((coords[:, 1] >> b) & 1) << (3 * b + 1)
        codes |= ((coords[:, 2] >> b) & 1) << (3 * b + 2)
    return codes


def morton_decode(codes, depth):
    codes = np.asarray(codes, dtype=np.int64)
    coords = np.zeros((len(codes), 3), dtype=np.int64)
    for b in range(depth):
        for axis in range(3):
            coords[:, axis] |= ((codes >> (3 * b + axis)) & 1) << b
    return coords


def _depth_for(coords):
    if len(coords) == 0:
        return 1
    return max(1, int(coords.max()).bit_length())


@dataclass(frozen=True, eq=False)
class VoxelCloud:
    """Voxelized geometry (N x 3 integers) with N x C real attributes."""
    coords: np.ndarray
    attrs: np.ndarray
    depth: int

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.int64).reshape(-1, 3)
        attrs = np.array(self.attrs, dtype=np.float64)
        if attrs.ndim == 1:
            attrs = attrs.reshape(-1, 1)

        if attrs.shape[0] != coords.shape[0]:
            raise CloudInvariantError(
                f"attrs has {attrs.shape[0]} rows, coords has {coords.shape[0]}")
        if not 1 <= self.depth <= MAX_DEPTH:
            raise CloudInvariantError(f"Invalid depth {self.depth}")
        if len(coords) and (coords.min() < 0 or coords.max() >= (1 << self.depth)):
            raise CloudInvariantError(
                f"Coordinates outside [0, 2^{self.depth}) on some axis")
        if len(coords) and len(np.unique(morton_codes(coords, self.depth))) != len(coords):
            raise DuplicateVoxelError("Cloud contains more than one point per voxel")

        coords.setflags(write=False)
        attrs.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "attrs", attrs)

    @property
    def n(self):
        return len(self.coords)

    @property
    def channels(self):
        return self.attrs.shape[1]

    def reordered(self, permutation):
        return VoxelCloud(self.coords[permutation], self.attrs[permutation], self.depth)

    def with_attrs(self, attrs):
        return VoxelCloud(self.coords, attrs, self.depth)


@dataclass(frozen=True, eq=False)
class MortonOrder:
    codes: np.ndarray        # sorted ascending
    permutation: np.ndarray  # original index of each sorted position

    @property
    def inverse(self):
        inv = np.empty_like(self.permutation)
        inv[self.permutation] = np.arange(len(self.permutation))
        return inv


def morton_sort(cloud):
    codes = morton_codes(cloud.coords, cloud.depth)
    # stable sort keeps the permutation deterministic
    permutation = np.argsort(codes, kind="stable")
    return MortonOrder(codes=codes[permutation], permutation=permutation)


def is_morton_sorted(cloud):
    codes = morton_codes(cloud.coords, cloud.depth)
    return bool(np.all(np.diff(codes) > 0))


# --- Color conversion ---

@dataclass(frozen=True, eq=False)
class ColorConvention:
    name: str
    ident: int
    matrix: np.ndarray
    offset: np.ndarray
    peak: float = 255.0
    inverse_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if abs(np.linalg.det(matrix)) < 1e-12:
            raise CloudInvariantError(f"Color matrix {self.name} is singular")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=np.float64))
        object.__setattr__(self, "inverse_matrix", np.linalg.inv(matrix))

    @classmethod
    def from_luma(cls, name, ident, kr, kb, peak=255.0):
        kg = 1.0 - kr - kb
        mid = (peak + 1.0) / 2.0
        matrix = [
            [kr, kg, kb],
            [-kr / (2 * (1 - kb)), -kg / (2 * (1 - kb)), 0.5],
            [0.5, -kg / (2 * (1 - kr)), -kb / (2 * (1 - kr))],
        ]
        return cls(name, ident, matrix, [0.0, mid, mid], peak)

    def forward(self, rgb):
        return np.asarray(rgb, dtype=np.float64) @ self.matrix.T + self.offset

    def inverse(self, yuv):
        return (np.asarray(yuv, dtype=np.float64) - self.offset) @ self.inverse_matrix.T


BT709 = ColorConvention.from_luma("bt709", 0, kr=0.2126, kb=0.0722)
BT601 = ColorConvention.from_luma("bt601", 1, kr=0.299, kb=0.114)

CONVENTIONS = {c.name: c for c in (BT709, BT601)}
CONVENTIONS_BY_ID = {c.ident: c for c in (BT709, BT601)}


def get_convention(key):
    if isinstance(key, ColorConvention):
        return key
    table = CONVENTIONS_BY_ID if isinstance(key, (int, np.integer)) else CONVENTIONS
    if key not in table:
        raise ColorChannelError(f"Unknown color convention: {key}")
    return table[key]


def rgb_to_yuv(cloud, conv=BT709):
    if cloud.channels != 3:
        raise ColorChannelError(f"Color conversion needs 3 channels, got {cloud.channels}")
    return cloud.with_attrs(conv.forward(cloud.attrs))


def yuv_to_rgb(cloud, conv=BT709):
    if cloud.channels != 3:
        raise ColorChannelError(f"Color conversion needs 3 channels, got {cloud.channels}")
    return cloud.with_attrs(conv.inverse(cloud.attrs))


# --- PLY I/O ---

COORD_PROPS = ("x", "y", "z")
COLOR_PROPS = ("red", "green", "blue")


def load_ply(path, depth=None):
    """
    Reads a voxelized PLY (ASCII or binary) with x,y,z and red,green,blue.
    Coordinates must already be integral; floats are rejected, not rounded.
    """
    try:
        ply = PlyData.read(path)
    except PlyParseError as e:
        raise PlyFormatError(f"Malformed PLY {path}: {e}")
    except (ValueError, IndexError, UnicodeDecodeError) as e:
        raise PlyFormatError(f"Unreadable PLY {path}: {e}")

    if "vertex" not in ply:
        raise PlyFormatError(f"{path} has no vertex element")
    vertex = ply["vertex"]
    names = set(p.name for p in vertex.properties)
    missing = [p for p in COORD_PROPS + COLOR_PROPS if p not in names]
    if missing:
        raise PlyFormatError(f"{path} is missing properties: {missing}")

    raw = np.stack([np.asarray(vertex[p], dtype=np.float64) for p in COORD_PROPS], axis=1)
    if not np.all(np.isfinite(raw)) or not np.array_equal(raw, np.round(raw)):
        raise NonIntegralCoordinateError(
            f"{path} has non-integral coordinates; voxelize the input first")
    coords = raw.astype(np.int64)
    attrs = np.stack([np.asarray(vertex[p], dtype=np.float64) for p in COLOR_PROPS], axis=1)

    if len(coords) and coords.min() < 0:
        raise CloudInvariantError(f"{path} has negative coordinates")
    if depth is None:
        depth = _depth_for(coords)

    cloud = VoxelCloud(coords, attrs, depth)
    logger.info(f"Loaded {cloud.n} points from {os.path.basename(path)} (depth {depth})")
    return cloud


def save_ply(path, cloud, binary=True):
    if cloud.channels != 3:
        raise ColorChannelError(f"PLY export needs 3 channels, got {cloud.channels}")

    colors = np.clip(np.round(cloud.attrs), 0, 255).astype(np.uint8)
    vertices = np.empty(cloud.n, dtype=[
        ("x", "f4"), ("y", "f4"), ("z", "f4"),
        ("red", "u1"), ("green", "u1"), ("blue", "u1"),
    ])
    for axis, name in enumerate(COORD_PROPS):
        vertices[name] = cloud.coords[:, axis]
    for channel, name in enumerate(COLOR_PROPS):
        vertices[name] = colors[:, channel]

    element = PlyElement.describe(vertices, "vertex")
    PlyData([element], text=not binary, byte_order="<").write(path)
    logger.info(f"Wrote {cloud.n} points to {os.path.basename(path)}")
