"""
Closed-loop intra-predictive attribute codec.

The encoder runs the decoder's loop on quantised values, so both sides
form every prediction from identical decoded approximations:

    a0^ = Q^-1(Q(a0))
    for each level l:  d~ = P_l(a_l^)
                       r  = Q(d_l - d~)                 (coded)
                       d^ = d~ + Q^-1(r)
                       a_{l+1}^ = T_l^-1 [a_l^; d^]

Geometry is not coded; the decoder is handed the same voxel set.
"""
import time
import logging
import dataclasses
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from core.errors import (
    BitstreamFormatError, GeometryMismatchError, ConfigMismatchError, TransformConfigError,
    BlockSizeError, ColorChannelError
)
from core.pcgeom import VoxelCloud, MortonOrder, morton_sort, get_convention
from core.ragft import CoefficientLayout, RagftTransform, build_hierarchy, resolve_block_sizes
from core.raht import RahtTransform
from core.predict import Predictor, PredictorConfig, PredictorKind
from core.entropy import (
    Bitstream, BitstreamHeader, QuantParams, deserialize, quantize, dequantize, rlgr_encode,
    rlgr_decode
)
from shared.config import DEFAULT_BLOCK_SIZE, DEFAULT_STEP, DEFAULT_COLOR, LOWRES_K, PROPOSED_K

logger = logging.getLogger("Codec")

PEAK = 255.0


class TransformKind(Enum):
    RAGFT = 0
    RAHT = 1

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        return cls[str(value).strip().upper()]


def parse_block_sizes(text):
    """
    "2" -> 2 (every level), "16,2,2" -> (16, 2, 2) finest first,
    "16,2..." -> 16 at the finest level then 2 up to the root.
    """
    if isinstance(text, (int, np.integer)):
        return int(text)
    if not isinstance(text, str):
        return tuple(text)
    text = text.strip()
    repeat = text.endswith("...")
    parts = [p for p in text.rstrip(".").split(",") if p.strip()]
    sizes = tuple(int(p) for p in parts)
    if repeat:
        return sizes + (...,)
    return sizes[0] if len(sizes) == 1 else sizes


def format_block_sizes(block_sizes):
    if isinstance(block_sizes, int):
        return str(block_sizes)
    sizes = list(block_sizes)
    if sizes and sizes[-1] is Ellipsis:
        return ",".join(str(b) for b in sizes[:-1]) + "..."
    return ",".join(str(b) for b in sizes)


@dataclass(frozen=True)
class CodecConfig:
    transform: TransformKind = TransformKind.RAGFT
    block_sizes: object = DEFAULT_BLOCK_SIZE    # int, or finest-first sequence
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    step: float = DEFAULT_STEP
    color: str = DEFAULT_COLOR
    name: str = None

    def __post_init__(self):
        object.__setattr__(self, "transform", TransformKind.parse(self.transform))
        object.__setattr__(self, "block_sizes", parse_block_sizes(self.block_sizes))
        predictor = self.predictor
        if not isinstance(predictor, PredictorConfig):
            predictor = PredictorConfig(predictor)
        object.__setattr__(self, "predictor", predictor)
        object.__setattr__(self, "step", QuantParams(self.step).step)
        object.__setattr__(self, "color", get_convention(self.color).name)

    @property
    def convention(self):
        return get_convention(self.color)

    @property
    def label(self):
        if self.name:
            return self.name
        return (f"{self.transform.name.lower()}-b{format_block_sizes(self.block_sizes)}"
                f"-{self.predictor.kind.name.lower()}")

    def with_step(self, step):
        return dataclasses.replace(self, step=step)

    def resolve(self, depth):
        """Coarsest-first block sizes for a cloud of this depth."""
        sizes = resolve_block_sizes(self.block_sizes, depth)
        if self.transform == TransformKind.RAHT and any(b != 2 for b in sizes):
            raise TransformConfigError(f"RAHT needs block size 2 at every level, got {sizes}")
        return sizes

    def header(self, depth, n_points, channels):
        return BitstreamHeader(
            depth=depth, transform=self.transform.value, block_sizes=self.resolve(depth),
            step=self.step, predictor=self.predictor.kind.value, k=self.predictor.k,
            color=self.convention.ident, n_points=n_points, channels=channels)

    @classmethod
    def from_header(cls, header):
        try:
            transform = TransformKind(header.transform)
            predictor = PredictorConfig(PredictorKind(header.predictor), header.k)
            color = get_convention(header.color).name
        except ValueError as e:
            raise BitstreamFormatError(f"Unknown identifier in header: {e}")
        return cls(transform, tuple(reversed(header.block_sizes)), predictor, header.step, color)

    def mismatches(self, header):
        try:
            expected = self.header(header.depth, header.n_points, header.channels)
        except (BlockSizeError, TransformConfigError):
            return ["block_sizes"]
        return [
            name for name in ("transform", "block_sizes", "step", "predictor", "k", "color")
            if getattr(expected, name) != getattr(header, name)
        ]


PRESETS = {
    "I-RAGFT": dict(transform="ragft", block_sizes=2,
                    predictor=PredictorConfig(PredictorKind.PROPOSED, PROPOSED_K)),
    "I-RAGFT-LowRes": dict(transform="ragft", block_sizes=2,
                           predictor=PredictorConfig(PredictorKind.LOWRES, LOWRES_K)),
    "RAGFT-b2": dict(transform="ragft", block_sizes=2,
                     predictor=PredictorConfig(PredictorKind.NONE)),
    "RAGFT-b16": dict(transform="ragft", block_sizes=(16, 2, ...),
                      predictor=PredictorConfig(PredictorKind.NONE)),
    "I-RAHT": dict(transform="raht", block_sizes=2,
                   predictor=PredictorConfig(PredictorKind.LOWRES, LOWRES_K)),
    "RAHT": dict(transform="raht", block_sizes=2,
                 predictor=PredictorConfig(PredictorKind.NONE)),
}


def preset(name, step=DEFAULT_STEP, color=DEFAULT_COLOR):
    if name not in PRESETS:
        raise KeyError(f"Unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return CodecConfig(step=step, color=color, name=name, **PRESETS[name])


class ResidualLayout(CoefficientLayout):
    """Integer residuals [Q(a0) | r_0 | ... | r_{L-1}], one column per channel."""


@dataclass(frozen=True, eq=False)
class EncodeResult:
    bitstream: Bitstream
    residuals: ResidualLayout
    reconstruction: np.ndarray  # in-loop a_L^ (YUV, Morton order)
    decoded: VoxelCloud         # RGB in input order, clamped
    order: MortonOrder
    encode_ms: float = 0.0


def make_transform(kind, hier):
    if TransformKind.parse(kind) == TransformKind.RAHT:
        return RahtTransform(hier)
    return RagftTransform(hier)


def _prepare(coords, depth, block_sizes):
    geometry = VoxelCloud(coords, np.zeros((len(coords), 0)), depth)
    order = morton_sort(geometry)
    hier = build_hierarchy(geometry.reordered(order.permutation), block_sizes)
    return order, hier


def _to_rgb(yuv, conv, order):
    rgb = np.clip(conv.inverse(yuv), 0.0, PEAK)
    return rgb[order.inverse]


def encode_with_reconstruction(cloud, config, workers=1):
    """Encodes and returns the bitstream together with every in-loop quantity."""
    start = time.perf_counter()
    if cloud.channels != 3:
        raise ColorChannelError(f"Color coding needs 3 channels, got {cloud.channels}")
    conv = config.convention
    header = config.header(cloud.depth, cloud.n, cloud.channels)

    order, hier = _prepare(cloud.coords, cloud.depth, config.block_sizes)
    transform = make_transform(config.transform, hier)
    predictor = Predictor(transform, config.predictor, workers=workers)
    yuv = conv.forward(cloud.attrs[order.permutation])
    coeffs = transform.forward_full(yuv)

    step = config.step
    segments = [quantize(coeffs.approx, step)]
    approx = dequantize(segments[0], step)
    for level in range(hier.L):
        prediction = predictor.predict(level, approx)
        residual = quantize(coeffs.detail(level) - prediction, step)
        detail = prediction + dequantize(residual, step)
        approx = transform.inverse_level(level, approx, detail)
        segments.append(residual)
    residuals = ResidualLayout.from_segments(segments)

    payloads = tuple(rlgr_encode(residuals.values[:, c]) for c in range(cloud.channels))
    bitstream = Bitstream(header, payloads)
    decoded = VoxelCloud(cloud.coords, _to_rgb(approx, conv, order), cloud.depth)
    elapsed = (time.perf_counter() - start) * 1000.0
    logger.info(
        f"Encoded {cloud.n} points ({config.label}, step {step:g}) into {len(bitstream)} bytes "
        f"in {elapsed:.0f} ms")
    return EncodeResult(bitstream, residuals, approx, decoded, order, elapsed)


def encode(cloud, config, workers=1):
    return encode_with_reconstruction(cloud, config, workers).bitstream


def _geometry_coords(geometry):
    if isinstance(geometry, VoxelCloud):
        return geometry.coords, geometry.depth
    return np.asarray(geometry, dtype=np.int64).reshape(-1, 3), None


def decode(bitstream, geometry, config=None, workers=1):
    """
    Replays the prediction loop from the residual streams and returns the
    RGB cloud in the order of `geometry` (a VoxelCloud or an N x 3 array).
    """
    if isinstance(bitstream, (bytes, bytearray, memoryview)):
        bitstream = deserialize(bitstream)
    header = bitstream.header
    coords, depth = _geometry_coords(geometry)
    if len(coords) != header.n_points:
        raise GeometryMismatchError(
            f"Bitstream codes {header.n_points} points, geometry has {len(coords)}")
    if depth is not None and depth != header.depth:
        raise GeometryMismatchError(
            f"Bitstream depth {header.depth}, geometry depth {depth}")
    if header.channels != 3:
        raise BitstreamFormatError(f"Expected 3 color channels, header has {header.channels}")

    coded = CodecConfig.from_header(header)
    if config is not None:
        mismatched = config.mismatches(header)
        if mismatched:
            raise ConfigMismatchError(f"Bitstream disagrees with the expected config on {mismatched}")

    order, hier = _prepare(coords, header.depth, coded.block_sizes)
    transform = make_transform(coded.transform, hier)
    predictor = Predictor(transform, coded.predictor, workers=workers)

    residuals = np.stack(
        [rlgr_decode(payload, header.n_points) for payload in bitstream.payloads], axis=1)
    counts = [hier.levels[0].n] + [hier.detail_count(l) for l in range(hier.L)]
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    layout = ResidualLayout(residuals, offsets)

    step = header.step
    approx = dequantize(layout.approx, step)
    for level in range(hier.L):
        prediction = predictor.predict(level, approx)
        detail = prediction + dequantize(layout.detail(level), step)
        approx = transform.inverse_level(level, approx, detail)

    rgb = _to_rgb(approx, coded.convention, order)
    logger.info(f"Decoded {header.n_points} points ({coded.label}, step {step:g})")
    return VoxelCloud(coords, rgb, header.depth)
