import math

import numpy as np

from core.errors import GeometryMismatchError, EmptyPointSetError
from core.pcgeom import BT709, get_convention

PEAK = 255.0


def _check_pair(original, decoded):
    if original.n != decoded.n:
        raise GeometryMismatchError(f"Clouds differ in size: {original.n} vs {decoded.n}")
    if not np.array_equal(original.coords, decoded.coords):
        raise GeometryMismatchError("Clouds must share geometry and point order")


def psnr(mse, peak=PEAK):
    """10 log10(peak^2 / mse); +inf when mse is 0."""
    if mse <= 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def psnr_channels(original, decoded, conv=BT709):
    """PSNR of Y, U and V between two RGB clouds with the same geometry."""
    _check_pair(original, decoded)
    conv = get_convention(conv)
    diff = conv.forward(original.attrs) - conv.forward(decoded.attrs)
    mse = np.mean(diff * diff, axis=0) if len(diff) else np.zeros(3)
    return tuple(psnr(float(m), conv.peak) for m in mse)


def psnr_y(original, decoded, conv=BT709):
    return psnr_channels(original, decoded, conv)[0]


def bits_per_point(bitstream, n, payload_only=False):
    """
    8 * bytes / N. `bitstream` may be a Bitstream, raw bytes or a byte
    count; payload_only drops the header (Bitstream objects only).
    """
    if n <= 0:
        raise EmptyPointSetError("Bits per point needs at least one point")
    if isinstance(bitstream, (int, np.integer)):
        size = int(bitstream)
    elif isinstance(bitstream, (bytes, bytearray)):
        size = len(bitstream)
    elif payload_only:
        size = bitstream.payload_size
    else:
        size = len(bitstream)
    return 8.0 * size / n


def psnr_yuv(original, decoded, conv=BT709):
    """Combined YUV PSNR with 6:1:1 channel weights."""
    return combine_psnr(*psnr_channels(original, decoded, conv))


def combine_psnr(y, u, v):
    return (6.0 * y + u + v) / 8.0
