"""
Uniform scalar quantisation, adaptive run-length Golomb-Rice (RLGR) coding
and the bitstream container.

RLGR keeps two backward-adapted parameters scaled by 2^4: k_RP selects
between no-run mode (k_R = 0) and run mode, k_P sets the Golomb-Rice
parameter. Encoder and decoder update them identically after every symbol
or run, so nothing but the symbols is transmitted.

The coding loops are numba kernels over int64 symbol and uint8 byte
buffers. A bit cursor is an int64 array [byte position, accumulator,
pending bit count].
"""
import struct
import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from core.errors import (
    BitstreamFormatError, TruncatedStreamError, SurplusDataError
)

logger = logging.getLogger("Entropy")

# RLGR format constants
PARAM_SHIFT = 4
PARAM_MAX = 24 << PARAM_SHIFT
U0, D0 = 3, 1   # no-run mode: zero / nonzero symbol
U1, D1 = 2, 1   # run mode: complete / partial run
ESCAPE = 24     # unary prefixes this long switch to an explicit bit length
ESCAPE_LENGTH_BITS = 6

# Kernel status codes
_OK = 0
_TRUNCATED = 1
_OVERRUN = 2

# Container format
MAGIC = b"IRGF"
VERSION = 1
_PREFIX = struct.Struct("<4sBBBB")      # magic, version, depth, transform, levels
_SUFFIX = struct.Struct("<dBBBQB")      # step, predictor, k, color, points, channels
_LENGTH = struct.Struct("<I")


# --- Quantisation ---

@dataclass(frozen=True)
class QuantParams:
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"Quantisation step must be positive, got {self.step}")
        object.__setattr__(self, "step", float(self.step))


def quantize(x, step):
    """round(x / step) with halves rounded away from zero."""
    step = QuantParams(step).step
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) / step + 0.5)).astype(np.int64)


def dequantize(q, step):
    return np.asarray(q, dtype=np.float64) * step


# --- Bit I/O ---

@njit
def new_cursor():
    return np.zeros(3, dtype=np.int64)


@njit
def write_bits(buf, cursor, value, count):
    """Appends the low `count` bits of `value`, MSB first."""
    while count > 0:
        chunk = min(count, 32)
        count -= chunk
        bits = (value >> count) & ((1 << chunk) - 1)
        acc = (cursor[1] << chunk) | bits
        nbits = cursor[2] + chunk
        pos = cursor[0]
        while nbits >= 8:
            nbits -= 8
            buf[pos] = (acc >> nbits) & 0xFF
            pos += 1
        cursor[0] = pos
        cursor[1] = acc & ((1 << nbits) - 1)
        cursor[2] = nbits


@njit
def flush_bits(buf, cursor):
    """Zero pads the last partial byte and returns the byte count."""
    if cursor[2]:
        buf[cursor[0]] = (cursor[1] << (8 - cursor[2])) & 0xFF
        cursor[0] += 1
        cursor[1] = 0
        cursor[2] = 0
    return cursor[0]


@njit
def read_bits(data, cursor, count):
    """Next `count` bits as an unsigned value, or -1 past the end of `data`."""
    value = 0
    while count > 0:
        chunk = min(count, 32)
        count -= chunk
        while cursor[2] < chunk:
            if cursor[0] >= len(data):
                return -1
            cursor[1] = (cursor[1] << 8) | data[cursor[0]]
            cursor[0] += 1
            cursor[2] += 8
        cursor[2] -= chunk
        value = (value << chunk) | (cursor[1] >> cursor[2])
        cursor[1] &= (1 << cursor[2]) - 1
    return value


# --- RLGR ---

def _to_unsigned(symbols):
    x = np.asarray(symbols, dtype=np.int64)
    return np.where(x >= 0, 2 * x, -2 * x - 1)


@njit
def _to_signed(u):
    return (u >> 1) if u % 2 == 0 else -((u + 1) >> 1)


@njit
def _clamp(value):
    return 0 if value < 0 else (PARAM_MAX if value > PARAM_MAX else value)


@njit
def adapt_symbol(krp, u):
    """k_RP after a symbol coded in no-run mode."""
    return _clamp(krp + U0 if u == 0 else krp - D0)


@njit
def adapt_run(krp, complete):
    return _clamp(krp + U1 if complete else krp - D1)


@njit
def adapt_quotient(kp, p):
    """k_P after a Golomb-Rice code with unary prefix p."""
    if p == 0:
        return _clamp(kp - 2)
    if p > 1:
        return _clamp(kp + p + 1)
    return kp


@dataclass(frozen=True)
class RlgrState:
    """Backward-adapted coder parameters, both scaled by 2^PARAM_SHIFT."""
    krp: int = 0
    kp: int = 0

    @property
    def kr(self):
        return self.krp >> PARAM_SHIFT

    @property
    def k(self):
        return self.kp >> PARAM_SHIFT

    @property
    def run_mode(self):
        return self.krp >= (1 << PARAM_SHIFT)

    def after_symbol(self, u):
        return RlgrState(int(adapt_symbol(self.krp, u)), self.kp)

    def after_run(self, complete):
        return RlgrState(int(adapt_run(self.krp, complete)), self.kp)

    def after_quotient(self, p):
        return RlgrState(self.krp, int(adapt_quotient(self.kp, p)))


@njit
def _bit_length(u):
    n = 0
    while u > 0:
        n += 1
        u >>= 1
    return n


@njit
def _write_gr(buf, cursor, u, k):
    p = u >> k
    if p < ESCAPE:
        # p ones, a zero, then the k low bits
        write_bits(buf, cursor, (((1 << p) - 1) << (k + 1)) | (u & ((1 << k) - 1)), p + 1 + k)
        return p
    n = _bit_length(u)
    write_bits(buf, cursor, (1 << ESCAPE) - 1, ESCAPE)
    write_bits(buf, cursor, n, ESCAPE_LENGTH_BITS)
    write_bits(buf, cursor, u, n)
    return ESCAPE


@njit
def _read_gr(data, cursor, k):
    p = 0
    while p < ESCAPE:
        bit = read_bits(data, cursor, 1)
        if bit < 0:
            return -1, p
        if bit == 0:
            break
        p += 1
    if p < ESCAPE:
        low = read_bits(data, cursor, k)
        if low < 0:
            return -1, p
        return (p << k) | low, p
    n = read_bits(data, cursor, ESCAPE_LENGTH_BITS)
    if n < 0:
        return -1, p
    return read_bits(data, cursor, n), ESCAPE


@njit
def _encode_kernel(u, next_nonzero):
    n = len(u)
    # a run flag, a 24-bit run length and an escaped code fit in 16 bytes
    buf = np.zeros(16 * n + 16, dtype=np.uint8)
    cursor = new_cursor()
    krp = 0
    kp = 0
    i = 0
    while i < n:
        kr = krp >> PARAM_SHIFT
        if kr == 0:
            value = u[i]
            kp = adapt_quotient(kp, _write_gr(buf, cursor, value, kp >> PARAM_SHIFT))
            krp = adapt_symbol(krp, value)
            i += 1
            continue

        run_max = 1 << kr
        r = min(run_max, next_nonzero[i] - i)
        if r == run_max or i + r == n:
            write_bits(buf, cursor, 0, 1)
            i += r
            krp = adapt_run(krp, True)
        else:
            write_bits(buf, cursor, 1, 1)
            write_bits(buf, cursor, r, kr)
            kp = adapt_quotient(kp, _write_gr(buf, cursor, u[i + r] - 1, kp >> PARAM_SHIFT))
            i += r + 1
            krp = adapt_run(krp, False)
    return buf[:flush_bits(buf, cursor)], krp, kp


@njit
def _decode_kernel(data, count):
    out = np.zeros(count, dtype=np.int64)
    cursor = new_cursor()
    krp = 0
    kp = 0
    i = 0
    while i < count:
        kr = krp >> PARAM_SHIFT
        if kr == 0:
            value, p = _read_gr(data, cursor, kp >> PARAM_SHIFT)
            if value < 0:
                return out, _TRUNCATED, cursor
            kp = adapt_quotient(kp, p)
            krp = adapt_symbol(krp, value)
            out[i] = _to_signed(value)
            i += 1
            continue

        flag = read_bits(data, cursor, 1)
        if flag < 0:
            return out, _TRUNCATED, cursor
        if flag == 0:
            i += min(1 << kr, count - i)
            krp = adapt_run(krp, True)
        else:
            r = read_bits(data, cursor, kr)
            if r < 0:
                return out, _TRUNCATED, cursor
            if i + r >= count:
                return out, _OVERRUN, cursor
            i += r
            value, p = _read_gr(data, cursor, kp >> PARAM_SHIFT)
            if value < 0:
                return out, _TRUNCATED, cursor
            kp = adapt_quotient(kp, p)
            out[i] = _to_signed(value + 1)
            i += 1
            krp = adapt_run(krp, False)
    return out, _OK, cursor


def rlgr_encode(symbols):
    u = _to_unsigned(symbols)
    n = len(u)
    if n == 0:
        return b""

    # next_nonzero[i]: first index >= i holding a nonzero symbol (n if none)
    nonzero = np.flatnonzero(u != 0)
    next_nonzero = np.full(n + 1, n, dtype=np.int64)
    next_nonzero[nonzero] = nonzero
    next_nonzero = np.ascontiguousarray(np.minimum.accumulate(next_nonzero[::-1])[::-1])
    data, krp, kp = _encode_kernel(np.ascontiguousarray(u), next_nonzero)
    logger.debug(f"Coded {n} symbols into {len(data)} bytes, final state {RlgrState(int(krp), int(kp))}")
    return data.tobytes()


def rlgr_decode(data, count):
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    out, status, cursor = _decode_kernel(buf, int(count))
    if status == _TRUNCATED:
        raise TruncatedStreamError("RLGR payload ended before all symbols were decoded")
    if status == _OVERRUN:
        raise BitstreamFormatError("RLGR run extends past the expected symbol count")
    if cursor[0] != len(buf) or cursor[1] != 0:
        raise SurplusDataError(
            f"{len(buf) - cursor[0]} bytes / nonzero padding after the last symbol")
    logger.debug(f"Decoded {count} symbols from {len(buf)} bytes")
    return out


# --- Container ---

@dataclass(frozen=True)
class BitstreamHeader:
    depth: int
    transform: int
    block_sizes: tuple      # coarsest level first
    step: float
    predictor: int
    k: int
    color: int
    n_points: int
    channels: int
    version: int = VERSION


@dataclass(frozen=True)
class Bitstream:
    header: BitstreamHeader
    payloads: tuple = field(default_factory=tuple)

    @property
    def header_size(self):
        return _PREFIX.size + 2 * len(self.header.block_sizes) + _SUFFIX.size

    @property
    def payload_size(self):
        return sum(_LENGTH.size + len(p) for p in self.payloads)

    def __len__(self):
        return self.header_size + self.payload_size

    def to_bytes(self):
        return serialize(self.header, self.payloads)


def serialize(header, payloads):
    if len(payloads) != header.channels:
        raise BitstreamFormatError(
            f"{len(payloads)} payloads for {header.channels} channels")
    out = bytearray(_PREFIX.pack(
        MAGIC, header.version, header.depth, header.transform, len(header.block_sizes)))
    out += struct.pack(f"<{len(header.block_sizes)}H", *header.block_sizes)
    out += _SUFFIX.pack(
        header.step, header.predictor, header.k, header.color,
        header.n_points, header.channels)
    for payload in payloads:
        out += _LENGTH.pack(len(payload))
        out += payload
    return bytes(out)


def deserialize(data):
    data = bytes(data)
    view = _Cursor(data)
    magic, version, depth, transform, levels = view.unpack(_PREFIX)
    if magic != MAGIC:
        raise BitstreamFormatError(f"Bad magic {magic!r}")
    if version != VERSION:
        raise BitstreamFormatError(f"Unsupported bitstream version {version}")
    block_sizes = view.unpack(struct.Struct(f"<{levels}H"))
    step, predictor, k, color, n_points, channels = view.unpack(_SUFFIX)

    payloads = []
    for _ in range(channels):
        (length,) = view.unpack(_LENGTH)
        payloads.append(view.take(length))
    if view.remaining:
        raise SurplusDataError(f"{view.remaining} trailing bytes after the last payload")

    header = BitstreamHeader(
        depth=depth, transform=transform, block_sizes=tuple(block_sizes), step=step,
        predictor=predictor, k=k, color=color, n_points=n_points,
        channels=channels, version=version)
    return Bitstream(header, tuple(payloads))


class _Cursor:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    @property
    def remaining(self):
        return len(self.data) - self.pos

    def take(self, n):
        if self.remaining < n:
            raise TruncatedStreamError(f"Bitstream truncated: need {n} bytes, {self.remaining} left")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return fmt.unpack(self.take(fmt.size))
