"""Codec exceptions. Every failure carries a stable integer code (used as CLI exit status)."""


class CodecError(Exception):
    code = 1

    def __init__(self, message):
        super().__init__(message)
        self.message = message

    def __str__(self):
        return f"[E{self.code}] {self.message}"


# Point cloud ingestion / data model
class PlyFormatError(CodecError, ValueError):
    code = 10


class NonIntegralCoordinateError(CodecError, ValueError):
    code = 11


class DuplicateVoxelError(CodecError, ValueError):
    code = 12


class ColorChannelError(CodecError, ValueError):
    code = 13


class CloudInvariantError(CodecError, ValueError):
    code = 14


# Graphs
class EmptyPointSetError(CodecError, ValueError):
    code = 20


class DimensionMismatchError(CodecError, ValueError):
    code = 21


# Transforms
class BlockSizeError(CodecError, ValueError):
    code = 30


class BlockGeometryError(CodecError, ValueError):
    code = 31


class LayoutMismatchError(CodecError, ValueError):
    code = 32


class TransformConfigError(CodecError, ValueError):
    code = 33


# Bitstream
class BitstreamFormatError(CodecError, ValueError):
    code = 40


class TruncatedStreamError(CodecError, ValueError):
    code = 41


class SurplusDataError(CodecError, ValueError):
    code = 42


# Decoder
class GeometryMismatchError(CodecError, ValueError):
    code = 50


class ConfigMismatchError(CodecError, ValueError):
    code = 51
