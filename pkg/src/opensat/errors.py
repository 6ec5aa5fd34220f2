"""Error taxonomy shared by every subsystem.

Each error carries a stable machine-readable ``code`` so the HTTP layer
and the CLI can map failures without string matching.
"""

from __future__ import annotations


class OpenSatError(Exception):
    code = "internal_error"


class DimensionMismatch(OpenSatError):
    code = "dimension_mismatch"


class DegenerateVector(OpenSatError):
    code = "degenerate_vector"


class EmptyImage(OpenSatError):
    code = "empty_image"


class RectOutOfBounds(OpenSatError):
    code = "rect_out_of_bounds"


class ImageDecodeError(OpenSatError):
    code = "image_decode_error"


class UnsupportedFormat(OpenSatError):
    code = "unsupported_format"


class ProviderUnavailable(OpenSatError):
    code = "provider_unavailable"


class ManifestParseError(OpenSatError):
    code = "manifest_parse_error"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ContextParseError(OpenSatError):
    code = "context_parse_error"


class DeficientContext(OpenSatError):
    code = "deficient_context"


class DuplicateTile(OpenSatError):
    code = "duplicate_tile"


class EmptyStore(OpenSatError):
    code = "empty_store"


class UnknownClass(OpenSatError):
    code = "unknown_class"


class ConfigError(OpenSatError):
    code = "config_error"
