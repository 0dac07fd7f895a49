"""Domain error hierarchy.

Every error carries a stable ``code`` used by the CLI to emit
machine-parseable ``ERROR <code>: <message>`` lines.
"""

from __future__ import annotations


class CellmetryError(Exception):
    """Base class for all cellmetry domain errors."""

    code = "ERROR"


class AlreadyExists(CellmetryError):
    code = "ALREADY_EXISTS"


class InvalidMeta(CellmetryError):
    code = "INVALID_META"


class DuplicateId(CellmetryError):
    code = "DUPLICATE_ID"


class InvariantViolation(CellmetryError):
    code = "INVARIANT_VIOLATION"


class NoSuchDataset(CellmetryError):
    code = "NO_SUCH_DATASET"


class OutOfRange(CellmetryError):
    code = "OUT_OF_RANGE"


class UnsupportedTiff(CellmetryError):
    code = "UNSUPPORTED_TIFF"


class CorruptFile(CellmetryError):
    code = "CORRUPT_FILE"


class NotBinary(CellmetryError):
    code = "NOT_BINARY"


class DimensionMismatch(CellmetryError):
    code = "DIMENSION_MISMATCH"


class EmptyBoundary(CellmetryError):
    code = "EMPTY_BOUNDARY"


class MalformedXml(CellmetryError):
    code = "MALFORMED_XML"


class DanglingEdge(CellmetryError):
    code = "DANGLING_EDGE"


class EmptyComponent(CellmetryError):
    code = "EMPTY_COMPONENT"


class EmptyRegion(CellmetryError):
    code = "EMPTY_REGION"


class MissingColumn(CellmetryError):
    code = "MISSING_COLUMN"


class NoAnalysis(CellmetryError):
    code = "NO_ANALYSIS"


class UnknownTarget(CellmetryError):
    code = "UNKNOWN_TARGET"


class OutOfMemoryBudget(CellmetryError):
    code = "OUT_OF_MEMORY_BUDGET"
