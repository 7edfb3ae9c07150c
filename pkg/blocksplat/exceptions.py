"""
BlockSplat Exceptions

Custom exception classes for the package.
"""

from typing import Any, Dict, Optional, Tuple


class BlockSplatError(Exception):
    """
    Base exception for every error raised by the package.

    Carries a human readable message and an optional details dictionary
    that the CLI logs alongside the message.
    """

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.details = details or {}
        super().__init__(message)


class ConfigurationError(BlockSplatError):
    """
    Exception raised when there's a configuration error.
    """

    def __init__(self, message: str):
        super().__init__(f"Configuration error: {message}")


# SfM ingestion

class MissingFile(BlockSplatError):
    """
    Exception raised when a required input file does not exist.
    """

    def __init__(self, file_path: str):
        self.file_path = str(file_path)
        super().__init__(f"Missing file: {self.file_path}", {"file_path": self.file_path})


class MalformedRecord(BlockSplatError):
    """
    Exception raised when a record of a reconstruction file cannot be parsed.

    ``offset`` is a byte offset for binary files and a 1-based line number
    for text files.
    """

    def __init__(self, offset: int, file_path: Optional[str] = None, reason: str = ""):
        self.offset = offset
        self.file_path = str(file_path) if file_path else None
        message = f"Malformed record at offset {offset}"
        if self.file_path:
            message += f" in {self.file_path}"
        if reason:
            message += f": {reason}"
        super().__init__(message, {"offset": offset, "file_path": self.file_path})


class UnsupportedCameraModel(BlockSplatError):
    """
    Exception raised for camera models other than PINHOLE and SIMPLE_PINHOLE.
    """

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Unsupported camera model: {name}", {"model": name})


class VisibilityAsymmetry(BlockSplatError):
    """
    Exception raised when a view/point observation is listed on one side only.
    """

    def __init__(self, point_id: int, view_id: int, reason: str = ""):
        self.point_id = point_id
        self.view_id = view_id
        message = f"Visibility asymmetry between point {point_id} and view {view_id}"
        if reason:
            message += f": {reason}"
        super().__init__(message, {"point_id": point_id, "view_id": view_id})


class DimensionMismatch(BlockSplatError):
    """
    Exception raised when array dimensions disagree.
    """

    def __init__(self, expected: Tuple[int, ...], actual: Tuple[int, ...], what: str = "array"):
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(
            f"Dimension mismatch for {what}: expected {self.expected}, got {self.actual}",
            {"expected": self.expected, "actual": self.actual},
        )


class UnreadableFile(BlockSplatError):
    """
    Exception raised when a file exists but cannot be decoded.
    """

    def __init__(self, file_path: str, reason: str = ""):
        self.file_path = str(file_path)
        message = f"Unreadable file: {self.file_path}"
        if reason:
            message += f" ({reason})"
        super().__init__(message, {"file_path": self.file_path})


# Partitioning

class DegenerateGeometry(BlockSplatError):
    """
    Exception raised when points are too few, collinear or coincident.
    """

    def __init__(self, message: str = "Degenerate point geometry"):
        super().__init__(message)


class EmptyRoi(BlockSplatError):
    """
    Exception raised when no sparse point falls inside the region of interest.
    """

    def __init__(self, message: str = "No points inside the region of interest"):
        super().__init__(message)


# Gaussian primitives

class EmptyBlock(BlockSplatError):
    """
    Exception raised when a block holds no sparse points to initialize from.
    """

    def __init__(self, block_id: int):
        self.block_id = block_id
        super().__init__(f"Block {block_id} contains no sparse points", {"block_id": block_id})


class UnknownAttribute(BlockSplatError):
    """
    Exception raised when a PLY vertex element lacks a required attribute.
    """

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Missing or unknown PLY attribute: {name}", {"attribute": name})


class TruncatedFile(BlockSplatError):
    """
    Exception raised when a binary file ends before its header says it should.
    """

    def __init__(self, file_path: str):
        self.file_path = str(file_path)
        super().__init__(f"Truncated file: {self.file_path}", {"file_path": self.file_path})


# Rendering and losses

class MissingForwardState(BlockSplatError):
    """
    Exception raised when a backward pass is requested for a view rendered
    without a contribution trace.
    """

    def __init__(self, message: str = "Rendered view carries no forward state"):
        super().__init__(message)


class EmptyDepth(BlockSplatError):
    """
    Exception raised when a depth map has no positive pixel.
    """

    def __init__(self, message: str = "Depth map has no positive pixel"):
        super().__init__(message)


# Optimization and merging

class NoViews(BlockSplatError):
    """
    Exception raised when a block has no supervising views.
    """

    def __init__(self, block_id: Optional[int] = None):
        self.block_id = block_id
        super().__init__(f"Block {block_id} has no supervising views", {"block_id": block_id})


class DivergedLoss(BlockSplatError):
    """
    Exception raised when the training loss becomes non-finite.

    ``snapshot`` holds a copy of the block state taken before the failing
    update so it can be written out for inspection.
    """

    def __init__(self, iteration: int, snapshot: Any = None):
        self.iteration = iteration
        self.snapshot = snapshot
        super().__init__(f"Loss diverged at iteration {iteration}", {"iteration": iteration})


class PlanMismatch(BlockSplatError):
    """
    Exception raised when block states do not belong to one partition plan.
    """

    def __init__(self, message: str):
        super().__init__(message)
