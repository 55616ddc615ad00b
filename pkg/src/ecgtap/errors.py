"""Exception hierarchy.

Two branches matter to the command line tool: DataError (exit code 2)
covers everything wrong with input files and datasets, ModelError
(exit code 3) covers the model bundle and graph execution.
"""


class EcgTapError(Exception):
    """Base class for all package errors."""


class DataError(EcgTapError):
    """Input data is missing or malformed."""


class HeaderError(DataError):
    """Malformed WFDB header; the message names the offending line."""


class SignalError(DataError):
    """Malformed or unsupported WFDB signal data."""


class AnnotationError(DataError):
    """Malformed MIT annotation stream."""


class DatasetError(DataError):
    """Window selection or dataset container failure."""


class ModelError(EcgTapError):
    """Model bundle or graph execution failure."""


class BundleError(ModelError):
    """Model bundle fails validation."""


class ChecksumMismatchError(BundleError):
    """weights.bin digest does not match the one recorded in graph.json."""


class UnresolvedWeightError(BundleError):
    """A node references a tensor missing from the weight index."""


class CyclicGraphError(BundleError):
    """The node graph contains a cycle."""


class TapNotFoundError(BundleError):
    """A tap names a node that does not exist."""


class ShapeError(ModelError):
    """Tensor shape mismatch during inference; the message names the node."""
