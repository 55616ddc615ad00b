"""Model-zoo export into the ecgtap inference-bundle format."""

__version__ = "0.1.0"


class ExportError(Exception):
    """Export failed (download failure, unsupported operator, bad tap spec)."""
