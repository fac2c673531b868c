"""Exception types raised across the package."""


class PeerPerfError(Exception):
    """Base class for every error raised by peerperf."""


class ParseError(PeerPerfError):
    """A row of an input file could not be parsed."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class ValidationError(PeerPerfError):
    pass


class SchemaError(ValidationError):
    """A required column is absent from an input file."""

    def __init__(self, column, path=None):
        self.column = column
        where = f" in {path}" if path is not None else ""
        super().__init__(f"missing required column {column!r}{where}")


class DomainError(PeerPerfError, ValueError):
    pass


class InsufficientDataError(PeerPerfError):
    """Too few firms, peers, or observations for the requested computation."""


class SingularDesignError(PeerPerfError, ValueError):
    pass


class AlignmentError(PeerPerfError, ValueError):
    pass


class CoverageError(PeerPerfError):
    """Requested dates fall outside (or inside a hole of) the data calendar."""

    def __init__(self, message, months=()):
        self.months = list(months)
        super().__init__(message)


class EmptyGroupError(PeerPerfError, ValueError):
    pass


class OptimizationError(PeerPerfError):
    """Maximum likelihood did not converge; ``last_iterate`` holds the final parameters."""

    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)
