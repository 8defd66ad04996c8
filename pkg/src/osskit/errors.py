"""Exception hierarchy shared across osskit."""


class OSSError(Exception):
    """Base class for all osskit errors."""


class ParseError(OSSError):
    """Annotation input could not be parsed.

    ``offset`` is the byte offset of the failure when known.
    """

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class IntegrityError(OSSError):
    """A feature-table file is truncated or its checksum does not match."""


class IncompatibleVersionError(OSSError):
    """A feature-table file was written with an unsupported format version."""


class InsufficientSamplesError(OSSError):
    pass


class InvalidKError(OSSError):
    pass


class DegenerateSampleError(OSSError):
    """Nearest-neighbour distances stayed zero even after jitter."""


class UndefinedCorrelationError(OSSError):
    pass


class EmptyOverlapError(OSSError):
    """No class survived the inclusion rules, so OSS has no terms."""


class ConsistencyError(OSSError):
    """An intermediate value that should always be finite was not."""
