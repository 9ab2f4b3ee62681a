class ReflguideError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(ReflguideError, ValueError):
    pass


class InvalidParameterError(ReflguideError, ValueError):
    pass


class DegenerateInputError(ReflguideError, ValueError):
    """Input carries too little information for the requested operation."""


class ImageIOError(ReflguideError, OSError):
    pass
