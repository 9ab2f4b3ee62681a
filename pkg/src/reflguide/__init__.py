"""Shadow-free and specular-free priors, intrinsic-image losses, a per-image
decomposition solver, attention/normalization math and evaluation metrics."""
__version__ = "0.1.0"

from .errors import (DegenerateInputError, ImageIOError, InvalidInputError,  # noqa: E402
                     InvalidParameterError, ReflguideError)

__all__ = ["__version__", "ReflguideError", "InvalidInputError", "InvalidParameterError",
           "DegenerateInputError", "ImageIOError"]
