"""Specular-free images by forcing a constant maximum chromaticity.

Subtracting the per-pixel achromatic offset

    m = (max_c I_c - L * sum_c I_c) / (1 - 3 L)

leaves every pixel with maximum chromaticity exactly ``L``. A white specular
term shifts ``m`` by exactly its own magnitude, so it cancels.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidParameterError
from .imgcore import EPS_BLACK, _require_rgb

DEFAULT_LAMBDA = 0.5


def max_chromaticity(pixel):
    """max(I) / sum(I) for one RGB triple, or an (..., 3) array; black -> 1/3."""
    p = np.asarray(pixel, dtype=np.float64)
    s = p.sum(axis=-1)
    out = np.where(s > EPS_BLACK, p.max(axis=-1) / np.where(s > EPS_BLACK, s, 1.0), 1.0 / 3.0)
    return float(out) if out.ndim == 0 else out


def _check_lambda(lam):
    if not (1.0 / 3.0 < lam <= 1.0):
        raise InvalidParameterError(f"target max chromaticity must lie in (1/3, 1], got {lam}")


@dataclass
class SpecularFreeResult:
    image: np.ndarray
    offset: np.ndarray
    clamped: np.ndarray  # (H, W, 3) bool, channels cut at zero

    @property
    def clamp_fraction(self):
        """Fraction of pixels with a channel cut at zero or collapsed to black.

        Achromatic pixels land exactly on zero rather than below it, so they
        are counted through the black-output test.
        """
        bad = self.clamped.any(axis=-1) | (self.image.sum(axis=-1) <= EPS_BLACK)
        return float(bad.mean())


def specular_free_full(img, lam=DEFAULT_LAMBDA):
    img = _require_rgb(img)
    _check_lambda(lam)
    out, m, clamped = kernels.specular_free(img, lam)
    return SpecularFreeResult(out, m, clamped)


def specular_free(img, lam=DEFAULT_LAMBDA):
    return specular_free_full(img, lam).image


def specular_free_gray(img, lam=DEFAULT_LAMBDA):
    return specular_free(img, lam).mean(axis=-1, keepdims=True)


# The loss compares the candidate reflectance in the same space as the prior.
delta_transform = specular_free
