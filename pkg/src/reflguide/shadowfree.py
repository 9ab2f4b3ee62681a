"""Illumination-invariant (shadow-free) priors from log-chromaticity.

Under Planckian light and narrow-band sensors, changing the illuminant moves a
surface's 2-D log-chromaticity along one fixed direction. Projecting onto the
orthogonal direction, found by minimizing projection entropy, removes the
lighting and hence the shadows.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateInputError, InvalidInputError
from .imgcore import EPS_BLACK, _require_rgb

# Orthonormal basis of the plane sum(chi) = 0, rows map R^3 -> R^2.
BASIS = np.array([
    [1.0 / np.sqrt(2.0), -1.0 / np.sqrt(2.0), 0.0],
    [1.0 / np.sqrt(6.0), 1.0 / np.sqrt(6.0), -2.0 / np.sqrt(6.0)],
])

ANGLES_DEG = np.arange(180, dtype=np.float64)
TRIM = (0.05, 0.95)
GRAY_RANGE = (0.02, 0.98)
BRIGHT_FRACTION = 0.01


@dataclass
class LogChromaticity:
    coords: np.ndarray      # (H, W, 2), zero where invalid
    valid_mask: np.ndarray  # (H, W) bool

    def valid_coords(self):
        return self.coords[self.valid_mask]


@dataclass
class EntropyProfile:
    angles: np.ndarray
    entropies: np.ndarray

    def to_csv(self):
        lines = ["angle_deg,entropy_bits"]
        lines += [f"{int(a)},{e:.12g}" for a, e in zip(self.angles, self.entropies)]
        return "\n".join(lines) + "\n"


def log_chromaticity(img):
    img = _require_rgb(img)
    valid = np.all(img > EPS_BLACK, axis=-1)
    if valid.sum() < 2:
        raise DegenerateInputError("log_chromaticity needs at least 2 pixels with all channels positive")
    logs = np.log(np.where(valid[..., None], img, 1.0))
    chi = logs - logs.mean(axis=-1, keepdims=True)
    coords = chi @ BASIS.T
    coords[~valid] = 0.0
    return LogChromaticity(coords, valid)


def direction(theta_deg):
    t = np.deg2rad(theta_deg)
    return np.array([np.cos(t), np.sin(t)])


def entropy_profile(lc):
    pts = lc.valid_coords()
    if pts.shape[0] < 2:
        raise DegenerateInputError("entropy_profile needs at least 2 valid pixels")
    ent = kernels.entropy_sweep(pts, np.deg2rad(ANGLES_DEG), TRIM[0], TRIM[1])
    return EntropyProfile(ANGLES_DEG.copy(), np.asarray(ent, dtype=np.float64))


def min_entropy_angle(profile):
    # np.argmin returns the first minimum, i.e. the smallest angle on ties
    return float(profile.angles[int(np.argmin(profile.entropies))])


def _check_theta(theta):
    if not (0.0 <= theta < 180.0):
        raise InvalidInputError(f"theta must lie in [0, 180), got {theta}")


def invariant_log(lc, theta):
    """Raw 1-D invariant coords . e_theta (zero at invalid pixels)."""
    _check_theta(theta)
    return np.where(lc.valid_mask, lc.coords @ direction(theta), 0.0)


def invariant_grayscale(lc, theta, rescale=True):
    """Grayscale shadow-free image, shape (H, W, 1).

    With ``rescale`` the 2nd..98th percentile of valid pixels is mapped onto
    [0, 1] and the result clipped to that range.
    """
    g = np.exp(invariant_log(lc, theta))
    valid = lc.valid_mask
    if rescale:
        lo, hi = np.percentile(g[valid], [100 * GRAY_RANGE[0], 100 * GRAY_RANGE[1]])
        if hi - lo > 1e-12:
            g = np.clip((g - lo) / (hi - lo), 0.0, 1.0)
        else:
            g = np.full_like(g, 0.5)
    g = np.where(valid, g, 0.0)
    return g[..., None]


def bright_offset(img, lc, theta):
    """Median orthogonal coordinate of the brightest 1% of valid pixels."""
    e_perp = direction(theta + 90.0)
    brightness = img.sum(axis=-1)[lc.valid_mask]
    perp = lc.valid_coords() @ e_perp
    k = max(1, int(np.ceil(BRIGHT_FRACTION * brightness.size)))
    top = np.argsort(brightness, kind="stable")[-k:]
    return float(np.median(perp[top]))


def colored_shadowfree(img, theta, lc=None):
    """Colored shadow-free chromaticity image (channels sum to 1)."""
    img = _require_rgb(img)
    _check_theta(theta)
    if lc is None:
        lc = log_chromaticity(img)
    e = direction(theta)
    e_perp = direction(theta + 90.0)
    b_perp = bright_offset(img, lc, theta)
    t = lc.coords @ e
    plane = t[..., None] * e + b_perp * e_perp
    chi = plane @ BASIS
    c = np.exp(chi)
    out = c / c.sum(axis=-1, keepdims=True)
    out[~lc.valid_mask] = 1.0 / 3.0
    return out


@dataclass
class ShadowFreeResult:
    theta: float
    theta_source: str
    profile: EntropyProfile | None
    gray: np.ndarray
    colored: np.ndarray


def shadow_free_priors(img, theta=None):
    """Run the full pipeline: sweep (unless ``theta`` is given), gray and color priors."""
    img = _require_rgb(img)
    lc = log_chromaticity(img)
    profile = None
    if theta is None:
        profile = entropy_profile(lc)
        theta = min_entropy_angle(profile)
        source = "entropy"
    else:
        theta = float(theta) % 180.0
        source = "manual"
    return ShadowFreeResult(theta, source, profile,
                            invariant_grayscale(lc, theta),
                            colored_shadowfree(img, theta, lc))
