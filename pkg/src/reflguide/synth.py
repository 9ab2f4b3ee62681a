"""Deterministic synthetic scenes with ground-truth layers.

Randomness comes from numpy's PCG64 bit generator (64-bit state, the
``PCG64`` algorithm as fixed in NumPy >= 1.17), seeded directly with the user
seed, so scenes are reproducible across platforms.

Illuminants follow Wien's approximation to Planck's law seen through delta
sensors at ``WAVELENGTHS_NM``; each illuminant is scaled so its channel
geometric mean is 1, which keeps its intensity out of the log-chromaticity.
Shadowed light is blended with the lit light in the log domain, so every
pixel (penumbra included) is lit by an exact Planckian, and the shadow-free
invariant holds exactly.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InvalidParameterError
from .shadowfree import BASIS

WAVELENGTHS_NM = np.array([610.0, 540.0, 450.0])
C2 = 1.4388e-2  # second radiation constant, m*K


def rng_for(seed):
    return np.random.Generator(np.random.PCG64(int(seed)))


def planck_log_rgb(temp_k):
    """Geometric-mean-normalized log channel response to a Wien blackbody."""
    lam = WAVELENGTHS_NM * 1e-9
    logs = -5.0 * np.log(lam) - C2 / (lam * temp_k)
    return logs - logs.mean()


def planck_rgb(temp_k):
    return np.exp(planck_log_rgb(temp_k))


def lighting_direction_deg():
    """Angle of the illuminant-change line in the 2-D log-chromaticity plane."""
    inv = 1.0 / WAVELENGTHS_NM
    d = BASIS @ (inv - inv.mean())
    # increasing T adds +c2*dT^-1 * inv: direction is the same line either way
    return float(np.degrees(np.arctan2(d[1], d[0])) % 180.0)


def invariant_angle_deg():
    return (lighting_direction_deg() + 90.0) % 180.0


@dataclass
class ShadowScene:
    image: np.ndarray
    reflectance_gt: np.ndarray
    shading_gt: np.ndarray      # (H, W, 3): colored illumination incl. attenuation
    shadow_mask: np.ndarray     # (H, W) in [0, 1]
    patch_ids: np.ndarray       # (H, W) int
    lit_temp: float
    shadow_temp: float
    attenuation: float
    oracle_theta: float
    params: dict = field(default_factory=dict)

    def hard_masks(self, tol=0.01):
        """(lit, shadow) boolean masks excluding the penumbra."""
        return self.shadow_mask <= tol, self.shadow_mask >= 1.0 - tol


@dataclass
class SpecularScene:
    image: np.ndarray
    diffuse_gt: np.ndarray
    specular_gt: np.ndarray
    reflectance_gt: np.ndarray
    shading_gt: np.ndarray      # (H, W, 1)
    lobe_mask: np.ndarray
    patch_ids: np.ndarray
    clipped: bool
    params: dict = field(default_factory=dict)


REFLECTANCE_RANGE = (0.2, 0.8)
MIN_CHANNEL_RATIO = 1.3  # max/min channel ratio, keeps patches off the achromatic axis


def _random_reflectance(rng, min_ratio=MIN_CHANNEL_RATIO):
    while True:
        r = rng.uniform(*REFLECTANCE_RANGE, 3)
        if r.max() / r.min() >= min_ratio:
            return r


def mondrian(rng, h, w, n_patches):
    """Guillotine partition of the frame into ``n_patches`` rectangles.

    The largest rectangle is split along its longer side at a random position
    until there are ``n_patches`` pieces, so every patch stays visible.
    """
    n_patches = max(1, n_patches)
    rects = [(0, 0, h, w)]
    while len(rects) < n_patches:
        areas = [rh * rw for _, _, rh, rw in rects]
        y0, x0, rh, rw = rects.pop(int(np.argmax(areas)))
        if max(rh, rw) < 2:
            rects.append((y0, x0, rh, rw))
            break
        if rh >= rw:
            cut = int(np.clip(round(rh * rng.uniform(0.3, 0.7)), 1, rh - 1))
            rects += [(y0, x0, cut, rw), (y0 + cut, x0, rh - cut, rw)]
        else:
            cut = int(np.clip(round(rw * rng.uniform(0.3, 0.7)), 1, rw - 1))
            rects += [(y0, x0, rh, cut), (y0, x0 + cut, rh, rw - cut)]
    ids = np.zeros((h, w), dtype=np.int32)
    colors = []
    for k, (y0, x0, rh, rw) in enumerate(rects):
        ids[y0:y0 + rh, x0:x0 + rw] = k
        colors.append(_random_reflectance(rng))
    colors = np.array(colors)
    return colors[ids], ids


def _stripe_mask(rng, h, w, softness):
    """Parallel shadow bands at a random orientation, blurred by ``softness``."""
    phi = rng.uniform(0.0, np.pi)
    period = rng.uniform(0.3, 0.5) * max(h, w)
    phase = rng.uniform(0.0, period)
    yy, xx = np.mgrid[0:h, 0:w]
    u = xx * np.cos(phi) + yy * np.sin(phi) + phase
    mask = ((u % period) < 0.5 * period).astype(np.float64)
    if softness > 0:
        mask = np.clip(gaussian_filter(mask, softness, mode="nearest"), 0.0, 1.0)
    return mask


def gen_shadow_scene(seed=0, h=128, w=128, n_patches=10, lit_temp=4000.0,
                     shadow_temp=12000.0, attenuation=0.45, softness=3.0):
    for t in (lit_temp, shadow_temp):
        if not (2500.0 <= t <= 12000.0):
            raise InvalidParameterError(f"temperature {t} K outside [2500, 12000]")
    if not (0.0 < attenuation <= 1.0):
        raise InvalidParameterError(f"attenuation must lie in (0, 1], got {attenuation}")
    if h < 2 or w < 2 or n_patches < 0 or softness < 0:
        raise InvalidParameterError("need h, w >= 2, n_patches >= 0, softness >= 0")
    rng = rng_for(seed)
    refl, ids = mondrian(rng, h, w, n_patches)
    mask = _stripe_mask(rng, h, w, softness)

    log_lit = planck_log_rgb(lit_temp)
    log_shadow = planck_log_rgb(shadow_temp) + np.log(attenuation)
    m = mask[..., None]
    shading = np.exp((1.0 - m) * log_lit + m * log_shadow)
    image = refl * shading
    params = dict(seed=int(seed), h=h, w=w, n_patches=n_patches, lit_temp=lit_temp,
                  shadow_temp=shadow_temp, attenuation=attenuation, softness=softness)
    return ShadowScene(image, refl, shading, mask, ids, float(lit_temp), float(shadow_temp),
                       float(attenuation), invariant_angle_deg(), params)


def gen_specular_scene(seed=0, h=128, w=128, n_patches=10, n_lobes=3,
                       lobe_strength=0.6, lobe_sigma=6.0):
    if lobe_strength < 0 or lobe_sigma <= 0 or n_lobes < 0:
        raise InvalidParameterError("need lobe_strength >= 0, lobe_sigma > 0, n_lobes >= 0")
    if h < 2 or w < 2 or n_patches < 0:
        raise InvalidParameterError("need h, w >= 2, n_patches >= 0")
    rng = rng_for(seed)
    refl, ids = mondrian(rng, h, w, n_patches)
    yy, xx = np.mgrid[0:h, 0:w] / np.array([max(h - 1, 1), max(w - 1, 1)])[:, None, None]
    # smooth shading in [0.5, 1]: a tilted plane plus a broad bump
    a, b = rng.uniform(-0.5, 0.5, 2)
    cy, cx = rng.uniform(0.2, 0.8, 2)
    bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 0.18)
    shade = 0.5 * bump + 0.5 * (a * (yy - 0.5) + b * (xx - 0.5)) + 0.5
    shade = np.clip(shade, 0.05, None)
    shade = 0.5 + 0.5 * (shade - shade.min()) / max(shade.max() - shade.min(), 1e-12)
    shading = shade[..., None]
    diffuse = refl * shading

    spec = np.zeros((h, w))
    py, px = np.mgrid[0:h, 0:w]
    for _ in range(n_lobes):
        ly = rng.uniform(0, h - 1)
        lx = rng.uniform(0, w - 1)
        spec += lobe_strength * np.exp(-((py - ly) ** 2 + (px - lx) ** 2) / (2.0 * lobe_sigma ** 2))
    specular = np.repeat(spec[..., None], 3, axis=2)
    image = diffuse + specular
    lobe_mask = spec > 0.01 * max(lobe_strength, 1e-12)
    params = dict(seed=int(seed), h=h, w=w, n_patches=n_patches, n_lobes=n_lobes,
                  lobe_strength=lobe_strength, lobe_sigma=lobe_sigma)
    return SpecularScene(image, diffuse, specular, refl, shading, lobe_mask, ids,
                         bool(np.any(image > 1.0)), params)


def patch_split_stats(values, scene, min_pixels=20):
    """Yield (patch_id, lit_values, shadow_values) for patches seen on both sides.

    ``values`` is (H, W) or (H, W, C); penumbra pixels are excluded.
    """
    lit, shadow = scene.hard_masks()
    for pid in np.unique(scene.patch_ids):
        in_patch = scene.patch_ids == pid
        lm, sm = in_patch & lit, in_patch & shadow
        if lm.sum() >= min_pixels and sm.sum() >= min_pixels:
            yield int(pid), values[lm], values[sm]
