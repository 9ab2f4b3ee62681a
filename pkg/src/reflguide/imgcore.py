"""Image arrays, color transforms, gradients, resampling and file I/O.

Images are plain float64 numpy arrays of shape (H, W, C) with C in {1, 3},
holding non-negative linear-light values. ``as_image`` validates and
normalizes anything array-like into that form.
"""
import os
import tempfile
from functools import lru_cache
from typing import NamedTuple

import cv2
import numpy as np

from .errors import ImageIOError, InvalidInputError

EPS_BLACK = 1e-6


def as_image(data, name="image"):
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise InvalidInputError(f"{name}: expected HxW, HxWx1 or HxWx3, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name}: empty image")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: non-finite values")
    if np.any(arr < 0):
        raise InvalidInputError(f"{name}: negative values")
    return arr


def _require_rgb(img, name="image"):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInputError(f"{name}: expected a 3-channel image, got shape {img.shape}")
    return img


def chromaticity(img):
    """Per-pixel channel / channel-sum; black pixels map to (1/3, 1/3, 1/3)."""
    img = _require_rgb(img)
    s = img.sum(axis=-1, keepdims=True)
    valid = s >= EPS_BLACK
    out = np.where(valid, img / np.where(valid, s, 1.0), 1.0 / 3.0)
    return out


def luminance(img):
    """Unweighted channel mean, shape (H, W)."""
    img = np.asarray(img, dtype=np.float64)
    return img.mean(axis=-1) if img.ndim == 3 else img


class GradientField(NamedTuple):
    dx: np.ndarray
    dy: np.ndarray


def gradient(img):
    """Forward differences; last column of dx and last row of dy are zero."""
    img = np.asarray(img, dtype=np.float64)
    dx = np.zeros_like(img)
    dy = np.zeros_like(img)
    dx[:, :-1] = img[:, 1:] - img[:, :-1]
    dy[:-1, :] = img[1:, :] - img[:-1, :]
    return GradientField(dx, dy)


def gradient_adjoint(gx, gy):
    """Transpose of ``gradient``: maps per-difference weights back to pixels."""
    out = np.zeros_like(gx)
    out[:, :-1] -= gx[:, :-1]
    out[:, 1:] += gx[:, :-1]
    out[:-1, :] -= gy[:-1, :]
    out[1:, :] += gy[:-1, :]
    return out


@lru_cache(maxsize=64)
def _taps(n_in, factor):
    """Two-tap bilinear weights along one axis, half-pixel aligned."""
    n_out = -(-n_in // factor)
    pos = np.clip((np.arange(n_out) + 0.5) * factor - 0.5, 0.0, n_in - 1.0)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    t = pos - i0
    for arr in (i0, i1, t):
        arr.setflags(write=False)
    return i0, i1, 1.0 - t, t


def _resample_axis(x, taps, axis):
    i0, i1, w0, w1 = taps
    shape = [1] * x.ndim
    shape[axis] = -1
    return (np.take(x, i0, axis=axis) * w0.reshape(shape)
            + np.take(x, i1, axis=axis) * w1.reshape(shape))


def _resample_axis_adjoint(g, taps, n_in, axis):
    i0, i1, w0, w1 = taps
    g = np.moveaxis(g, axis, 0)
    out = np.zeros((n_in,) + g.shape[1:])
    shape = (-1,) + (1,) * (g.ndim - 1)
    # i0 and i1 are each strictly increasing, so fancy += never collides
    out[i0] += g * w0.reshape(shape)
    out[i1] += g * w1.reshape(shape)
    return np.moveaxis(out, 0, axis)


def _check_level(n):
    if n not in (1, 2, 3):
        raise InvalidInputError(f"downsample level must be 1, 2 or 3, got {n}")


def downsample(img, n):
    """Bilinear downsample by 2**(n-1); output dims are ceil(dim / 2**(n-1))."""
    _check_level(n)
    img = np.asarray(img, dtype=np.float64)
    if n == 1:
        return img.copy()
    f = 2 ** (n - 1)
    out = _resample_axis(img, _taps(img.shape[0], f), 0)
    return _resample_axis(out, _taps(img.shape[1], f), 1)


def downsample_adjoint(grad, n, shape):
    """Transpose of ``downsample`` at level n for an input of spatial ``shape``."""
    _check_level(n)
    if n == 1:
        return grad.copy()
    f = 2 ** (n - 1)
    out = _resample_axis_adjoint(grad, _taps(shape[1], f), shape[1], 1)
    return _resample_axis_adjoint(out, _taps(shape[0], f), shape[0], 0)


# ----------------------------------------------------------------------- sRGB

def srgb_to_linear(v):
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(v):
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, None)
    return np.where(v <= 0.0031308, 12.92 * v, 1.055 * np.power(v, 1.0 / 2.4) - 0.055)


# ------------------------------------------------------------------------ I/O

_SUPPORTED = (".png", ".ppm")


def load_image(path, assume_srgb=False):
    """Read an 8- or 16-bit PNG or binary PPM into a float image in [0, 1]."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext not in _SUPPORTED:
        raise ImageIOError(f"{path}: unsupported format {ext!r} (expected PNG or PPM)")
    if not os.path.isfile(path):
        raise ImageIOError(f"{path}: no such file")
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageIOError(f"{path}: unreadable image")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageIOError(f"{path}: unsupported sample type {raw.dtype}")
    if raw.ndim == 2:
        raw = raw[..., None]
    elif raw.shape[2] == 4:
        raw = raw[..., :3]
    if raw.shape[2] == 3:
        raw = raw[..., ::-1]  # BGR -> RGB
    img = raw.astype(np.float64) / scale
    if assume_srgb:
        img = srgb_to_linear(img)
    return img


def save_image(img, path, bits=16, assume_srgb=False):
    """Write a PNG or PPM atomically. Values are clipped to [0, 1] and quantized."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext not in _SUPPORTED:
        raise ImageIOError(f"{path}: unsupported format {ext!r}")
    if bits not in (8, 16):
        raise InvalidInputError(f"bits must be 8 or 16, got {bits}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if assume_srgb:
        img = linear_to_srgb(img)
    top = 255 if bits == 8 else 65535
    q = np.rint(np.clip(img, 0.0, 1.0) * top).astype(np.uint8 if bits == 8 else np.uint16)
    if q.shape[2] == 3:
        q = q[..., ::-1]
    elif ext == ".ppm":
        q = np.repeat(q, 3, axis=2)
    else:
        q = q[..., 0]
    write_atomic_with(path, lambda tmp: _imwrite(tmp, q, ext))
    return path


def _imwrite(tmp, q, ext):
    params = [cv2.IMWRITE_PNG_COMPRESSION, 6] if ext == ".png" else [cv2.IMWRITE_PXM_BINARY, 1]
    ok = cv2.imwrite(tmp, np.ascontiguousarray(q), params)
    if not ok:
        raise ImageIOError(f"{tmp}: write failed")


def write_atomic_with(path, writer):
    """Call ``writer(tmp_path)`` then rename the temp file onto ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    suffix = os.path.splitext(path)[1]
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=suffix, dir=directory)
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
