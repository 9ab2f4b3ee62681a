"""Class-activation attention and the IN / LN / LIN normalization family.

Feature stacks are float arrays of shape (m, H, W): m maps, map-major. They
are supplied by the caller (or read from a file), never learned here.
"""
import json
import struct

import numpy as np

from .errors import ImageIOError, InvalidInputError, InvalidParameterError
from .imgcore import write_atomic_with

EPS_N = 1e-5
MAGIC = b"FSTK"


def as_stack(F):
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 2:
        F = F[None]
    if F.ndim != 3 or F.shape[0] < 1:
        raise InvalidInputError(f"feature stack must be (m, H, W) with m >= 1, got {F.shape}")
    if not np.all(np.isfinite(F)):
        raise InvalidInputError("feature stack has non-finite values")
    return F


def cam_attention(F, w, rescale=False):
    """A = (1/m) * sum_i w_i F_i, shape (H, W, 1).

    With ``rescale`` the map is min-max stretched to [0, 1] for display; a
    constant map becomes all zeros.
    """
    F = as_stack(F)
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.size != F.shape[0]:
        raise InvalidInputError(f"{w.size} weights for {F.shape[0]} feature maps")
    A = np.tensordot(w, F, axes=1) / F.shape[0]
    if rescale:
        lo, hi = A.min(), A.max()
        A = (A - lo) / (hi - lo) if hi > lo else np.zeros_like(A)
    return A[..., None]


def instance_norm(F, eps=EPS_N):
    F = as_stack(F)
    mu = F.mean(axis=(1, 2), keepdims=True)
    var = F.var(axis=(1, 2), keepdims=True)
    return (F - mu) / np.sqrt(var + eps)


def layer_norm(F, eps=EPS_N):
    F = as_stack(F)
    return (F - F.mean()) / np.sqrt(F.var() + eps)


def _per_map(v, m, name):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0:
        v = np.full(m, float(v))
    v = v.ravel()
    if v.size != m:
        raise InvalidInputError(f"{name}: expected {m} values, got {v.size}")
    return v[:, None, None]


def lin_norm(F, gamma=1.0, beta=0.0, nu=0.5, eps=EPS_N):
    """gamma * ((1 - nu) * IN(F) + nu * LN(F)) + beta, per-map gamma and beta."""
    if not (0.0 <= nu <= 1.0):
        raise InvalidParameterError(f"nu must lie in [0, 1], got {nu}")
    F = as_stack(F)
    m = F.shape[0]
    g = _per_map(gamma, m, "gamma")
    b = _per_map(beta, m, "beta")
    return g * ((1.0 - nu) * instance_norm(F, eps) + nu * layer_norm(F, eps)) + b


# ------------------------------------------------------------------ file I/O
#
# layout: b"FSTK", uint32 little-endian header length, UTF-8 JSON header,
# then m*H*W little-endian float32 values, map-major, row-major inside a map.

def save_stack(F, path):
    F = as_stack(F)
    m, h, w = F.shape
    header = json.dumps({"m": m, "height": h, "width": w, "dtype": "f32",
                         "layout": "map-major", "endianness": "little"}).encode()
    payload = MAGIC + struct.pack("<I", len(header)) + header + F.astype("<f4").tobytes()

    def write(tmp):
        with open(tmp, "wb") as fh:
            fh.write(payload)

    return write_atomic_with(path, write)


def load_stack(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ImageIOError(f"{path}: {exc.strerror}") from exc
    if raw[:4] != MAGIC or len(raw) < 8:
        raise ImageIOError(f"{path}: not a feature-stack file")
    (n,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8:8 + n].decode())
        m, h, w = int(header["m"]), int(header["height"]), int(header["width"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise ImageIOError(f"{path}: bad header ({exc})") from exc
    if header.get("dtype") != "f32" or header.get("layout") != "map-major":
        raise ImageIOError(f"{path}: unsupported dtype/layout")
    data = raw[8 + n:]
    if len(data) != 4 * m * h * w:
        raise ImageIOError(f"{path}: expected {m * h * w} values, found {len(data) // 4}")
    return as_stack(np.frombuffer(data, dtype="<f4").reshape(m, h, w))


def heatmap_rgb(A, cmap="inferno"):
    """Map a (H, W[, 1]) attention map, already in [0, 1], to RGB."""
    from matplotlib import colormaps

    A = np.clip(np.asarray(A, dtype=np.float64).reshape(A.shape[0], A.shape[1]), 0.0, 1.0)
    return colormaps[cmap](A)[..., :3]
