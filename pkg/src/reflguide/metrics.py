"""WHDR and the scale-invariant MSE family."""
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ImageIOError, InvalidInputError

log = logging.getLogger(__name__)

WHDR_DELTA = 0.10
LABELS = ("1", "2", "E")


@dataclass(frozen=True)
class Judgment:
    p1: tuple  # (row, col), fractions of height and width
    p2: tuple
    darker: str
    weight: float = 1.0

    def __post_init__(self):
        for p in (self.p1, self.p2):
            if len(p) != 2 or not all(0.0 <= float(v) <= 1.0 for v in p):
                raise InvalidInputError(f"judgment point {p} outside [0, 1]^2")
        if self.darker not in LABELS:
            raise InvalidInputError(f"darker must be one of {LABELS}, got {self.darker!r}")
        if not (self.weight >= 0.0 and math.isfinite(self.weight)):
            raise InvalidInputError(f"weight must be a finite value >= 0, got {self.weight}")


def judgments_from_records(records):
    out = []
    for k, rec in enumerate(records):
        try:
            out.append(Judgment(tuple(float(v) for v in rec["p1"]),
                                tuple(float(v) for v in rec["p2"]),
                                str(rec["darker"]), float(rec.get("weight", 1.0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"judgment {k}: {exc}") from exc
    return out


def load_judgments(path):
    try:
        with open(path, encoding="utf-8") as fh:
            records = json.load(fh)
    except OSError as exc:
        raise ImageIOError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(records, list):
        raise InvalidInputError(f"{path}: expected a JSON list of judgments")
    return judgments_from_records(records)


def _pixel(p, h, w):
    return min(int(p[0] * h), h - 1), min(int(p[1] * w), w - 1)


def whdr(R, judgments, delta=WHDR_DELTA):
    """Weighted fraction of judgments the reflectance image disagrees with.

    Points are compared on the channel mean. A judged point with zero
    luminance makes its judgment count as a disagreement.
    """
    R = np.asarray(R, dtype=np.float64)
    L = R.mean(axis=-1) if R.ndim == 3 else R
    if not judgments:
        raise InvalidInputError("whdr: empty judgment set")
    total = sum(j.weight for j in judgments)
    if total <= 0:
        raise InvalidInputError("whdr: total judgment weight is zero")
    h, w = L.shape
    wrong = 0.0
    n_zero = 0
    for j in judgments:
        l1, l2 = L[_pixel(j.p1, h, w)], L[_pixel(j.p2, h, w)]
        if l1 <= 0 or l2 <= 0:
            n_zero += 1
            wrong += j.weight
            continue
        ratio = l1 / l2
        pred = "2" if ratio > 1.0 + delta else ("1" if ratio < 1.0 / (1.0 + delta) else "E")
        if pred != j.darker:
            wrong += j.weight
    if n_zero:
        log.warning("whdr: %d judgment(s) touch zero-luminance pixels, counted as errors", n_zero)
    return wrong / total


def _as_plane(x, mode):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3 and x.shape[2] == 1:
        x = x[..., 0]
    if x.ndim == 3 and mode == "luminance":
        x = x.mean(axis=-1)
    return x


def _si_mse_plane(p, g):
    pp = float((p * p).sum())
    alpha = float((p * g).sum()) / pp if pp > 0 else 0.0
    return float(((alpha * p - g) ** 2).mean())


def si_mse(pred, gt, mode="luminance"):
    """min over alpha of mean (alpha * pred - gt)^2, alpha in closed form.

    3-channel inputs are reduced to their channel mean (``mode="luminance"``)
    or scored channel by channel and averaged (``mode="channels"``).
    """
    if mode not in ("luminance", "channels"):
        raise InvalidInputError(f"unknown mode {mode!r}")
    p, g = _as_plane(pred, mode), _as_plane(gt, mode)
    if p.shape != g.shape:
        raise InvalidInputError(f"si_mse: shape mismatch {p.shape} vs {g.shape}")
    if p.ndim == 3:
        return float(np.mean([_si_mse_plane(p[..., c], g[..., c]) for c in range(p.shape[2])]))
    return _si_mse_plane(p, g)


def window_starts(n, size, stride):
    """Window origins along one axis; the last window ends on the edge."""
    size = min(size, n)
    starts = list(range(0, n - size + 1, stride))
    if starts[-1] != n - size:
        starts.append(n - size)
    return starts, size


def si_lmse(pred, gt, window_frac=0.1, mode="luminance"):
    """Mean si_mse over overlapping square windows covering the image.

    window = max(round(window_frac * max(H, W)), 2) with halves rounded up,
    stride = window // 2.
    """
    p, g = _as_plane(pred, mode), _as_plane(gt, mode)
    if p.shape != g.shape:
        raise InvalidInputError(f"si_lmse: shape mismatch {p.shape} vs {g.shape}")
    h, w = p.shape[:2]
    if h < 2 or w < 2:
        raise InvalidInputError(f"si_lmse: image must be at least 2x2, got {h}x{w}")
    win = max(int(math.floor(window_frac * max(h, w) + 0.5)), 2)
    stride = max(win // 2, 1)
    ys, wy = window_starts(h, win, stride)
    xs, wx = window_starts(w, win, stride)
    vals = [si_mse(p[y:y + wy, x:x + wx], g[y:y + wy, x:x + wx], mode) for y in ys for x in xs]
    return float(np.mean(vals))
