"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names at the bottom dispatch on ``_accel.USE_NUMBA``. Both paths
use the same formulas (percentile interpolation, bin assignment, argmax
tie-breaking) so they agree to rounding; tests compare them directly.
"""
import math

import numpy as np

from . import _accel
from ._accel import njit

EPS_BLACK = 1e-6
MAX_BINS = 256
SPAN_EPS = 1e-12  # projected spreads below this are rounding noise: one bin


# ---------------------------------------------------------------- entropy sweep

def _percentile_sorted_np(s, q):
    n = s.shape[-1]
    pos = q * (n - 1)
    i = int(math.floor(pos))
    frac = pos - i
    if i + 1 < n:
        return s[..., i] + frac * (s[..., i + 1] - s[..., i])
    return s[..., i]


def _entropy_1d_np(vals):
    if vals.size == 0:
        return 0.0
    sigma = vals.std()
    vmin, vmax = vals.min(), vals.max()
    span = vmax - vmin
    if sigma <= 0.0 or span <= SPAN_EPS:
        return 0.0
    bw = 3.5 * sigma * vals.size ** (-1.0 / 3.0)
    nb = int(math.ceil(span / bw))
    nb = min(max(nb, 1), MAX_BINS)
    idx = np.floor((vals - vmin) / span * nb).astype(np.int64)
    np.minimum(idx, nb - 1, out=idx)
    counts = np.bincount(idx, minlength=nb).astype(np.float64)
    p = counts[counts > 0] / vals.size
    return float(-(p * np.log2(p)).sum())


CHUNK_VALUES = 1 << 22  # projected values held at once while sweeping


def _sorted_projections(coords, angles_rad):
    """Yield (angle slice, rows of sorted projections), a chunk of angles at a time."""
    step = max(1, CHUNK_VALUES // max(coords.shape[0], 1))
    for a0 in range(0, len(angles_rad), step):
        ang = angles_rad[a0:a0 + step]
        directions = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        # numpy's sort is hard to beat from numba, so both paths share it
        yield slice(a0, a0 + len(ang)), np.sort(directions @ coords.T, axis=1)


def _entropy_rows_np(rows, lo_q, hi_q):
    lo = _percentile_sorted_np(rows, lo_q)
    hi = _percentile_sorted_np(rows, hi_q)
    out = np.empty(rows.shape[0])
    for a in range(rows.shape[0]):
        row = rows[a]
        out[a] = _entropy_1d_np(row[(row >= lo[a]) & (row <= hi[a])])
    return out


@njit(cache=True)
def _entropy_rows_nb(rows, lo_q, hi_q):
    n_ang, n = rows.shape
    out = np.empty(n_ang)
    counts = np.zeros(MAX_BINS, dtype=np.int64)
    for a in range(n_ang):
        srt = rows[a]
        pos = lo_q * (n - 1)
        i = int(math.floor(pos))
        lo = srt[i] + (pos - i) * (srt[i + 1] - srt[i]) if i + 1 < n else srt[i]
        pos = hi_q * (n - 1)
        i = int(math.floor(pos))
        hi = srt[i] + (pos - i) * (srt[i + 1] - srt[i]) if i + 1 < n else srt[i]

        # kept values are a contiguous run of the sorted row
        first = 0
        while first < n and srt[first] < lo:
            first += 1
        last = n - 1
        while last >= 0 and srt[last] > hi:
            last -= 1
        m = last - first + 1
        if m <= 0:
            out[a] = 0.0
            continue
        total = 0.0
        for k in range(first, last + 1):
            total += srt[k]
        mean = total / m
        ss = 0.0
        for k in range(first, last + 1):
            d = srt[k] - mean
            ss += d * d
        sigma = math.sqrt(ss / m)
        vmin = srt[first]
        span = srt[last] - vmin
        if sigma <= 0.0 or span <= SPAN_EPS:
            out[a] = 0.0
            continue
        bw = 3.5 * sigma * m ** (-1.0 / 3.0)
        nb = int(math.ceil(span / bw))
        if nb < 1:
            nb = 1
        if nb > MAX_BINS:
            nb = MAX_BINS
        for b in range(nb):
            counts[b] = 0
        for k in range(first, last + 1):
            b = int(math.floor((srt[k] - vmin) / span * nb))
            if b > nb - 1:
                b = nb - 1
            counts[b] += 1
        h = 0.0
        for b in range(nb):
            if counts[b] > 0:
                p = counts[b] / m
                h -= p * math.log2(p)
        out[a] = h
    return out


def _entropy_sweep(coords, angles_rad, lo_q, hi_q, rows_kernel):
    coords = np.asarray(coords, dtype=np.float64)
    angles_rad = np.asarray(angles_rad, dtype=np.float64)
    out = np.empty(len(angles_rad))
    for sl, rows in _sorted_projections(coords, angles_rad):
        out[sl] = rows_kernel(rows, lo_q, hi_q)
    return out


def entropy_sweep_numpy(coords, angles_rad, lo_q=0.05, hi_q=0.95):
    return _entropy_sweep(coords, angles_rad, lo_q, hi_q, _entropy_rows_np)


def entropy_sweep_numba(coords, angles_rad, lo_q=0.05, hi_q=0.95):
    return _entropy_sweep(coords, angles_rad, lo_q, hi_q, _entropy_rows_nb)


# ------------------------------------------------------- specular-free transform

def specular_free_numpy(img, lam):
    mx = img.max(axis=-1)
    sm = img.sum(axis=-1)
    m = (mx - lam * sm) / (1.0 - 3.0 * lam)
    raw = img - m[..., None]
    out = np.maximum(raw, 0.0)
    return out, m, raw < 0.0


@njit(cache=True)
def _specular_free_nb(img, lam):
    h, w, _ = img.shape
    out = np.empty_like(img)
    m_out = np.empty((h, w))
    clamped = np.zeros((h, w, 3), dtype=np.bool_)
    denom = 1.0 - 3.0 * lam
    for y in range(h):
        for x in range(w):
            r = img[y, x, 0]
            g = img[y, x, 1]
            b = img[y, x, 2]
            mx = max(r, max(g, b))
            m = (mx - lam * (r + g + b)) / denom
            m_out[y, x] = m
            for c in range(3):
                v = img[y, x, c] - m
                if v < 0.0:
                    out[y, x, c] = 0.0
                    clamped[y, x, c] = True
                else:
                    out[y, x, c] = v
    return out, m_out, clamped


# --------------------------------------------------- chromaticity L1 and gradient

def chroma_l1_numpy(R, target):
    """Sum of |R/sum(R) - target| over valid pixels and d(sum)/dR."""
    s = R.sum(axis=-1, keepdims=True)
    valid = s > EPS_BLACK
    safe = np.where(valid, s, 1.0)
    sigma = R / safe
    diff = sigma - target
    sgn = np.sign(diff) * valid
    total = float((np.abs(diff) * valid).sum())
    grad = (sgn - (sgn * sigma).sum(axis=-1, keepdims=True)) / safe
    return total, grad


@njit(cache=True)
def _chroma_l1_nb(R, target):
    h, w, _ = R.shape
    grad = np.zeros_like(R)
    total = 0.0
    for y in range(h):
        for x in range(w):
            s = R[y, x, 0] + R[y, x, 1] + R[y, x, 2]
            if s <= EPS_BLACK:
                continue
            dot = 0.0
            sg = np.empty(3)
            for c in range(3):
                sig = R[y, x, c] / s
                d = sig - target[y, x, c]
                total += abs(d)
                sg[c] = 1.0 if d > 0 else (-1.0 if d < 0 else 0.0)
                dot += sg[c] * sig
            for c in range(3):
                grad[y, x, c] = (sg[c] - dot) / s
    return total, grad


# ------------------------------------------- specular-free L1 and its gradient

def specfree_l1_numpy(R, target, lam):
    """Sum of |delta(R) - target| and its (sub)gradient with respect to R."""
    out, _, clamped = specular_free_numpy(R, lam)
    diff = out - target
    total = float(np.abs(diff).sum())
    wgt = np.sign(diff) * ~clamped
    k = np.argmax(R, axis=-1)
    onehot = np.zeros_like(R)
    np.put_along_axis(onehot, k[..., None], 1.0, axis=-1)
    dm = (onehot - lam) / (1.0 - 3.0 * lam)
    grad = wgt - wgt.sum(axis=-1, keepdims=True) * dm
    return total, grad


@njit(cache=True)
def _specfree_l1_nb(R, target, lam):
    h, w, _ = R.shape
    grad = np.zeros_like(R)
    total = 0.0
    denom = 1.0 - 3.0 * lam
    wgt = np.empty(3)
    for y in range(h):
        for x in range(w):
            k = 0
            if R[y, x, 1] > R[y, x, k]:
                k = 1
            if R[y, x, 2] > R[y, x, k]:
                k = 2
            m = (R[y, x, k] - lam * (R[y, x, 0] + R[y, x, 1] + R[y, x, 2])) / denom
            wsum = 0.0
            for c in range(3):
                raw = R[y, x, c] - m
                v = raw if raw > 0.0 else 0.0
                d = v - target[y, x, c]
                total += abs(d)
                if raw < 0.0:
                    wgt[c] = 0.0
                else:
                    wgt[c] = 1.0 if d > 0 else (-1.0 if d < 0 else 0.0)
                wsum += wgt[c]
            for c in range(3):
                dm = ((1.0 if c == k else 0.0) - lam) / denom
                grad[y, x, c] = wgt[c] - wsum * dm
    return total, grad


# ------------------------------------------------- gradient separation, one scale

def gradsep_scale_numpy(Rn, Sn, lam_r, lam_s):
    """Sum of squared tanh products q, and dq/2 with respect to Rn and Sn.

    A 1-channel operand broadcasts over the channels of the other one.
    """
    fR_dx = np.zeros_like(Rn)
    fR_dy = np.zeros_like(Rn)
    fS_dx = np.zeros_like(Sn)
    fS_dy = np.zeros_like(Sn)
    fR_dx[:, :-1] = Rn[:, 1:] - Rn[:, :-1]
    fR_dy[:-1, :] = Rn[1:, :] - Rn[:-1, :]
    fS_dx[:, :-1] = Sn[:, 1:] - Sn[:, :-1]
    fS_dy[:-1, :] = Sn[1:, :] - Sn[:-1, :]
    sq = 0.0
    back = []
    for dR, dS in ((fR_dx, fS_dx), (fR_dy, fS_dy)):
        tR = np.tanh(lam_r * np.abs(dR))
        tS = np.tanh(lam_s * np.abs(dS))
        prod = tR * tS
        sq += float((prod ** 2).sum())
        back.append((prod * tS * lam_r * (1.0 - tR ** 2) * np.sign(dR),
                     prod * tR * lam_s * (1.0 - tS ** 2) * np.sign(dS)))
    gR = _grad_adjoint_np(back[0][0], back[1][0])
    gS = _grad_adjoint_np(back[0][1], back[1][1])
    if gR.shape[2] != Rn.shape[2]:
        gR = gR.sum(axis=2, keepdims=True)
    if gS.shape[2] != Sn.shape[2]:
        gS = gS.sum(axis=2, keepdims=True)
    return sq, gR, gS


def _grad_adjoint_np(gx, gy):
    out = np.zeros_like(gx)
    out[:, :-1] -= gx[:, :-1]
    out[:, 1:] += gx[:, :-1]
    out[:-1, :] -= gy[:-1, :]
    out[1:, :] += gy[:-1, :]
    return out


@njit(cache=True)
def _gradsep_dir_nb(Rn, Sn, lam_r, lam_s, dy, dx, gR, gS):
    h, w, cr = Rn.shape
    cs = Sn.shape[2]
    c_out = max(cr, cs)
    ts = np.empty(cs)
    sgs = np.empty(cs)
    sq = 0.0
    for y in range(h - dy):
        for x in range(w - dx):
            y1 = y + dy
            x1 = x + dx
            any_s = False
            for ks in range(cs):
                d = Sn[y1, x1, ks] - Sn[y, x, ks]
                ts[ks] = math.tanh(lam_s * abs(d))
                sgs[ks] = 1.0 if d > 0 else (-1.0 if d < 0 else 0.0)
                if ts[ks] != 0.0:
                    any_s = True
            if not any_s:
                continue
            for k in range(c_out):
                kr = k if cr > 1 else 0
                ks = k if cs > 1 else 0
                t_s = ts[ks]
                if t_s == 0.0:
                    continue
                d = Rn[y1, x1, kr] - Rn[y, x, kr]
                if d == 0.0:
                    continue
                t_r = math.tanh(lam_r * abs(d))
                p = t_r * t_s
                sq += p * p
                br = p * t_s * lam_r * (1.0 - t_r * t_r) * (1.0 if d > 0 else -1.0)
                bs = p * t_r * lam_s * (1.0 - t_s * t_s) * sgs[ks]
                gR[y1, x1, kr] += br
                gR[y, x, kr] -= br
                gS[y1, x1, ks] += bs
                gS[y, x, ks] -= bs
    return sq


@njit(cache=True)
def _gradsep_scale_nb(Rn, Sn, lam_r, lam_s):
    gR = np.zeros_like(Rn)
    gS = np.zeros_like(Sn)
    sq = _gradsep_dir_nb(Rn, Sn, lam_r, lam_s, 0, 1, gR, gS)
    sq += _gradsep_dir_nb(Rn, Sn, lam_r, lam_s, 1, 0, gR, gS)
    return sq, gR, gS


# ------------------------------------------ weighted total variation, L1 residual

def weighted_tv_numpy(X, wx, wy):
    """Sum of wx*|dx| + wy*|dy| (forward differences) and its subgradient."""
    dx = np.zeros_like(X)
    dy = np.zeros_like(X)
    dx[:, :-1] = X[:, 1:] - X[:, :-1]
    dy[:-1, :] = X[1:, :] - X[:-1, :]
    total = float((wx * np.abs(dx)).sum() + (wy * np.abs(dy)).sum())
    return total, _grad_adjoint_np(wx * np.sign(dx), wy * np.sign(dy))


@njit(cache=True)
def _weighted_tv_nb(X, wx, wy):
    h, w, c = X.shape
    grad = np.zeros_like(X)
    total = 0.0
    for y in range(h):
        for x in range(w):
            for k in range(c):
                if x + 1 < w:
                    d = X[y, x + 1, k] - X[y, x, k]
                    total += wx[y, x, k] * abs(d)
                    g = wx[y, x, k] * (1.0 if d > 0 else (-1.0 if d < 0 else 0.0))
                    grad[y, x + 1, k] += g
                    grad[y, x, k] -= g
                if y + 1 < h:
                    d = X[y + 1, x, k] - X[y, x, k]
                    total += wy[y, x, k] * abs(d)
                    g = wy[y, x, k] * (1.0 if d > 0 else (-1.0 if d < 0 else 0.0))
                    grad[y + 1, x, k] += g
                    grad[y, x, k] -= g
    return total, grad


def recon_l1_numpy(R, S, target):
    """Sum of |R*S - target| (S broadcasts when 1-channel), d/dR and d/dS."""
    diff = R * S - target
    sgn = np.sign(diff)
    gR = sgn * S
    gS = sgn * R
    if S.shape[2] == 1 and R.shape[2] != 1:
        gS = gS.sum(axis=2, keepdims=True)
    return float(np.abs(diff).sum()), gR, gS


@njit(cache=True)
def _recon_l1_nb(R, S, target):
    h, w, c = R.shape
    cs = S.shape[2]
    gR = np.zeros_like(R)
    gS = np.zeros_like(S)
    total = 0.0
    for y in range(h):
        for x in range(w):
            for k in range(c):
                ks = k if cs > 1 else 0
                d = R[y, x, k] * S[y, x, ks] - target[y, x, k]
                total += abs(d)
                sg = 1.0 if d > 0 else (-1.0 if d < 0 else 0.0)
                gR[y, x, k] = sg * S[y, x, ks]
                gS[y, x, ks] += sg * R[y, x, k]
    return total, gR, gS


# ------------------------------------------------------------------- dispatch

if _accel.USE_NUMBA:
    entropy_sweep = entropy_sweep_numba

    def specular_free(img, lam):
        return _specular_free_nb(np.ascontiguousarray(img, dtype=np.float64), float(lam))

    def chroma_l1(R, target):
        return _chroma_l1_nb(np.ascontiguousarray(R, dtype=np.float64),
                             np.ascontiguousarray(target, dtype=np.float64))

    def specfree_l1(R, target, lam):
        return _specfree_l1_nb(np.ascontiguousarray(R, dtype=np.float64),
                               np.ascontiguousarray(target, dtype=np.float64), float(lam))

    def gradsep_scale(Rn, Sn, lam_r, lam_s):
        return _gradsep_scale_nb(np.ascontiguousarray(Rn, dtype=np.float64),
                                 np.ascontiguousarray(Sn, dtype=np.float64),
                                 float(lam_r), float(lam_s))

    def weighted_tv(X, wx, wy):
        return _weighted_tv_nb(np.ascontiguousarray(X, dtype=np.float64),
                               np.ascontiguousarray(wx, dtype=np.float64),
                               np.ascontiguousarray(wy, dtype=np.float64))

    def recon_l1(R, S, target):
        return _recon_l1_nb(np.ascontiguousarray(R, dtype=np.float64),
                            np.ascontiguousarray(S, dtype=np.float64),
                            np.ascontiguousarray(target, dtype=np.float64))
else:
    entropy_sweep = entropy_sweep_numpy
    specular_free = specular_free_numpy
    chroma_l1 = chroma_l1_numpy
    specfree_l1 = specfree_l1_numpy
    gradsep_scale = gradsep_scale_numpy
    weighted_tv = weighted_tv_numpy
    recon_l1 = recon_l1_numpy

BACKEND = "numba" if _accel.USE_NUMBA else "numpy"

NUMBA_KERNELS = {
    "entropy_sweep": entropy_sweep_numba,
    "specular_free": _specular_free_nb,
    "chroma_l1": _chroma_l1_nb,
    "specfree_l1": _specfree_l1_nb,
    "gradsep_scale": _gradsep_scale_nb,
    "weighted_tv": _weighted_tv_nb,
    "recon_l1": _recon_l1_nb,
}
NUMPY_KERNELS = {
    "entropy_sweep": entropy_sweep_numpy,
    "specular_free": specular_free_numpy,
    "chroma_l1": chroma_l1_numpy,
    "specfree_l1": specfree_l1_numpy,
    "gradsep_scale": gradsep_scale_numpy,
    "weighted_tv": weighted_tv_numpy,
    "recon_l1": recon_l1_numpy,
}
