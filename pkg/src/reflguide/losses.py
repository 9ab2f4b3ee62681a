"""Stage-1 and stage-2 losses with hand-derived gradients.

Image losses are means over pixels and channels. Two factors are held
constant during differentiation, by convention: the sparse-loss reweighting
``omega`` and the gradient-separation balance factors ``lambda_R, lambda_S``.
Every such loss returns them in ``LossValue.frozen`` and accepts them back, so
finite-difference checks can freeze them too.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidInputError
from .imgcore import downsample, downsample_adjoint, gradient, gradient_adjoint
from .specularfree import DEFAULT_LAMBDA, _check_lambda

EPS_P = 1e-7
EPS_GRAD = 1e-8
EPS_SPARSE = 1e-4
SPARSE_P = 0.5
N_SCALES = 3


@dataclass
class Stage1Weights:
    sf: float = 1.0
    hf: float = 1.0
    grad: float = 1.0
    smooth: float = 0.5
    sparse: float = 0.01


@dataclass
class Stage2Weights:
    cls: float = 5.0
    adv: float = 1.0
    trans: float = 5.0
    diff: float = 1.0


@dataclass
class LossWeights:
    stage1: Stage1Weights = field(default_factory=Stage1Weights)
    stage2: Stage2Weights = field(default_factory=Stage2Weights)
    rec: float = 10.0

    def __post_init__(self):
        vals = list(asdict(self.stage1).values()) + list(asdict(self.stage2).values()) + [self.rec]
        if any(v < 0 for v in vals):
            raise InvalidInputError("loss weights must be non-negative")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(Stage1Weights(**d.get("stage1", {})), Stage2Weights(**d.get("stage2", {})),
                   d.get("rec", 10.0))


@dataclass
class LossValue:
    value: float
    grads: tuple = ()
    frozen: dict = field(default_factory=dict)

    @property
    def grad(self):
        return self.grads[0] if self.grads else None


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise InvalidInputError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def _same_hw(a, b, what):
    if a.shape[:2] != b.shape[:2]:
        raise InvalidInputError(f"{what}: spatial shape mismatch {a.shape[:2]} vs {b.shape[:2]}")


def _f64(x):
    x = np.asarray(x, dtype=np.float64)
    return x[..., None] if x.ndim == 2 else x


# ------------------------------------------------------------------ stage 1

def loss_shadow_free(R, rho):
    """Mean |chromaticity(R) - rho|; near-black pixels contribute nothing."""
    R, rho = _f64(R), _f64(rho)
    _same_shape(R, rho, "loss_shadow_free")
    total, g = kernels.chroma_l1(R, rho)
    n = R.size
    return LossValue(total / n, (g / n,))


def loss_specular_free(R, zeta, lam=DEFAULT_LAMBDA):
    """Mean |delta(R) - zeta| with delta the specular-free transform."""
    R, zeta = _f64(R), _f64(zeta)
    _same_shape(R, zeta, "loss_specular_free")
    _check_lambda(lam)
    total, g = kernels.specfree_l1(R, zeta, lam)
    n = R.size
    return LossValue(total / n, (g / n,))


def _grad_norm(gf):
    return float(np.sqrt((gf.dx ** 2).sum() + (gf.dy ** 2).sum()))


def loss_gradient_separation(R, S, lambdas=None):
    """Sum over 3 scales of ||tanh(lR |grad R|) * tanh(lS |grad S|)||_F.

    A 1-channel S broadcasts over the channels of R. ``lambdas`` is a list of
    per-scale (lambda_R, lambda_S) pairs, or None for a skipped scale; when not
    given they are computed from the inputs.
    """
    R, S = _f64(R), _f64(S)
    _same_hw(R, S, "loss_gradient_separation")
    if S.shape[2] not in (1, R.shape[2]) and R.shape[2] != 1:
        raise InvalidInputError("loss_gradient_separation: incompatible channel counts")
    value = 0.0
    gR = np.zeros_like(R)
    gS = np.zeros_like(S)
    used = []
    for n in range(1, N_SCALES + 1):
        Rn, Sn = downsample(R, n), downsample(S, n)
        if lambdas is None:
            nR, nS = _grad_norm(gradient(Rn)), _grad_norm(gradient(Sn))
            if nR < EPS_GRAD or nS < EPS_GRAD:
                used.append(None)
                continue
            lam_r, lam_s = np.sqrt(nS / nR), np.sqrt(nR / nS)
        else:
            if lambdas[n - 1] is None:
                used.append(None)
                continue
            lam_r, lam_s = lambdas[n - 1]
        used.append((float(lam_r), float(lam_s)))
        sq, gRn, gSn = kernels.gradsep_scale(Rn, Sn, lam_r, lam_s)
        norm = float(np.sqrt(sq))
        value += norm
        if norm == 0.0:
            continue
        gRn /= norm
        gSn /= norm
        gR += downsample_adjoint(gRn, n, R.shape)
        gS += downsample_adjoint(gSn, n, S.shape)
    return LossValue(value, (gR, gS), {"lambdas": used})


def loss_shading_smooth(S):
    """Mean |grad S| over both directions (all positions, boundary zeros included)."""
    S = _f64(S)
    ones = np.ones_like(S)
    total, g = kernels.weighted_tv(S, ones, ones)
    n = 2 * S.size
    return LossValue(total / n, (g / n,))


def sparse_weights(R, p=SPARSE_P, eps=EPS_SPARSE):
    gf = gradient(_f64(R))
    return (1.0 / (np.abs(gf.dx) ** (1.0 - p) + eps),
            1.0 / (np.abs(gf.dy) ** (1.0 - p) + eps))


def loss_reflectance_sparse(R, omega=None, p=SPARSE_P, eps=EPS_SPARSE):
    """Mean omega * |grad R| with omega = 1 / (|grad R|^(1-p) + eps) held fixed."""
    R = _f64(R)
    if omega is None:
        omega = sparse_weights(R, p, eps)
    wx, wy = omega
    total, g = kernels.weighted_tv(R, wx, wy)
    n = 2 * R.size
    return LossValue(total / n, (g / n,), {"omega": omega})


def reconstruction_l1(R, S, target):
    """Mean |R * S - target| with 1-channel S broadcast; gradients for R and S."""
    R, S, target = _f64(R), _f64(S), _f64(target)
    _same_hw(R, S, "reconstruction")
    if S.shape[2] not in (1, R.shape[2]):
        raise InvalidInputError(f"cannot broadcast shading {S.shape} over {R.shape}")
    if R.shape != target.shape:
        raise InvalidInputError(f"reconstruction target: shape mismatch {R.shape} vs {target.shape}")
    total, gR, gS = kernels.recon_l1(R, S, target)
    n = target.size
    return LossValue(total / n, (gR / n, gS / n))


def total_stage1(R, S, rho, zeta, I, w=None, lam=DEFAULT_LAMBDA, frozen=None):
    """Weighted stage-1 objective plus the reconstruction penalty.

    Returns gradients with respect to (R, S) and a per-term breakdown in
    ``frozen["breakdown"]`` (unweighted values).
    """
    w = w or LossWeights()
    s1 = w.stage1
    R, S = _f64(R), _f64(S)
    frozen = frozen or {}
    gR = np.zeros_like(R)
    gS = np.zeros_like(S)
    breakdown = {}
    value = 0.0

    def add(name, weight, lv, r_idx=0, s_idx=None):
        nonlocal value
        breakdown[name] = lv.value
        value += weight * lv.value
        if r_idx is not None:
            gR[...] += weight * lv.grads[r_idx]
        if s_idx is not None:
            gS[...] += weight * lv.grads[s_idx]

    add("sf", s1.sf, loss_shadow_free(R, rho))
    add("hf", s1.hf, loss_specular_free(R, zeta, lam))
    gs = loss_gradient_separation(R, S, frozen.get("lambdas"))
    add("grad", s1.grad, gs, 0, 1)
    add("smooth", s1.smooth, loss_shading_smooth(S), None, 0)
    sp = loss_reflectance_sparse(R, frozen.get("omega"))
    add("sparse", s1.sparse, sp)
    add("rec", w.rec, reconstruction_l1(R, S, I), 0, 1)
    return LossValue(value, (gR, gS),
                     {"lambdas": gs.frozen["lambdas"], "omega": sp.frozen["omega"],
                      "breakdown": breakdown})


# ------------------------------------------------------------------ stage 2

def _probs(p, name):
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0:
        raise InvalidInputError(f"{name}: empty batch")
    return np.clip(p, EPS_P, 1.0 - EPS_P)


def loss_classification(p_input, p_reflectance):
    """Two-class cross-entropy: inputs labelled 1, reflectance layers labelled 0."""
    a = _probs(p_input, "p_input")
    b = _probs(p_reflectance, "p_reflectance")
    return float(-(np.log(a).mean() + np.log1p(-b).mean()))


def loss_adversarial_lsgan(d_real, d_fake):
    r = np.asarray(d_real, dtype=np.float64).ravel()
    f = np.asarray(d_fake, dtype=np.float64).ravel()
    if r.size == 0 or f.size == 0:
        raise InvalidInputError("loss_adversarial_lsgan: empty batch")
    return float(((r - 1.0) ** 2).mean() + (f ** 2).mean())


def loss_translation(g_out, r_f):
    g_out, r_f = _f64(g_out), _f64(r_f)
    _same_shape(g_out, r_f, "loss_translation")
    diff = g_out - r_f
    n = diff.size
    return LossValue(float(np.abs(diff).sum() / n), (np.sign(diff) / n, -np.sign(diff) / n))


def loss_diffuse(R_f, S, I_d):
    """Mean |R_f * S - I_d|; gradients with respect to R_f and S."""
    return reconstruction_l1(R_f, S, I_d)


def total_stage2(l_cls, l_adv, l_trans, l_diff, w=None):
    w = (w or LossWeights()).stage2
    return w.cls * l_cls + w.adv * l_adv + w.trans * l_trans + w.diff * l_diff
