"""Per-image reflectance/shading decomposition by direct minimization.

Variables are r = log R (3 channels) and s = log S (1 channel), so both layers
stay strictly positive. Each iteration steps along the gradient scaled to unit
root-mean-square, so ``step_size`` bounds the typical change of a log value per
step, and backtracks (Armijo, halving) until the objective drops. Only accepted
steps enter the trace, which is therefore non-increasing.
"""
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateInputError, InvalidInputError
from .imgcore import _require_rgb
from .losses import LossWeights, total_stage1
from .shadowfree import shadow_free_priors
from .specularfree import DEFAULT_LAMBDA, specular_free_full

log = logging.getLogger(__name__)

INIT_MODES = ("from_input", "from_priors")
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 30
GROW_AFTER = 10  # consecutive first-try acceptances before probing a longer step
FLOOR = 1e-4  # smallest intensity used to initialize log variables


@dataclass
class SolverConfig:
    max_iters: int = 2000
    step_size: float = 0.05
    plateau_iters: int = 50
    decay: float = 0.5
    tol: float = 1e-6
    tol_window: int = 20
    init_mode: str = "from_input"
    lam: float = DEFAULT_LAMBDA
    theta: float | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if not self.step_size > 0:
            raise InvalidInputError("step_size must be > 0")
        if self.init_mode not in INIT_MODES:
            raise InvalidInputError(f"init_mode must be one of {INIT_MODES}")

    def to_dict(self):
        return asdict(self)


@dataclass
class DecompositionResult:
    reflectance: np.ndarray
    shading: np.ndarray
    objective_trace: list
    final_breakdown: dict
    reconstruction_residual: float
    converged: bool
    iterations: int
    theta: float
    clamp_fraction: float
    info: dict = field(default_factory=dict)


def initial_layers(I, mode="from_input", rho=None):
    lum = I.mean(axis=-1, keepdims=True)
    mu = float(lum.mean())
    S0 = lum / mu
    if mode == "from_input":
        R0 = I / np.maximum(lum, FLOOR) * mu
    else:
        # prior chromaticity at the input's intensity
        R0 = rho * 3.0 * mu
    return np.maximum(R0, FLOOR), np.maximum(S0, FLOOR)


def decompose(I, w=None, cfg=None):
    I = _require_rgb(I)
    w = w or LossWeights()
    cfg = cfg or SolverConfig()
    if I.max() <= 0:
        raise DegenerateInputError("decompose: input image is all black")
    t_start = time.perf_counter()

    sfp = shadow_free_priors(I, cfg.theta)
    hfp = specular_free_full(I, cfg.lam)
    rho, zeta = sfp.colored, hfp.image

    R0, S0 = initial_layers(I, cfg.init_mode, rho)
    r, s = np.log(R0), np.log(S0)

    n_eval = 0

    def evaluate(r, s):
        nonlocal n_eval
        n_eval += 1
        R, S = np.exp(r), np.exp(s)
        lv = total_stage1(R, S, rho, zeta, I, w, cfg.lam)
        gR, gS = lv.grads
        return lv.value, gR * R, gS * S, lv.frozen["breakdown"]

    f, gr, gs, breakdown = evaluate(r, s)
    trace = [f]
    step = cfg.step_size
    t_last = step
    streak = 0
    best_at = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        g_rms = np.sqrt((np.sum(gr * gr) + np.sum(gs * gs)) / (gr.size + gs.size))
        if g_rms == 0.0:
            converged = True
            break
        dr, ds = gr / g_rms, gs / g_rms
        slope = float((gr * dr).sum() + (gs * ds).sum())
        # reuse the last accepted step; probe a doubled one after a run of
        # first-try acceptances
        t = min(step, t_last)
        if streak >= GROW_AFTER:
            t = min(step, 2.0 * t_last)
            streak = 0
        accepted = False
        for k in range(MAX_BACKTRACKS):
            r_new, s_new = r - t * dr, s - t * ds
            f_new, gr_new, gs_new, bd_new = evaluate(r_new, s_new)
            if f_new <= f - ARMIJO_C * t * slope:
                accepted = True
                break
            t *= 0.5
        streak = streak + 1 if accepted and k == 0 else 0
        if accepted:
            r, s, f, gr, gs, breakdown = r_new, s_new, f_new, gr_new, gs_new, bd_new
            trace.append(f)
            t_last = t
        if len(trace) > cfg.tol_window:
            old = trace[-1 - cfg.tol_window]
            if (old - f) <= cfg.tol * max(abs(old), 1e-300):
                converged = True
                break
        if f < trace[best_at] * (1.0 - cfg.tol):
            best_at = len(trace) - 1
        elif it - best_at >= cfg.plateau_iters:
            step *= cfg.decay
            best_at = len(trace) - 1
        if not accepted and t < 1e-12:
            converged = True
            break

    R, S = np.exp(r), np.exp(s)
    if not converged:
        log.warning("decompose: not converged after %d iterations", cfg.max_iters)
    residual = float(np.abs(R * S - I).mean())
    return DecompositionResult(R, S, trace, breakdown, residual, converged, it,
                               sfp.theta, hfp.clamp_fraction,
                               {"wall_time_s": time.perf_counter() - t_start,
                                "theta_source": sfp.theta_source,
                                "evaluations": n_eval,
                                "entropy_profile": sfp.profile})


def grad_check(objective, point, h=1e-4, fraction=0.05, seed=0):
    """Max relative error between analytic and central-difference gradients.

    ``objective(*arrays)`` returns ``(value, grads)`` with one gradient per
    array. A random ``fraction`` of coordinates (at least one per array) is
    checked. Relative error is |fd - an| / max(|fd|, |an|, 1e-6 * max|an|).
    """
    if not h > 0:
        raise InvalidInputError("h must be > 0")
    rng = np.random.default_rng(seed)
    arrays = [np.array(p, dtype=np.float64, copy=True) for p in point]
    _, grads = objective(*arrays)
    scale = max(float(np.abs(g).max()) for g in grads)
    floor = max(1e-6 * scale, 1e-300)
    worst = 0.0
    for k, arr in enumerate(arrays):
        flat = arr.reshape(-1)
        n_pick = max(1, int(round(fraction * flat.size)))
        for idx in rng.choice(flat.size, size=n_pick, replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            fp, _ = objective(*arrays)
            flat[idx] = orig - h
            fm, _ = objective(*arrays)
            flat[idx] = orig
            fd = (fp - fm) / (2.0 * h)
            an = float(grads[k].reshape(-1)[idx])
            err = abs(fd - an) / max(abs(fd), abs(an), floor)
            worst = max(worst, err)
    return worst
