"""Command-line front end.

    reflguide shadowfree   IMG... -o DIR [--theta DEG]
    reflguide specularfree IMG... -o DIR [--lambda L]
    reflguide decompose    IMG... -o DIR [--config FILE] [solver flags]
    reflguide eval         PRED_DIR -o DIR (--gt DIR | --judgments PATH) --metric M
    reflguide synth        {shadow,specular} -o DIR [--seed N] [scene flags]
    reflguide attention    FEATURES WEIGHTS -o OUT.png

Every command accepts ``--config FILE`` (flat ``key = value`` lines, keys are
the long flag names with dashes or underscores) and writes a manifest JSON.
Flags given on the command line override the file. Exit codes: 0 success,
1 internal error, 2 usage or input error.
"""
import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .errors import ReflguideError
from .imgcore import load_image, save_image, write_atomic_with

log = logging.getLogger("reflguide")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2
TIMING_KEYS = ("wall_time_s",)  # the only fields that differ between identical runs


class UsageError(ReflguideError, ValueError):
    pass


# --------------------------------------------------------------- small helpers

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"

    def write(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)

    return write_atomic_with(path, write)


def write_text(path, text):
    def write(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)

    return write_atomic_with(path, write)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def manifest(command, config, inputs, outputs, t0, seeds=None, **extra):
    m = {"tool": "reflguide", "version": __version__, "command": command,
         "config": config, "inputs": [{"path": os.path.basename(p), "sha256": sha256_file(p)}
                                      for p in inputs],
         "seeds": seeds if seeds is not None else [], "outputs": sorted(outputs),
         "wall_time_s": round(time.perf_counter() - t0, 6)}
    m.update(extra)
    return m


def read_config(path):
    """Flat ``key = value`` file; '#' starts a comment."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"{path}: cannot read config ({exc.strerror})") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


# ------------------------------------------------------------------- commands
#
# Each ``run_*`` handles one input and returns the manifest; the driver maps
# exceptions to exit codes.

def run_shadowfree(path, cfg, out_dir):
    from .shadowfree import shadow_free_priors

    t0 = time.perf_counter()
    img = load_image(path, cfg["assume_srgb"])
    res = shadow_free_priors(img, cfg["theta"])
    stem = _stem(path)
    outs = {"gray": f"{stem}_rho_gray.png", "colored": f"{stem}_rho_colored.png"}
    save_image(res.gray, os.path.join(out_dir, outs["gray"]))
    save_image(res.colored, os.path.join(out_dir, outs["colored"]))
    if res.profile is not None:  # a manual angle skips the sweep
        outs["profile"] = f"{stem}_entropy.csv"
        write_text(os.path.join(out_dir, outs["profile"]), res.profile.to_csv())
    man = manifest("shadowfree", cfg, [path], list(outs.values()), t0,
                   theta=res.theta, theta_source=res.theta_source)
    write_json(os.path.join(out_dir, f"{stem}_manifest.json"), man)
    return man


def run_specularfree(path, cfg, out_dir):
    from .specularfree import specular_free_full

    t0 = time.perf_counter()
    img = load_image(path, cfg["assume_srgb"])
    res = specular_free_full(img, cfg["lam"])
    stem = _stem(path)
    outs = {"gray": f"{stem}_zeta_gray.png", "colored": f"{stem}_zeta_colored.png"}
    save_image(res.image.mean(axis=-1, keepdims=True), os.path.join(out_dir, outs["gray"]))
    save_image(res.image, os.path.join(out_dir, outs["colored"]))
    frac = res.clamp_fraction
    log.info("%s: clamp fraction %.4f", path, frac)
    man = manifest("specularfree", cfg, [path], list(outs.values()), t0, clamp_fraction=frac)
    write_json(os.path.join(out_dir, f"{stem}_manifest.json"), man)
    return man


def solver_inputs(cfg):
    from .losses import LossWeights, Stage1Weights
    from .solver import SolverConfig

    w = LossWeights(Stage1Weights(cfg["w_sf"], cfg["w_hf"], cfg["w_grad"], cfg["w_smooth"],
                                  cfg["w_sparse"]), rec=cfg["w_rec"])
    sc = SolverConfig(max_iters=cfg["max_iters"], step_size=cfg["step_size"],
                      plateau_iters=cfg["plateau_iters"], decay=cfg["decay"], tol=cfg["tol"],
                      tol_window=cfg["tol_window"], init_mode=cfg["init_mode"],
                      lam=cfg["lam"], theta=cfg["theta"])
    return w, sc


def run_decompose(path, cfg, out_dir):
    from .solver import decompose

    t0 = time.perf_counter()
    img = load_image(path, cfg["assume_srgb"])
    w, sc = solver_inputs(cfg)
    res = decompose(img, w, sc)
    stem = _stem(path)
    outs = {"r": f"{stem}_reflectance.png", "s": f"{stem}_shading.png",
            "trace": f"{stem}_trace.csv"}
    save_image(res.reflectance, os.path.join(out_dir, outs["r"]))
    save_image(res.shading, os.path.join(out_dir, outs["s"]))
    trace = "iteration,objective\n" + "".join(
        f"{k},{float(v)!r}\n" for k, v in enumerate(res.objective_trace))
    write_text(os.path.join(out_dir, outs["trace"]), trace)
    man = manifest("decompose", cfg, [path], list(outs.values()), t0,
                   converged=res.converged, iterations=res.iterations,
                   evaluations=res.info["evaluations"],
                   final_objective=res.objective_trace[-1],
                   final_breakdown={k: float(v) for k, v in res.final_breakdown.items()},
                   reconstruction_residual=res.reconstruction_residual,
                   theta=res.theta, theta_source=res.info["theta_source"],
                   clamp_fraction=res.clamp_fraction,
                   reflectance_max=float(res.reflectance.max()),
                   shading_max=float(res.shading.max()))
    write_json(os.path.join(out_dir, f"{stem}_manifest.json"), man)
    return man


def _images_by_stem(directory):
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise UsageError(f"{directory}: {exc.strerror}") from exc
    return {_stem(n): os.path.join(directory, n) for n in names
            if os.path.splitext(n)[1].lower() in (".png", ".ppm")}


def run_eval(pred_dir, cfg, out_dir):
    from . import metrics

    t0 = time.perf_counter()
    metric = cfg["metric"]
    preds = _images_by_stem(pred_dir)
    if not preds:
        raise UsageError(f"{pred_dir}: no PNG or PPM images")
    rows = []
    inputs = list(preds.values())
    if metric == "whdr":
        if not cfg["judgments"]:
            raise UsageError("--metric whdr needs --judgments")
        jpath = cfg["judgments"]
        if os.path.isdir(jpath):
            jfiles = {_stem(n): os.path.join(jpath, n) for n in sorted(os.listdir(jpath))
                      if n.endswith(".json")}
            _check_orphans(preds, jfiles)
        else:
            jfiles = {k: jpath for k in preds}
        cache = {}
        for stem, p in preds.items():
            js = cache.setdefault(jfiles[stem], metrics.load_judgments(jfiles[stem]))
            img = load_image(p, cfg["assume_srgb"])
            rows.append({"image": stem, "metric": "whdr",
                         "value": metrics.whdr(img, js, cfg["delta"])})
        inputs += sorted(set(jfiles.values()))
    else:
        if not cfg["gt"]:
            raise UsageError(f"--metric {metric} needs --gt")
        gts = _images_by_stem(cfg["gt"])
        _check_orphans(preds, gts)
        fn = metrics.si_mse if metric == "simse" else metrics.si_lmse
        for stem, p in preds.items():
            a = load_image(p, cfg["assume_srgb"])
            b = load_image(gts[stem], cfg["assume_srgb"])
            rows.append({"image": stem, "metric": metric, "value": fn(a, b, mode=cfg["mode"])})
        inputs += [gts[k] for k in preds]
    mean = float(np.mean([r["value"] for r in rows]))
    report = {"rows": rows, "aggregate": {"metric": metric, "mean": mean, "count": len(rows)}}
    write_json(os.path.join(out_dir, "eval.json"), report)
    print(json.dumps(report, sort_keys=True))
    man = manifest("eval", cfg, inputs, ["eval.json"], t0, mean=mean)
    write_json(os.path.join(out_dir, "manifest.json"), man)
    return man


def _check_orphans(preds, other):
    left = sorted(set(preds) - set(other))
    right = sorted(set(other) - set(preds))
    if left or right:
        raise UsageError("unmatched files: " + ", ".join(
            [f"{k} (prediction only)" for k in left] + [f"{k} (reference only)" for k in right]))


def run_synth(kind, cfg, out_dir):
    from . import synth

    t0 = time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    if kind == "shadow":
        sc = synth.gen_shadow_scene(cfg["seed"], cfg["height"], cfg["width"], cfg["patches"],
                                    cfg["lit_temp"], cfg["shadow_temp"], cfg["attenuation"],
                                    cfg["softness"])
        layers = {"image": sc.image, "reflectance": sc.reflectance_gt,
                  "shading": sc.shading_gt, "shadow_mask": sc.shadow_mask[..., None]}
        meta = dict(oracle_theta=sc.oracle_theta, lit_temp=sc.lit_temp,
                    shadow_temp=sc.shadow_temp, attenuation=sc.attenuation)
    else:
        sc = synth.gen_specular_scene(cfg["seed"], cfg["height"], cfg["width"], cfg["patches"],
                                      cfg["lobes"], cfg["lobe_strength"], cfg["lobe_sigma"])
        layers = {"image": sc.image, "diffuse": sc.diffuse_gt, "specular": sc.specular_gt,
                  "reflectance": sc.reflectance_gt, "shading": sc.shading_gt,
                  "lobe_mask": sc.lobe_mask[..., None].astype(np.float64)}
        meta = dict(clipped=sc.clipped)
    outs = []
    for name, arr in layers.items():
        save_image(arr, os.path.join(out_dir, f"{name}.png"))
        outs.append(f"{name}.png")
    ids = sc.patch_ids.astype(np.float64)[..., None] / 65535.0
    save_image(ids, os.path.join(out_dir, "patch_ids.png"))
    outs.append("patch_ids.png")
    # exact float64 layers, since PNG clips values above 1
    arrays = dict(layers, patch_ids=sc.patch_ids)
    write_atomic_with(os.path.join(out_dir, "scene.npz"),
                      lambda tmp: _savez(tmp, arrays))
    outs.append("scene.npz")
    man = manifest("synth", cfg, [], outs, t0, seeds=[cfg["seed"]], kind=kind,
                   params=sc.params, prng="numpy PCG64", **meta)
    write_json(os.path.join(out_dir, "metadata.json"), man)
    return man


def _savez(tmp, arrays):
    with open(tmp, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def run_attention(features, cfg, out_path):
    from . import aware

    t0 = time.perf_counter()
    F = aware.load_stack(features)
    try:
        with open(cfg["weights"], encoding="utf-8") as fh:
            wdoc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"{cfg['weights']}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{cfg['weights']}: invalid JSON ({exc})") from exc
    w = wdoc["weights"] if isinstance(wdoc, dict) else wdoc
    raw = aware.cam_attention(F, w)
    shown = aware.cam_attention(F, w, rescale=True)
    save_image(aware.heatmap_rgb(shown, cfg["cmap"]), out_path, bits=8)
    stem = os.path.splitext(out_path)[0]
    raw_path = stem + "_raw.npy"
    write_atomic_with(raw_path, lambda tmp: _save_npy(tmp, raw[..., 0]))
    outs = [os.path.basename(out_path), os.path.basename(raw_path)]
    man = manifest("attention", cfg, [features, cfg["weights"]], outs, t0,
                   m=int(F.shape[0]), raw_min=float(raw.min()), raw_max=float(raw.max()))
    write_json(stem + "_manifest.json", man)
    return man


def _save_npy(tmp, arr):
    with open(tmp, "wb") as fh:
        np.save(fh, arr)


# --------------------------------------------------------------------- parser

def _common(p, jobs=True):
    p.add_argument("-o", "--out-dir", required=True, help="output directory")
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--assume-srgb", type=_bool, nargs="?", const=True, default=False,
                   help="inputs are sRGB-encoded (default: linear)")
    if jobs:
        p.add_argument("--jobs", type=int, default=1, help="inputs processed in parallel")


def build_parser():
    from .solver import SolverConfig
    from .losses import LossWeights

    ap = argparse.ArgumentParser(prog="reflguide", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"reflguide {__version__}")
    ap.add_argument("--log-level", default="warning",
                    choices=["debug", "info", "warning", "error"])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("shadowfree", help="grayscale and colored shadow-free priors")
    p.add_argument("inputs", nargs="+")
    _common(p)
    p.add_argument("--theta", type=float, default=None,
                   help="invariant angle in degrees; skips the entropy sweep")

    p = sub.add_parser("specularfree", help="specular-free images")
    p.add_argument("inputs", nargs="+")
    _common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                   help="target maximum chromaticity, in (1/3, 1]")

    d = SolverConfig()
    wt = LossWeights()
    p = sub.add_parser("decompose", help="reflectance / shading decomposition")
    p.add_argument("inputs", nargs="+")
    _common(p)
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--step-size", type=float, default=d.step_size)
    p.add_argument("--plateau-iters", type=int, default=d.plateau_iters)
    p.add_argument("--decay", type=float, default=d.decay)
    p.add_argument("--tol", type=float, default=d.tol)
    p.add_argument("--tol-window", type=int, default=d.tol_window)
    p.add_argument("--init-mode", choices=["from_input", "from_priors"], default=d.init_mode)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--theta", type=float, default=None)
    for key, val in (("w_sf", wt.stage1.sf), ("w_hf", wt.stage1.hf), ("w_grad", wt.stage1.grad),
                     ("w_smooth", wt.stage1.smooth), ("w_sparse", wt.stage1.sparse),
                     ("w_rec", wt.rec)):
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=float, default=val)

    p = sub.add_parser("eval", help="WHDR, si-MSE or si-LMSE over a directory")
    p.add_argument("pred_dir")
    _common(p, jobs=False)
    p.add_argument("--metric", choices=["whdr", "simse", "silmse"], required=True)
    p.add_argument("--gt", help="directory of reference images, matched by file stem")
    p.add_argument("--judgments", help="judgment JSON file, or a directory of <stem>.json")
    p.add_argument("--delta", type=float, default=0.10, help="WHDR ratio threshold")
    p.add_argument("--mode", choices=["luminance", "channels"], default="luminance")

    p = sub.add_parser("synth", help="write a synthetic scene bundle")
    p.add_argument("kind", choices=["shadow", "specular"])
    _common(p, jobs=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--patches", type=int, default=10)
    p.add_argument("--lit-temp", type=float, default=4000.0)
    p.add_argument("--shadow-temp", type=float, default=12000.0)
    p.add_argument("--attenuation", type=float, default=0.45)
    p.add_argument("--softness", type=float, default=3.0)
    p.add_argument("--lobes", type=int, default=3)
    p.add_argument("--lobe-strength", type=float, default=0.6)
    p.add_argument("--lobe-sigma", type=float, default=6.0)

    p = sub.add_parser("attention", help="render a class-activation attention map")
    p.add_argument("features", help="feature-stack file")
    p.add_argument("weights", help="JSON list of weights, or {\"weights\": [...]}")
    p.add_argument("-o", "--out", required=True, help="output PNG")
    p.add_argument("--config")
    p.add_argument("--cmap", default="inferno")
    ap.subcommands = sub.choices
    return ap


NOT_CONFIG = {"command", "config", "inputs", "pred_dir", "kind", "features", "out_dir", "out",
              "log_level"}


def parse_args(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        values = read_config(args.config)
        sub = ap.subcommands[args.command]
        known = {a.dest: a for a in sub._actions}
        for key, text in values.items():
            if key not in known or key in NOT_CONFIG:
                raise UsageError(f"{args.config}: unknown key {key!r}")
            act = known[key]
            conv = act.type or str
            try:
                val = conv(text) if text.lower() not in ("none", "") else None
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{args.config}: {key}: {exc}") from exc
            if act.choices is not None and val not in act.choices:
                raise UsageError(f"{args.config}: {key} must be one of {list(act.choices)}")
            sub.set_defaults(**{key: val})
        args = ap.parse_args(argv)
    return args


def resolved_config(args):
    cfg = {k: v for k, v in vars(args).items() if k not in NOT_CONFIG}
    if args.config:
        cfg["config_file"] = os.path.basename(args.config)
    return cfg


def _run_one(fn, item, cfg, out):
    """Worker: returns (exit_code, message)."""
    try:
        fn(item, cfg, out)
        return EXIT_OK, None
    except ReflguideError as exc:
        return EXIT_USAGE, str(exc)
    except (ValueError, OSError) as exc:
        return EXIT_USAGE, f"{item}: {exc}"
    except Exception as exc:  # noqa: BLE001 - reported as an internal error
        log.debug("internal error", exc_info=True)
        return EXIT_INTERNAL, f"{item}: internal error: {type(exc).__name__}: {exc}"


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit with 2 already
        return int(exc.code or 0)
    except ReflguideError as exc:
        print(f"reflguide: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    cfg = resolved_config(args)

    if args.command == "attention":
        jobs = [(run_attention, args.features, os.path.abspath(args.out))]
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    else:
        os.makedirs(args.out_dir, exist_ok=True)
        fn = {"shadowfree": run_shadowfree, "specularfree": run_specularfree,
              "decompose": run_decompose, "eval": run_eval, "synth": run_synth}[args.command]
        items = {"eval": [getattr(args, "pred_dir", None)],
                 "synth": [getattr(args, "kind", None)]}.get(args.command, getattr(args, "inputs", []))
        jobs = [(fn, item, args.out_dir) for item in items]

    n_jobs = max(1, getattr(args, "jobs", 1) or 1)
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, len(jobs))) as ex:
            results = list(ex.map(_run_one, *zip(*[(f, i, cfg, o) for f, i, o in jobs])))
    else:
        results = [_run_one(f, i, cfg, o) for f, i, o in jobs]

    code = EXIT_OK
    for rc, msg in results:
        if msg:
            print(f"reflguide: error: {msg}", file=sys.stderr)
        code = max(code, rc)
    return code


if __name__ == "__main__":
    sys.exit(main())
