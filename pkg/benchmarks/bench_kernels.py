"""Time every kernel under numba and under pure numpy.

    python benchmarks/bench_kernels.py [--size 128] [--repeat 5]

The numba column is measured after one warm-up call, so JIT compilation is
excluded. With REFLGUIDE_DISABLE_NUMBA=1 (or numba missing) only the numpy
column is filled.
"""
import argparse
import timeit

import numpy as np

from reflguide import _accel, kernels
from reflguide.imgcore import chromaticity
from reflguide.shadowfree import log_chromaticity
from reflguide.specularfree import specular_free


def kernel_inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    R = rng.uniform(0.05, 1.0, (n, n, 3))
    S = rng.uniform(0.1, 1.0, (n, n, 1))
    return {
        "entropy_sweep": (log_chromaticity(R).valid_coords(), np.deg2rad(np.arange(180.0)),
                          0.05, 0.95),
        "specular_free": (R, 0.5),
        "chroma_l1": (R, chromaticity(rng.uniform(0.05, 1.0, R.shape))),
        "specfree_l1": (R, specular_free(rng.uniform(0.05, 1.0, R.shape)), 0.5),
        "gradsep_scale": (R, S, 1.5, 0.8),
        "weighted_tv": (R, rng.uniform(0, 1, R.shape), rng.uniform(0, 1, R.shape)),
        "recon_l1": (R, S, rng.uniform(0, 1, R.shape)),
    }


def best_of(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--size", type=int, default=128, help="image side in pixels")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    jit = _accel.USE_NUMBA
    print(f"{args.size}x{args.size}, numba {'on' if jit else 'off'}")
    print(f"{'kernel':<16}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, inp in kernel_inputs(args.size).items():
        t_np = best_of(kernels.NUMPY_KERNELS[name], inp, args.repeat)
        if jit:
            kernels.NUMBA_KERNELS[name](*inp)  # compile
            t_nb = best_of(kernels.NUMBA_KERNELS[name], inp, args.repeat)
            print(f"{name:<16}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>9.1f}x")
        else:
            print(f"{name:<16}{1e3 * t_np:>12.3f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
