"""Time the hot kernels under every available backend.

Runs each kernel (forward, constant-input forward, the two backward
variants and the raster statistics pass) on identical random inputs
through every entry in ``spikecl.kernels.IMPLEMENTATIONS`` and reports
best-of-N wall times plus the speedup of each backend over numpy.  The
numba entries are called once beforehand so JIT compilation does not
pollute the timings; outputs are cross-checked against numpy while at
it (the LIF kernels agree bit for bit, the raster statistics to
rounding, since their variance pass accumulates in a different order).

Typical desk-scale invocation:

    python3 benchmarks/bench_kernels.py --batch 128 --hidden 128
"""

import argparse
import time

import numpy as np

from spikecl.kernels import IMPLEMENTATIONS


def make_inputs(args, rng):
    n, t, h = args.batch, args.timesteps, args.hidden
    currents = rng.normal(scale=0.5, size=(n, t, h))
    const = rng.normal(scale=0.5, size=(n, h))
    gsbar = rng.normal(size=(n, h))
    raster = (rng.random((n, t, h)) < 0.2).astype(np.uint8)
    return currents, const, gsbar, raster


def build_cases(impl, inputs, args):
    currents, const, gsbar, raster = inputs
    beta, theta, alpha = 0.5, 1.0, 2.0
    u, s = impl["lif_forward"](currents, beta, theta)

    return {
        "lif_forward": lambda: impl["lif_forward"](currents, beta, theta),
        "lif_forward_const": lambda: impl["lif_forward_const"](
            const, args.timesteps, beta, theta),
        "lif_backward": lambda: impl["lif_backward"](
            u, gsbar, beta, theta, alpha),
        "lif_backward_sum": lambda: impl["lif_backward_sum"](
            u, gsbar, beta, theta, alpha),
        "isi_raster_stats": lambda: impl["isi_raster_stats"](raster),
    }


def best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def check_agreement(inputs, args):
    """Max |numba - numpy| over every kernel output (~1e-12 or below)."""
    if "numba" not in IMPLEMENTATIONS:
        return None
    worst = 0.0
    outs = {}
    for name, impl in IMPLEMENTATIONS.items():
        outs[name] = [
            np.asarray(part, dtype=np.float64)
            for fn in build_cases(impl, inputs, args).values()
            for part in np.atleast_1d(fn())
        ]
    for a, b in zip(outs["numpy"], outs["numba"]):
        worst = max(worst, float(np.abs(a - b).max()))
    return worst


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=128)
    parser.add_argument("--timesteps", type=int, default=10)
    parser.add_argument("--hidden", type=int, default=128)
    parser.add_argument("--repeats", type=int, default=20,
                        help="keep the best of this many timings")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    inputs = make_inputs(args, rng)
    print(f"batch={args.batch} timesteps={args.timesteps} "
          f"hidden={args.hidden} repeats={args.repeats}")
    print(f"backends: {', '.join(IMPLEMENTATIONS)}")

    timings = {}
    for name, impl in IMPLEMENTATIONS.items():
        cases = build_cases(impl, inputs, args)
        for fn in cases.values():
            fn()                      # warm up (JIT compile for numba)
        timings[name] = {
            kernel: best_of(fn, args.repeats)
            for kernel, fn in cases.items()
        }

    kernels = list(next(iter(timings.values())))
    header = f"{'kernel':<20}" + "".join(f"{b + ' (ms)':>14}" for b in timings)
    if "numba" in timings:
        header += f"{'speedup':>10}"
    print()
    print(header)
    print("-" * len(header))
    for kernel in kernels:
        row = f"{kernel:<20}"
        for backend in timings:
            row += f"{timings[backend][kernel] * 1e3:>14.3f}"
        if "numba" in timings:
            ratio = timings["numpy"][kernel] / timings["numba"][kernel]
            row += f"{ratio:>9.1f}x"
        print(row)

    worst = check_agreement(inputs, args)
    if worst is not None:
        print(f"\nmax |numba - numpy| across all outputs: {worst:.3g}")


if __name__ == "__main__":
    main()
