"""Compare the compiled and pure-numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Each case is timed with ``timeit`` (best of N) on both backends and the
outputs are checked for byte equality before timing.
"""
import argparse
import timeit

import numpy as np

from distaudit import kernels
from distaudit.distort import gaussian_blur
from distaudit.imgcore import Image, resize_area, resize_bilinear


def cases(rng):
    face = Image(rng.integers(0, 256, (96, 96, 3), dtype=np.uint8))
    big = Image(rng.integers(0, 256, (512, 512, 1), dtype=np.uint8))
    small = resize_area(face, 25, 25)
    return {
        "blur sigma=2.0 96x96x3": lambda b: gaussian_blur(face, 2.0, backend=b),
        "blur sigma=4.0 96x96x3": lambda b: gaussian_blur(face, 4.0, backend=b),
        "blur sigma=4.0 512x512": lambda b: gaussian_blur(big, 4.0, backend=b),
        "area 96x96x3 -> 25x25": lambda b: resize_area(face, 25, 25, backend=b),
        "area 512x512 -> 37x53": lambda b: resize_area(big, 37, 53, backend=b),
        "bilinear 25x25 -> 96x96": lambda b: resize_bilinear(small, 96, 96, backend=b),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=50)
    args = ap.parse_args(argv)

    backends = sorted(kernels.BACKENDS)
    if "cython" not in backends:
        print("compiled extension not built; only the python backend is available")
    print(f"{'case':<28}" + "".join(f"{b + ' (ms)':>16}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases(np.random.default_rng(0)).items():
        outs = {b: fn(b) for b in backends}
        assert len({o.data.tobytes() for o in outs.values()}) == 1, f"{name}: backends disagree"
        ms = {}
        for b in backends:
            best = min(timeit.repeat(lambda: fn(b), number=args.number, repeat=args.repeat))
            ms[b] = 1e3 * best / args.number
        speed = f"{ms['python'] / ms['cython']:9.1f}x" if "cython" in ms else ""
        print(f"{name:<28}" + "".join(f"{ms[b]:16.3f}" for b in backends) + speed)


if __name__ == "__main__":
    main()
