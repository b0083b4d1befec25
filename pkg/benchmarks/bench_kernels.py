"""Compare the compiled mask kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --size 64 --repeat 200
"""

import argparse
import timeit

import numpy as np

from propgroup import _fallback, kernels
from propgroup.metrics import boundary_f, iou


def masks(size, rng):
    yy, xx = np.mgrid[:size, :size]
    a = (yy - size / 2) ** 2 + (xx - size / 2) ** 2 < (size / 3) ** 2
    b = np.roll(a, size // 10, axis=1) ^ (rng.random((size, size)) < 0.02)
    return a, b


def cases(a, b, tol):
    labels_a = a.astype(np.int64) + 2 * b
    labels_b = b.astype(np.int64)
    runs = kernels.rle_runs(a, impl=_fallback)
    return {
        "rle_runs": lambda impl: kernels.rle_runs(a, impl=impl),
        "rle_fill": lambda impl: kernels.rle_fill(runs, a.size, impl=impl),
        "boundary": lambda impl: kernels.boundary(a, impl=impl),
        "count_within": lambda impl: kernels.count_within(a, b, tol, impl=impl),
        "contingency": lambda impl: kernels.contingency(labels_a, labels_b, 4, 2, impl=impl),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--tol", type=int, default=1)
    args = parser.parse_args(argv)

    impls = {"python": _fallback}
    if kernels.BACKEND == "cython":
        from propgroup import _kernels
        impls["cython"] = _kernels
    else:
        print("compiled kernels not built; timing the fallback only")

    a, b = masks(args.size, np.random.default_rng(0))
    print(f"{args.size}x{args.size} masks, {args.repeat} calls each, microseconds per call")
    print(f"{'kernel':14s}" + "".join(f"{n:>10s}" for n in impls) + "   speedup")
    for name, fn in cases(a, b, args.tol).items():
        times = {n: timeit.timeit(lambda: fn(impl), number=args.repeat) / args.repeat * 1e6
                 for n, impl in impls.items()}
        row = f"{name:14s}" + "".join(f"{t:10.1f}" for t in times.values())
        if "cython" in times:
            row += f"   {times['python'] / times['cython']:6.1f}x"
        print(row)
    t = timeit.timeit(lambda: (iou(a, b), boundary_f(a, b)), number=args.repeat)
    print(f"\nend-to-end iou + boundary_f with the active backend ({kernels.BACKEND}): "
          f"{t / args.repeat * 1e6:.1f} us")


if __name__ == "__main__":
    main()
