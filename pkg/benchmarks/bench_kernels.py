"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--sizes 20 50 100] [--repeat 3]

For each kernel and size, prints the best-of-``repeat`` wall time of both
backends, the speed-up, and whether their outputs are bit-identical.
"""
import argparse
import timeit

import numpy as np

from siamscene import _purepy

try:
    from siamscene import _core
except ImportError:  # extension not built
    _core = None


def cases(n, rng):
    b = rng.normal(size=(n, n))
    sym = (b + b.T) / 2
    feats = rng.normal(size=(n, 64))
    offsets = np.concatenate([[0], np.cumsum(rng.integers(20, 400, size=n))]).astype(np.int64)
    gt = np.array(sorted({0, n, *rng.choice(np.arange(1, n), size=n // 6, replace=False)}),
                  dtype=np.int64)
    det = np.array(sorted({0, n, *rng.choice(np.arange(1, n), size=n // 5, replace=False)}),
                   dtype=np.int64)
    return {
        "jacobi_eigh": lambda m: m.jacobi_eigh(sym, 1e-12 * np.linalg.norm(sym), 50),
        "pairwise_distances": lambda m: m.pairwise_distances(feats),
        "segmentation_scores": lambda m: m.segmentation_scores(gt, det, offsets),
    }


def identical(a, b):
    if isinstance(a, tuple):
        return all(identical(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def best_time(fn, repeat):
    number = 1
    while True:  # grow the loop count until one timing takes ~0.05 s
        t = timeit.timeit(fn, number=number)
        if t > 0.05 or number >= 1 << 16:
            break
        number *= 4
    return min([t] + timeit.repeat(fn, number=number, repeat=repeat - 1)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[20, 50, 100])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if _core is None:
        parser.error("the compiled extension is not built; run pip install -e . first")

    print(f"{'kernel':<22}{'n':>5}{'cython (s)':>14}{'python (s)':>14}{'speed-up':>10}  identical")
    for n in args.sizes:
        for name, call in cases(n, np.random.default_rng([args.seed, n])).items():
            t_c = best_time(lambda: call(_core), args.repeat)
            t_p = best_time(lambda: call(_purepy), args.repeat)
            same = identical(call(_core), call(_purepy))
            print(f"{name:<22}{n:>5}{t_c:>14.3e}{t_p:>14.3e}{t_p / t_c:>10.1f}  {same}")


if __name__ == "__main__":
    main()
