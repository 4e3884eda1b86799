"""Compare the numba and numpy likelihood kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat 200] [--fits 20]

Times one objective+gradient evaluation per backend on synthetic data and a
full MLE fit, and checks the backends agree before timing.  Compilation is
excluded by a warm-up call.
"""
import argparse
import timeit

import numpy as np

from scalemle import Dataset, NoiseFamily, ScaledNoise, mle_fit, sample
from scalemle import _kernels

CASES = [(1, 3.0), (2, 3.0), (3, 5.0)]
SHAPES = [(1000, 5), (10000, 5), (10000, 20)]


def make(fam, n, d, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    beta = rng.uniform(-2, 2, d)
    return X, X @ beta + sample(ScaledNoise(fam, 1.5), rng, n), beta


def per_call(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--fits", type=int, default=20)
    args = ap.parse_args(argv)
    backends = _kernels.available_backends()
    print(f"backends: {backends}")
    print(f"{'family':>6} {'gamma':>5} {'n':>6} {'d':>3} {'kernel':>9} "
          + " ".join(f"{b + ' us':>10}" for b in backends) + "  speedup")
    for family, g in CASES:
        fam = NoiseFamily(family, g)
        for n, d in SHAPES:
            X, y, beta = make(fam, n, d)
            kernels = {
                "nll+grad": lambda: _kernels.nll_and_grad(X, y, beta, 0.4, family, g,
                                                          fam.log_c, fam.log_d),
                "nll": lambda: _kernels.nll_value(X, y, beta, 0.4, family, g,
                                                  fam.log_c, fam.log_d),
            }
            if family in (2, 3):
                kernels["smoothed"] = lambda: _kernels.smoothed_nll_and_grad(
                    X, y, beta, 0.4, family, g, fam.log_c, 0.1)
            for name, fn in kernels.items():
                times, values = {}, {}
                for b in backends:
                    prev = _kernels.set_backend(b)
                    try:
                        values[b] = fn()
                        times[b] = per_call(fn, args.repeat)
                    finally:
                        _kernels.set_backend(prev)
                first = np.atleast_1d(values[backends[0]][0] if isinstance(values[backends[0]], tuple)
                                      else values[backends[0]])
                for b in backends[1:]:
                    other = np.atleast_1d(values[b][0] if isinstance(values[b], tuple) else values[b])
                    assert np.allclose(first, other, rtol=1e-10), (name, b)
                speed = (times["numpy"] / times["numba"]) if len(backends) == 2 else float("nan")
                print(f"{family:>6} {g:>5g} {n:>6} {d:>3} {name:>9} "
                      + " ".join(f"{times[b] * 1e6:>10.1f}" for b in backends) + f"  {speed:6.2f}x")

    print(f"\nfull mle_fit, n=1000, d=5, mean over {args.fits} datasets (ms)")
    for family, g in CASES:
        fam = NoiseFamily(family, g)
        data = [Dataset(*make(fam, 1000, 5, seed)[:2]) for seed in range(args.fits)]
        row = []
        for b in backends:
            prev = _kernels.set_backend(b)
            try:
                mle_fit(data[0], fam)
                t = timeit.timeit(lambda: [mle_fit(dd, fam) for dd in data], number=1)
            finally:
                _kernels.set_backend(prev)
            row.append(f"{b}={1e3 * t / len(data):.1f}")
        print(f"  family {family} gamma {g:g}: " + "  ".join(row))


if __name__ == "__main__":
    main()
