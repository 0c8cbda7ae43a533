"""Time the numba kernels against the numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--docs 200000] [--skills 2000] [--repeat 5]
"""
import argparse
import time

import numpy as np

from chgh import _kernels


def random_csr(rng, n_docs, n_skills, mean_len):
    lengths = rng.poisson(mean_len, n_docs).clip(1, n_skills)
    indptr = np.zeros(n_docs + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    indices = np.concatenate([rng.choice(n_skills, k, replace=False) for k in lengths]).astype(np.int64)
    return indptr, indices


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--docs", type=int, default=200_000)
    ap.add_argument("--skills", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=24)
    ap.add_argument("--mean-len", type=float, default=8.0)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    indptr, indices = random_csr(rng, args.docs, args.skills, args.mean_len)
    steps = rng.integers(0, args.steps, args.docs)
    values = rng.normal(size=args.skills * 50)

    cases = {
        "share_counts": lambda b: _kernels.share_counts(indptr, indices, steps, args.skills, args.steps, backend=b),
        "cooccurrence_counts": lambda b: _kernels.cooccurrence_counts(indptr, indices, args.skills, backend=b),
        "equal_frequency_labels": lambda b: _kernels.equal_frequency_labels(values, 5, backend=b),
    }
    backends = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])
    print(f"{args.docs} docs, {args.skills} skills, {len(indices)} mentions; backends: {', '.join(backends)}")
    print(f"{'kernel':<24}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        if "numba" in backends:
            fn("numba")  # compile outside the timing
            a, b = fn("numpy"), fn("numba")
            for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
                assert np.array_equal(x, y), name
        t = {b: best_of(lambda: fn(b), args.repeat) for b in backends}
        line = f"{name:<24}" + "".join(f"{t[b] * 1e3:>10.1f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{t['numpy'] / t['numba']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
