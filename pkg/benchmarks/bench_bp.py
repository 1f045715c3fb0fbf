"""Time the compiled and numpy sum-product kernels on the n=648 code.

    python benchmarks/bench_bp.py [--words 200] [--iters 50] [--snr 1.5] [--repeat 3]

Both backends decode the same noisy batch; the script checks that they
agree on hard decisions before printing words/s for each.
"""

import argparse
import math
import time

import numpy as np

from rffcomm import _bp, ldpc, vlc


def noisy_batch(system, n_words, snr_db, seed):
    rng = np.random.default_rng(seed)
    info = rng.integers(0, 2, (n_words, system.n_info), dtype=np.uint8)
    sigma = math.sqrt(1.0 / 10 ** (snr_db / 10))
    y = vlc.transmit(ldpc.encode(system, info), None, 1.0, sigma, rng=rng)
    return vlc.channel_llrs(y, sigma * sigma)


def time_backend(name, system, llr, iters, repeat):
    _bp.set_backend(name)
    best, res = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = ldpc.sum_product_decode(system, llr, iters)
        best = min(best, time.perf_counter() - t0)
    return best, res


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--words", type=int, default=200)
    ap.add_argument("--iters", type=int, default=50)
    ap.add_argument("--snr", type=float, default=1.5, help="Es/N0 in dB on a linear channel")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    system = ldpc.build_code()
    llr = noisy_batch(system, args.words, args.snr, args.seed)
    previous = _bp.BACKEND
    results = {}
    try:
        for name in _bp.BACKENDS:
            results[name] = time_backend(name, system, llr, args.iters, args.repeat)
    finally:
        _bp.set_backend(previous)

    if len(results) == 2:
        a, b = results["python"][1], results["cython"][1]
        if not np.array_equal(a.hard_bits, b.hard_bits):
            raise SystemExit("backends disagree on hard decisions")
    mean_iters = float(np.mean(next(iter(results.values()))[1].iterations))
    print(f"{args.words} words, n={system.n_bits}, mean iterations {mean_iters:.1f}")
    for name, (secs, _) in results.items():
        print(f"{name:>7}: {secs:8.3f} s  {args.words / secs:10.1f} words/s")
    if len(results) == 2:
        print(f"speedup: {results['python'][0] / results['cython'][0]:.2f}x")
    else:
        print("compiled kernel not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
