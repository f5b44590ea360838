"""Compare the compiled and pure-numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Times the three hot paths (LSTM forward/backward, masked softmax, Adam
update) on workloads shaped like a desk-scale training step. Each kernel is
warmed up first so numba's compilation cost does not land in the timings.
"""

import argparse
import time

import numpy as np

from skelgait import kernels


def time_call(fn, repeats: int) -> float:
    fn()  # warmup (numba compiles here; numpy touches caches)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def lstm_workload(rng):
    steps, batch, n_in, hidden = 6, 256, 160, 128
    x = rng.normal(size=(steps, batch, n_in))
    wx = rng.normal(size=(4 * hidden, n_in)) * 0.2
    wh = rng.normal(size=(4 * hidden, hidden)) * 0.2
    b = rng.normal(size=4 * hidden) * 0.1
    h0 = np.zeros((batch, hidden))
    c0 = np.zeros((batch, hidden))
    return x, wx, wh, b, h0, c0


def bench_backend(kset, rng, repeats: int) -> dict:
    x, wx, wh, b, h0, c0 = lstm_workload(rng)
    h, c, gi, gf, gg, go, tc = kset.lstm_forward(x, wx, wh, b, h0, c0)
    grad_h = rng.normal(size=h.shape)

    logits = rng.normal(size=(256 * 8, 20)) * 2.0
    mask = rng.random(logits.shape) < 0.3
    mask[:, 0] = True
    probs = kset.masked_softmax(logits, mask)
    grad_p = rng.normal(size=probs.shape)

    param = rng.normal(size=200_000)
    grad = rng.normal(size=param.size)
    m = np.zeros_like(param)
    v = np.zeros_like(param)

    return {
        "lstm_forward": time_call(lambda: kset.lstm_forward(x, wx, wh, b, h0, c0), repeats),
        "lstm_backward": time_call(
            lambda: kset.lstm_backward(grad_h, x, h, c, gi, gf, gg, go, tc, wx, wh, h0, c0),
            repeats,
        ),
        "masked_softmax": time_call(lambda: kset.masked_softmax(logits, mask), repeats),
        "masked_softmax_grad": time_call(
            lambda: kset.masked_softmax_grad(probs, grad_p), repeats
        ),
        "adam_update": time_call(
            lambda: kset.adam_update(
                param.copy(), grad, m.copy(), v.copy(), 1, 1e-3, 0.9, 0.999, 1e-8
            ),
            repeats,
        ),
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timed repetitions per kernel")
    args = parser.parse_args()

    names = ["numpy"]
    if kernels.HAVE_NUMBA:
        names.append("numba")
    else:
        print("numba is not importable; timing the numpy backend only")

    rng = np.random.default_rng(0)
    results = {name: bench_backend(kernels.make_kernels(name), rng, args.repeats) for name in names}

    width = max(len(k) for k in results[names[0]])
    header = f"{'kernel':<{width}}  " + "  ".join(f"{n:>10}" for n in names)
    if len(names) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for kernel in results[names[0]]:
        row = f"{kernel:<{width}}  " + "  ".join(
            f"{results[n][kernel] * 1e3:>8.3f}ms" for n in names
        )
        if len(names) == 2:
            row += f"  {results['numpy'][kernel] / results['numba'][kernel]:>7.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
