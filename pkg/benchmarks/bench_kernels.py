"""Compare the numba and numpy kernel paths on sampling, GPOMDP and log-weights.

    python benchmarks/bench_kernels.py [--B 2000] [--H 100] [--repeat 5]

Outputs are checked for bit-equality before timings are printed.
"""

import argparse
import time

import numpy as np

from stormpg import kernels
from stormpg.estimators import gpomdp_batch, log_importance_weights, sample_from_uniforms
from stormpg.mdp import bundled_mdp


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--B", type=int, default=2000)
    ap.add_argument("--H", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    mdp = bundled_mdp("benchmark")
    rng = np.random.default_rng(0)
    theta, theta_old = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    uniforms = rng.random((args.B, 2 * args.H + 1))
    backends = [kernels.get_backend("numpy")]
    if kernels.HAVE_NUMBA:
        backends.append(kernels.get_backend("numba"))

    results = {}
    for be in backends:
        sample = lambda: sample_from_uniforms(mdp, theta, mdp.mu, uniforms, backend=be)  # noqa: E731
        sample()  # JIT warm-up
        batch = sample()
        grad = lambda: gpomdp_batch(batch, theta, mdp.gamma, backend=be)  # noqa: E731
        logw = lambda: log_importance_weights(batch, theta_old, theta, backend=be)  # noqa: E731
        grad(), logw()
        results[be.name] = {
            "sample": best_of(sample, args.repeat),
            "gpomdp": best_of(grad, args.repeat),
            "log_weights": best_of(logw, args.repeat),
        }

    if len(results) == 2:
        a, b = results["numpy"], results["numba"]
        assert np.array_equal(a["sample"][1].states, b["sample"][1].states)
        assert np.array_equal(a["gpomdp"][1], b["gpomdp"][1])
        assert np.array_equal(a["log_weights"][1], b["log_weights"][1])
        print("outputs bit-identical across backends")

    print(f"B={args.B} H={args.H} best of {args.repeat}")
    print(f"{'kernel':<12}" + "".join(f"{name:>12}" for name in results) + ("     speedup" if len(results) == 2 else ""))
    for kernel in ("sample", "gpomdp", "log_weights"):
        row = [results[name][kernel][0] for name in results]
        line = f"{kernel:<12}" + "".join(f"{t * 1e3:>10.2f}ms" for t in row)
        if len(row) == 2:
            line += f"{row[0] / row[1]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
