"""Benchmark the compiled kernels against the numpy fallback.

Times the three kernel entry points at rollout-like and batch-like sizes,
plus one end-to-end PPO iteration per backend.

    python3 benchmarks/bench_kernels.py [--repeats 2000]
"""

import argparse
import importlib
import time

import numpy as np


def _best_of(fn, repeats, number=1):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(number):
            fn()
        best = min(best, (time.perf_counter() - start) / number)
    return best


def load_backends():
    backends = {}
    try:
        backends["ext"] = importlib.import_module("metadr._kernels")
    except ImportError:
        print("compiled extension not built; benchmarking the fallback only")
    backends["python"] = importlib.import_module("metadr._kernels_py")
    return backends


def kernel_benchmarks(repeats):
    from metadr import net

    rng = np.random.default_rng(0)
    params = net.init_params(30, 10, rng)
    w = params.arrays()[:8]
    x = rng.normal(0.0, 1.0, 30)
    xs = rng.normal(0.0, 1.0, (16, 30))
    d_means = rng.normal(0.0, 1.0, (16, 10))
    d_values = rng.normal(0.0, 1.0, 16)

    backends = load_backends()
    rows = []
    for name, impl in backends.items():
        _, _, h1, h2 = impl.forward_batch(*w, xs)
        rows.append((name, "forward_one (B=1)",
                     _best_of(lambda: impl.forward_one(*w, x), repeats)))
        rows.append((name, "forward_batch (B=16)",
                     _best_of(lambda: impl.forward_batch(*w, xs), repeats)))
        rows.append((name, "backward_batch (B=16)",
                     _best_of(lambda: impl.backward_batch(
                         params.trunk_w2, params.head_action_w, params.head_value_w,
                         xs, h1, h2, d_means, d_values), repeats)))
    return rows


def ppo_iteration_benchmark(repeats):
    # force-set the backend through the selector, once per subprocess-free run
    from metadr import kernels, net, ppo
    from metadr.env import EnvConfig, TaskSpec, build_env

    rng = np.random.default_rng(1)
    params = net.init_params(30, 10, rng)
    env = build_env(TaskSpec("curtail_shift", 1.0, 2001, 907), EnvConfig())
    env.reset()
    cfg = ppo.PpoConfig()
    opt = net.make_sgd(cfg.sgd_learning_rate)

    def one_iteration():
        ppo.train_iteration(params, env, cfg, opt, rng)

    return kernels.BACKEND, _best_of(one_iteration, max(repeats // 100, 3))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()

    rows = kernel_benchmarks(args.repeats)
    width = max(len(r[1]) for r in rows)
    print(f"{'backend':8} {'kernel':{width}} {'best time':>12}")
    by_kernel = {}
    for name, kernel, seconds in rows:
        by_kernel.setdefault(kernel, {})[name] = seconds
        print(f"{name:8} {kernel:{width}} {seconds * 1e6:10.1f} us")
    for kernel, times in by_kernel.items():
        if "ext" in times and "python" in times:
            print(f"speedup {kernel}: {times['python'] / times['ext']:.2f}x")

    backend, seconds = ppo_iteration_benchmark(args.repeats)
    print(f"\nfull PPO iteration ({backend} backend, 16-day rollout): "
          f"{seconds * 1e3:.2f} ms")
    print("rerun with METADR_KERNEL=python to time the fallback end to end")


if __name__ == "__main__":
    main()
