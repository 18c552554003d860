#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the recurrent sequence kernels, the gate step kernels, the fused
Adam update, and one end-to-end training trial per backend.  The first
jitted call compiles (cached afterwards), so a warmup pass runs before
timing.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from mpolstm.kernels import reference

try:
    from mpolstm.kernels import jit
except ImportError:
    jit = None


def time_call(fn, *args, repeats=50):
    fn(*args)  # warmup / JIT compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def bench_sequence_kernels(repeats):
    rng = np.random.default_rng(0)
    t_len, batch, h_dim = 20, 32, 64
    px = rng.standard_normal((t_len, batch, 4 * h_dim))
    wh_t = rng.standard_normal((h_dim, 4 * h_dim)) * 0.1
    h0 = np.zeros((batch, h_dim))
    c0 = np.zeros((batch, h_dim))

    rows = []
    for name, mod in backends():
        fwd = time_call(mod.lstm_recurrent_forward, px, wh_t, h0, c0,
                        repeats=repeats)
        acts, cs, hs = mod.lstm_recurrent_forward(px, wh_t, h0, c0)
        up = rng.standard_normal(hs.shape)
        bwd = time_call(mod.lstm_recurrent_backward, wh_t, acts, cs, hs,
                        h0, c0, up, repeats=repeats)
        rows.append((f"recurrent fwd T={t_len} B={batch} H={h_dim}", name, fwd))
        rows.append((f"recurrent bwd T={t_len} B={batch} H={h_dim}", name, bwd))

    pre = rng.standard_normal((batch, 4 * h_dim))
    c_prev = rng.standard_normal((batch, h_dim))
    for name, mod in backends():
        rows.append((f"gate fwd B={batch} H={h_dim}", name,
                     time_call(mod.gate_forward, pre, c_prev, repeats=repeats * 4)))

    p = rng.standard_normal(50_000)
    g = rng.standard_normal(50_000)
    for name, mod in backends():
        m = np.zeros_like(p)
        v = np.zeros_like(p)
        rows.append(("adam update n=50k", name,
                     time_call(mod.adam_update, p.copy(), g, m, v, 1,
                               1e-3, 0.9, 0.999, 1e-8, repeats=repeats * 4)))
    return rows


def bench_end_to_end():
    from mpolstm import training
    from mpolstm.weightio import ExperimentConfig

    cfg = ExperimentConfig(n_train=500, n_test=100, epochs=2, retrain_epochs=2,
                           seeds=(0,))
    rows = []
    for method in ("dense", "mpo"):
        t0 = time.perf_counter()
        training.train(cfg, method, 5.0, 0)
        rows.append((f"trial {method} (500 seq, 2 epochs)",
                     "active: " + active_backend(), time.perf_counter() - t0))
    return rows


def active_backend():
    from mpolstm import kernels

    return kernels.BACKEND


def backends():
    out = [("numpy", reference)]
    if jit is not None:
        out.append(("numba", jit))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    if jit is None:
        print("numba unavailable; timing the numpy backend only\n")

    rows = bench_sequence_kernels(args.repeats)
    print(f"{'kernel':<36} {'backend':<10} {'per call':>12}")
    print("-" * 60)
    last = None
    timings = {}
    for kernel, backend, sec in rows:
        if last not in (None, kernel):
            print()
        last = kernel
        timings[(kernel, backend)] = sec
        print(f"{kernel:<36} {backend:<10} {sec * 1e3:>10.3f} ms")
    print()
    for kernel in dict.fromkeys(k for k, _ in timings):
        ref_t = timings.get((kernel, "numpy"))
        jit_t = timings.get((kernel, "numba"))
        if ref_t and jit_t:
            print(f"{kernel:<36} numba speedup: {ref_t / jit_t:>6.2f}x")

    print()
    for label, backend, sec in bench_end_to_end():
        print(f"{label:<42} [{backend}] {sec:.2f} s")


if __name__ == "__main__":
    main()
