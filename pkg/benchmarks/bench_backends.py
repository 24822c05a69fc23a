#!/usr/bin/env python3
"""Compare the compiled kernel core against the pure-NumPy fallback.

Times the three hot kernels (direct convolution, Jacobi singular values,
greedy NMS) on representative sizes, for every backend importable in this
environment.

    python3 benchmarks/bench_backends.py [--repeats 7] [--csv out.csv]
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from detlab._kernels import available_backends


def _time(fn, repeats: int) -> tuple[float, float]:
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        t1 = time.perf_counter_ns()
        samples.append((t1 - t0) / 1e3)
    return statistics.mean(samples), statistics.median(samples)


def build_cases():
    rng = np.random.default_rng(7)
    xp = rng.standard_normal((1, 32, 66, 66))  # pre-padded 64x64 input
    w = rng.standard_normal((64, 32, 3, 3))
    xp_dw = rng.standard_normal((1, 64, 66, 66))
    w_dw = rng.standard_normal((64, 1, 7, 7))
    mat = rng.standard_normal((256, 64))
    boxes = np.abs(rng.standard_normal((5000, 2))) * 100
    boxes = np.concatenate([boxes, boxes + 20 + np.abs(rng.standard_normal((5000, 2))) * 30], axis=1)
    order = np.argsort(-rng.uniform(size=5000))
    boxes = np.ascontiguousarray(boxes[order])
    classes = rng.integers(0, 4, size=5000).astype(np.int64)
    return [
        ("conv3x3_c32_to_c64_64px", lambda k: k.conv2d_direct(xp, w, 1, 1)),
        ("conv7x7_dw_c64_60px", lambda k: k.conv2d_direct(xp_dw, w_dw, 1, 64)),
        ("jacobi_svd_256x64", lambda k: k.jacobi_singular_values(mat)),
        ("nms_5000_boxes", lambda k: k.nms_greedy(boxes, classes, 0.5, False, 300)),
    ]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--csv", help="also write kernel,backend,mean_us,median_us rows")
    args = parser.parse_args()

    backends = available_backends()
    if "compiled" not in backends:
        print("note: compiled extension not built; timing the fallback only")
    rows = []
    for name, case in build_cases():
        for backend_name, module in backends.items():
            case(module)  # warm up
            mean_us, median_us = _time(lambda: case(module), args.repeats)
            rows.append((name, backend_name, mean_us, median_us))
            print(f"{name:28s} {backend_name:9s} mean {mean_us:10.1f} us   median {median_us:10.1f} us")
    if "compiled" in backends:
        print()
        for name, _ in build_cases():
            times = {b: med for (n, b, _m, med) in rows if n == name}
            print(f"{name:28s} speedup x{times['python'] / times['compiled']:.1f}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("kernel,backend,mean_us,median_us\n")
            for name, backend_name, mean_us, median_us in rows:
                fh.write(f"{name},{backend_name},{mean_us:.3f},{median_us:.3f}\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
