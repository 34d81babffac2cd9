"""Benchmark the compiled kernels against the numpy reference backend.

Runs the Efron loss/gradient and the concordance pair counts on matched
random inputs at several cohort sizes, checks that the two backends agree,
and prints per-call timings with the speedup.

Usage:
    python3 benchmarks/bench_kernels.py [--sizes 500,2000,8000] [--repeats 7]
"""

import argparse
import time

import numpy as np

from survkit._kernels import _ref

try:
    from survkit._kernels import _core
except ImportError:
    _core = None


def survival_inputs(rng, n):
    times = rng.exponential(10.0, n) + 0.01
    events = (rng.random(n) < 0.65).astype(float)
    events[0] = 1.0
    scores = rng.normal(0.0, 1.0, n)
    # round a third of the scores so the tie paths get exercised too
    third = n // 3
    scores[:third] = np.round(scores[:third], 1)
    return times, events, scores


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(sizes, repeats):
    if _core is None:
        print("compiled backend not available; showing the reference backend only")
    header = f"{'kernel':<22}{'n':>8}{'python':>12}{'compiled':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    rng = np.random.default_rng(0)
    for n in sizes:
        times, events, scores = survival_inputs(rng, n)
        cases = [
            ("efron_loss_grad", lambda b: b.efron_loss_grad(times, events, scores)),
            ("concordance_counts", lambda b: b.concordance_counts(times, events, scores)),
        ]
        for name, call in cases:
            t_ref = best_of(lambda: call(_ref), repeats)
            if _core is None:
                print(f"{name:<22}{n:>8}{t_ref * 1e3:>10.2f}ms{'-':>12}{'-':>10}")
                continue
            t_core = best_of(lambda: call(_core), repeats)

            if name == "efron_loss_grad":
                v_ref, g_ref = call(_ref)
                v_core, g_core = call(_core)
                assert abs(v_ref - v_core) <= 1e-9 * max(1.0, abs(v_ref))
                np.testing.assert_allclose(g_ref, g_core, rtol=1e-12, atol=1e-12)
            else:
                assert call(_ref) == call(_core)

            print(
                f"{name:<22}{n:>8}{t_ref * 1e3:>10.2f}ms{t_core * 1e3:>10.2f}ms"
                f"{t_ref / t_core:>9.1f}x"
            )


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="500,2000,8000",
                        help="comma-separated cohort sizes")
    parser.add_argument("--repeats", type=int, default=7,
                        help="timing repeats; the best run is reported")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    run(sizes, args.repeats)


if __name__ == "__main__":
    main()
