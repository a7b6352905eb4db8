#!/usr/bin/env python3
"""Run the randomized inequality suite and print a per-property table.

With --all the suite runs for every cone index pair 3 <= k <= n <= 5 (the
same sweep the acceptance test uses); otherwise a single (n, k) is checked.
Exits nonzero if any property shows a violation beyond tolerance.
"""

import argparse
import sys
import time

from ksig import monitors


def run_one(n, k, samples, seed, tolerance):
    t0 = time.perf_counter()
    result = monitors.run_lemma_suite(n, k, samples=samples, seed=seed, tolerance=tolerance)
    dt = time.perf_counter() - t0
    print(f"\n(n, k) = ({n}, {k})   {samples} samples, seed {seed}, {dt:.2f}s")
    for check in result.checks:
        status = "ok " if check.passed else "FAIL"
        print(f"  {status} {check.name:<38} max violation {check.max_violation:.3e}")
    return result.all_passed


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--tolerance", type=float, default=1e-10)
    ap.add_argument("--all", action="store_true", help="sweep every 3 <= k <= n <= 5")
    args = ap.parse_args(argv)

    pairs = (
        [(n, k) for n in (3, 4, 5) for k in range(3, n + 1)]
        if args.all
        else [(args.n, args.k)]
    )
    passed = all(
        run_one(n, k, args.samples, args.seed, args.tolerance) for n, k in pairs
    )
    print("\nall properties passed" if passed else "\nVIOLATIONS FOUND", flush=True)
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
