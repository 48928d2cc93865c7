"""Benchmark the hot kernels with numba against the pure-numpy fallback.

Runs itself twice in subprocesses (the DELAYPLATOON_NUMBA flag is read at
import time), timing the closed-loop platoon stepper and the
quasi-polynomial rightmost-root search, and prints a comparison table.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import json
import os
import statistics
import subprocess
import sys
import time


def time_best(fn, repeats: int) -> float:
    fn()  # warmup (JIT compile in the numba mode)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def run_child(repeats: int) -> dict:
    import numpy as np

    import delayplatoon as dp
    from delayplatoon import analysis
    from delayplatoon._accel import NUMBA_ENABLED
    from delayplatoon.spacing import PolicyKind

    p = dp.VehicleParams(tau=0.067, phi=0.15)
    policy = dp.SpacingPolicy(PolicyKind.DELAYED_CONSTANT_HEADWAY, h_v=0.4)
    spec = dp.ControllerSpec(
        policy, dp.ControllerGains(k_p=0.2, k_d=0.7 - 0.067 * 0.2), ego=p, predecessor=p
    )
    config = dp.PlatoonConfig(
        vehicles=tuple(dp.VehicleSetup(p) for _ in range(5)),
        policies=(policy,) * 4,
        controllers=(spec,) * 4,
        ts=0.01,
        horizon=60.0,
    )
    profile = dp.LeaderProfile(
        (
            dp.LeaderSegment.pulse(2.0, 0.5),
            dp.LeaderSegment.pulse(2.0, -0.5),
            dp.LeaderSegment.pulse(56.0, 0.0),
        )
    )
    qp = analysis.QuasiPolynomial.extended_internal(1.2, 0.25, 0.15)
    region = analysis.SearchRegion.default_for(0.15)

    results = {
        "mode": "numba" if NUMBA_ENABLED else "numpy",
        "closed_loop_5veh_60s": time_best(lambda: dp.run(config, profile), repeats),
        "rightmost_root": time_best(lambda: analysis.rightmost_root(qp, region), repeats),
    }
    # sanity: both modes must agree on the physics
    log = dp.run(config, profile)
    results["checksum_final_q"] = float(np.sum(log.q[-1]))
    return results


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.child:
        print(json.dumps(run_child(args.repeats)))
        return 0

    rows = []
    for flag in ("1", "0"):
        env = dict(os.environ, DELAYPLATOON_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, __file__, "--child", "--repeats", str(args.repeats)],
            check=True,
            capture_output=True,
            text=True,
            env=env,
        )
        rows.append(json.loads(out.stdout.splitlines()[-1]))

    numba_row, numpy_row = rows
    assert numba_row["checksum_final_q"] == numpy_row["checksum_final_q"], (
        "numba and numpy paths disagree"
    )
    print(f"{'kernel':<26}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for key in ("closed_loop_5veh_60s", "rightmost_root"):
        a, b = numba_row[key], numpy_row[key]
        print(f"{key:<26}{a * 1e3:>10.2f}ms{b * 1e3:>10.2f}ms{b / a:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
