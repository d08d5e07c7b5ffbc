"""Time the hot kernels with numba on and off.

    python benchmarks/bench_kernels.py            # both paths, side by side
    python benchmarks/bench_kernels.py --child    # current path only (used internally)

The numba switch is read at import time, so each path runs in its own
interpreter with MARGINNET_DISABLE_NUMBA set accordingly.  Compilation is
excluded: every case runs once before it is timed.
"""
import argparse
import json
import os
import subprocess
import sys
import time


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run_cases(repeat):
    import numpy as np

    from marginnet import _netkernels as K
    from marginnet._accel import ENABLED
    from marginnet.dataset import Standardizer
    from marginnet.milp.model import MilpModel, Threshold, unit_layers
    from marginnet.milp.simplex import solve_lp
    from marginnet.net import MLP

    rng = np.random.default_rng(0)
    net = MLP.create((32, 32, 32), seed=0)
    X = rng.standard_normal((625, 4))
    y = rng.standard_normal(625)
    G = rng.standard_normal((625, 4))
    P = rng.standard_normal((100_000, 4))
    w, off = net._w, net._off

    # root relaxation LP of a distance query on the same (untrained) net
    net.standardizer = Standardizer(np.zeros(4), np.ones(4), 0.0, 1.0)
    model = MilpModel(unit_layers(net), np.zeros(4), threshold=Threshold("ge", 0.0))
    build = model.build(bounds=model.bounds())

    cases = {
        "forward 100k points": lambda: K.forward_kernel(net.theta, w, off, P),
        "objective+grad 625 pts (alpha_J=0)": lambda: K.objective_kernel(
            net.theta, w, off, X, y, np.zeros((0, 4)), 0.0, True),
        "objective+grad 625 pts (alpha_J=0.1)": lambda: K.objective_kernel(
            net.theta, w, off, X, y, G, 0.1, True),
        "input Jacobian 625 pts": lambda: K.jacobian_kernel(net.theta, w, off, X),
    }
    if build is not None:
        cases["simplex: root LP of 3x32 query"] = lambda: solve_lp(build.lp)
    return {"numba": ENABLED, "times": {k: _best(f, repeat) for k, f in cases.items()}}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--child", action="store_true")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(run_cases(args.repeat)))
        return
    results = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, MARGINNET_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(args.repeat)],
                             env=env, capture_output=True, text=True, check=True)
        results[label] = json.loads(out.stdout.strip().splitlines()[-1])["times"]
    print(f"{'case':40s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for case in results["numpy"]:
        a, b = results["numba"].get(case), results["numpy"][case]
        print(f"{case:40s} {1e3 * a:10.2f} {1e3 * b:10.2f} {b / a:8.1f}x")


if __name__ == "__main__":
    main()
