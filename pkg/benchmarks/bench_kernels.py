"""Compiled vs pure-Python kernels: batched single steps and MLP episode rollouts.

    python3 benchmarks/bench_kernels.py [--batch 100000] [--episodes 200]

Also checks that both backends return identical arrays.
"""
import argparse
import time

import numpy as np

from hybridsizer import kernels
from hybridsizer.plant import DesignVector, PlantParams
from hybridsizer.policy_opt import init_policy
from hybridsizer.sim_env import HybridEnv
from hybridsizer.synthetic import SyntheticSpec, make_series


def best_of(fn, repeat=3):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def batch_inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    params = PlantParams()
    design = np.column_stack([rng.uniform(0, 20, n), rng.uniform(0, 40, n), rng.uniform(0, 10, n)])
    return (rng.uniform(params.S_min, params.S_max, n), rng.uniform(0, 1, (n, 5)),
            rng.uniform(0, 1, n) * design[:, 0], rng.uniform(0, 1, n) * design[:, 0],
            np.column_stack([rng.uniform(-20, 100, n), rng.uniform(0, 10, (n, 3))]),
            np.tile([params.H_res, params.H_up, params.H_dn], (n, 1)), design,
            kernels.params_vector(params))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=100_000)
    ap.add_argument("--episodes", type=int, default=200)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    print("backends:", ", ".join(backends))

    inp = batch_inputs(args.batch)
    results = {}
    for mode_name, mode in (("hybrid", kernels.MODE_HYBRID), ("colocated", kernels.MODE_COLOCATED)):
        for b in backends:
            t, out = best_of(lambda: kernels.step_batch(*inp, mode, backend_name=b))
            results[(mode_name, b)] = out
            print(f"step_batch {mode_name:<9} {b:<7} {args.batch} rows  {t * 1e3:9.1f} ms  "
                  f"{args.batch / t / 1e6:6.2f} M steps/s")
        if len(backends) == 2:
            same = np.array_equal(results[(mode_name, "cython")], results[(mode_name, "python")])
            print(f"  identical outputs: {same}")

    market, pv = make_series(SyntheticSpec(days=8, pv_peak=1.0, cloud_noise=0.2, price_noise=3.0))
    env = HybridEnv(market, pv)
    policy = init_policy(seed=1)
    design = DesignVector(11.0, 20.0, 5.0)
    T = env.windows[0].T
    for b in backends:
        t, tr = best_of(lambda: [env.rollout(policy, design, seed=i, backend=b) for i in range(args.episodes)], 1)
        print(f"rollout_mlp {b:<7} {args.episodes} x {T} steps  {t * 1e3:9.1f} ms  "
              f"{args.episodes * T / t / 1e3:8.1f} k steps/s")


if __name__ == "__main__":
    main()
