"""Compare the compiled and pure-Python Q-learning/PER kernels.

Trains the same agent with both backends from the same random streams,
checks that the Q-tables match bit for bit, and reports episodes/second.

    python benchmarks/bench_kernels.py --episodes 300 --env deep_sea --N 10
"""

import argparse
import time

import numpy as np

from metatune import kernels
from metatune.agents.runner import EnvConfig, run_meta_episode
from metatune.rng import SeedTree

THETA = {"alpha_lr": 0.1, "gamma": 0.99, "epsilon0": 0.9, "per_alpha": 0.6, "per_beta0": 0.4}


def time_backend(name, env_cfg, episodes, seed, repeats):
    backend = kernels.get_backend(name)
    best, result = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = run_meta_episode("tabular_q_per", THETA, env_cfg, episodes, "best_eval_score",
                                  SeedTree(seed), evaluate=False, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--env", default="deep_sea", choices=("deep_sea", "gridworld"))
    parser.add_argument("--N", type=int, default=10, help="deep sea size")
    parser.add_argument("--episodes", type=int, default=300)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    env_cfg = EnvConfig(args.env, {"N": args.N} if args.env == "deep_sea" else {})
    if not kernels.HAVE_COMPILED:
        print("compiled kernel not built; only the Python backend is available")
    names = ["python"] + (["cython"] if kernels.HAVE_COMPILED else [])
    timings = {}
    results = {}
    for name in names:
        timings[name], results[name] = time_backend(name, env_cfg, args.episodes, args.seed, args.repeats)
        steps = results[name].train_steps
        print(f"{name:7s} {timings[name] * 1e3:9.1f} ms  {args.episodes / timings[name]:10.0f} episodes/s"
              f"  {steps / timings[name]:12.0f} steps/s")
    if len(names) == 2:
        same = np.array_equal(results["python"].agent.q, results["cython"].agent.q)
        print(f"speedup {timings['python'] / timings['cython']:.1f}x, identical Q-tables: {same}")


if __name__ == "__main__":
    main()
