"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both implementations are called directly, so one process covers both; the
``CPSCHED_JIT`` flag only decides which one the library uses.
"""

import argparse
import time

import numpy as np

from cpsched.baselines import FixtureSpec, make_fixture
from cpsched.harness import ExperimentConfig
from cpsched.kernels import geometry, greedy, subsets
from cpsched.world import agent_boxes, init_frame


def _best(fn, args, repeat):
    fn(*args)  # compile / warm caches
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    cfg = ExperimentConfig()
    frame = init_frame(cfg.map, cfg.mobility, 0, cfg.dt)
    boxes = np.ascontiguousarray(np.vstack([cfg.map.building_boxes, agent_boxes(frame.agents)]))
    labels = np.arange(len(boxes), dtype=np.int64)
    cov = next(a for a in frame.agents if a.is_cov)
    skip = len(cfg.map.building_boxes) + [a.id for a in frame.agents].index(cov.id)
    lidar = cfg.lidar
    yield "scan_counts (1 LiDAR sweep)", geometry._scan_counts_jit, geometry._scan_counts_numpy, (
        cov.x, cov.y, lidar.mount_height, boxes, labels, skip, lidar.n_azimuth, np.tan(lidar.elevations), lidar.max_range, len(boxes))

    rng = np.random.default_rng(0)
    seg = np.ascontiguousarray(rng.uniform(0, 400, (5000, 4)))
    none = np.full(len(seg), -1, dtype=np.int64)
    yield "segment_hits (5000 segments)", geometry._segment_hits_jit, geometry._segment_hits_numpy, (seg, boxes, none, none)

    inst = make_fixture(FixtureSpec("random", seed=1, n_covs=40, n_objects=200, groups=2))
    first, second, w, cost = inst.arrays()
    gargs = (first, second, w, cost, inst.budget, 0.5, np.zeros(len(cost)), np.zeros(len(cost), dtype=bool))
    yield "greedy_core (40 CoVs, 200 objects)", greedy._greedy_jit, greedy._greedy_numpy, gargs

    inst = make_fixture(FixtureSpec("random", seed=2, n_covs=16, n_objects=120, groups=2))
    first, second, w, cost = inst.arrays()
    sargs = (subsets.pack_bits(first), subsets.pack_bits(second), w, cost, inst.budget)
    yield "best_subset (16 CoVs, 120 objects)", subsets._best_subset_jit, subsets._best_subset_numpy, sargs


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'kernel':<38s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, jit_fn, np_fn, fargs in cases():
        tj = _best(jit_fn, fargs, args.repeat)
        tn = _best(np_fn, fargs, args.repeat)
        print(f"{name:<38s} {tj * 1e3:9.2f}ms {tn * 1e3:9.2f}ms {tn / tj:7.1f}x")


if __name__ == "__main__":
    main()
