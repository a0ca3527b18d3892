"""Throughput comparison of the compiled and pure-numpy trajectory kernels.

Runs the same replica workload through both backends and reports wall time
and speedup, after checking that a sample trajectory agrees bit-for-bit on
the discrete outputs.

    python benchmarks/bench_kernels.py --replicas 200 --horizon 0.5
"""

import argparse
import os
import time

import numpy as np

from sbbm import particle
from sbbm.kernels import get_backend
from sbbm.local_time import LocalTimeEstimatorConfig
from sbbm.mechanisms import BranchingSpec, law
from sbbm.rng import bit_generator


def _workload(method, eps, dt, horizon):
    spec = BranchingSpec(0.5, 1.5, law("ordinary", p0=0.5, p2=0.5),
                         law("catalytic", q1=1.0))
    est = LocalTimeEstimatorConfig(method=method, epsilon=eps)
    cfg = particle.SimConfig(dt=dt, horizon=horizon, estimator=est, seed=7,
                             record_every=0)
    positions = (-0.3, -0.1, 0.0, 0.1, 0.25, 0.4)
    return spec, cfg, positions


def _run(backend, spec, cfg, positions, replicas):
    os.environ["SBBM_BACKEND"] = backend
    t0 = time.perf_counter()
    out = particle.run_replicas(
        positions, spec, cfg, replicas,
        lambda rec, fin, r: (fin.positions.size, fin.cumulative_local_time))
    return time.perf_counter() - t0, out


def _check_parity(spec, cfg, positions):
    finals = {}
    for backend in ("python", "cython"):
        os.environ["SBBM_BACKEND"] = backend
        pop = particle.init(positions)
        _, fin = particle.run(pop, spec, cfg, bitgen=bit_generator(cfg.seed, 0))
        finals[backend] = fin
    a, b = finals["python"], finals["cython"]
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.positions, b.positions)
    np.testing.assert_allclose(a.cumulative_local_time,
                               b.cumulative_local_time, rtol=1e-11)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicas", type=int, default=200)
    ap.add_argument("--horizon", type=float, default=0.5)
    ap.add_argument("--dt", type=float, default=2.5e-3)
    args = ap.parse_args()

    if get_backend("cython") is get_backend("python"):
        raise SystemExit("compiled kernel not built; nothing to compare")

    print(f"{args.replicas} replicas, horizon {args.horizon}, dt {args.dt}")
    print(f"{'estimator':<10} {'python':>10} {'cython':>10} {'speedup':>9}")
    for method, eps in (("band", 0.1), ("bridge", 0.05)):
        spec, cfg, positions = _workload(method, eps, args.dt, args.horizon)
        _check_parity(spec, cfg, positions)
        t_py, out_py = _run("python", spec, cfg, positions, args.replicas)
        t_cy, out_cy = _run("cython", spec, cfg, positions, args.replicas)
        assert [o[0] for o in out_py] == [o[0] for o in out_cy]
        print(f"{method:<10} {t_py:>9.2f}s {t_cy:>9.2f}s {t_py / t_cy:>8.1f}x")
    os.environ.pop("SBBM_BACKEND", None)


if __name__ == "__main__":
    main()
