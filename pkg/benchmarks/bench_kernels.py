"""Time the coordinate-ascent kernels with and without numba.

Each backend runs in its own interpreter because the switch
(NETSLAB_DISABLE_NUMBA) is read at import time.

    python benchmarks/bench_kernels.py [--p 1000 --K 100 --repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time, warnings
import numpy as np
from netslab import _accel, kernels
from netslab.simgen import SimConfig, simulate
from netslab.vbem import Hyperparameters, StructuredModel, fit_model, init_state, prior_precision, slab_evidence

p, K, repeat = int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3])
sim = simulate(SimConfig(p=p, K=K, seed=0))
model = StructuredModel.build(sim.train, sim.networks)
hyper = Hyperparameters()
state = init_state(model, hyper)
d = model.design
state.sigma2[:] = 1.0 / (state.tau * d.column_sq_norms + prior_precision(state, model, hyper))

def sweep_w():
    m = state.m.copy()
    resid = model.y - d.Xt.T @ m
    assert -1 == kernels.sweep_w(d.Xt, resid, m, state.sigma2, d.column_sq_norms, float(state.tau),
                    state.r / hyper.s1, model.blocks, model.block_offsets, model.offsets, model.slot_network)

ev = slab_evidence(state, hyper)
gap = np.zeros(model.P)

def sweep_beta():
    kernels.sweep_beta(state.eta.copy(), ev, gap, model.offsets, model.n_mains, model.local)

def full_fit():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit_model(model, hyper)

out = {"numba": _accel.HAS_NUMBA, "P": model.P}
for name, fn in (("sweep_w", sweep_w), ("sweep_beta", sweep_beta), ("fit", full_fit)):
    t0 = time.perf_counter()
    fn()  # includes compilation (or cache load) on the numba path
    out[name + "_first"] = time.perf_counter() - t0
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    out[name] = min(times)
print(json.dumps(out))
"""


def run(disable, p, K, repeat):
    env = dict(os.environ)
    env.pop("NETSLAB_DISABLE_NUMBA", None)
    if disable:
        env["NETSLAB_DISABLE_NUMBA"] = "1"
    proc = subprocess.run([sys.executable, "-c", CHILD, str(p), str(K), str(repeat)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, default=1000)
    ap.add_argument("--K", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    fast = run(False, args.p, args.K, args.repeat)
    slow = run(True, args.p, args.K, args.repeat)
    if not fast["numba"]:
        print("numba is not installed; both rows use the numpy path")
    print(f"p={args.p} K={args.K} P={fast['P']} (best of {args.repeat})")
    print(f"{'kernel':<12}{'numba s':>12}{'numpy s':>12}{'speedup':>10}{'numba 1st call':>17}")
    for name in ("sweep_w", "sweep_beta", "fit"):
        print(f"{name:<12}{fast[name]:>12.4f}{slow[name]:>12.4f}{slow[name] / fast[name]:>10.1f}{fast[name + '_first']:>17.3f}")


if __name__ == "__main__":
    main()
