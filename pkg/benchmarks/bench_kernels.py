"""Compare the numba kernels with the pure-numpy fallback.

Each mode runs in its own interpreter because the switch is read at import
time (REBALANCE_DISABLE_JIT=1 selects the fallback).  The jitted timing
excludes compilation: every workload is run once as warm-up.

    python3 benchmarks/bench_kernels.py [--jumps 20000]
"""
import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time, tempfile, os
import numpy as np
from rebalance import _jit
from rebalance.mjp_core import RngStream
from rebalance.samplers import BJSConfig, Budget, FFFConfig, HMCConfig, run_sampler
from rebalance.targets import banana_target, gaussian_target, logistic_target, LogisticData, synthetic_german_credit

n = int(sys.argv[1])
tab = synthetic_german_credit(n=200)
X = (tab[:, :24] - tab[:, :24].mean(0)) / tab[:, :24].std(0)
logistic = logistic_target(LogisticData(np.hstack([np.ones((200, 1)), X]), (tab[:, 24] == 2).astype(float)))

work = {
    "fff_gaussian_d2_L5": ("fff", FFFConfig(0.25, 5, 1.0, "sqrt"), gaussian_target(2)),
    "bjs_banana": ("bjs", BJSConfig(0.05, 0.5, "sqrt", "bjs"), banana_target()),
    "fff_logistic_L1": ("fff", FFFConfig(0.05, 1, 0.1, "sqrt"), logistic),
    "hmc_logistic_L5": ("hmc", HMCConfig(0.05, 5), logistic),
}
out = {"numba": _jit.NUMBA_ENABLED}
for name, (s, cfg, tgt) in work.items():
    if _jit.NUMBA_ENABLED:
        run_sampler(s, cfg, tgt, RngStream(0), Budget(max_jumps=10), n_samples=5, store_records=False)
    t0 = time.perf_counter()
    res = run_sampler(s, cfg, tgt, RngStream(1), Budget(max_jumps=n), n_samples=100, store_records=False)
    dt = time.perf_counter() - t0
    out[name] = {"seconds": dt, "counters": res.counters.as_dict(), "grads": res.counters.grad_evals,
                 "checksum": float(np.sum(res.samples))}
print(json.dumps(out))
"""


def run_mode(disable_jit, n):
    env = dict(os.environ)
    env.pop("REBALANCE_DISABLE_JIT", None)
    if disable_jit:
        env["REBALANCE_DISABLE_JIT"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKER, str(n)], env=env, capture_output=True, text=True,
                          check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--jumps", type=int, default=20_000)
    args = ap.parse_args()

    t0 = time.perf_counter()
    jit = run_mode(False, args.jumps)
    py = run_mode(True, args.jumps)
    if not jit["numba"]:
        print("numba is not available; both runs used the fallback")

    print(f"{'workload':<22s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}  agree")
    for name in jit:
        if name == "numba":
            continue
        a, b = jit[name], py[name]
        # dot products may round differently in the last bit; event sequences must not differ
        same = (a["counters"] == b["counters"] and a["grads"] == b["grads"]
                and abs(a["checksum"] - b["checksum"]) <= 1e-9 * max(1.0, abs(a["checksum"])))
        print(f"{name:<22s} {a['seconds']:10.3f} {b['seconds']:10.3f} {b['seconds'] / a['seconds']:8.1f}  {same}")
    print(f"total wall time {time.perf_counter() - t0:.1f}s ({args.jumps} events per workload)")


if __name__ == "__main__":
    main()
