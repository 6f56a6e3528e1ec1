"""Numba vs pure-numpy sampling kernels.

Runs each path in its own interpreter (the switch is read at import time),
times the accept-reject and full-MAC batches after a warm-up call, and checks
that both paths return identical arrays.

    python3 benchmarks/bench_kernels.py [--runs 1000000] [--threads 1]
"""
import argparse
import hashlib
import json
import os
import subprocess
import sys

WORKER = r"""
import hashlib, json, sys, time
import numpy as np
from macsim import Channel, Decomposition, Pmf, SmoothingSpec, _accel
from macsim.mac import build_mac_protocol, simulate_batch
from macsim.rejection import build_p2p, p2p_sample

runs, threads = int(sys.argv[1]), int(sys.argv[2])
_accel.set_threads(threads)
X = (0, 1)
w = Channel.bsc(0.25)
p = build_p2p(w, SmoothingSpec.channel(0.1), 0.001)
d = Decomposition.build(Channel.identity(X), Channel.identity(X),
                        np.array([[[1, 0], [0, 1]], [[0, 1], [1, 0]]]), X)
u = Pmf.uniform(X)
mp = build_mac_protocol(d, 0.05, 0.05, 0.001, "fixed", (u, u))
xs = np.arange(runs) % 2
x2 = (np.arange(runs) // 2) % 2

def timed(fn):
    fn(1000)  # warm-up / compile
    t = time.perf_counter()
    out = fn(runs)
    return time.perf_counter() - t, out

t_ar, ar = timed(lambda n: p2p_sample(p, xs[:n], 7))
t_mac, mac = timed(lambda n: simulate_batch(mp, xs[:n], x2[:n], 7))
h = hashlib.sha256()
for a in list(ar) + [mac[k] for k in sorted(mac)]:
    h.update(np.ascontiguousarray(a).tobytes())
print(json.dumps({"numba": _accel.USE_NUMBA, "accept_reject_s": t_ar, "mac_s": t_mac,
                  "trials": [p.trials, mp.sender1.trials], "digest": h.hexdigest()}))
"""


def run(flag, runs, threads):
    env = dict(os.environ, MACSIM_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", WORKER, str(runs), str(threads)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=1_000_000)
    ap.add_argument("--threads", type=int, default=1)
    a = ap.parse_args()
    nb = run("0", a.runs, a.threads)
    npy = run("1", a.runs, a.threads)
    print(f"runs={a.runs} threads={a.threads} trials(p2p, mac)={nb['trials']}")
    print(f"{'kernel':<14}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for k in ("accept_reject_s", "mac_s"):
        print(f"{k[:-2]:<14}{nb[k]:>10.3f}{npy[k]:>10.3f}{npy[k] / nb[k]:>9.1f}")
    same = nb["digest"] == npy["digest"]
    print("identical outputs:", same)
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
