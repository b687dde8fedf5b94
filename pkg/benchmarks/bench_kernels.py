"""Compiled vs numpy backend for the l1 solver inner loop.

Each backend runs in its own interpreter because the choice is made at
import time. Problems are shaped like one tracker frame at m = 128.

    python3 benchmarks/bench_kernels.py [--frames 30] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from rrpcp.kernels import BACKEND, admm_chunk
from rrpcp.l1solver import L1Problem, solve_bpdn

frames, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
m, r = 128, 33
problems = []
for _ in range(frames):
    P_perp = np.linalg.qr(rng.standard_normal((m, m)))[0][:, r:]
    S = np.zeros(m)
    S[rng.choice(m, 9, replace=False)] = 5.0
    noise = P_perp.T @ rng.standard_normal(m) * 0.5
    problems.append(L1Problem(P_perp.T, P_perp.T @ S + noise, 2.0 * float(noise @ noise)))

solve_best = np.inf
for _ in range(repeat):
    tic = time.perf_counter()
    for p in problems:
        solve_bpdn(p)
    solve_best = min(solve_best, time.perf_counter() - tic)

# one raw chunk of ADMM iterations on the projection geometry of a frame
A = problems[0].A
V, sig, _ = np.linalg.svd(A.T, full_matrices=False)
V = np.ascontiguousarray(V)
b1 = np.ascontiguousarray(sig * 3.0)
w = np.ones(m)
chunk_best = np.inf
for _ in range(repeat):
    z, u = rng.standard_normal(m), np.zeros(m)
    tic = time.perf_counter()
    iters = admm_chunk(V, np.ascontiguousarray(sig), b1, 1.0, w, z, u, 1.0, 2000, 0.0, 0.0)[2]
    chunk_best = min(chunk_best, (time.perf_counter() - tic) / iters)
print(json.dumps({"backend": BACKEND, "solve_ms": 1e3 * solve_best / frames, "chunk_us": 1e6 * chunk_best}))
"""


def run(pure: bool, frames: int, repeat: int) -> dict:
    env = dict(os.environ, RRPCP_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, str(frames), str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=30)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rows = [run(False, args.frames, args.repeat), run(True, args.frames, args.repeat)]
    print(f"{'backend':>8} {'solve ms/frame':>15} {'ADMM us/iter':>13}")
    for r in rows:
        print(f"{r['backend']:>8} {r['solve_ms']:>15.3f} {r['chunk_us']:>13.2f}")
    if rows[0]["backend"] == "cython":
        print(f"speedup: solve x{rows[1]['solve_ms'] / rows[0]['solve_ms']:.2f}, "
              f"ADMM iteration x{rows[1]['chunk_us'] / rows[0]['chunk_us']:.2f}")
    else:
        print("compiled extension not built; both rows use the numpy fallback")


if __name__ == "__main__":
    main()
