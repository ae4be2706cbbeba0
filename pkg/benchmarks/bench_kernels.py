"""Time the pure-Python and compiled kernels side by side.

    python benchmarks/bench_kernels.py [--repeat 5] [--packets 2000]

Per-kernel timings use inputs shaped like one harness chunk. The end-to-end
row runs ``run_scenario`` in a subprocess per backend, since the backend is
fixed at import time.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from cpm_auth import _backend


def make_inputs(rng, chunk):
    frames = rng.standard_normal((chunk, 400)) + 1j * rng.standard_normal((chunk, 400))
    taps = rng.standard_normal((chunk, 8)) + 1j * rng.standard_normal((chunk, 8))
    ref = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    snaps = ref + 0.1 * (rng.standard_normal((chunk, 64)) + 1j * rng.standard_normal((chunk, 64)))
    return {
        "j0_array": (rng.uniform(0, 50, 10_000),),
        "sc_metric": (frames[:, :168], 32),
        "gauss_markov": (taps[0], 0.999, taps),
        "convolve_rows": (frames, taps),
        "cpm_trace": (snaps, np.ones(chunk, dtype=bool), ref, 0.05, False, 0),
    }


def bench_kernels(repeat, chunk):
    rng = np.random.default_rng(0)
    inputs = make_inputs(rng, chunk)
    backends = {name: _backend.load(name) for name in _backend.available_backends()}
    rows = []
    for kernel, args in inputs.items():
        times = {}
        for name, mod in backends.items():
            fn = getattr(mod, kernel)
            times[name] = min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))
        rows.append((kernel, times))
    return list(backends), rows


def bench_end_to_end(packets, backends):
    code = ("import time; from cpm_auth.harness import run_scenario; "
            "from cpm_auth.config import config_from_dict; "
            f"cfg = config_from_dict({{'num_packets': {packets}}}); "
            "t = time.perf_counter(); run_scenario(cfg); print(time.perf_counter() - t)")
    times = {}
    for name in backends:
        env = dict(os.environ, CPM_AUTH_BACKEND=name)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        times[name] = float(out.stdout)
    return times


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--chunk", type=int, default=2048, help="rows per kernel call")
    p.add_argument("--packets", type=int, default=2000, help="packets in the end-to-end run")
    args = p.parse_args(argv)

    names, rows = bench_kernels(args.repeat, args.chunk)
    rows.append((f"run_scenario (N={args.packets})", bench_end_to_end(args.packets, names)))
    header = f"{'kernel':<28}" + "".join(f"{n + ' [ms]':>16}" for n in names)
    if len(names) == 2:
        header += f"{'speed-up':>12}"
    print(header)
    for kernel, times in rows:
        line = f"{kernel:<28}" + "".join(f"{times[n] * 1e3:>16.2f}" for n in names)
        if len(names) == 2:
            line += f"{times['python'] / times['cython']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
