"""Benchmark the numba kernels against the pure-numpy fallback.

Measures the committee forward/backward kernels at several batch/committee
sizes, then times one full stump fit per backend in a subprocess (the
backend is chosen at import time via POLYTREE_BACKEND).

Run:  python benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from polytree.kernels import _numpy  # noqa: E402

try:
    from polytree.kernels import _numba
except ImportError:
    _numba = None


def time_call(fn, *args):
    fn(*args)  # warmup (and jit compile)
    start = time.perf_counter()
    single = time.perf_counter() - start
    repeats = max(3, min(50, int(0.5 / max(single, 1e-4))))
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def bench_kernels():
    rng = np.random.default_rng(0)
    sizes = [(1_000, 8), (10_000, 50), (100_000, 50)]
    print(f"{'n x k':>14} {'kernel':>10} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for n, k in sizes:
        z = rng.normal(scale=10.0, size=(n, k))
        r = np.abs(rng.normal(size=k)) + 0.05
        dg = rng.normal(size=n)
        _, sp = _numpy.committee_forward(z, r)

        t_np_f = time_call(_numpy.committee_forward, z, r)
        t_np_b = time_call(_numpy.committee_backward, z, sp, r, dg)
        if _numba is None:
            print(f"{n}x{k:>4} forward  {t_np_f*1e3:10.3f} {'-':>10}")
            continue
        t_nb_f = time_call(_numba.committee_forward, z, r)
        t_nb_b = time_call(_numba.committee_backward, z, sp, r, dg)
        print(f"{f'{n}x{k}':>14} {'forward':>10} {t_np_f*1e3:10.3f} {t_nb_f*1e3:10.3f} "
              f"{t_np_f/t_nb_f:7.2f}x")
        print(f"{f'{n}x{k}':>14} {'backward':>10} {t_np_b*1e3:10.3f} {t_nb_b*1e3:10.3f} "
              f"{t_np_b/t_nb_b:7.2f}x")


_FIT_SNIPPET = """
import time
import numpy as np
from polytree import kernels
from polytree.data import synth_circles, standardize
from polytree.objective import PriorConfig
from polytree.train import TrainConfig, AnnealSchedule, fit_parameters, make_stump

train, _ = standardize(synth_circles(4000, seed=0))
prior = PriorConfig()
cfg = TrainConfig(truncation_k=50, prior=prior, learning_rate=0.05, batch_size=4096,
                  epochs=150, seed=0, anneal=AnnealSchedule(1.0, 64.0, "geometric", 150))
stump = make_stump(np.random.default_rng(0), train, 50, prior)
fit_parameters(stump, train, None, cfg)  # warm the jit cache
stump = make_stump(np.random.default_rng(0), train, 50, prior)
start = time.perf_counter()
fit_parameters(stump, train, None, cfg)
print(f"{kernels.BACKEND}: 150-epoch stump fit on 4000x2: "
      f"{time.perf_counter() - start:.2f}s")
"""


def bench_fit():
    for backend in ("numpy", "numba"):
        if backend == "numba" and _numba is None:
            continue
        env = dict(os.environ, POLYTREE_BACKEND=backend)
        subprocess.run([sys.executable, "-c", _FIT_SNIPPET], env=env, check=True)


if __name__ == "__main__":
    if _numba is None:
        print("numba not importable; showing numpy timings only")
    bench_kernels()
    print()
    bench_fit()
