"""Compare the numba and pure-numpy paths of the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time of each path and the speed-up, after checking
that both paths agree.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from haarblocks import _kernels

CASES = {
    "row_frames (n=2000, 2x1024)": lambda rng: (_kernels._row_frames_numba, _kernels._row_frames_numpy, (rng.standard_normal((2000, 2, 1024)), 2)),
    "row_frames (n=200, 8x4096)": lambda rng: (_kernels._row_frames_numba, _kernels._row_frames_numpy, (rng.standard_normal((200, 8, 4096)), 8)),
    "levy (n=2000, p=100)": lambda rng: (_kernels._levy_numba, _kernels._levy_numpy, (np.sort(rng.standard_normal((2000, 100)), axis=1),)),
    "levy (n=200, p=2500)": lambda rng: (_kernels._levy_numba, _kernels._levy_numpy, (np.sort(rng.standard_normal((200, 2500)), axis=1),)),
}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speed-up':>9s}")
    for name, make in CASES.items():
        fast, slow, inputs = make(rng)
        a, b = fast(*inputs), slow(*inputs)  # warm-up compiles the numba path
        np.testing.assert_allclose(a, b, atol=1e-10)
        t_fast = min(timeit.repeat(lambda: fast(*inputs), number=1, repeat=args.repeat))
        t_slow = min(timeit.repeat(lambda: slow(*inputs), number=1, repeat=args.repeat))
        print(f"{name:32s} {t_fast:10.4f} {t_slow:10.4f} {t_slow / t_fast:8.1f}x")


if __name__ == "__main__":
    main()
