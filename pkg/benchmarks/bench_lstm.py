"""Compare the compiled LSTM sequence kernel against the pure-NumPy fallback.

Times forward and backward passes at a configurable size and reports the
speedup plus the maximum deviation between the two implementations.

    python3 benchmarks/bench_lstm.py --H 60 --B 256 --d 21 --m 64
"""

import argparse
import time

import numpy as np

from reachpred.nn import backend


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--H", type=int, default=60, help="sequence length")
    ap.add_argument("--B", type=int, default=256, help="batch rows")
    ap.add_argument("--d", type=int, default=21, help="input width")
    ap.add_argument("--m", type=int, default=64, help="hidden size")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    try:
        from reachpred.nn import _lstm_kernel as ext
    except ImportError:
        ext = None

    rng = np.random.default_rng(args.seed)
    H, B, d, m = args.H, args.B, args.d, args.m
    xs = rng.normal(size=(H, B, d))
    w = rng.normal(scale=0.1, size=(m + d, 4 * m))
    b = rng.normal(scale=0.1, size=4 * m)
    h0 = np.zeros((B, m))
    c0 = np.zeros((B, m))
    dh_seq = rng.normal(size=(H, B, m))

    print(f"LSTM sequence kernel, H={H} B={B} d={d} m={m} "
          f"(~{H * B * 8 * m * (m + d) / 1e6:.0f} MFLOP/pass)")
    print(f"active backend: {backend.backend_name()}")

    h_py, c_py, g_py = backend.py_seq_forward(xs, w, b, h0, c0)
    fwd_py = _time(lambda: backend.py_seq_forward(xs, w, b, h0, c0), args.repeat)
    bwd_args_py = (dh_seq, xs, w, g_py, c_py, h_py, h0, c0)
    grads_py = backend.py_seq_backward(*bwd_args_py)
    bwd_py = _time(lambda: backend.py_seq_backward(*bwd_args_py), args.repeat)
    print(f"pure:     forward {fwd_py:8.2f} ms   backward {bwd_py:8.2f} ms")

    if ext is None:
        print("compiled: unavailable (extension not built)")
        return

    h_cy, c_cy, g_cy = ext.seq_forward(xs, w, b, h0, c0)
    fwd_cy = _time(lambda: ext.seq_forward(xs, w, b, h0, c0), args.repeat)
    bwd_args_cy = (dh_seq, xs, w, g_cy, c_cy, h_cy, h0, c0)
    grads_cy = ext.seq_backward(*bwd_args_cy)
    bwd_cy = _time(lambda: ext.seq_backward(*bwd_args_cy), args.repeat)
    print(f"compiled: forward {fwd_cy:8.2f} ms   backward {bwd_cy:8.2f} ms")
    print(f"speedup:  forward {fwd_py / fwd_cy:5.2f}x        backward {bwd_py / bwd_cy:5.2f}x")

    dev_fwd = max(
        float(np.abs(h_py - h_cy).max()),
        float(np.abs(c_py - c_cy).max()),
        float(np.abs(g_py - g_cy).max()),
    )
    dev_bwd = max(float(np.abs(a - b_).max()) for a, b_ in zip(grads_py, grads_cy))
    print(f"max deviation: forward {dev_fwd:.3e}   backward {dev_bwd:.3e}")


if __name__ == "__main__":
    main()
