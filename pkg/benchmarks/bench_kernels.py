"""Compare the compiled kernels with the pure-Python fallback.

Run with ``python benchmarks/bench_kernels.py``; prints best-of-N wall times
and the speed-up per kernel, and checks that both give the same answer.
"""
import argparse
import timeit

import numpy as np

from eprsteer import _fallback
from eprsteer._backend import get_kernels
from eprsteer.frames import CameraModel, detect_spots, synthesize_frame
from eprsteer.model import _rot_gauss, _sinh_nodes


def mixture_args(n):
    u, wu = _sinh_nodes(0.05, 1.0, 8.0, n)
    v, wv = _sinh_nodes(0.05, 1.0, 8.0, n)
    return (wu, wv, _rot_gauss(u, 0.05), _rot_gauss(v, 1.0),
            _rot_gauss(u, 0.5), _rot_gauss(v, 0.5), 0.5, 0.5)


def frame_inputs(seed=0):
    model = CameraModel()
    rng = np.random.default_rng(seed)
    truth = rng.uniform(0, 255, (40, 2))
    f = synthesize_frame(truth, model, (256, 256), seed=seed)
    return model, f


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nodes", type=int, default=512, help="quadrature nodes per axis")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    try:
        compiled = get_kernels("compiled")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run pip install -e . first")

    margs = mixture_args(args.nodes)
    model, frame = frame_inputs()
    sig = np.ascontiguousarray(frame.pixels.astype(float) - model.offset)
    ys, xs = _fallback.find_peaks(sig, 12.5, 3.0)
    ys, xs = np.ascontiguousarray(ys, dtype=np.int64), np.ascontiguousarray(xs, dtype=np.int64)
    cases = {
        f"mixture_plogp ({args.nodes}^2 nodes)":
            lambda k: k.mixture_plogp(*margs),
        "find_peaks (256^2 frame)":
            lambda k: k.find_peaks(sig, 12.5, 3.0),
        f"fit_peaks ({ys.size} peaks)":
            lambda k: k.fit_peaks(sig, frame.pixels, ys, xs, 3.0, 2047.0),
        "detect_spots (256^2 frame)":
            lambda k: detect_spots(frame, model, backend=k),
    }
    print(f"{'kernel':<34}{'python [ms]':>13}{'compiled [ms]':>15}{'speed-up':>10}")
    for name, fn in cases.items():
        ref, got = fn(_fallback), fn(compiled)
        if name.startswith("mixture"):
            np.testing.assert_allclose(got, ref, rtol=1e-12)
        tp = best(lambda: fn(_fallback), args.repeat)
        tc = best(lambda: fn(compiled), args.repeat)
        print(f"{name:<34}{1e3 * tp:>13.2f}{1e3 * tc:>15.2f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
