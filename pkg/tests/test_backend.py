import os
import subprocess
import sys

import numpy as np
import pytest

from eprsteer import _fallback
from eprsteer._backend import BACKEND, get_kernels
from eprsteer.frames import CameraModel, detect_spots, synthesize_frame

try:
    compiled = get_kernels("compiled")
except ImportError:  # extension not built
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")
MODEL = CameraModel()


def test_backend_selected():
    assert BACKEND in ("compiled", "python")
    assert get_kernels("python") is _fallback
    with pytest.raises(ValueError):
        get_kernels("fortran")


def test_env_forces_fallback():
    env = dict(os.environ, EPRSTEER_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import eprsteer; print(eprsteer.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
def test_mixture_plogp_agrees():
    rng = np.random.default_rng(0)
    n, m = 300, 257
    args = [rng.uniform(0, 1, n), rng.uniform(0, 1, m), rng.uniform(0, 2, n), rng.uniform(0, 2, m),
            rng.uniform(0, 2, n), rng.uniform(0, 2, m), 0.3, 0.7]
    args[2][:5] = 0.0  # exercise 0 log 0
    ref = _fallback.mixture_plogp(*args)
    got = compiled.mixture_plogp(*[np.ascontiguousarray(a) if isinstance(a, np.ndarray) else a
                                   for a in args])
    np.testing.assert_allclose(got, ref, rtol=1e-12)


def _frames(n):
    rng = np.random.default_rng(1)
    for i in range(n):
        truth = rng.uniform(0, 95, (rng.integers(0, 15), 2))
        amps = rng.exponential(MODEL.mean_amplitude, truth.shape[0])
        yield synthesize_frame(truth, MODEL, (96, 96), seed=2, index=i, amplitudes=amps)


@needs_compiled
def test_peak_kernels_agree():
    for f in _frames(20):
        sig = np.ascontiguousarray(f.pixels.astype(float) - MODEL.offset)
        ys_r, xs_r = _fallback.find_peaks(sig, 12.5, 3.0)
        ys_c, xs_c = compiled.find_peaks(sig, 12.5, 3.0)
        np.testing.assert_array_equal(ys_c, ys_r)
        np.testing.assert_array_equal(xs_c, xs_r)
        if ys_r.size:
            ys_r = np.ascontiguousarray(ys_r, dtype=np.int64)
            xs_r = np.ascontiguousarray(xs_r, dtype=np.int64)
            ref = _fallback.fit_peaks(sig, f.pixels, ys_r, xs_r, 3.0, 2047.0)
            got = compiled.fit_peaks(sig, f.pixels, ys_r, xs_r, 3.0, 2047.0)
            for a, b in zip(got, ref):
                np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)


@needs_compiled
def test_detect_spots_agree():
    for f in _frames(20):
        a = detect_spots(f, MODEL, backend=_fallback)
        b = detect_spots(f, MODEL, backend=compiled)
        assert len(a) == len(b)
        for da, db in zip(a, b):
            assert da.saturated == db.saturated
            np.testing.assert_allclose([da.x, da.y, da.amplitude], [db.x, db.y, db.amplitude],
                                       rtol=1e-9, atol=1e-9)
