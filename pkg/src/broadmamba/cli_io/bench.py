"""Timing of naive vs FFT causal convolution vs the recurrent scan."""

from __future__ import annotations

import time

import numpy as np

from .. import ssm_core
from ..ssm_core import ContinuousSSM

DEFAULT_LENGTHS = (1024, 4096, 16384, 65536)


class BenchCorrectnessError(AssertionError):
    pass


def _median_ns(fn, repeats: int, warmup: int) -> int:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return int(np.median(times))


def run_bench(lengths=DEFAULT_LENGTHS, repeats: int = 5, warmup: int = 2, channels: int = 8,
              state_size: int = 8, seed: int = 0, tol: float = 1e-5, log=None):
    """Rows ``(L, naive_ns, fft_ns, scan_ns)``.

    Before timing each length, FFT and naive outputs on single-precision input
    must agree within ``tol``.
    """
    rng = np.random.default_rng(seed)
    disc = ssm_core.discretize_zoh(ContinuousSSM.random(channels, state_size, rng))
    disc.D = np.zeros(channels)
    rows = []
    for L in lengths:
        x = rng.standard_normal((L, channels)).astype(np.float32)
        kernel = ssm_core.materialize_kernel(disc, L)
        ref = ssm_core.causal_conv_naive(x, kernel, disc.D)
        fast = ssm_core.causal_conv_fft(x, kernel, disc.D)
        err = float(np.max(np.abs(ref.astype(np.float64) - fast)))
        if not err <= tol:
            raise BenchCorrectnessError(f"fft deviates from naive by {err:g} at L={L}")
        naive_ns = _median_ns(lambda: ssm_core.causal_conv_naive(x, kernel, disc.D), repeats, warmup)
        fft_ns = _median_ns(lambda: ssm_core.causal_conv_fft(x, kernel, disc.D), repeats, warmup)
        scan_ns = _median_ns(lambda: ssm_core.scan(disc, x), repeats, warmup)
        rows.append((L, naive_ns, fft_ns, scan_ns))
        if log:
            log(f"L={L} naive={naive_ns / 1e6:.2f}ms fft={fft_ns / 1e6:.2f}ms scan={scan_ns / 1e6:.2f}ms")
    return rows


def loglog_slope(lengths, times) -> float:
    """Least-squares slope of ``log(time)`` against ``log(L)``."""
    return float(np.polyfit(np.log(lengths), np.log(times), 1)[0])
