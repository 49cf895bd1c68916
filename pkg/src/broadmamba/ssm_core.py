"""Diagonal linear state space models: discretization, recurrent scan, kernels.

Every system here is a bank of ``d`` independent single-input single-output
channels, each with an ``N``-dimensional diagonal state. Arrays are laid out
channel-major for parameters (``(d, N)``) and time-major for sequences
(``(T, d)``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateRateError(ValueError):
    """Raised when ZOH discretization meets a zero state rate."""


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def inverse_softplus(y):
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


@dataclass
class ContinuousSSM:
    """Continuous-time diagonal SSM ``h' = A h + B x, y = C h + D x``.

    ``A``, ``B``, ``C`` have shape ``(d, N)``; ``D`` and ``log_delta`` have
    shape ``(d,)``. The timescale is ``softplus(log_delta)``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    log_delta: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        self.C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        self.D = np.atleast_1d(np.asarray(self.D, dtype=np.float64))
        self.log_delta = np.atleast_1d(np.asarray(self.log_delta, dtype=np.float64))
        d, n = self.A.shape
        if d < 1 or n < 1:
            raise ValueError("need at least one channel and one state")
        if self.B.shape != (d, n) or self.C.shape != (d, n):
            raise ValueError(f"B, C must have shape {(d, n)}")
        if self.D.shape != (d,) or self.log_delta.shape != (d,):
            raise ValueError(f"D, log_delta must have shape {(d,)}")
        if np.any(self.A > 0):
            raise ValueError("state rates A must be negative")

    @property
    def channels(self) -> int:
        return self.A.shape[0]

    @property
    def state_size(self) -> int:
        return self.A.shape[1]

    @property
    def delta(self) -> np.ndarray:
        return softplus(self.log_delta)

    @classmethod
    def from_delta(cls, A, B, C, D, delta):
        """Build a system from an explicit positive timescale per channel."""
        delta = np.atleast_1d(np.asarray(delta, dtype=np.float64))
        if np.any(delta <= 0):
            raise ValueError("delta must be positive")
        return cls(A, B, C, D, inverse_softplus(delta))

    @classmethod
    def random(cls, channels: int, state_size: int, rng: np.random.Generator):
        """Draw a system with the default initialization.

        Rates ``A = -exp(u)`` with ``u ~ U(log 0.5, log 8)``; timescales
        uniform in ``(0.001, 0.1)``; ``B, C ~ N(0, 1/N)``; ``D = 1``.
        """
        u = rng.uniform(np.log(0.5), np.log(8.0), size=(channels, state_size))
        scale = 1.0 / np.sqrt(state_size)
        B = rng.normal(0.0, scale, size=(channels, state_size))
        C = rng.normal(0.0, scale, size=(channels, state_size))
        delta = rng.uniform(0.001, 0.1, size=channels)
        return cls(-np.exp(u), B, C, np.ones(channels), inverse_softplus(delta))


@dataclass
class DiscreteSSM:
    Abar: np.ndarray
    Bbar: np.ndarray
    C: np.ndarray
    D: np.ndarray

    @property
    def channels(self) -> int:
        return self.Abar.shape[0]


@dataclass
class ConvKernel:
    """Per-channel impulse response, ``taps`` of shape ``(L, d)``."""

    taps: np.ndarray

    @property
    def length(self) -> int:
        return self.taps.shape[0]


def discretize_zoh(sys: ContinuousSSM) -> DiscreteSSM:
    """Exact zero-order-hold discretization of a diagonal system.

    ``Abar = exp(delta*A)`` and ``Bbar = (exp(delta*A) - 1) / A * B``. A zero
    rate has no finite closed form here; use :func:`discretize_taylor`.
    """
    if np.any(sys.A == 0):
        raise DegenerateRateError("zero state rate in ZOH discretization")
    dA = sys.delta[:, None] * sys.A
    Abar = np.exp(dA)
    Bbar = np.expm1(dA) / sys.A * sys.B
    return DiscreteSSM(Abar, Bbar, sys.C.copy(), sys.D.copy())


def discretize_taylor(sys: ContinuousSSM) -> DiscreteSSM:
    """First-order approximation ``Bbar = delta*B``; ``Abar`` stays exact."""
    delta = sys.delta[:, None]
    return DiscreteSSM(np.exp(delta * sys.A), delta * sys.B, sys.C.copy(), sys.D.copy())


def discretize(sys: ContinuousSSM, method: str = "zoh") -> DiscreteSSM:
    if method == "zoh":
        return discretize_zoh(sys)
    if method == "taylor":
        return discretize_taylor(sys)
    raise ValueError(f"unknown discretization {method!r}")


def _as_sequence(x) -> np.ndarray:
    data = getattr(x, "data", x)
    arr = np.asarray(data)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"sequence must be (T, d), got shape {arr.shape}")
    return arr


def scan(disc: DiscreteSSM, x, h0=None) -> np.ndarray:
    """Run the recurrence ``h_t = Abar h_{t-1} + Bbar x_t``, ``y_t = C h_t + D x_t``.

    ``x`` is ``(T, d)``; ``h0`` is ``(d, N)`` (zeros when omitted).
    """
    x = _as_sequence(x).astype(np.float64, copy=False)
    T, d = x.shape
    if d != disc.channels:
        raise ValueError(f"input width {d} != channel count {disc.channels}")
    h = np.zeros_like(disc.Abar) if h0 is None else np.array(h0, dtype=np.float64)
    y = np.empty((T, d))
    for t in range(T):
        h = disc.Abar * h + disc.Bbar * x[t][:, None]
        y[t] = np.einsum("dn,dn->d", disc.C, h) + disc.D * x[t]
    return y


def state_powers(Abar: np.ndarray, L: int) -> np.ndarray:
    """``Abar**i`` for ``i = 0..L-1``; shape ``(L, d, N)``."""
    return np.power(Abar[None], np.arange(L, dtype=np.float64)[:, None, None])


def materialize_kernel(disc: DiscreteSSM, L: int) -> ConvKernel:
    """Taps ``K[i] = sum_n C_n Abar_n^i Bbar_n`` for ``i < L``."""
    if L < 1:
        raise ValueError("kernel length must be >= 1")
    taps = np.einsum("ldn,dn->ld", state_powers(disc.Abar, L), disc.C * disc.Bbar)
    return ConvKernel(taps)


def _kernel_taps(kernel, L: int, d: int) -> np.ndarray:
    taps = _as_sequence(getattr(kernel, "taps", kernel)).astype(np.float64, copy=False)
    if taps.shape[1] != d:
        raise ValueError(f"kernel width {taps.shape[1]} != input width {d}")
    if taps.shape[0] < L:
        # missing taps count as zero
        taps = np.concatenate([taps, np.zeros((L - taps.shape[0], d))])
    return taps[:L]


def _skip(D, d: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(D, dtype=np.float64), (d,))


def causal_conv_naive(x, kernel, D=0.0) -> np.ndarray:
    """Direct O(L^2) sum ``y_j = sum_{l<=j} K[j-l] x_l + D x_j``.

    Each channel goes through ``np.convolve``, which is a plain direct-sum
    loop in C with no transform shortcut. Output dtype follows ``x``.
    """
    x = _as_sequence(x)
    L, d = x.shape
    xd = x.astype(np.float64, copy=False)
    taps = _kernel_taps(kernel, L, d)
    y = np.empty((L, d))
    for c in range(d):
        y[:, c] = np.convolve(xd[:, c], taps[:, c])[:L]
    y += _skip(D, d) * xd
    return y.astype(np.result_type(x.dtype, np.float32), copy=False)


def causal_conv_fft(x, kernel, D=0.0) -> np.ndarray:
    """Same result as :func:`causal_conv_naive` in O(L log L) via real FFTs."""
    x = _as_sequence(x)
    L, d = x.shape
    xd = x.astype(np.float64, copy=False)
    taps = _kernel_taps(kernel, L, d)
    n = 1 << (2 * L - 1).bit_length()
    spec = np.fft.rfft(xd, n, axis=0) * np.fft.rfft(taps, n, axis=0)
    y = np.fft.irfft(spec, n, axis=0)[:L]
    y += _skip(D, d) * xd
    return y.astype(np.result_type(x.dtype, np.float32), copy=False)


def causal_conv(x, kernel, D=0.0, method: str = "fft") -> np.ndarray:
    if method == "fft":
        return causal_conv_fft(x, kernel, D)
    if method == "naive":
        return causal_conv_naive(x, kernel, D)
    raise ValueError(f"unknown convolution method {method!r}")


# Derivatives used by the trainer's backward pass.


def discretize_grads(A, delta, B, method, dAbar, dBbar):
    """Pull gradients on ``(Abar, Bbar)`` back to ``(A, delta, B)``.

    ``delta`` has shape ``(d, 1)`` or broadcastable to ``A``. Returns
    ``(dA, ddelta_per_state, dB)``; the caller sums ``ddelta`` over states.
    """
    dA_ = delta * A
    Abar = np.exp(dA_)
    dA = dAbar * delta * Abar
    ddelta = dAbar * A * Abar
    if method == "zoh":
        em1 = np.expm1(dA_)
        dB = dBbar * em1 / A
        dA = dA + dBbar * B * (delta * Abar * A - em1) / (A * A)
        ddelta = ddelta + dBbar * B * Abar
    elif method == "taylor":
        dB = dBbar * delta
        ddelta = ddelta + dBbar * B
    else:
        raise ValueError(f"unknown discretization {method!r}")
    return dA, ddelta, dB


def kernel_grads(Abar, Bbar, C, dtaps):
    """Gradients of ``taps = materialize_kernel`` w.r.t. ``Abar, Bbar, C``.

    ``dtaps`` has shape ``(L, d)``.
    """
    L = dtaps.shape[0]
    P = state_powers(Abar, L)
    S = np.einsum("ld,ldn->dn", dtaps, P)
    dC = S * Bbar
    dBbar = S * C
    if L > 1:
        i = np.arange(1, L, dtype=np.float64)[:, None, None]
        dP = np.einsum("ld,ldn->dn", dtaps[1:], i * P[:-1])
    else:
        dP = np.zeros_like(Abar)
    dAbar = dP * C * Bbar
    return dAbar, dBbar, dC
