"""Bidirectional SSM convolution block.

Output at position ``j`` is

    sum_{l<=j} kf[j-l] * x_l  +  sum_{l>=j} kb[l-j] * x_l  +  skip * x_j

with ``kf``/``kb`` the per-channel kernels of a forward and a backward
diagonal SSM (each with its own ``D`` fixed to zero). Both sums include
``l = j``, so the centre tap carries ``kf[0] + kb[0] + skip``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ssm_core
from .ssm_core import ContinuousSSM, _as_sequence

DIRECTIONS = ("fwd", "bwd")


@dataclass
class BiSSMBlock:
    forward_sys: ContinuousSSM
    backward_sys: ContinuousSSM
    skip: np.ndarray

    def __post_init__(self):
        self.skip = np.atleast_1d(np.asarray(self.skip, dtype=np.float64))
        d = self.forward_sys.channels
        if self.backward_sys.channels != d or self.skip.shape != (d,):
            raise ValueError("forward, backward and skip must share the channel count")
        # the block supplies its own skip term
        self.forward_sys.D = np.zeros(d)
        self.backward_sys.D = np.zeros(d)

    @property
    def channels(self) -> int:
        return self.forward_sys.channels

    @classmethod
    def random(cls, channels: int, state_size: int, rng: np.random.Generator):
        fwd = ContinuousSSM.random(channels, state_size, rng)
        bwd = ContinuousSSM.random(channels, state_size, rng)
        return cls(fwd, bwd, np.ones(channels))

    def params(self) -> dict[str, np.ndarray]:
        """Learnable tensors; rates are stored as ``a_log`` with ``A = -exp(a_log)``."""
        out = {}
        for name, sys in zip(DIRECTIONS, (self.forward_sys, self.backward_sys)):
            out[f"{name}.a_log"] = np.log(-sys.A)
            out[f"{name}.log_delta"] = sys.log_delta.copy()
            out[f"{name}.B"] = sys.B.copy()
            out[f"{name}.C"] = sys.C.copy()
        out["skip"] = self.skip.copy()
        return out

    @classmethod
    def from_params(cls, p: dict[str, np.ndarray]) -> "BiSSMBlock":
        systems = []
        for name in DIRECTIONS:
            d = p[f"{name}.log_delta"].shape[0]
            systems.append(
                ContinuousSSM(-np.exp(p[f"{name}.a_log"]), p[f"{name}.B"], p[f"{name}.C"],
                              np.zeros(d), p[f"{name}.log_delta"])
            )
        return cls(systems[0], systems[1], p["skip"])


def block_kernels(block: BiSSMBlock, T: int, method: str = "zoh"):
    """Materialized forward and backward taps, each ``(T, d)``."""
    kf = ssm_core.materialize_kernel(ssm_core.discretize(block.forward_sys, method), T).taps
    kb = ssm_core.materialize_kernel(ssm_core.discretize(block.backward_sys, method), T).taps
    return kf, kb


def bissm(block: BiSSMBlock, x, method: str = "zoh", conv: str = "fft") -> np.ndarray:
    """Apply the block to a ``(T, d)`` sequence via two causal convolutions."""
    x = _as_sequence(x).astype(np.float64, copy=False)
    T = x.shape[0]
    kf, kb = block_kernels(block, T, method)
    past = ssm_core.causal_conv(x, kf, 0.0, conv)
    future = ssm_core.causal_conv(x[::-1], kb, 0.0, conv)[::-1]
    return past + future + block.skip * x


# Lag-loop form used in training; O(T^2 d) but cheap for dialogue-length T.


def apply_kernels(kf: np.ndarray, kb: np.ndarray, skip: np.ndarray, x: np.ndarray) -> np.ndarray:
    T = x.shape[0]
    y = skip * x
    for i in range(T):
        y[i:] += kf[i] * x[: T - i]
        y[: T - i] += kb[i] * x[i:]
    return y


def apply_kernels_backward(kf, kb, skip, x, grad_out):
    """Returns ``(d_kf, d_kb, d_skip, d_x)``."""
    T = x.shape[0]
    dkf = np.empty_like(kf)
    dkb = np.empty_like(kb)
    dx = skip * grad_out
    for i in range(T):
        dkf[i] = np.einsum("tc,tc->c", grad_out[i:], x[: T - i])
        dkb[i] = np.einsum("tc,tc->c", grad_out[: T - i], x[i:])
        dx[: T - i] += kf[i] * grad_out[i:]
        dx[i:] += kb[i] * grad_out[: T - i]
    dskip = np.einsum("tc,tc->c", grad_out, x)
    return dkf, dkb, dskip, dx


def _system_forward(p, name, T, method):
    A = -np.exp(p[f"{name}.a_log"])
    delta = ssm_core.softplus(p[f"{name}.log_delta"])[:, None]
    Abar = np.exp(delta * A)
    Bbar = np.expm1(delta * A) / A * p[f"{name}.B"] if method == "zoh" else delta * p[f"{name}.B"]
    taps = np.einsum("ldn,dn->ld", ssm_core.state_powers(Abar, T), p[f"{name}.C"] * Bbar)
    return taps, (A, delta, Abar, Bbar)


def _system_backward(p, name, method, cache, dtaps, grads):
    A, delta, Abar, Bbar = cache
    dAbar, dBbar, dC = ssm_core.kernel_grads(Abar, Bbar, p[f"{name}.C"], dtaps)
    dA, ddelta, dB = ssm_core.discretize_grads(A, delta, p[f"{name}.B"], method, dAbar, dBbar)
    ld = p[f"{name}.log_delta"]
    grads[f"{name}.a_log"] = dA * A
    grads[f"{name}.log_delta"] = ddelta.sum(axis=1) / (1.0 + np.exp(-ld))
    grads[f"{name}.B"] = dB
    grads[f"{name}.C"] = dC


def forward(p: dict[str, np.ndarray], x: np.ndarray, method: str = "zoh"):
    """Differentiable block forward on a parameter dict; returns ``(y, cache)``."""
    T = x.shape[0]
    kf, cf = _system_forward(p, "fwd", T, method)
    kb, cb = _system_forward(p, "bwd", T, method)
    y = apply_kernels(kf, kb, p["skip"], x)
    return y, (x, kf, kb, cf, cb)


def backward(p: dict[str, np.ndarray], cache, grad_out: np.ndarray, method: str = "zoh"):
    """Returns ``(param_grads, d_x)`` for :func:`forward`."""
    x, kf, kb, cf, cb = cache
    dkf, dkb, dskip, dx = apply_kernels_backward(kf, kb, p["skip"], x, grad_out)
    grads = {"skip": dskip}
    _system_backward(p, "fwd", method, cf, dkf, grads)
    _system_backward(p, "bwd", method, cb, dkb, grads)
    return grads, dx


def bissm_gradients(block: BiSSMBlock, x, upstream, method: str = "zoh") -> dict[str, np.ndarray]:
    """Gradients of ``sum(upstream * bissm(block, x))`` for every block parameter and ``x``.

    Keys follow :meth:`BiSSMBlock.params` plus ``"x"``.
    """
    x = _as_sequence(x).astype(np.float64, copy=False)
    p = block.params()
    _, cache = forward(p, x, method)
    grads, dx = backward(p, cache, np.asarray(upstream, dtype=np.float64), method)
    grads["x"] = dx
    return grads
