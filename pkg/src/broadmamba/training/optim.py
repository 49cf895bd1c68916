"""AdamW with decoupled weight decay over a dict of numpy tensors."""

from __future__ import annotations

import numba
import numpy as np


_TINY = np.finfo(np.float64).tiny


@numba.njit(cache=True)
def _adamw_update(p, g, m, v, lr, weight_decay, beta1, beta2, eps, c1, c2):
    decay = 1.0 - lr * weight_decay
    step = lr / c1
    for i in range(p.size):
        gi = g[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
        # moments of parameters that stop receiving gradient decay geometrically into
        # the subnormal range, where every later update runs ~10x slower
        if abs(mi) < _TINY:
            mi = 0.0
        if vi < _TINY:
            vi = 0.0
        m[i] = mi
        v[i] = vi
        p[i] = p[i] * decay - step * mi / (np.sqrt(vi / c2) + eps)


class AdamW:
    """``p <- p - lr * (mhat / (sqrt(vhat) + eps) + weight_decay * p)``.

    On construction every tensor in ``params`` is moved into one flat buffer
    and the dict entries are rebound to views of it; the update is one
    compiled pass over that buffer.
    """

    def __init__(self, params: dict[str, np.ndarray], lr=1e-4, weight_decay=1e-2,
                 betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.names = sorted(params)
        sizes = [params[k].size for k in self.names]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        total = int(self.offsets[-1])
        self.flat = np.empty(total)
        for name, lo, hi in zip(self.names, self.offsets[:-1], self.offsets[1:]):
            shape = params[name].shape
            self.flat[lo:hi] = params[name].reshape(-1)
            params[name] = self.flat[lo:hi].reshape(shape)
        self.m = np.zeros(total)
        self.v = np.zeros(total)
        self._g = np.empty(total)

    def step(self, grads: dict[str, np.ndarray]):
        self.t += 1
        g = self._g
        for name, lo, hi in zip(self.names, self.offsets[:-1], self.offsets[1:]):
            g[lo:hi] = grads[name].reshape(-1)
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        _adamw_update(self.flat, g, self.m, self.v, self.lr, self.weight_decay,
                      self.beta1, self.beta2, self.eps, c1, c2)
