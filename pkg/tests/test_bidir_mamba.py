import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from broadmamba import ssm_core
from broadmamba.bidir_mamba import (
    BiSSMBlock,
    apply_kernels,
    bissm,
    bissm_gradients,
    block_kernels,
)

from .conftest import random_system


def random_block(rng, d, N):
    return BiSSMBlock(random_system(rng, d, N), random_system(rng, d, N), rng.normal(size=d))


def literal(kf, kb, skip, x):
    T, d = x.shape
    y = np.zeros((T, d))
    for j in range(T):
        for l in range(T):
            if l <= j:
                y[j] += kf[j - l] * x[l]
            if l >= j:
                y[j] += kb[l - j] * x[l]
        y[j] += skip * x[j]
    return y


def test_length_one(rng):
    block = random_block(rng, 3, 4)
    x = rng.normal(size=(1, 3))
    kf, kb = block_kernels(block, 1)
    assert np.allclose(bissm(block, x), (kf[0] + kb[0] + block.skip) * x[0], atol=1e-15)


def test_reduces_to_causal_conv(rng):
    block = random_block(rng, 3, 4)
    block.backward_sys.C[:] = 0
    block.skip[:] = 0
    x = rng.normal(size=(20, 3))
    kf, _ = block_kernels(block, 20)
    expected = ssm_core.causal_conv_naive(x, kf, 0.0)
    assert np.array_equal(bissm(block, x, conv="naive"), expected)


@pytest.mark.parametrize("method", ["zoh", "taylor"])
def test_matches_literal_formula(rng, method):
    block = random_block(rng, 4, 3)
    x = rng.normal(size=(32, 4))
    kf, kb = block_kernels(block, 32, method)
    ref = literal(kf, kb, block.skip, x)
    assert np.max(np.abs(bissm(block, x, method) - ref)) <= 1e-10
    assert np.max(np.abs(bissm(block, x, method, conv="naive") - ref)) <= 1e-10
    assert np.max(np.abs(apply_kernels(kf, kb, block.skip, x) - ref)) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 24), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_reversal_symmetry(T, d, N, seed):
    r = np.random.default_rng(seed)
    block = random_block(r, d, N)
    swapped = BiSSMBlock(block.backward_sys, block.forward_sys, block.skip)
    x = r.normal(size=(T, d))
    assert np.allclose(bissm(swapped, x[::-1], conv="naive"), bissm(block, x, conv="naive")[::-1],
                       rtol=1e-12, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 24), st.integers(0, 2**32 - 1), st.floats(-2, 2))
def test_linear_in_input(T, seed, a):
    r = np.random.default_rng(seed)
    block = random_block(r, 2, 3)
    x1, x2 = r.normal(size=(T, 2)), r.normal(size=(T, 2))
    assert np.allclose(bissm(block, a * x1 + x2), a * bissm(block, x1) + bissm(block, x2), atol=1e-10)


def test_zero_upstream_zero_gradients(rng):
    block = random_block(rng, 3, 2)
    grads = bissm_gradients(block, rng.normal(size=(6, 3)), np.zeros((6, 3)))
    assert all(not np.any(g) for g in grads.values())


def test_skip_gradient(rng):
    block = random_block(rng, 3, 2)
    x, up = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    assert np.allclose(bissm_gradients(block, x, up)["skip"], (up * x).sum(axis=0), atol=1e-14)


@pytest.mark.parametrize("method", ["zoh", "taylor"])
def test_gradients_finite_difference(rng, method):
    block = random_block(rng, 4, 4)
    T = 16
    x, up = rng.normal(size=(T, 4)), rng.normal(size=(T, 4))
    grads = bissm_gradients(block, x, up, method)
    params = block.params()
    eps = 1e-4

    def loss(p, x_):
        return float(np.sum(up * bissm(BiSSMBlock.from_params(p), x_, method, conv="naive")))

    for name in list(params) + ["x"]:
        arr = x if name == "x" else params[name]
        num = np.zeros_like(arr)
        for i in np.ndindex(arr.shape):
            old = arr[i]
            arr[i] = old + eps
            up_ = loss(params, x)
            arr[i] = old - eps
            down = loss(params, x)
            arr[i] = old
            num[i] = (up_ - down) / (2 * eps)
        rel = np.linalg.norm(grads[name] - num) / max(np.linalg.norm(num), np.linalg.norm(grads[name]), 1e-12)
        assert rel <= 1e-4, name


def test_params_roundtrip(rng):
    block = random_block(rng, 2, 3)
    again = BiSSMBlock.from_params(block.params())
    assert np.allclose(again.forward_sys.A, block.forward_sys.A, rtol=1e-15)
    assert np.array_equal(again.backward_sys.log_delta, block.backward_sys.log_delta)
    assert np.all(again.forward_sys.D == 0)
