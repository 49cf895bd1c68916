"""Acceptance criteria, one test per criterion.

Run ``pytest tests/test_acceptance.py -s`` to see the PASS/FAIL line of
each criterion as it finishes; the lines are repeated in the summary.
"""

import time

import mpmath
import numpy as np
import pytest

from broadmamba import ssm_core
from broadmamba.bidir_mamba import BiSSMBlock, bissm, block_kernels
from broadmamba.broad_learning import BroadSpace, bls_norm_loss, broad_features, ridge_solve
from broadmamba.cli_io import cli
from broadmamba.cli_io.bench import DEFAULT_LENGTHS, loglog_slope, run_bench
from broadmamba.cli_io.checkpoint import load_checkpoint, save_checkpoint
from broadmamba.cli_io.config import RunConfig
from broadmamba.cli_io.tensorfile import TensorFileError, decode, encode
from broadmamba.training import compute_metrics, evaluate, grad_check, load_datasets, train
from broadmamba.training.ablation import noise_skewed, run_ablation

from .conftest import ACCEPTANCE, random_system
from .test_bidir_mamba import literal
from .test_broad_learning import normal_equation_oracle
from .test_training import tally


def report(n, title, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {title} ({detail})"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def test_c01_scan_matches_convolution():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        T, N, d = int(rng.integers(1, 513)), int(rng.integers(1, 17)), int(rng.integers(1, 9))
        disc = ssm_core.discretize_zoh(random_system(rng, d, N))
        x = rng.normal(size=(T, d))
        naive = ssm_core.causal_conv_naive(x, ssm_core.materialize_kernel(disc, T), disc.D)
        worst = max(worst, float(np.max(np.abs(ssm_core.scan(disc, x) - naive))))
    elapsed = time.perf_counter() - start
    report(1, "scan == naive convolution", worst <= 1e-10 and elapsed < 10,
           f"max err {worst:.2e}, {elapsed:.1f}s")


def test_c02_fft_matches_naive():
    rng = np.random.default_rng(102)
    worst = {np.float32: 0.0, np.float64: 0.0}
    for i in range(50):
        L = int(rng.integers(1, 4097)) if i else 4096
        d = int(rng.integers(1, 5))
        disc = ssm_core.discretize_zoh(random_system(rng, d, int(rng.integers(1, 9))))
        kernel = ssm_core.materialize_kernel(disc, L)
        for dtype in worst:
            x = rng.normal(size=(L, d)).astype(dtype)
            diff = ssm_core.causal_conv_fft(x, kernel, disc.D).astype(np.float64) - \
                ssm_core.causal_conv_naive(x, kernel, disc.D)
            worst[dtype] = max(worst[dtype], float(np.max(np.abs(diff))))
    single, double = worst[np.float32], worst[np.float64]
    report(2, "FFT == naive convolution", single <= 1e-6 and double <= 1e-10,
           f"single {single:.2e}, double {double:.2e}")


def test_c03_bissm_literal_formula():
    rng = np.random.default_rng(103)
    worst = 0.0
    for i in range(50):
        d, N, T = int(rng.integers(1, 6)), int(rng.integers(1, 9)), int(rng.integers(1, 65))
        block = BiSSMBlock(random_system(rng, d, N), random_system(rng, d, N), rng.normal(size=d))
        x = rng.normal(size=(T, d))
        method = ("zoh", "taylor")[i % 2]
        kf, kb = block_kernels(block, T, method)
        worst = max(worst, float(np.max(np.abs(bissm(block, x, method) - literal(kf, kb, block.skip, x)))))
    report(3, "BiSSM == double-loop formula", worst <= 1e-10, f"max err {worst:.2e}")


def test_c04_gradient_suite():
    start = time.perf_counter()
    worst, where, checked = 0.0, "", 0
    for overrides in ({}, {"fusion": "add"}, {"fusion": "concat"},
                      {"discretization": "taylor", "bls_target": "labels", "layers": 2}):
        model, batch = cli.gradcheck_setup(cli.small_config(**overrides))
        err, name, per = grad_check(model, batch, 1e-4)
        checked += len(per)
        if err >= worst:
            worst, where = err, f"{name} {overrides or 'default'}"
    elapsed = time.perf_counter() - start
    report(4, "central-difference gradients", worst <= 1e-4 and elapsed < 60,
           f"max rel err {worst:.2e} at {where}, {checked} tensors, {elapsed:.1f}s")


def test_c05_ridge_optimality():
    rng = np.random.default_rng(105)
    worst, beaten = 0.0, 0
    for _ in range(20):
        space = BroadSpace.random(int(rng.integers(2, 9)), int(rng.integers(1, 4)), int(rng.integers(1, 4)),
                                  int(rng.integers(1, 6)), int(rng.integers(1, 6)), 10 ** rng.uniform(-3, 0), rng)
        Y = broad_features(space, rng.normal(size=(int(rng.integers(10, 60)), space.in_width))).Y
        W = ridge_solve(Y, Y, space.lam)
        worst = max(worst, float(np.max(np.abs(W - normal_equation_oracle(Y, Y, space.lam)))))
        best = bls_norm_loss(space, Y, W)
        beaten += sum(best <= bls_norm_loss(space, Y, W + 1e-3 * rng.normal(size=W.shape)) for _ in range(20))
    report(5, "ridge_solve optimal", worst <= 1e-8 and beaten == 400,
           f"max dev from oracle {worst:.2e}, {beaten}/400 perturbations worse")


def test_c06_discretization():
    mpmath.mp.dps = 50
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(20):
        sys_ = random_system(rng, 3, 4)
        disc = ssm_core.discretize_zoh(sys_)
        for c in range(3):
            dt = mpmath.mpf(float(sys_.delta[c]))
            for n in range(4):
                a, b = mpmath.mpf(float(sys_.A[c, n])), mpmath.mpf(float(sys_.B[c, n]))
                e = mpmath.exp(dt * a)
                worst = max(worst, abs(disc.Abar[c, n] - float(e)), abs(disc.Bbar[c, n] - float((e - 1) / a * b)))
    deltas = np.array([1e-2, 5e-3, 2.5e-3])
    gaps = []
    for delta in deltas:
        s = ssm_core.ContinuousSSM.from_delta([[-1.0, -3.0]], [[1.0, 0.5]], [[1.0, 1.0]], [0.0], [delta])
        gaps.append(np.max(np.abs(ssm_core.discretize_zoh(s).Bbar - ssm_core.discretize_taylor(s).Bbar)))
    order = loglog_slope(deltas, gaps)
    report(6, "ZOH exact, Taylor second order", worst <= 1e-12 and order >= 1.9,
           f"max ZOH err {worst:.2e}, gap order {order:.3f}")


@pytest.mark.slow
def test_c07_complexity_slopes():
    start = time.perf_counter()
    rows = run_bench(DEFAULT_LENGTHS)
    elapsed = time.perf_counter() - start
    Ls = [r[0] for r in rows]
    naive, fft = loglog_slope(Ls, [r[1] for r in rows]), loglog_slope(Ls, [r[2] for r in rows])
    report(7, "benchmark scaling", naive >= 1.8 and fft <= 1.4 and elapsed < 300,
           f"naive slope {naive:.2f}, FFT slope {fft:.2f}, {elapsed:.0f}s")


@pytest.mark.slow
def test_c08_end_to_end_learning():
    cfg = RunConfig()
    train_set, test_set = load_datasets(cfg)
    start = time.perf_counter()
    model, history = train(cfg, train_set)
    elapsed = time.perf_counter() - start
    train_acc = evaluate(model, train_set).w_acc
    test_f1 = evaluate(model, test_set).w_f1
    losses = [e.loss for e in history]
    early, late = np.median(losses[:50]), np.median(losses[149:])
    ok = train_acc >= 0.90 and test_f1 >= 0.85 and elapsed < 600 and late < early
    report(8, "default task learned", ok,
           f"train acc {train_acc:.3f}, held-out W-F1 {test_f1:.3f}, {elapsed:.0f}s, "
           f"median loss {early:.3g} -> {late:.3g}")


@pytest.mark.slow
def test_c09_fusion_ablation():
    res = run_ablation(noise_skewed(RunConfig()), range(5))
    prob, add = res.median("probability", "t,a,v"), res.median("add", "t,a,v")
    uni = res.best_unimodal
    report(9, "fusion ablation direction", prob >= add and prob >= uni + 0.05,
           f"median W-F1 probability {prob:.3f}, add {add:.3f}, best unimodal {uni:.3f}")


def test_c10_determinism_and_roundtrips(tmp_path):
    cfg_path = tmp_path / "run.txt"
    cfg_path.write_text("epochs = 3\ndialogues = 20\ntest_dialogues = 5\nd_m = 8\nstate_size = 4\n")
    for name in ("a", "b"):
        assert cli.main(["train", "--config", str(cfg_path), "--seed", "5", "--out", str(tmp_path / name)]) == 0
    csv_same = (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()

    rng = np.random.default_rng(110)
    arrays = [rng.normal(size=s).astype(np.float32) for s in ((), (7,), (3, 4), (2, 3, 5))]
    tensors_same = all(decode(encode(a)).tobytes() == a.tobytes() for a in arrays)

    model, cfg = load_checkpoint(tmp_path / "a" / "checkpoint")
    save_checkpoint(model, cfg, tmp_path / "again")
    again, _ = load_checkpoint(tmp_path / "again")
    ckpt_same = all(again.params[k].tobytes() == model.params[k].tobytes() for k in model.params) and \
        all(again.buffers[k].tobytes() == model.buffers[k].tobytes() for k in model.buffers)

    blob = bytearray(encode(arrays[2]))
    blob[-1] ^= 0x01
    try:
        decode(bytes(blob))
        rejected = False
    except TensorFileError:
        rejected = True
    report(10, "determinism and round-trips", csv_same and tensors_same and ckpt_same and rejected,
           f"csv identical {csv_same}, tensors {tensors_same}, checkpoint {ckpt_same}, bad crc rejected {rejected}")


def test_c11_metrics_oracle():
    rng = np.random.default_rng(111)
    mismatches = 0
    for _ in range(200):
        K, n = int(rng.integers(2, 8)), int(rng.integers(1, 300))
        labels, preds = rng.integers(0, K, n), rng.integers(0, K, n)
        cm, acc, wf1 = tally(labels, preds, K)
        rep = compute_metrics(labels, preds, K)
        if not (np.array_equal(rep.confusion, cm) and abs(rep.w_acc - acc) <= 1e-12 and abs(rep.w_f1 - wf1) <= 1e-12):
            mismatches += 1
    deg = compute_metrics([0, 1] * 50, [1] * 100, 2)
    deg_ok = deg.w_acc == 0.5 and abs(deg.w_f1 - 1 / 3) <= 1e-15
    report(11, "metrics oracle", mismatches == 0 and deg_ok,
           f"{mismatches}/200 random mismatches, degenerate W-Acc {deg.w_acc}, W-F1 {deg.w_f1:.6f}")
