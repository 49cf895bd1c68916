import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from broadmamba.cli_io import cli
from broadmamba.cli_io.bench import loglog_slope, run_bench
from broadmamba.cli_io.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from broadmamba.cli_io.config import ConfigError, RunConfig, format_config, parse_config
from broadmamba.cli_io.dataset_io import read_dataset, write_dataset
from broadmamba.cli_io.tensorfile import TensorFileError, decode, encode, read_tensor, write_tensor
from broadmamba.training import evaluate, generate, train
from broadmamba.training.synthetic import SyntheticSpec

TINY = """
d_m = 4
state_size = 4
n_feature_nodes = 2
m_enhance_nodes = 2
d_z = 4
d_h = 4
gate_hidden = 8
cls_hidden = 8
classes = 3
d_text = 6
d_audio = 5
d_video = 4
utterances = 6
dialogues = 3
test_dialogues = 2
epochs = 2
lr = 0.01
probe_size = 12
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.txt"
    path.write_text(TINY)
    return path


def test_tensor_header_layout():
    blob = encode(np.array([[1.0, 2.0, 3.0]], dtype=np.float32))
    assert blob[:4] == b"BMTF"
    assert blob[4:7] == bytes([1, 1, 2])
    assert struct.unpack_from("<2I", blob, 7) == (1, 3)
    payload = np.array([1, 2, 3], "<f4").tobytes()
    assert blob[15:27] == payload
    assert struct.unpack_from("<I", blob, 27)[0] == zlib.crc32(payload)
    assert len(blob) == 31


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=0, max_dims=4, max_side=5),
                  elements=st.floats(width=32, allow_nan=False)))
def test_tensor_roundtrip_bitwise(arr):
    assert decode(encode(arr)).tobytes() == arr.tobytes()


def test_tensor_f64_roundtrip(rng, tmp_path):
    arr = rng.normal(size=(3, 4, 2))
    write_tensor(tmp_path / "x.bmtf", arr, dtype="<f8")
    assert np.array_equal(read_tensor(tmp_path / "x.bmtf"), arr)


@pytest.mark.parametrize("where", [0, 4, 5, 16, -1])
def test_tensor_corruption_rejected(where):
    blob = bytearray(encode(np.arange(6, dtype=np.float32).reshape(2, 3)))
    blob[where] ^= 0x40
    with pytest.raises(TensorFileError):
        decode(bytes(blob))


def test_tensor_truncation_rejected():
    blob = encode(np.ones(5, np.float32))
    with pytest.raises(TensorFileError):
        decode(blob[:-5])


def test_config_roundtrip():
    cfg = parse_config("seed = 7\nlambda = 0.5\nsigma_audio = 2\nfusion = add  # note\n")
    assert (cfg.seed, cfg.lam, cfg.sigma_audio, cfg.fusion) == (7, 0.5, 2.0, "add")
    assert parse_config(format_config(cfg)) == cfg


def test_config_errors():
    with pytest.raises(ConfigError):
        parse_config("learning_rate = 1")
    with pytest.raises(ConfigError):
        parse_config("fusion = max")
    with pytest.raises(ConfigError):
        parse_config("epochs = many")
    with pytest.raises(ConfigError):
        parse_config("modalities = t,x")
    with pytest.raises(ConfigError):
        RunConfig(lam=0.0)
    with pytest.raises(ConfigError):
        RunConfig(beta2=1.0)


def test_modality_order_canonical():
    assert RunConfig(modalities="v,t").modality_list() == ["text", "video"]


def test_dataset_roundtrip(tmp_path):
    data = generate(SyntheticSpec(dialogues=3, utterances=4))
    write_dataset(data, tmp_path)
    back = read_dataset(tmp_path, 4)
    assert len(back) == 3
    for a, b in zip(data, back):
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.features["audio"].astype(np.float32), b.features["audio"])


def test_checkpoint_roundtrip(tiny_config, tmp_path):
    cfg = parse_config(tiny_config.read_text())
    model, _ = train(cfg)
    save_checkpoint(model, cfg, tmp_path / "ck")
    again, cfg2 = load_checkpoint(tmp_path / "ck")
    assert cfg2 == cfg
    for k in model.params:
        assert again.params[k].tobytes() == model.params[k].tobytes()
    for k in model.buffers:
        assert again.buffers[k].tobytes() == model.buffers[k].tobytes()
    data = generate(cfg.synthetic_spec())
    assert all(np.array_equal(model.step(b, grad=False).probs, again.step(b, grad=False).probs) for b in data)


def test_checkpoint_mismatch(tiny_config, tmp_path):
    cfg = parse_config(tiny_config.read_text(), epochs=0)
    model, _ = train(cfg)
    save_checkpoint(model, cfg, tmp_path / "ck")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "ck", cfg.replace(d_m=6))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing")


def test_cli_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("warp_factor = 9\n")
    assert cli.main(["train", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "warp_factor" in capsys.readouterr().err
    assert cli.main(["train", "--config", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "o")]) == 2


def test_cli_train_twice_identical_bytes(tiny_config, tmp_path):
    for name in ("a", "b"):
        assert cli.main(["train", "--config", str(tiny_config), "--seed", "3", "--out", str(tmp_path / name)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    assert (a / "metrics.csv").read_text().splitlines()[0] == "epoch,L_norm,L_emo,L,W-Acc,W-F1"
    assert "seed = 3" in (a / "config.txt").read_text()
    for f in (a / "checkpoint").iterdir():
        assert f.read_bytes() == (b / "checkpoint" / f.name).read_bytes()


def test_cli_repeats(tiny_config, tmp_path):
    assert cli.main(["train", "--config", str(tiny_config), "--repeats", "2", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[1].startswith("0,") and rows[2].startswith("1,")
    assert (tmp_path / "run1" / "checkpoint" / "manifest.csv").exists()


def test_cli_eval_matches_in_process(tiny_config, tmp_path):
    assert cli.main(["train", "--config", str(tiny_config), "--out", str(tmp_path / "t")]) == 0
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "t" / "checkpoint"), "--out", str(tmp_path / "e")]) == 0
    model, cfg = load_checkpoint(tmp_path / "t" / "checkpoint")
    report = evaluate(model, generate(cfg.synthetic_spec(), "test"))
    lines = (tmp_path / "e" / "eval.csv").read_text().splitlines()
    assert lines[0] == "class,support,accuracy,f1"
    assert f"W-F1,{int(report.support.sum())},,{report.w_f1!r}" in lines


def test_cli_eval_on_dataset_dir(tiny_config, tmp_path):
    assert cli.main(["gendata", "--config", str(tiny_config), "--out", str(tmp_path / "d")]) == 0
    assert cli.main(["train", "--config", str(tiny_config), "--out", str(tmp_path / "t")]) == 0
    ck = str(tmp_path / "t" / "checkpoint")
    assert cli.main(["eval", "--checkpoint", ck, "--data", str(tmp_path / "d" / "test")]) == 0
    bad = generate(SyntheticSpec(dialogues=1, widths={"text": 7, "audio": 5, "video": 4}, classes=3))
    write_dataset(bad, tmp_path / "bad")
    assert cli.main(["eval", "--checkpoint", ck, "--data", str(tmp_path / "bad")]) == 2


def test_cli_gendata_deterministic(tiny_config, tmp_path):
    for name in ("a", "b"):
        assert cli.main(["gendata", "--config", str(tiny_config), "--out", str(tmp_path / name)]) == 0
    for split in ("train", "test"):
        for f in (tmp_path / "a" / split).iterdir():
            assert f.read_bytes() == (tmp_path / "b" / split / f.name).read_bytes()


def test_cli_kernel_dump_geometric(tmp_path):
    out = tmp_path / "k.bmtf"
    assert cli.main(["kernel-dump", "--abar", "0.5", "--bbar", "1", "--c", "1", "--length", "6", "--out", str(out)]) == 0
    assert np.array_equal(read_tensor(out)[:, 0], np.float32([1, 0.5, 0.25, 0.125, 0.0625, 0.03125]))
    assert cli.main(["kernel-dump", "--abar", "0.5,0.1", "--bbar", "1", "--out", str(out)]) == 2


def test_cli_kernel_dump_from_checkpoint(tiny_config, tmp_path):
    cli.main(["train", "--config", str(tiny_config), "--out", str(tmp_path / "t")])
    out = tmp_path / "k.bmtf"
    ck = str(tmp_path / "t" / "checkpoint")
    assert cli.main(["kernel-dump", "--checkpoint", ck, "--block", "audio.bissm0", "--direction", "bwd",
                     "--length", "8", "--out", str(out)]) == 0
    assert read_tensor(out).shape == (8, 4)
    assert cli.main(["kernel-dump", "--checkpoint", ck, "--block", "smell.bissm0", "--out", str(out)]) == 2


def test_cli_gradcheck_passes(capsys):
    assert cli.main(["gradcheck"]) == 0
    assert capsys.readouterr().out.startswith("PASS")


def test_bench_small(tmp_path):
    rows = run_bench([64, 128], repeats=1, warmup=0, channels=2, state_size=2)
    assert [r[0] for r in rows] == [64, 128]
    assert all(v > 0 for r in rows for v in r[1:])
    assert cli.main(["bench", "--lengths", "32,64", "--repeats", "1", "--warmup", "0",
                     "--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "b.csv").read_text().startswith("L,naive_ns,fft_ns,scan_ns\n")


def test_loglog_slope():
    Ls = [10, 100, 1000]
    assert loglog_slope(Ls, [L**2 for L in Ls]) == pytest.approx(2.0)
