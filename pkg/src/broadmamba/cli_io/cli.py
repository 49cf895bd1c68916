"""``broadmamba`` command line.

Exit codes: 0 success, 1 check failed, 2 configuration/input error,
3 numeric abort during training.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from .. import ssm_core
from ..training import NumericAbort, evaluate, generate, grad_check, load_datasets, train
from ..training.model import BroadMambaModel
from ..training.trainer import EpochLog, input_widths
from .bench import DEFAULT_LENGTHS, BenchCorrectnessError, loglog_slope, run_bench
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, format_config, load_config
from .dataset_io import DatasetError, read_dataset, write_dataset
from .tensorfile import TensorFileError, atomic_write, write_tensor

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def csv_bytes(rows) -> bytes:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue().encode()


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def history_csv(history: list[EpochLog]) -> bytes:
    return csv_bytes([EpochLog.HEADER] + [tuple(_fmt(v) for v in e.row()) for e in history])


def _resolve_config(args) -> RunConfig:
    overrides = {"seed": getattr(args, "seed", None)}
    if getattr(args, "modalities", None):
        overrides["modalities"] = args.modalities
    if args.config:
        return load_config(args.config, **overrides)
    return RunConfig(**{k: v for k, v in overrides.items() if v is not None})


def _echo_config(cfg: RunConfig, out: Path):
    atomic_write(out / "config.txt", format_config(cfg).encode())


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = Path(args.out)
    repeats = max(1, args.repeats)
    train_set, test_set = load_datasets(cfg)
    summary = [("seed", "train_W-Acc", "train_W-F1", "test_W-Acc", "test_W-F1")]
    for r in range(repeats):
        run_cfg = cfg.replace(seed=cfg.seed + r)
        run_out = out if repeats == 1 else out / f"run{r}"
        run_out.mkdir(parents=True, exist_ok=True)
        _echo_config(run_cfg, run_out)
        model, history = train(run_cfg, train_set)
        save_checkpoint(model, run_cfg, run_out / "checkpoint")
        atomic_write(run_out / "metrics.csv", history_csv(history))
        tr = evaluate(model, train_set)
        row = [run_cfg.seed, tr.w_acc, tr.w_f1, "", ""]
        if test_set:
            te = evaluate(model, test_set)
            row[3:] = [te.w_acc, te.w_f1]
        summary.append(tuple(_fmt(v) for v in row))
        print(f"seed {run_cfg.seed}: train W-Acc {tr.w_acc:.4f}"
              + (f", test W-F1 {row[4]:.4f}" if test_set else ""))
    if repeats > 1:
        _echo_config(cfg, out)
        atomic_write(out / "summary.csv", csv_bytes(summary))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config) if args.config else None
    model, cfg = load_checkpoint(args.checkpoint, cfg)
    if args.data:
        dataset = read_dataset(args.data, cfg.classes)
    else:
        train_set, test_set = load_datasets(cfg)
        dataset = test_set if args.split == "test" else train_set
    widths = input_widths(dataset)
    for mod in model.modalities:
        expected = model.params[f"{mod}.conv.weight"].shape[1]
        if widths.get(mod) != expected:
            raise CheckpointError(f"{mod} width {widths.get(mod)} does not match checkpoint ({expected})")
    report = evaluate(model, dataset)
    print(report.table())
    print(f"seconds: {report.seconds:.3f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write(out / "eval.csv", csv_bytes(report.csv_rows()))
        _echo_config(cfg, out)
    return EXIT_OK


def cmd_bench(args) -> int:
    lengths = [int(s) for s in args.lengths.split(",")] if args.lengths else list(DEFAULT_LENGTHS)
    try:
        rows = run_bench(lengths, args.repeats, args.warmup, seed=args.seed or 0, log=print)
    except BenchCorrectnessError as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return EXIT_FAIL
    body = [("L", "naive_ns", "fft_ns", "scan_ns")] + [tuple(str(v) for v in r) for r in rows]
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        atomic_write(out, csv_bytes(body))
    if len(rows) >= 2:
        Ls = [r[0] for r in rows]
        print(f"slope naive={loglog_slope(Ls, [r[1] for r in rows]):.3f} "
              f"fft={loglog_slope(Ls, [r[2] for r in rows]):.3f} "
              f"scan={loglog_slope(Ls, [r[3] for r in rows]):.3f}")
    return EXIT_OK


def small_config(**overrides) -> RunConfig:
    """Tiny double-precision configuration used for gradient checking."""
    base = dict(d_m=4, state_size=4, layers=1, n_feature_nodes=2, m_enhance_nodes=2, d_z=4, d_h=4,
                gate_hidden=8, cls_hidden=8, classes=3, d_text=6, d_audio=5, d_video=4,
                utterances=6, dialogues=2, test_dialogues=0, sigma=0.5, probe_size=12)
    base.update(overrides)
    return RunConfig(**base)


def gradcheck_setup(cfg: RunConfig):
    """Model with ridge maps solved on its own data and the batch to check on."""
    data = generate(cfg.synthetic_spec())
    model = BroadMambaModel.from_config(cfg, input_widths(data), cfg.classes)
    model.refresh_ridge(data, cfg.probe_size)
    return model, data[0]


def cmd_gradcheck(args) -> int:
    cfg = _resolve_config(args) if args.config else small_config(seed=args.seed or 0)
    model, batch = gradcheck_setup(cfg)
    err, worst, _ = grad_check(model, batch, args.eps)
    status = "PASS" if err <= args.tol else "FAIL"
    print(f"{status} max relative error {err:.3e} ({worst}) over {model.param_count} parameters")
    return EXIT_OK if status == "PASS" else EXIT_FAIL


def cmd_gendata(args) -> int:
    cfg = _resolve_config(args)
    spec = cfg.synthetic_spec()
    out = Path(args.out)
    for split in ("train", "test"):
        data = generate(spec, split)
        if data:
            write_dataset(data, out / split)
    _echo_config(cfg, out)
    print(f"wrote {spec.dialogues} train / {spec.test_dialogues} test dialogues to {out}")
    return EXIT_OK


def _floats(text):
    return np.array([float(s) for s in text.split(",")])


def cmd_kernel_dump(args) -> int:
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
        prefix = f"{args.block}.{args.direction}."
        if prefix + "a_log" not in model.params:
            raise CheckpointError(f"no SSM named {prefix[:-1]} in checkpoint")
        p = model.params
        sys_ = ssm_core.ContinuousSSM(-np.exp(p[prefix + "a_log"]), p[prefix + "B"], p[prefix + "C"],
                                      np.zeros(p[prefix + "log_delta"].shape), p[prefix + "log_delta"])
        disc = ssm_core.discretize(sys_, model.discretization)
    else:
        abar, bbar, c = _floats(args.abar), _floats(args.bbar), _floats(args.c)
        if not (abar.shape == bbar.shape == c.shape):
            raise ConfigError("--abar, --bbar and --c need the same number of states")
        disc = ssm_core.DiscreteSSM(abar[None], bbar[None], c[None], np.zeros(1))
    taps = ssm_core.materialize_kernel(disc, args.length).taps
    write_tensor(args.out, taps)
    head = ", ".join(f"{v:.6g}" for v in taps[: min(4, len(taps)), 0])
    print(f"kernel {taps.shape[0]}x{taps.shape[1]} written to {args.out}; channel 0: {head}, ...")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="broadmamba")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=out_required)
        p.add_argument("--modalities", help="subset such as t,a,v or t,a")

    p = sub.add_parser("train")
    common(p)
    p.add_argument("--repeats", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--data", help="dataset directory; default regenerates the synthetic split")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench")
    p.add_argument("--lengths", help="comma-separated sequence lengths")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck")
    common(p, out_required=False)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gendata")
    common(p)
    p.set_defaults(func=cmd_gendata)

    p = sub.add_parser("kernel-dump")
    p.add_argument("--checkpoint")
    p.add_argument("--block", default="text.bissm0")
    p.add_argument("--direction", choices=("fwd", "bwd"), default="fwd")
    p.add_argument("--abar", default="0.5")
    p.add_argument("--bbar", default="1")
    p.add_argument("--c", default="1")
    p.add_argument("--length", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kernel_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, DatasetError, TensorFileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
