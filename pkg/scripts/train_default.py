"""Train on the default synthetic task and print per-epoch losses plus held-out scores.

    python3 scripts/train_default.py --epochs 200 --out runs/default
"""

import argparse
from pathlib import Path

from broadmamba.cli_io.checkpoint import save_checkpoint
from broadmamba.cli_io.cli import history_csv
from broadmamba.cli_io.config import RunConfig, load_config
from broadmamba.training import evaluate, load_datasets, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = cfg.replace(**{k: v for k, v in (("epochs", args.epochs), ("seed", args.seed)) if v is not None})
    train_set, test_set = load_datasets(cfg)

    def show(model, e):
        print(f"epoch {e.epoch:4d}  L_norm {e.norm_loss:10.4f}  L_emo {e.emo_loss:.4f}  train W-Acc {e.w_acc:.3f}",
              flush=True)

    model, history = train(cfg, train_set, show)
    print(evaluate(model, test_set).table())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_bytes(history_csv(history))
        save_checkpoint(model, cfg, out / "checkpoint")


if __name__ == "__main__":
    main()
