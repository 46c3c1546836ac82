"""Overfit a handful of base cases and print the loss history.

Reproduces the memorization setting of the acceptance suite with every knob
exposed, e.g. ``python scripts/overfit.py --mlp-dim 4096 --activation relu``.
"""
import argparse
import time

import torch

from heatformer.fdsolver import generate_dataset
from heatformer.losses import LossWeights
from heatformer.model import ModelConfig, build_model
from heatformer.scenario import ScenarioConfig
from heatformer.training import BASE_SCHEDULE, train


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--cases", type=int, default=8)
    p.add_argument("--grid", type=int, default=8)
    p.add_argument("--seq-len", type=int, default=24)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--mlp-dim", type=int, default=4096)
    p.add_argument("--activation", default="relu", choices=["relu", "gelu"])
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--lambda-pi", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--every", type=int, default=25, help="print every N epochs")
    return p.parse_args()


def main():
    args = parse_args()
    torch.set_num_threads(1)
    ds = generate_dataset(ScenarioConfig(nx=args.grid, ny=args.grid), args.cases,
                          fractions=(1.0, 0.0, 0.0), seq_len=args.seq_len)
    cfg = ModelConfig(args.grid, args.grid, args.seq_len, args.embed_dim, 4, args.layers, args.mlp_dim, 3,
                      "block", args.activation)
    model = build_model(cfg, args.seed)

    def show(rec):
        if rec.epoch % args.every == 0 or rec.epoch <= 2:
            print(f"epoch {rec.epoch:4d} lr {rec.lr:.0e} mse {rec.train.mse:.3e} total {rec.train.total:.3e}",
                  flush=True)

    start = time.perf_counter()
    hist = train(model, ds.train, None, LossWeights(lambda_pi=args.lambda_pi), BASE_SCHEDULE.rescaled(args.epochs),
                 args.batch_size, args.epochs, args.seed, callback=show)
    last = hist.records[-1].train
    print(f"final mse {last.mse:.3e}, total drop {hist.records[1].train.total / last.total:.1e}x "
          f"in {time.perf_counter() - start:.0f}s")


if __name__ == "__main__":
    main()
