"""Train a small causal model and compare its rollout error to a copy baseline.

The copy baseline repeats the last visible frame; a rollout that tracks it is
standing still rather than marching the solution forward.
"""
import argparse

import numpy as np
import torch

from heatformer.fdsolver import generate_dataset
from heatformer.inference import evaluate_test_set
from heatformer.losses import LossWeights
from heatformer.model import ModelConfig, build_model
from heatformer.scenario import ScenarioConfig
from heatformer.training import BASE_SCHEDULE, train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--cases", type=int, default=88)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--n-visible", type=int, default=3)
    args = p.parse_args()
    torch.set_num_threads(1)

    n = args.cases
    ds = generate_dataset(ScenarioConfig(nx=8, ny=8), n, seeds=(10, 11, 12), seq_len=24)
    model = build_model(ModelConfig(8, 8, 24, 64, 4, 3, 128, args.n_visible, "causal"), 0)
    train(model, ds.train, ds.validation, LossWeights(lambda_pi=1e-6), BASE_SCHEDULE.rescaled(args.epochs), 4,
          args.epochs, 0)
    report = evaluate_test_set(model, ds.test)
    gt = np.stack([t.frames for t in ds.test])
    copy = ((gt - gt[:, args.n_visible - 1 : args.n_visible]) ** 2).mean(axis=(0, 2, 3))
    print("frame  rollout_mse  copy_mse")
    for t, (a, b) in enumerate(zip(report.frame_mse.mean(axis=0), copy)):
        if t >= args.n_visible:
            print(f"{t:5d}  {a:.3e}    {b:.3e}")


if __name__ == "__main__":
    main()
