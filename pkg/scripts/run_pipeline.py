"""Generate, train, evaluate and analyze one configuration through the CLI.

    python scripts/run_pipeline.py scripts/configs/smoke.cfg runs/smoke
"""
import argparse
import sys
from pathlib import Path

from heatformer.cli import main
from heatformer.config import RunConfig


def run(config: Path, out: Path, frames: str) -> int:
    cfg = RunConfig.load(config)
    steps = [
        ["generate", "--config", str(config), "--out", str(out / "data")],
        ["train", "--config", str(config), "--dataset", str(out / "data"), "--out", str(out / "model")],
        ["evaluate", "--checkpoint", str(out / "model" / "model.htck"), "--dataset", str(out / "data"),
         "--mode", cfg.mask_type, "--out", str(out / "eval"), "--frames", frames],
        ["analyze", "--checkpoint", str(out / "model" / "model.htck"), "--out", str(out / "analysis")],
    ]
    for argv in steps:
        print("heatformer", " ".join(argv), flush=True)
        code = main(["-v", *argv])
        if code:
            return code
    print((out / "eval" / "metrics.csv").read_text().splitlines()[-1])
    return 0


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config", type=Path)
    p.add_argument("out", type=Path)
    p.add_argument("--frames", default="0,5,10")
    args = p.parse_args()
    sys.exit(run(args.config, args.out, args.frames))
