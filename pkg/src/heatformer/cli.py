"""Command-line entry point: ``heatformer {generate,train,evaluate,analyze}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data or format error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .errors import ConfigurationError, FormatError, HeatformerError
from .fdsolver import generate_dataset
from .formats import read_dataset, write_dataset
from .inference import evaluate_test_set, projection_weight_heatmap
from .losses import LossWeights
from .model import build_model
from .training import TensorData, load_checkpoint, save_checkpoint, train

log = logging.getLogger("heatformer")

SPLIT_FILES = {"train": "train.htfd", "validation": "validation.htfd", "test": "test.htfd"}
CHECKPOINT_FILE = "model.htck"
HISTORY_FILE = "history.csv"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def fmt(x: float) -> str:
    return f"{x:.9g}"


def write_pgm(path: Path, image: np.ndarray, comments: list[str]) -> None:
    """Plain (P2) graymap with 8-bit levels; ``image`` must already be scaled to 0..255."""
    h, w = image.shape
    lines = ["P2"] + [f"# {c}" for c in comments] + [f"{w} {h}", "255"]
    # Row 0 of a frame is the bottom edge (eta=0); images are written top row first.
    for row in image[::-1]:
        lines.append(" ".join(str(int(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def minmax_levels(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros(values.shape, dtype=np.int64)
    return np.rint((values - lo) / (hi - lo) * 255).astype(np.int64)


def _resolve_split(dataset: Path, split: str) -> Path:
    return dataset / SPLIT_FILES[split] if dataset.is_dir() else dataset


# -- commands --------------------------------------------------------------------


def cmd_generate(cfg: RunConfig, out: Path) -> int:
    split = generate_dataset(
        cfg.scenario_config(),
        cfg.n_cases,
        seeds=cfg.seeds,
        fractions=cfg.fractions,
        seq_len=cfg.seq_len,
        record_stride=cfg.record_stride,
        workers=cfg.workers,
    )
    out.mkdir(parents=True, exist_ok=True)
    for name, trajs in split.splits().items():
        if not trajs:
            print(f"{name}: 0 cases (no file written)")
            continue
        write_dataset(out / SPLIT_FILES[name], trajs, cfg.mode)
        steady = np.array([t.steadiness for t in trajs])
        print(
            f"{name}: {len(trajs)} cases; steadiness max|dtheta| min {fmt(steady.min())} "
            f"median {fmt(float(np.median(steady)))} max {fmt(steady.max())}"
        )
    cfg.save(out / "run.cfg")
    return 0


def cmd_train(cfg: RunConfig, dataset: Path, out: Path) -> int:
    train_set, train_mode = read_dataset(_resolve_split(dataset, "train"))
    val_path = dataset / SPLIT_FILES["validation"] if dataset.is_dir() else None
    val_set = read_dataset(val_path)[0] if val_path is not None and val_path.exists() else None
    first = train_set[0]
    got = (first.case.geometry.ny, first.case.geometry.nx, first.seq_len)
    if got != (cfg.ny, cfg.nx, cfg.seq_len):
        raise FormatError(
            f"dataset grid/seq_len {got} does not match config (ny={cfg.ny}, nx={cfg.nx}, seq_len={cfg.seq_len})"
        )
    if train_mode != cfg.mode:
        raise FormatError(f"dataset mode {train_mode!r} does not match config mode {cfg.mode!r}")
    model = build_model(cfg.model_config(), cfg.seed, cfg.torch_dtype)
    n_vis = cfg.start_predicting_from
    history = train(
        model,
        TensorData.from_trajectories(train_set, n_vis, cfg.torch_dtype),
        TensorData.from_trajectories(val_set, n_vis, cfg.torch_dtype) if val_set else None,
        weights=cfg.loss_weights(),
        schedule=cfg.lr_schedule(),
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        seed=cfg.seed,
    )
    out.mkdir(parents=True, exist_ok=True)
    w = cfg.loss_weights()
    save_checkpoint(
        out / CHECKPOINT_FILE,
        model,
        cfg.scenario_config(),
        extra={
            "loss.lambda_pi": w.lambda_pi,
            "loss.lambda_bc": w.lambda_bc,
            "loss.lambda_ic": w.lambda_ic,
            "loss.eps": w.eps,
            "data.record_stride": first.record_stride,
        },
    )
    history.write_csv(out / HISTORY_FILE)
    last = history.records[-1]
    msg = f"final train total {fmt(last.train.total)} (mse {fmt(last.train.mse)})"
    if last.validation is not None:
        msg += f"; validation total {fmt(last.validation.total)} (mse {fmt(last.validation.mse)})"
    print(msg)
    return 0


def _weights_from_checkpoint(config: dict[str, str]) -> LossWeights:
    try:
        return LossWeights(
            float(config.get("loss.lambda_pi", 1.0)),
            float(config.get("loss.lambda_bc", 1.0)),
            float(config.get("loss.lambda_ic", 1.0)),
            float(config.get("loss.eps", 1e-8)),
        )
    except ValueError as exc:
        raise FormatError(f"checkpoint loss weights are invalid: {exc}") from exc


def cmd_evaluate(checkpoint: Path, dataset: Path, mode: str, out: Path, frames: list[int] | None) -> int:
    model, ck_config = load_checkpoint(checkpoint)
    if model.config.mask_type != mode:
        raise ConfigurationError(
            f"--mode {mode} does not match the checkpoint's {model.config.mask_type} mask"
        )
    test_set, _ = read_dataset(_resolve_split(dataset, "test"))
    first = test_set[0]
    c = model.config
    got = (first.case.geometry.ny, first.case.geometry.nx, first.seq_len)
    if got != (c.ny, c.nx, c.seq_len):
        raise FormatError(f"dataset grid/seq_len {got} does not match checkpoint ({c.ny}, {c.nx}, {c.seq_len})")
    report = evaluate_test_set(model, test_set, _weights_from_checkpoint(ck_config), mode)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "loss"])
        for k, loss in enumerate(report.case_losses):
            w.writerow([k, fmt(loss)])
        w.writerow(["mean", fmt(report.mean_loss)])
    with open(out / "frame_mse.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "mse"])
        # Frames supplied as input rather than predicted are left blank.
        for t, v in enumerate(report.frame_mse.mean(axis=0)):
            w.writerow([t, "" if np.isnan(v) else fmt(v)])
    if frames:
        bad = [f for f in frames if not 0 <= f < c.seq_len]
        if bad:
            raise ConfigurationError(f"--frames indices {bad} outside [0, {c.seq_len})")
        _export_frames(out, test_set, report.predictions.detach().cpu().numpy(), frames)
    print(f"{mode} test loss: mean {fmt(report.mean_loss)} over {len(test_set)} cases")
    return 0


def _export_frames(out: Path, test_set, preds: np.ndarray, frames: list[int]):
    fdir = out / "frames"
    fdir.mkdir(exist_ok=True)
    with open(out / "frames.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "frame", "source", "j", "i", "theta"])
        for k, traj in enumerate(test_set):
            for t in frames:
                gt, pr = traj.frames[t], preds[k, t]
                for source, arr in (("truth", gt), ("prediction", pr)):
                    for (j, i), v in np.ndenumerate(arr):
                        w.writerow([k, t, source, j, i, fmt(v)])
                pair = np.concatenate([gt, np.full((gt.shape[0], 1), 1.0), pr], axis=1)
                levels = np.rint(np.clip(pair, 0.0, 1.0) * 255).astype(np.int64)
                write_pgm(
                    fdir / f"case{k:04d}_t{t:04d}.pgm",
                    levels,
                    [f"case {k} frame {t}: ground truth | prediction",
                     "levels = round(255 * clip(theta, 0, 1)); white separator column"],
                )


def cmd_analyze(checkpoint: Path, out: Path) -> int:
    model, _ = load_checkpoint(checkpoint)
    heat = projection_weight_heatmap(model)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "heatmap.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        for row in heat:
            w.writerow([fmt(v) for v in row])
    lo, hi = float(heat.min()), float(heat.max())
    write_pgm(
        out / "heatmap.pgm",
        minmax_levels(heat),
        [
            "mean |output-projection weight| per grid node",
            f"levels = round(255 * (v - min) / (max - min)), min={fmt(lo)} max={fmt(hi)}; all 0 if max == min",
            "top row of the image is eta = 1 (row ny-1 of heatmap.csv)",
        ],
    )
    print(f"heatmap: min {fmt(lo)} max {fmt(hi)} mean {fmt(float(heat.mean()))}")
    return 0


# -- argument handling -----------------------------------------------------------


def _frames_arg(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated frame indices, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="heatformer", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate a train/validation/test dataset")
    g.add_argument("--config", required=True, type=Path)
    g.add_argument("--out", required=True, type=Path, help="output directory")
    g.add_argument("--seed", type=int, help="override split seeds with N, N+1, N+2")

    t = sub.add_parser("train", help="train a model on a generated dataset")
    t.add_argument("--config", required=True, type=Path)
    t.add_argument("--dataset", required=True, type=Path, help="dataset directory or train file")
    t.add_argument("--out", required=True, type=Path, help="output directory")
    t.add_argument("--seed", type=int, help="override the training seed")

    e = sub.add_parser("evaluate", help="score a checkpoint on the test split")
    e.add_argument("--checkpoint", required=True, type=Path)
    e.add_argument("--dataset", required=True, type=Path, help="dataset directory or test file")
    e.add_argument("--mode", required=True, choices=["block", "causal"])
    e.add_argument("--out", required=True, type=Path, help="output directory")
    e.add_argument("--frames", type=_frames_arg, help="frame indices to export, e.g. 5,50,100")

    a = sub.add_parser("analyze", help="export the output-projection weight heatmap")
    a.add_argument("--checkpoint", required=True, type=Path)
    a.add_argument("--out", required=True, type=Path, help="output directory")
    return p


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if args.command == "generate":
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seeds=(args.seed, args.seed + 1, args.seed + 2))
        return cmd_generate(cfg, args.out)
    if args.command == "train":
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        return cmd_train(cfg, args.dataset, args.out)
    if args.command == "evaluate":
        return cmd_evaluate(args.checkpoint, args.dataset, args.mode, args.out, args.frames)
    return cmd_analyze(args.checkpoint, args.out)


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except HeatformerError as exc:
        print(f"heatformer: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"heatformer: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
