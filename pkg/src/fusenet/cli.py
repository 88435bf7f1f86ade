"""``fusenet`` command line: segment, eval, ablate, gradcheck, synth."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig
from .metrics import MetricsReport, evaluate_dataset, pair_files, score
from .trainer import TrainHistory, TrainingAborted, train_on_image

ABLATION_VARIANTS = {
    "ce": {"lambda2": 0.0, "lambda3": 0.0},
    "ce+B": {"lambda2": 0.0},
    "ce+CLIP": {"lambda3": 0.0},
    "joint": {},
}

# flag dest -> RunConfig key for the overrides shared by segment and ablate
_OVERRIDES = {
    "seed": "seed",
    "iters": "iterations",
    "clusters": "clusters",
    "emit_every": "emit_every",
    "image_size": "image_size",
    "lr": "learning_rate",
    "optimizer": "optimizer",
    "lambda1": "lambda1",
    "lambda2": "lambda2",
    "lambda3": "lambda3",
    "temperature": "temperature",
    "beta": "beta",
    "foreground": "foreground",
}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 like every other failure."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------- pipeline


def run_config_from_args(args) -> RunConfig:
    run = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    flags = {key: getattr(args, dest, None) for dest, key in _OVERRIDES.items()}
    return run.update(flags)


def foreground_mask(Y: np.ndarray, rule: str) -> np.ndarray:
    """Binary mask of one cluster: ``largest``, ``smallest`` or a cluster id."""
    ids, counts = np.unique(Y, return_counts=True)
    if rule == "largest":
        return Y == ids[np.argmax(counts)]
    if rule == "smallest":
        return Y == ids[np.argmin(counts)]
    try:
        return Y == int(rule)
    except ValueError:
        raise CliError(f"foreground must be 'largest', 'smallest' or a cluster id, got {rule!r}") from None


def segment_file(input_path, out_dir, run: RunConfig) -> tuple[np.ndarray, TrainHistory]:
    """Train on one PNG and write seg.png, mask.png, history.jsonl (and iters/).

    The image is resized to the model size for training; the label map is
    resized back to the input size with nearest-neighbour sampling.
    """
    img = io.load_image(input_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = run.train_config(in_channels=img.shape[2])
    small = io.resize_image(img, cfg.model.image_size)
    artifacts = out_dir / "iters" if run.emit_every else None
    _, history, Y = train_on_image(small, cfg, out_dir=artifacts)
    Y = io.resize_labels(Y, img.shape[:2])
    io.save_indexed_png(Y, out_dir / "seg.png")
    io.save_binary_png(foreground_mask(Y, run.foreground), out_dir / "mask.png")
    history.write_jsonl(out_dir / "history.jsonl")
    return Y, history


def _read_stems(path) -> list[str] | None:
    if path is None:
        return None
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read list file {path}: {exc.strerror or exc}") from None
    return [s.strip() for s in lines if s.strip() and not s.strip().startswith("#")]


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise CliError(f"--seeds must be a comma-separated list of integers, got {text!r}") from None
    if not seeds:
        raise CliError("--seeds is empty")
    return seeds


def ablation_table(rows: dict[str, dict[str, float]]) -> str:
    lines = [f"{'variant':<8} {'DSC':>6} {'HM':>6} {'XOR':>6}"]
    for name, m in rows.items():
        lines.append(f"{name:<8} {m['dsc']:6.1f} {m['hm']:6.1f} {m['xor']:6.1f}")
    return "\n".join(lines)


def _ablation_job(job):
    variant, seed, name, img_path, gt_path, target, cfg = job
    Y, _ = segment_file(img_path, target, cfg)
    return score(Y, io.load_mask(gt_path), f"{name}@seed{seed}")


def run_ablation(input_dir, gt_dir, out_dir, run: RunConfig, seeds, stems=None, jobs=1, log=print) -> dict:
    """Four loss variants x seeds x images; returns the JSON-ready summary.

    Every (variant, seed, image) session is independent, so ``jobs > 1``
    spreads them over worker processes; the reports are written here only.
    """
    pairs = pair_files(input_dir, gt_dir, stems)
    out_dir = Path(out_dir)
    work = [
        (variant, seed, name, img_path, gt_path, out_dir / variant / f"seed{seed}" / name,
         run.update({**changes, "seed": seed}))
        for variant, changes in ABLATION_VARIANTS.items()
        for seed in seeds
        for name, img_path, gt_path in pairs
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(_ablation_job, work))
    else:
        scores = [_ablation_job(job) for job in work]

    summary: dict = {"variants": {}, "seeds": list(seeds), "images": [name for name, _, _ in pairs]}
    for variant in ABLATION_VARIANTS:
        report = MetricsReport()
        for job, s in zip(work, scores):
            if job[0] == variant:
                report.per_image.append(s)
                log(f"{variant:<8} {s.name}: DSC={s.dsc:.1f}")
        summary["variants"][variant] = {"mean": report.mean, "per_image": report.to_dict()["per_image"]}
    means = {v: d["mean"] for v, d in summary["variants"].items()}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out_dir / "ablation.txt").write_text(ablation_table(means) + "\n")
    return summary


# --------------------------------------------------------------- commands


def cmd_segment(args) -> int:
    run = run_config_from_args(args)
    if not Path(args.input).is_file():
        raise CliError(f"input image not found: {args.input}")
    Y, history = segment_file(args.input, args.out, run)
    n = int(np.unique(Y).size)
    note = " (stopped early)" if history.stopped_early else ""
    print(f"{args.out}: {n} clusters after {len(history)} iterations{note}")
    return 0


def cmd_eval(args) -> int:
    for d in (args.pred, args.gt):
        if not Path(d).is_dir():
            raise CliError(f"not a directory: {d}")
    report = evaluate_dataset(args.pred, args.gt, _read_stems(args.list))
    Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(report.summary())
    return 0


def cmd_ablate(args) -> int:
    run = run_config_from_args(args)
    summary = run_ablation(
        args.input_dir, args.gt_dir, args.out, run, _parse_seeds(args.seeds), _read_stems(args.list),
        jobs=args.jobs, log=logging.getLogger(__name__).info,
    )
    print(ablation_table({v: d["mean"] for v, d in summary["variants"].items()}))
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import PRIMITIVES, format_report, run_suite

    unknown = sorted(set(args.corrupt) - set(PRIMITIVES))
    if unknown:
        raise CliError(f"unknown op(s) for --corrupt: {', '.join(unknown)}")
    start = time.process_time()
    results = run_suite(args.size, args.seed, tuple(args.corrupt))
    print(format_report(results))
    failed = [r.name for r in results if not r.passed]
    print(f"cpu time {time.process_time() - start:.1f}s")
    if failed:
        print("FAILED: " + ", ".join(failed), file=sys.stderr)
        return 1
    print("all gradients within 1e-4")
    return 0


def cmd_synth(args) -> int:
    from .synthetic import four_region, two_region

    make = two_region if args.kind == "two" else four_region
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        seed = args.first_seed + i
        img, mask = make(seed, size=args.size, channels=args.channels)
        io.save_image(img, out / "images" / f"{args.kind}_{seed:03d}.png")
        io.save_binary_png(mask, out / "masks" / f"{args.kind}_{seed:03d}.png")
    print(f"wrote {args.count} {args.kind}-region fixtures to {out}")
    return 0


# --------------------------------------------------------------- parser


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' config file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int, help="training iterations")
    p.add_argument("--clusters", type=int, help="number of clusters K")
    p.add_argument("--image-size", type=int, help="square model input size")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda3", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--beta", type=int)
    p.add_argument("--foreground", help="mask.png cluster: largest, smallest or an id")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fusenet", description="Single-image unsupervised segmentation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("segment", help="train on one image and write its segmentation")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-every", type=int, help="write iters/iter_N_*.png every N iterations")
    _add_run_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="score label maps against binary masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--list", help="file of stems to restrict evaluation to")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="compare the four loss combinations")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0", help="comma-separated seeds (default 0)")
    p.add_argument("--list", help="file of stems to restrict the run to")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    _add_run_flags(p)
    p.set_defaults(func=cmd_ablate, emit_every=None)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward rule")
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="append", default=[], metavar="OP", help="fault injection: scale OP's backward")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write seeded synthetic fixtures")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=["two", "four"], default="two")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--channels", type=int, choices=[1, 3], default=3)
    p.add_argument("--first-seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CliError, ConfigError, TrainingAborted, OSError, ValueError) as exc:
        print(f"fusenet {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
