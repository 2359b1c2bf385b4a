"""Command-line entry point: ``trackgan <command> [options]``.

Commands: synth, train, infer, eval, overlay, complexity. Every command accepts
--config, --seed, --deterministic and --out. Flags override the config file.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import imaging, plots
from .complexity import complexity_report, published_block, published_table
from .config import ConfigError, RunConfig
from .dataset import CorpusError, load_corpus, save_corpus, split
from .metrics import MetricsReport, corpus_eval
from .networks import NetworkSpec, SpecError, default_spec, validate
from .postprocess import binarize, postprocess
from .proposer import initial_guess
from .synth import synth_corpus
from .training import (
    CheckpointError,
    NonFiniteLossError,
    equilibrium_report,
    fit,
    image_tensor,
    load_checkpoint,
    new_state,
    predict,
    prepare,
    save_checkpoint,
    write_history,
)

log = logging.getLogger("trackgan")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CommandError(RuntimeError):
    """Failure reported to the user as a one-line message and exit code 1."""


# -- helpers ---------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _load_spec(path: str | None) -> NetworkSpec:
    if not path:
        return default_spec()
    p = Path(path)
    if not p.is_file():
        raise CommandError(f"network spec not found: {p}")
    return NetworkSpec.load(p)


def _write_report(report: MetricsReport, out: Path, stem: str, label: str = "") -> None:
    (out / f"{stem}.csv").write_text(report.csv_header() + "\n" + report.csv_row() + "\n")
    (out / f"{stem}.txt").write_text(report.table())
    plots.metrics_figure(report, out / f"{stem}.png", label)


def _mask_files(folder: Path) -> dict[str, Path]:
    if not folder.is_dir():
        raise CommandError(f"missing directory: {folder}")
    return {p.stem: p for p in sorted(folder.iterdir()) if p.is_file() and p.suffix.lower() in imaging.IMAGE_SUFFIXES}


# -- commands --------------------------------------------------------------

def cmd_synth(args, cfg: RunConfig) -> int:
    out = _out_dir(args)
    samples = synth_corpus(args.count, seed=cfg.seed, cfg=cfg.synth)
    try:
        save_corpus(samples, out)
    except OSError as exc:
        raise CommandError(f"cannot write corpus to {out}: {exc}") from exc
    lines = [
        f"count = {args.count}",
        f"seed = {cfg.seed}",
        f"config_hash = {cfg.digest()}",
        f"synth_hash = {cfg.synth.digest()}",
        "",
        "[files]",
    ]
    for sub in ("images", "masks"):
        for p in sorted((out / sub).iterdir()):
            lines.append(f"{sub}/{p.name} = {_sha256(p)}")
    lines.append(f"tags.csv = {_sha256(out / 'tags.csv')}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    print(f"wrote {len(samples)} samples to {out}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    data_dir = args.data or cfg.paths.get("data")
    if not data_dir:
        raise CommandError("no training data: pass --data or set [paths] data")
    spec = _load_spec(args.spec or cfg.paths.get("spec"))
    train_cfg = cfg.train
    if args.epochs is not None:
        if args.epochs < 1:
            raise CommandError("--epochs must be >= 1")
        train_cfg = replace(train_cfg, epochs=args.epochs)
        cfg = replace(cfg, train=train_cfg)

    samples = load_corpus(data_dir)
    h, w = samples[0].mask.shape
    validate(spec, h, w)
    parts = split(samples, train_cfg.split_ratio, cfg.seed)
    if not parts.train:
        raise CommandError(f"split ratio {train_cfg.split_ratio} leaves no training samples")

    out = _out_dir(args)
    (out / "config.ini").write_text(cfg.dumps())
    (out / "spec.txt").write_text(spec.dumps())
    (out / "split.csv").write_text(
        "name,part\n" + "".join(f"{s.name},train\n" for s in parts.train) + "".join(f"{s.name},test\n" for s in parts.test)
    )
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    config_hash = cfg.digest()

    def on_epoch(state):
        rec = state.history[-1]
        save_checkpoint(ckpt_dir / f"epoch_{state.epoch:03d}.pt", state, config_hash)
        write_history(out / "history.csv", state.history)
        log.info(
            "epoch %d  adv_g %.4f  adv_d %.4f  domain %.4f  critic acc %.4f",
            rec.epoch, rec.l_adv_g, rec.l_adv_d, rec.l_domain, rec.d_accuracy,
        )

    state = new_state(spec, train_cfg)
    data = prepare(parts.train, cfg.proposer)
    try:
        fit(state, data, train_cfg, on_epoch)
    except NonFiniteLossError as exc:
        log.error("training aborted: %s", exc)
        log.error("snapshot: %s", exc.snapshot)
        return EXIT_FAIL

    if state.history:
        report = equilibrium_report(state.history, train_cfg.equilibrium_band)
        (out / "equilibrium.txt").write_text(report.text())
        plots.history_figure(state.history, train_cfg.equilibrium_band, out / "history.png")
    if parts.test:
        test = prepare(parts.test, cfg.proposer)
        probs = predict(state.generator, test.images, test.guesses)
        post_cfg = cfg.post.scaled_to(h, w)
        labels = [s.mask for s in parts.test]
        raw = corpus_eval([(binarize(p, post_cfg.binarize_threshold), y) for p, y in zip(probs, labels)])
        post = corpus_eval([(postprocess(p, post_cfg), y) for p, y in zip(probs, labels)])
        _write_report(raw, out, "test_metrics_raw", "test split, raw binarized")
        _write_report(post, out, "test_metrics_post", "test split, post-processed")
        print(post.table(), end="")
    print(f"trained {state.epoch} epoch(s); artifacts in {out}")
    return EXIT_OK


def cmd_infer(args, cfg: RunConfig) -> int:
    try:
        gen, _ = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        raise CommandError(str(exc)) from exc
    files = _mask_files(Path(args.images))
    if not files:
        raise CommandError(f"no images in {args.images}")
    out = _out_dir(args)
    subdirs = ["prob", "overlay"] + (["mask"] if args.post else [])
    for sub in subdirs:
        (out / sub).mkdir(exist_ok=True)
    for name, path in files.items():
        img = imaging.load_image(path)
        h, w = img.shape[:2]
        guess = initial_guess(img, cfg.proposer).astype(np.float32)
        prob = predict(gen, image_tensor(img)[None], torch.from_numpy(guess)[None, None])[0]
        post_cfg = cfg.post.scaled_to(h, w)
        imaging.save_prob(out / "prob" / f"{name}.png", prob)
        if args.post:
            mask = postprocess(prob, post_cfg)
            imaging.save_mask(out / "mask" / f"{name}.png", mask)
        else:
            mask = binarize(prob, post_cfg.binarize_threshold)
        imaging.save_image(out / "overlay" / f"{name}.png", imaging.overlay(img, mask))
    print(f"processed {len(files)} image(s); outputs in {out}")
    return EXIT_OK


def _pairs(pred_dir: Path, label_dir: Path):
    preds, labels = _mask_files(pred_dir), _mask_files(label_dir)
    if not preds and not labels:
        raise CommandError(f"no masks in {pred_dir} or {label_dir}")
    unmatched = sorted(set(preds) ^ set(labels))
    if unmatched:
        raise CommandError(f"{len(unmatched)} unmatched name(s): {', '.join(unmatched[:20])}")
    return [(imaging.load_mask(preds[n]), imaging.load_mask(labels[n])) for n in sorted(preds)]


def cmd_eval(args, cfg: RunConfig) -> int:
    try:
        report = corpus_eval(_pairs(Path(args.pred), Path(args.labels)), args.mode)
    except ValueError as exc:
        raise CommandError(str(exc)) from exc
    print(report.table(), end="")
    print(report.csv_header())
    print(report.csv_row())
    if args.out:
        _write_report(report, _out_dir(args), "metrics", f"{args.mode} aggregation")
    return EXIT_OK


def cmd_overlay(args, cfg: RunConfig) -> int:
    images, masks = _mask_files(Path(args.images)), _mask_files(Path(args.masks))
    missing = sorted(set(images) - set(masks))
    if missing:
        raise CommandError(f"{len(missing)} image(s) without a mask: {', '.join(missing[:20])}")
    if not images:
        raise CommandError(f"no images in {args.images}")
    out = _out_dir(args)
    for name, path in images.items():
        img = imaging.load_image(path)
        mask = imaging.load_mask(masks[name])
        if mask.shape != img.shape[:2]:
            raise CommandError(f"{name}: image {img.shape[:2]} vs mask {mask.shape}")
        imaging.save_image(out / f"{name}.png", imaging.overlay(img, mask, alpha=args.alpha))
    print(f"wrote {len(images)} overlay(s) to {out}")
    return EXIT_OK


def cmd_complexity(args, cfg: RunConfig) -> int:
    spec = _load_spec(args.spec or cfg.paths.get("spec"))
    h, w = args.size
    if not spec.is_empty("generator"):
        validate(spec, h, w)
    trials = args.trials if not spec.is_empty("generator") else 0
    report = complexity_report(spec, (h, w), trials, cfg.seed)
    print(report.table(), end="")
    print(report.csv_header())
    print(report.csv_row())
    print()
    print(published_block("complexity"), end="")
    if args.out:
        out = _out_dir(args)
        (out / "complexity.csv").write_text(report.csv_header() + "\n" + report.csv_row() + "\n")
        (out / "complexity.txt").write_text(report.table() + "\n" + published_block("complexity"))
        plots.complexity_figure(report.params_m, report.flops_g, published_table("complexity"), out / "complexity.png")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument(
        "--deterministic", action=argparse.BooleanOptionalAction, default=None,
        help="force deterministic kernels (default from config: on)",
    )
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="trackgan", description="Track segmentation with a conditional GAN.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("-n", "--count", type=_positive, required=True)
    p.set_defaults(func=cmd_synth, needs_out=True)

    p = sub.add_parser("train", parents=[common], help="train on a corpus directory")
    p.add_argument("--data", help="corpus root holding images/ and masks/")
    p.add_argument("--spec", help="network spec file (default built-in)")
    p.add_argument("--epochs", type=int, help="override [train] epochs")
    p.set_defaults(func=cmd_train, needs_out=True)

    p = sub.add_parser("infer", parents=[common], help="predict masks with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--post", action=argparse.BooleanOptionalAction, default=True, help="apply post-processing")
    p.set_defaults(func=cmd_infer, needs_out=True)

    p = sub.add_parser("eval", parents=[common], help="score predicted masks against labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--mode", choices=("micro", "macro"), default="micro")
    p.set_defaults(func=cmd_eval, needs_out=False)

    p = sub.add_parser("overlay", parents=[common], help="draw masks over images in red")
    p.add_argument("--images", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_overlay, needs_out=True)

    p = sub.add_parser("complexity", parents=[common], help="FLOPs, parameters and inference time")
    p.add_argument("--spec", help="network spec file (default built-in)")
    p.add_argument("--size", type=_positive, nargs=2, default=(128, 128), metavar=("H", "W"))
    p.add_argument("--trials", type=int, default=10, help="timing trials, >= 3 (0 skips timing)")
    p.set_defaults(func=cmd_complexity, needs_out=False)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.needs_out and not args.out:
        parser.error(f"{args.command} requires --out")
    if args.command == "complexity" and 0 < args.trials < 3:
        parser.error("--trials must be 0 or >= 3")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config).with_overrides(args.seed, args.deterministic)
        return args.func(args, cfg)
    except (CommandError, ConfigError, CorpusError, SpecError, CheckpointError) as exc:
        print(f"trackgan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
