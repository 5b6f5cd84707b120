"""Command-line surface: corrupt, train, denoise, eval, ablate, profile.

Every run writes a key=value manifest next to its outputs with all options
materialized; re-running the same subcommand with those options (same thread
count) reproduces the outputs byte for byte.

Exit codes: 0 success, 2 configuration problems, 3 file/format problems,
4 numeric divergence.

numpy-importing modules are loaded only inside handlers so that ``--threads``
can pin the BLAS thread pools before numpy first loads.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)
_IMAGE_SUFFIXES = (".pgm", ".png")
_IDENTICAL = "identical"


def _peek_threads(argv: list[str]) -> str:
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            return argv[i + 1]
        if arg.startswith("--threads="):
            return arg.split("=", 1)[1]
    return "1"


def _train_config_fields():
    from dataclasses import fields

    from .unfolding import TrainConfig

    return fields(TrainConfig)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="destripe",
        description="Simulate column stripe noise, train/run the unfolded destriper, evaluate results.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--threads",
        type=int,
        default=1,
        metavar="N",
        help="BLAS thread count; 1 (default) guarantees deterministic reruns",
    )
    common.add_argument(
        "--data-root",
        default=os.environ.get("DESTRIPE_DATA_ROOT", ""),
        help="base directory for relative data paths (env DESTRIPE_DATA_ROOT)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrupt", parents=[common], help="add stripe noise to a directory of images")
    p.add_argument("--in", dest="in_dir", required=True, help="directory of clean images")
    p.add_argument("--out", dest="out_dir", required=True, help="output directory for noisy PGMs")
    p.add_argument("--beta", type=float, required=True, help="noise intensity bound")
    p.add_argument("--mode", choices=("sampled", "fixed"), default="fixed")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_corrupt)

    p = sub.add_parser("train", parents=[common], help="train the unfolded destriper")
    p.add_argument("--config", default="", help="key=value config file")
    p.add_argument("--data", default="", help="directory of clean training images")
    p.add_argument("--out", default="", help="checkpoint output path")
    p.add_argument("--log", default="", help="training log CSV (default: <out>.log.csv)")
    p.add_argument(
        "--print-config", action="store_true", help="print the resolved config and exit"
    )
    for f in _train_config_fields():
        flag = "--" + f.name.replace("_", "-")
        kind = {"int": int, "float": float, "str": str}[f.type]
        p.add_argument(flag, dest="cfg_" + f.name, type=kind, default=None, metavar=f.name.upper())
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("denoise", parents=[common], help="remove stripes with a trained model or the baseline")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--method", choices=("unfolded", "baseline"), default="unfolded")
    p.add_argument("--checkpoint", default="", help="required for --method unfolded")
    p.add_argument("--half-width", type=int, default=10, help="baseline smoothing half-width")
    p.set_defaults(handler=cmd_denoise)

    p = sub.add_parser("eval", parents=[common], help="PSNR/SSIM of noisy (and optionally denoised) vs clean")
    p.add_argument("--clean", required=True)
    p.add_argument("--noisy", required=True)
    p.add_argument("--denoised", default="")
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--beta", default="", help="beta label recorded in the CSV")
    p.add_argument("--mode", default="", help="noise-mode label recorded in the CSV")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="train at several layer counts and tabulate metrics")
    p.add_argument("--config", default="")
    p.add_argument("--data", default="", help="directory of clean training images")
    p.add_argument("--eval-dir", default="", help="evaluation images (default: validation split)")
    p.add_argument("--layers", required=True, help="comma-separated layer counts, e.g. 2,3,4")
    p.add_argument("--betas", default="0.05,0.15,0.25", help="comma-separated eval betas")
    p.add_argument("--out", required=True, help="ablation CSV path")
    for f in _train_config_fields():
        flag = "--" + f.name.replace("_", "-")
        kind = {"int": int, "float": float, "str": str}[f.type]
        if f.name != "layers":
            p.add_argument(flag, dest="cfg_" + f.name, type=kind, default=None, metavar=f.name.upper())
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("profile", parents=[common], help="per-column mean profiles as CSV")
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_profile)

    return parser


# ---------------------------------------------------------------------------
# Shared helpers


def _resolve(path: str, data_root: str) -> Path:
    p = Path(path)
    if data_root and not p.is_absolute():
        return Path(data_root) / p
    return p


def _list_images(dir_path: Path) -> list[Path]:
    if not dir_path.is_dir():
        raise FileNotFoundError(f"image directory not found: {dir_path}")
    paths = sorted(
        p for p in dir_path.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES and p.is_file()
    )
    if not paths:
        raise FileNotFoundError(f"no .pgm/.png images in {dir_path}")
    return paths


def _write_manifest(path: Path, command: str, entries: dict) -> None:
    from . import __version__

    lines = [f"command={command}", f"version={__version__}"]
    for key, value in entries.items():
        lines.append(f"{key}={value}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def manifest_argv(path: str | Path) -> list[str]:
    """Reconstruct the equivalent command line from a run manifest."""
    entries: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        entries[key] = value
    argv = [entries.pop("command")]
    entries.pop("version", None)
    for key, value in entries.items():
        if value == "":
            continue
        if key == "images":
            argv.append("--images")
            argv.extend(value.split(","))
        else:
            argv.extend([f"--{key.replace('_', '-')}", value])
    return argv


def _fmt_psnr(value: float) -> str:
    return _IDENTICAL if math.isinf(value) else f"{value:.4f}"


def _fmt_ssim(value: float) -> str:
    return f"{value:.6f}"


def _resolved_train_config(args):
    from .unfolding import TrainConfig, parse_kv_text

    if args.config:
        cfg = TrainConfig.from_file(_resolve(args.config, args.data_root))
    else:
        cfg = TrainConfig()
    overrides = {
        f.name: getattr(args, "cfg_" + f.name)
        for f in _train_config_fields()
        if getattr(args, "cfg_" + f.name, None) is not None
    }
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    return cfg.validate()


def _load_split(args, cfg):
    from .imaging import load_image, split_dataset

    data_dir = _resolve(args.data, args.data_root)
    paths = _list_images(data_dir)
    split = split_dataset(paths, cfg.split_fraction, cfg.seed)
    train_images = [load_image(p) for p in split.train]
    val_images = [load_image(p) for p in split.validation]
    return split, train_images, val_images


# ---------------------------------------------------------------------------
# Handlers


def cmd_corrupt(args) -> int:
    from .imaging import load_image, save_image
    from .noise import corrupt_dataset

    in_dir = _resolve(args.in_dir, args.data_root)
    out_dir = _resolve(args.out_dir, args.data_root)
    paths = _list_images(in_dir)
    images = [load_image(p) for p in paths]
    triples = corrupt_dataset(images, args.beta, args.mode, args.seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    sidecar_lines = []
    for path, (_, noisy, fld) in zip(paths, triples):
        save_image(noisy, out_dir / (path.stem + ".pgm"))
        sidecar_lines.append(
            f"image {path.stem} sigma {fld.sigma!r} beta {fld.beta!r} "
            f"mode {fld.mode} seed {fld.seed}"
        )
        sidecar_lines.extend(repr(s) for s in fld.offsets)
    (out_dir / "stripes.txt").write_text("\n".join(sidecar_lines) + "\n")
    _write_manifest(
        out_dir / "run_manifest.txt",
        "corrupt",
        {
            "threads": args.threads,
            "data_root": args.data_root,
            "in": args.in_dir,
            "out": args.out_dir,
            "beta": repr(args.beta),
            "mode": args.mode,
            "seed": args.seed,
        },
    )
    print(f"corrupted {len(paths)} images -> {out_dir}")
    return 0


def cmd_train(args) -> int:
    from .unfolding import log_csv, save_checkpoint, train

    cfg = _resolved_train_config(args)
    if args.print_config:
        sys.stdout.write(cfg.to_text())
        return 0
    if not args.data:
        raise FileNotFoundError("missing --data directory of training images")
    if not args.out:
        raise ValueError("missing --out checkpoint path")
    _, train_images, val_images = _load_split(args, cfg)

    def progress(row):
        print(
            f"epoch {row['epoch']:3d}  train_loss {row['train_loss']:.6e}  "
            f"val_psnr {row['val_psnr']:.3f}  val_ssim {row['val_ssim']:.4f}"
        )

    result = train(cfg, train_images, val_images, progress=progress)
    out_path = _resolve(args.out, args.data_root)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.model, out_path)
    log_path = _resolve(args.log, args.data_root) if args.log else Path(str(out_path) + ".log.csv")
    log_path.write_text(log_csv(result))
    entries = {"threads": args.threads, "data_root": args.data_root, "data": args.data,
               "out": args.out, "log": args.log}
    entries.update({f.name: getattr(cfg, f.name) for f in _train_config_fields()})
    _write_manifest(Path(str(out_path) + ".manifest.txt"), "train", entries)
    print(f"checkpoint -> {out_path}")
    print(f"log -> {log_path}")
    if result.diverged:
        print("training diverged; checkpoint holds the last finite epoch", file=sys.stderr)
        return 4
    return 0


def cmd_denoise(args) -> int:
    from .baseline import BaselineConfig, column_equalize
    from .imaging import load_image, save_image
    from .unfolding import denoise, load_checkpoint

    in_dir = _resolve(args.in_dir, args.data_root)
    out_dir = _resolve(args.out_dir, args.data_root)
    paths = _list_images(in_dir)
    if args.method == "unfolded":
        if not args.checkpoint:
            raise FileNotFoundError("--method unfolded requires --checkpoint")
        model = load_checkpoint(_resolve(args.checkpoint, args.data_root))
        run = lambda img: denoise(model, img)
    else:
        cfg = BaselineConfig(half_width=args.half_width)
        run = lambda img: column_equalize(img, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in paths:
        save_image(run(load_image(path)), out_dir / (path.stem + ".pgm"))
    _write_manifest(
        out_dir / "run_manifest.txt",
        "denoise",
        {
            "threads": args.threads,
            "data_root": args.data_root,
            "in": args.in_dir,
            "out": args.out_dir,
            "method": args.method,
            "checkpoint": args.checkpoint,
            "half_width": args.half_width,
        },
    )
    print(f"denoised {len(paths)} images -> {out_dir}")
    return 0


def _pair_by_stem(clean_paths: list[Path], other_dir: Path, label: str) -> list[Path]:
    by_stem = {p.stem: p for p in _list_images(other_dir)}
    out = []
    for p in clean_paths:
        if p.stem not in by_stem:
            raise FileNotFoundError(f"no {label} image matching {p.stem!r} in {other_dir}")
        out.append(by_stem[p.stem])
    return out


def cmd_eval(args) -> int:
    from .imaging import load_image
    from .metrics import evaluate_pairs

    clean_dir = _resolve(args.clean, args.data_root)
    noisy_dir = _resolve(args.noisy, args.data_root)
    clean_paths = _list_images(clean_dir)
    noisy_paths = _pair_by_stem(clean_paths, noisy_dir, "noisy")
    clean_images = [load_image(p) for p in clean_paths]
    noisy_images = [load_image(p) for p in noisy_paths]
    names = [p.stem for p in clean_paths]
    noisy_report = evaluate_pairs(clean_images, noisy_images, names)
    denoised_report = None
    if args.denoised:
        den_paths = _pair_by_stem(clean_paths, _resolve(args.denoised, args.data_root), "denoised")
        denoised_report = evaluate_pairs(clean_images, [load_image(p) for p in den_paths], names)

    lines = ["path,beta,mode,psnr_noisy,psnr_denoised,ssim_noisy,ssim_denoised"]
    for i, name in enumerate(names):
        pd = _fmt_psnr(denoised_report.psnr[i]) if denoised_report else ""
        sd = _fmt_ssim(denoised_report.ssim[i]) if denoised_report else ""
        lines.append(
            f"{name},{args.beta},{args.mode},{_fmt_psnr(noisy_report.psnr[i])},{pd},"
            f"{_fmt_ssim(noisy_report.ssim[i])},{sd}"
        )
    pd = _fmt_psnr(denoised_report.mean_psnr) if denoised_report else ""
    sd = _fmt_ssim(denoised_report.mean_ssim) if denoised_report else ""
    lines.append(
        f"mean,{args.beta},{args.mode},{_fmt_psnr(noisy_report.mean_psnr)},{pd},"
        f"{_fmt_ssim(noisy_report.mean_ssim)},{sd}"
    )
    out_path = _resolve(args.out, args.data_root)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + "\n")
    _write_manifest(
        Path(str(out_path) + ".manifest.txt"),
        "eval",
        {
            "threads": args.threads,
            "data_root": args.data_root,
            "clean": args.clean,
            "noisy": args.noisy,
            "denoised": args.denoised,
            "out": args.out,
            "beta": args.beta,
            "mode": args.mode,
        },
    )
    print(f"metrics -> {out_path}")
    return 0


def cmd_ablate(args) -> int:
    from .imaging import extract_patches, load_image
    from .unfolding import ablate, ablation_csv

    cfg = _resolved_train_config(args)
    if not args.data:
        raise FileNotFoundError("missing --data directory of training images")
    counts = [int(tok) for tok in args.layers.split(",") if tok]
    if not counts:
        raise ValueError("--layers must list at least one count")
    betas = tuple(float(tok) for tok in args.betas.split(",") if tok)
    _, train_images, val_images = _load_split(args, cfg)
    if args.eval_dir:
        eval_full = [load_image(p) for p in _list_images(_resolve(args.eval_dir, args.data_root))]
    else:
        eval_full = val_images
    # the model runs on fixed-height columns: evaluate on full-width bands
    eval_images = []
    for img in eval_full:
        if img.shape[0] >= cfg.patch_size:
            eval_images.extend(
                extract_patches(img, cfg.patch_size, img.shape[1], cfg.patch_size)
            )
    if not eval_images:
        raise ValueError(f"no evaluation bands of height {cfg.patch_size}; images too short")
    rows = ablate(counts, cfg, train_images, val_images, eval_images, betas)
    out_path = _resolve(args.out, args.data_root)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(ablation_csv(rows, betas))
    entries = {"threads": args.threads, "data_root": args.data_root, "data": args.data,
               "eval_dir": args.eval_dir, "layers": args.layers, "betas": args.betas,
               "out": args.out}
    entries.update(
        {f.name: getattr(cfg, f.name) for f in _train_config_fields() if f.name != "layers"}
    )
    _write_manifest(Path(str(out_path) + ".manifest.txt"), "ablate", entries)
    print(f"ablation table -> {out_path}")
    return 0


def cmd_profile(args) -> int:
    from .imaging import load_image
    from .metrics import column_profile

    paths = [_resolve(p, args.data_root) for p in args.images]
    profiles = [column_profile(load_image(p)) for p in paths]
    names = [Path(p).stem for p in args.images]
    width = max(p.m for p in profiles)
    lines = ["column," + ",".join(names)]
    for c in range(width):
        cells = [f"{p.means[c]!r}" if c < p.m else "" for p in profiles]
        lines.append(f"{c}," + ",".join(cells))
    out_path = _resolve(args.out, args.data_root)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + "\n")
    _write_manifest(
        Path(str(out_path) + ".manifest.txt"),
        "profile",
        {
            "threads": args.threads,
            "data_root": args.data_root,
            "images": ",".join(args.images),
            "out": args.out,
        },
    )
    print(f"profiles -> {out_path}")
    return 0


# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    threads = _peek_threads(argv)
    for var in _THREAD_VARS:
        os.environ[var] = threads
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except Exception as exc:  # map failures onto the documented exit codes
        from .imaging import FormatError
        from .neural import DivergenceError
        from .unfolding import CheckpointError, ConfigError

        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, DivergenceError):
            return 4
        if isinstance(exc, (FormatError, CheckpointError, OSError)):
            return 3
        if isinstance(exc, (ConfigError, ValueError)):
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
