"""
Command-line entry point: train, restore, evaluate, verify, ablate, info.

Usage:
  python -m matir info --preset tiny
  python -m matir train --preset tiny --dataset data/train --steps 200 --out tiny.ckpt --report train.txt
  python -m matir restore --model tiny.ckpt --input lr.png --output sr.png --reference hr.png
  python -m matir evaluate --model tiny.ckpt --dataset data/val --report eval.csv
  python -m matir ablate --preset tiny --drop irss --dataset data/train --steps 200
  python -m matir verify --filter ssm

Exit codes: 0 success, 1 verification or metric failure, 2 usage, config or format error.
"""
import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from matir.errors import ConfigError, MatIrError
from matir.model.census import FLOP_TERMS, count_params, flops_breakdown
from matir.model.checkpoint import load_checkpoint, save_checkpoint
from matir.model.config import MatIrConfig, load_config, make_config, preset
from matir.model.network import MatIrModel
from matir.pipeline.degrade import make_degradation
from matir.pipeline.evaluate import evaluate, restore
from matir.pipeline.images import read_image, write_image
from matir.pipeline.metrics import measure
from matir.pipeline.report import header_lines, report_header
from matir.pipeline.train import make_train_spec, run_ablation, train
from matir.settings import get_settings
from matir.verification import exit_code, list_properties, run_properties, verify_header

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_ERROR = 2
DEFAULT_PRESET = "tiny"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=getattr(logging, (level or get_settings().log_level).upper(), logging.INFO),
        format=LOG_FORMAT,
        stream=sys.stderr,
    )


# ---------------------------------------------------------------------------
# Config and model resolution
# ---------------------------------------------------------------------------

def config_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    task = getattr(args, "task", None)
    scale = getattr(args, "scale", None)
    if task is not None:
        overrides["task"] = task
    if scale is not None:
        overrides["scale"] = scale
    elif task == "denoise":
        overrides["scale"] = 1
    return overrides


def resolve_config(args: argparse.Namespace) -> MatIrConfig:
    """--config file wins over --preset; --seed/--task/--scale override either."""
    overrides = config_overrides(args)
    if getattr(args, "config", None):
        return load_config(args.config, **overrides)
    return preset(getattr(args, "preset", None) or DEFAULT_PRESET, **overrides)


def resolve_model(args: argparse.Namespace) -> MatIrModel:
    """Load --model (optionally into an explicit config) or build a fresh model."""
    explicit = bool(getattr(args, "config", None) or getattr(args, "preset", None))
    if getattr(args, "model", None):
        model = load_checkpoint(args.model, resolve_config(args) if explicit else None)
        task, scale = getattr(args, "task", None), getattr(args, "scale", None)
        if task is not None and task != model.config.task:
            raise ConfigError(f"--task {task} does not match checkpoint task {model.config.task}")
        if scale is not None and scale != model.config.scale:
            raise ConfigError(f"--scale {scale} does not match checkpoint scale {model.config.scale}")
        return model
    return MatIrModel(resolve_config(args))


def train_spec(args: argparse.Namespace):
    fields: Dict[str, Any] = {"seed": args.seed if args.seed is not None else 0}
    for flag, key in (
        ("steps", "max_steps"),
        ("batch_size", "batch_size"),
        ("patch_size", "patch_size"),
        ("lr", "lr"),
        ("sigma", "sigma"),
        ("val_every", "val_every"),
        ("val_patches", "val_patches"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            fields[key] = value
    if getattr(args, "fixed_noise", False):
        fields["fixed_noise"] = True
    return make_train_spec(**fields)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_info(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    model = MatIrModel(config)
    res = args.resolution
    terms = flops_breakdown(model, res, res)
    total = sum(terms.values())
    for line in header_lines(report_header(config, config.seed, resolution=res)):
        print(line)
    print(f"task: {config.task}  scale: {config.scale}  channels: {config.channels}")
    print(f"layer_pattern: {''.join(config.layer_kinds()) or '(none)'}")
    print(f"params: {count_params(model):,}")
    print(f"MACs at {res}x{res} input:")
    for name in FLOP_TERMS:
        print(f"  {name:<6} {terms[name]:>18,}")
    print(f"  {'total':<6} {total:>18,}  ({total / 1e9:.3f} G)")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    model = MatIrModel(resolve_config(args))
    report = train(model, args.dataset, train_spec(args), report_path=args.report, val_dataset=args.val_dir)
    if args.out:
        save_checkpoint(model, args.out)
    if args.report is None:
        print(report.to_text(), end="")
    else:
        print(f"final_val_psnr: {report.final_val_psnr:.4f}")
    return EXIT_OK


def cmd_restore(args: argparse.Namespace) -> int:
    model = resolve_model(args)
    restored = restore(model, read_image(args.input))
    write_image(args.output, restored)
    logger.info(f"Wrote {args.output} ({restored.height}x{restored.width})")
    if args.reference:
        metrics = measure(restored, read_image(args.reference).to_rgb())
        header = report_header(model.config, model.config.seed, input=args.input, reference=args.reference)
        for line in header_lines(header):
            print(line)
        print(f"psnr_db: {metrics.psnr:.4f}  ssim: {metrics.ssim:.4f}")
        if args.min_psnr is not None and metrics.psnr < args.min_psnr:
            logger.error(f"PSNR {metrics.psnr:.4f} dB below --min-psnr {args.min_psnr}")
            return EXIT_FAILURE
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    model = resolve_model(args)
    config = model.config
    if config.task == "sr":
        spec = make_degradation(kind="bicubic", scale=config.scale, seed=args.seed or 0)
    else:
        spec = make_degradation(kind="noise", sigma=args.sigma if args.sigma is not None else 15.0, seed=args.seed or 0)
    result = evaluate(model, args.dataset, spec, csv_path=args.report)
    print(result.to_table(), end="")
    mean = result.mean()
    if mean is None:
        logger.error("No image could be evaluated")
        return EXIT_FAILURE
    if args.min_psnr is not None and mean.psnr < args.min_psnr:
        logger.error(f"Mean PSNR {mean.psnr:.4f} dB below --min-psnr {args.min_psnr}")
        return EXIT_FAILURE
    return EXIT_OK


def reduced_config(config: MatIrConfig, drop: Optional[str], dirs: Optional[int]) -> MatIrConfig:
    """Apply one ablation axis to config."""
    if (drop is None) == (dirs is None):
        raise ConfigError("ablate needs exactly one of --drop or --dirs")
    fields = config.model_dump()
    if drop is not None:
        fields[f"remove_{drop}"] = True
    else:
        fields["scan_directions"] = dirs
    return make_config(**fields)


def cmd_ablate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    reduced = reduced_config(config, args.drop, args.dirs)
    label = f"drop_{args.drop}" if args.drop else f"dirs_{args.dirs}"
    report = run_ablation(config, reduced, args.dataset, train_spec(args), label, val_dataset=args.val_dir)
    if args.report:
        report.write(args.report)
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    if args.list:
        for name in list_properties(args.filter):
            print(name)
        return EXIT_OK
    for line in header_lines(verify_header(args.filter)):
        print(line)
    results = run_properties(args.filter)
    for result in results:
        print(result.to_line())
    if not results:
        print(f"ERROR no property matches filter {args.filter!r}")
    passed = sum(r.status == "PASS" for r in results)
    failed = sum(r.status == "FAIL" for r in results)
    errors = sum(r.status == "ERROR" for r in results)
    print(f"{passed} passed, {failed} failed, {errors} errors")
    return exit_code(results)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file (overrides --preset)")
    p.add_argument("--preset", help=f"Named preset (default: {DEFAULT_PRESET})")
    p.add_argument("--seed", type=int, help="Model and run seed")
    p.add_argument("--task", choices=["sr", "denoise"], help="Restoration task")
    p.add_argument("--scale", type=int, choices=[1, 2, 3, 4], help="SR factor (1 for denoise)")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="Folder of clean PNG/PPM training images")
    p.add_argument("--val-dir", help="Folder of validation images (default: hold out the last --val-patches images)")
    p.add_argument("--val-patches", type=int, help="Validation images (default: 4)")
    p.add_argument("--fixed-noise", action="store_true", help="Draw each training image's noise once and reuse it")
    p.add_argument("--steps", type=int, help="Optimisation steps (default: 2000)")
    p.add_argument("--batch-size", type=int, help="Patches per step (default: 4)")
    p.add_argument("--patch-size", type=int, help="Model input patch side (default: 64 SR, 128 denoise)")
    p.add_argument("--lr", type=float, help="Initial Adam learning rate (default: 2e-4)")
    p.add_argument("--sigma", type=float, help="Noise level for denoise training (default: 15)")
    p.add_argument("--val-every", type=int, help="Validation interval in steps (default: 250)")
    p.add_argument("--report", help="Write the report to this path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="matir", description="Hybrid state-space / transformer image restoration.")
    ap.add_argument("--log-level", help="Logging level (default: MATIR_LOG_LEVEL or INFO)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("info", help="Parameter census and MAC estimate")
    _add_config_flags(p)
    p.add_argument("--resolution", type=int, default=256, help="Square input side for MACs (default: 256)")
    p.set_defaults(handler=cmd_info)

    p = sub.add_parser("train", help="Train a model on a folder of images")
    _add_config_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", help="Checkpoint path to save after training")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("restore", help="Restore one image")
    _add_config_flags(p)
    p.add_argument("--model", help="Checkpoint (untrained model when omitted)")
    p.add_argument("--input", required=True, help="Degraded input image")
    p.add_argument("--output", required=True, help="Output image (.png or .ppm)")
    p.add_argument("--reference", help="Clean reference for PSNR/SSIM")
    p.add_argument("--min-psnr", type=float, help="Exit 1 when PSNR vs --reference is lower")
    p.set_defaults(handler=cmd_restore)

    p = sub.add_parser("evaluate", help="Degrade, restore and score a folder of clean images")
    _add_config_flags(p)
    p.add_argument("--model", help="Checkpoint (untrained model when omitted)")
    p.add_argument("--dataset", required=True, help="Folder of clean PNG/PPM images")
    p.add_argument("--sigma", type=float, help="Noise level for denoise evaluation (default: 15)")
    p.add_argument("--report", help="Write per-image CSV to this path")
    p.add_argument("--min-psnr", type=float, help="Exit 1 when the mean PSNR is lower")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("ablate", help="Paired full vs reduced training run")
    _add_config_flags(p)
    _add_train_flags(p)
    p.add_argument("--drop", choices=["twla", "cga", "irss"], help="Component to remove")
    p.add_argument("--dirs", type=int, choices=[1, 2, 4], help="IRSS scan directions for the reduced run")
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("verify", help="Run the numerical property suites")
    p.add_argument("--filter", help="Only properties whose 'suite.name' contains this text")
    p.add_argument("--list", action="store_true", help="List matching properties without running them")
    p.set_defaults(handler=cmd_verify)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except MatIrError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
