"""Command-line interface.

Subcommands: synth, features, train, eval, detect, report.  Exit codes:
0 success, 2 argument/content problems, 3 I/O failures.  Every
subcommand accepts --config FILE holding `key = value` lines (keys
match the long flag names, '#' comments allowed); flags given on the
command line override the file.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .classifier import (
    CompatibilityError,
    DivergenceError,
    ModelFormatError,
    TrainConfig,
    TrainingDataError,
    evaluate,
    load_model,
    save_model,
    train,
)
from .dataset import BLUR_SIGMAS, DatasetManifest, DatasetSpec, generate_dataset
from .detector import batch_detect, classify_image, write_detection_csv
from .netpbm import NetpbmError, read_pgm, read_ppm
from .image import to_grayscale
from .report import featurize_manifest, run_matrix, write_features_csv, write_report

_USAGE_ERROR = 2
_IO_ERROR = 3


class CliError(Exception):
    """Bad arguments or bad content; maps to exit code 2."""


def _parse_config_file(path) -> dict[str, str]:
    """Minimal key = value file: one pair per line, '#' comments."""
    values: dict[str, str] = {}
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key = value, got {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip().strip("'\"")
    return values


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Fold --config file values in as parser defaults; flags still win."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return argv
    raw = _parse_config_file(known.config)
    defaults = {}
    actions = {a.dest: a for a in parser._actions}
    for key, value in raw.items():
        action = actions.get(key)
        if action is None:
            raise CliError(f"config key {key!r} matches no flag of this subcommand")
        if action.type is not None:
            try:
                value = action.type(value)
            except ValueError:
                raise CliError(f"config key {key!r}: bad value {value!r}") from None
        elif isinstance(action.const, bool) or isinstance(action.default, bool):
            value = value.lower() in ("1", "true", "yes", "on")
        if action.choices is not None and value not in action.choices:
            raise CliError(
                f"config key {key!r}: {value!r} not in {sorted(action.choices)}"
            )
        action.required = False  # a config value satisfies a required flag
        defaults[key] = value
    parser.set_defaults(**defaults)
    return argv


def _fractions(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated fractions")
    return tuple(parts)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(","))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(","))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="key = value defaults file")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    parser.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    parser.add_argument("--momentum", type=float, default=defaults.momentum)
    parser.add_argument("--batch-size", type=int, default=defaults.batch_size)
    parser.add_argument("--epochs", type=int, default=defaults.epochs)
    parser.add_argument("--l2", type=float, default=defaults.l2)
    parser.add_argument(
        "--hidden", type=int, default=defaults.hidden_dim, help="hidden width; 0 = none"
    )
    parser.add_argument("--patience", type=int, default=defaults.patience)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        batch_size=args.batch_size,
        epochs=args.epochs,
        l2=args.l2,
        hidden_dim=args.hidden,
        patience=args.patience,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mirrorghost",
        description="Synthesize ghost-artifact imagery and detect mirror misalignment.",
    )
    parser.add_argument("--version", action="version", version=f"mirrorghost {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus + manifest")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-images", type=int, default=120)
    p.add_argument("--image-size", type=int, default=532)
    p.add_argument("--mirrors", type=int, default=4, help="segment count N")
    p.add_argument("--mode", choices=("random", "proportional"), default="random")
    p.add_argument("--corruption", choices=("ghost", "blur", "none"), default="ghost")
    p.add_argument("--classes", choices=("binary", "intensity"), default="intensity")
    p.add_argument("--alpha", type=float, default=1.5, help="ground-scene spectral exponent")
    p.add_argument("--split", type=_fractions, default=(0.7, 0.15, 0.15), metavar="TR,VA,TE")
    p.add_argument("--sigmas", type=_float_list, default=BLUR_SIGMAS, metavar="S1,S2,...")
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("features", help="featurize every patch of a manifest")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="features CSV path")
    p.add_argument("--patch-size", type=int, default=266)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("train", help="train the patch classifier from a manifest")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--classes", type=int, required=True, help="number of classes")
    p.add_argument(
        "--task",
        choices=("binary", "intensity"),
        default=None,
        help="label scheme; default binary when --classes 2, else intensity",
    )
    p.add_argument("--patch-size", type=int, default=266)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_train_flags(p)

    p = sub.add_parser("eval", help="score a model on a manifest split")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--task", choices=("binary", "intensity"), default=None)
    p.add_argument("--patch-size", type=int, default=266)
    p.add_argument("--metrics-out", help="write metrics JSON here")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("detect", help="verdict for a single image")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True, help="PGM (or PPM, converted) image")
    p.add_argument("--patch-size", type=int, default=266)
    p.add_argument("--tau", type=float, default=0.5, help="misaligned-fraction threshold")
    p.add_argument("--json-out", help="also write the verdict JSON here")

    p = sub.add_parser("batch-detect", help="verdicts for every manifest image")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--patch-size", type=int, default=266)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--out", required=True, help="verdicts CSV path")
    p.add_argument("--summary-out", help="write summary JSON here")

    p = sub.add_parser("report", help="run the full experiment grid")
    _add_common(p)
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--seeds", type=_int_list, default=(1, 2, 3), metavar="S1,S2,...")
    p.add_argument("--n-images", type=int, default=200)
    p.add_argument("--image-size", type=int, default=532)
    p.add_argument("--patch-size", type=int, default=266)
    p.add_argument("--mirrors", type=_int_list, default=(4, 6, 8), metavar="N1,N2,...")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--max-minutes", type=float, default=None, help="soft time budget")
    p.add_argument("--quiet", action="store_true")
    _add_train_flags(p)

    return parser


def _load_image(path):
    if str(path).endswith(".ppm"):
        return to_grayscale(read_ppm(path))
    return read_pgm(path)


def _task_labels(mf, task: str | None, n_classes: int) -> np.ndarray:
    if task is None:
        task = "binary" if n_classes == 2 else "intensity"
    return mf.binary_labels if task == "binary" else mf.k_labels


def _cmd_synth(args) -> int:
    spec = DatasetSpec(
        n_images=args.n_images,
        image_size=args.image_size,
        n_segments=args.mirrors,
        offset_mode=args.mode,
        corruption=args.corruption,
        classes=args.classes,
        split_fractions=args.split,
        spectral_exponent=args.alpha,
        seed=args.seed,
        blur_sigmas=args.sigmas,
    )
    manifest = generate_dataset(spec, args.out)
    print(
        f"wrote {len(manifest)} images and manifest.csv to {args.out} "
        f"(classes {dict(sorted(manifest.class_counts('intensity').items()))})"
    )
    return 0


def _cmd_features(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    mf = featurize_manifest(manifest, args.patch_size, jobs=args.jobs)
    write_features_csv(mf, manifest, args.out)
    print(f"wrote {mf.features.shape[0]} patch feature rows to {args.out}")
    return 0


def _cmd_train(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    mf = featurize_manifest(manifest, args.patch_size, jobs=args.jobs)
    labels = _task_labels(mf, args.task, args.classes)
    tr, va = mf.mask("train"), mf.mask("val")
    val_set = (mf.features[va], labels[va]) if va.any() else None
    model = train(
        (mf.features[tr], labels[tr]),
        val_set,
        args.classes,
        _train_config(args),
        seed=args.seed,
        feature_fingerprint=mf.fingerprint,
    )
    save_model(model, args.model_out)
    print(f"trained on {int(tr.sum())} patches; model written to {args.model_out}")
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    manifest = DatasetManifest.load(args.manifest)
    mf = featurize_manifest(manifest, args.patch_size, jobs=args.jobs)
    if model.feature_fingerprint and mf.fingerprint != model.feature_fingerprint:
        raise CompatibilityError(
            f"feature fingerprint {mf.fingerprint} does not match model "
            f"fingerprint {model.feature_fingerprint}"
        )
    labels = _task_labels(mf, args.task, model.n_classes)
    sel = mf.mask(args.split)
    if not sel.any():
        raise CliError(f"manifest has no images in split {args.split!r}")
    metrics = evaluate(model, mf.features[sel], labels[sel])
    print(f"{args.split} accuracy: {metrics.accuracy:.4f} over {metrics.n_samples} patches")
    if args.metrics_out:
        doc = {
            "split": args.split,
            "accuracy": metrics.accuracy,
            "mean_cross_entropy": metrics.mean_cross_entropy,
            "precision": metrics.precision.tolist(),
            "recall": metrics.recall.tolist(),
            "confusion": metrics.confusion.tolist(),
            "n_samples": metrics.n_samples,
        }
        with open(args.metrics_out, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")
        print(f"metrics written to {args.metrics_out}")
    return 0


def _cmd_detect(args) -> int:
    model = load_model(args.model)
    img = _load_image(args.image)
    verdict = classify_image(model, img, args.patch_size, tau=args.tau)
    word = "MISALIGNED" if verdict.is_misaligned else "aligned"
    k_note = f", estimated k = {verdict.estimated_k}" if verdict.estimated_k is not None else ""
    print(
        f"{args.image}: {word} "
        f"({verdict.ghosted_patch_fraction:.3f} of {verdict.n_patches} patches ghosted{k_note})"
    )
    doc = {
        "image": str(args.image),
        "n_patches": verdict.n_patches,
        "ghosted_patch_fraction": verdict.ghosted_patch_fraction,
        "is_misaligned": verdict.is_misaligned,
        "estimated_k": verdict.estimated_k,
        "tau": args.tau,
        "votes": [vars(v) for v in verdict.votes],
    }
    print(json.dumps(doc, sort_keys=True))
    if args.json_out:
        with open(args.json_out, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")
    return 0


def _cmd_batch_detect(args) -> int:
    model = load_model(args.model)
    manifest = DatasetManifest.load(args.manifest)
    detection = batch_detect(model, manifest, args.patch_size, tau=args.tau)
    write_detection_csv(detection, args.out)
    summary = detection.summary()
    print(json.dumps(summary, sort_keys=True))
    if args.summary_out:
        with open(args.summary_out, "w") as fh:
            json.dump(summary, fh, sort_keys=True, indent=1)
            fh.write("\n")
    return 0


def _cmd_report(args) -> int:
    log = None if args.quiet else lambda msg: print(msg, file=sys.stderr)
    report = run_matrix(
        args.out,
        seeds=args.seeds,
        n_images=args.n_images,
        image_size=args.image_size,
        patch_size=args.patch_size,
        segment_counts=args.mirrors,
        tau=args.tau,
        config=_train_config(args),
        jobs=args.jobs,
        time_budget_s=None if args.max_minutes is None else args.max_minutes * 60.0,
        log=log,
    )
    write_report(report, args.out)
    failed = [c.name for c in report.cells if c.error]
    print(f"report written to {args.out} ({len(report.cells)} cells, {len(failed)} incomplete)")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "features": _cmd_features,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "detect": _cmd_detect,
    "batch-detect": _cmd_batch_detect,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        # resolve the subparser first so config defaults land on it
        if argv and argv[0] in _COMMANDS:
            sub_actions = [
                a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
            ]
            _apply_config_defaults(sub_actions[0].choices[argv[0]], argv[1:])
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse errors (and --help/--version)
        return int(exc.code or 0)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _USAGE_ERROR
    except (
        TrainingDataError,
        DivergenceError,
        CompatibilityError,
        ModelFormatError,
        NetpbmError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _USAGE_ERROR
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return _IO_ERROR


if __name__ == "__main__":
    sys.exit(main())
