"""Command-line entry point for experiments and curve emission.

Configuration is a flat key=value text file (# comments, blank lines allowed)
whose keys match the option names below; command-line flags override file
values. Exit codes: 0 success, 2 config error, 3 data-format error,
4 numerical abort (non-finite loss).
"""

import argparse
import sys
from pathlib import Path

from . import nn
from .harness import (ConfigError, DataFormatError, DatasetConfig,
                      ExperimentConfig, emit_loss_curves, run_experiment)
from .per import RegConfig

_DEFAULTS = {
    "dataset": "gauss_mixture",
    "classes": "3",
    "dim": "16",
    "train_size": "2000",
    "val_size": "500",
    "spread": "1.0",
    "noise": "0.1",
    "images": "",
    "labels": "",
    "val_fraction": "0.2",
    "widths": "64,64,64,64",
    "activation": "leaky_relu",
    "epochs": "60",
    "batch_size": "32",
    "lr": "0.05",
    "momentum": "0.9",
    "grad_clip_norm": "",
    "init": "he",
    "seed": "0",
    "methods": "none,per",
    "lambda": "1e-4",
    "slices": "256",
    "metrics_slices": "256",
    "gaussian_ref_size": "256",
    "out_dir": "runs",
}


def load_config_file(path) -> dict:
    """Parse `key = value` lines; unknown keys are config errors."""
    opts = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        opts[key] = value.strip()
    return opts


def _to_int(opts, key):
    try:
        return int(opts[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {opts[key]!r}") from exc


def _to_float(opts, key):
    try:
        return float(opts[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number, got {opts[key]!r}") from exc


def build_experiment(opts: dict) -> ExperimentConfig:
    """Assemble an ExperimentConfig from flat string options."""
    merged = dict(_DEFAULTS)
    merged.update(opts)

    dataset = DatasetConfig(
        kind=merged["dataset"],
        classes=_to_int(merged, "classes"),
        dim=_to_int(merged, "dim"),
        train_size=_to_int(merged, "train_size"),
        val_size=_to_int(merged, "val_size"),
        spread=_to_float(merged, "spread"),
        noise=_to_float(merged, "noise"),
        images_path=merged["images"],
        labels_path=merged["labels"],
        val_fraction=_to_float(merged, "val_fraction"),
    )
    try:
        widths = tuple(int(w) for w in merged["widths"].split(",") if w.strip())
    except ValueError as exc:
        raise ConfigError(f"widths must be comma-separated integers, "
                          f"got {merged['widths']!r}") from exc
    clip = merged["grad_clip_norm"]
    lam = _to_float(merged, "lambda")
    slices = _to_int(merged, "slices")
    methods = []
    for name in (m.strip() for m in merged["methods"].split(",")):
        if not name:
            continue
        try:
            methods.append(RegConfig(method=name,
                                     lam=0.0 if name == "none" else lam,
                                     slices=slices))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    try:
        train = nn.TrainConfig(
            lr=_to_float(merged, "lr"),
            momentum=_to_float(merged, "momentum"),
            epochs=_to_int(merged, "epochs"),
            batch_size=_to_int(merged, "batch_size"),
            grad_clip_norm=float(clip) if clip else None,
            init=merged["init"],
        )
        return ExperimentConfig(
            dataset=dataset,
            widths=widths,
            activation=merged["activation"],
            train=train,
            methods=tuple(methods),
            metrics_slices=_to_int(merged, "metrics_slices"),
            gaussian_ref_size=_to_int(merged, "gaussian_ref_size"),
            out_dir=merged["out_dir"],
            seed=_to_int(merged, "seed"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="perreg",
        description="Train small classifiers under activation regularizers "
                    "and record per-epoch distribution diagnostics.")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--dataset", choices=("gauss_mixture", "two_arcs",
                                         "idx_files"))
    p.add_argument("--method", dest="methods",
                   help="comma-separated subset of none,per,l1,l2,bn")
    p.add_argument("--lambda", dest="lambda_",
                   help="regularization coefficient")
    p.add_argument("--slices", help="projections per regularizer draw")
    p.add_argument("--epochs")
    p.add_argument("--batch-size", dest="batch_size")
    p.add_argument("--lr")
    p.add_argument("--seed")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--emit-curves", metavar="PATH",
                   help="write the 1-D loss/gradient reference curves to "
                        "PATH and skip training unless --config or --dataset "
                        "is also given")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.emit_curves:
            emit_loss_curves(args.emit_curves)
            if args.config is None and args.dataset is None:
                return 0
        opts = load_config_file(args.config) if args.config else {}
        for key, attr in (("dataset", "dataset"), ("methods", "methods"),
                          ("lambda", "lambda_"), ("slices", "slices"),
                          ("epochs", "epochs"), ("batch_size", "batch_size"),
                          ("lr", "lr"), ("seed", "seed"),
                          ("out_dir", "out_dir")):
            value = getattr(args, attr)
            if value is not None:
                opts[key] = value
        cfg = build_experiment(opts)
        csv_path, summary_path = run_experiment(cfg)
        print(f"wrote {csv_path} and {summary_path}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return 3
    except nn.TrainingDiverged as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 4


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
