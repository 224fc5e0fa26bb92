"""Command-line interface: train, infer, eval, decompose, curves.

Configuration lives in an INI-style file with [dataset], [model], [train],
and [loss] sections; every training hyperparameter has a named key with the
library default.  Command-line flags override file values, and the effective
configuration is echoed to stdout and written into the run directory.

Exit codes: 0 success, 1 configuration error, 2 runtime abort.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

import numpy as np

from .imaging import DatasetSpec, load_ldr, save_ldr
from .losses import LossWeights
from .metrics import write_metric_csv
from .model import (
    LANet,
    ModelConfig,
    init_model,
    load_checkpoint,
    nr_apply,
    save_checkpoint,
)
from .training import (
    TrainConfig,
    TrainingAborted,
    batch_to_tensors,
    enhance_image,
    evaluate,
    load_for_inference,
    pad_to_multiple,
    train,
)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".hdr")


class ConfigError(Exception):
    pass


DEFAULTS = {
    "dataset": {
        "task": "LLE",
        "input_dir": "",
        "target_dir": "",
        "resize": "512x512",
        "beta_min": "",
        "beta_max": "",
        "subset": "",
        "subset_seed": "0",
    },
    "model": {
        "curves": "16",
        "base_channels": "32",
        "use_high_pathway": "true",
        "color_recovery": "enhanced",
        "share_weights": "true",
    },
    "train": {
        "epochs": "200",
        "batch_size": "2",
        "lr_decomposition": "0.0002",
        "lr_pathways": "0.0001",
        "lr_decay_factor": "0.5",
        "lr_decay_every": "50",
        "lr_decay_until": "100",
        "weight_decay": "0.0001",
        "seed": "0",
        "checkpoint_every": "50",
        "max_steps": "",
    },
    "loss": {
        "w_recon": "100",
        "w_low_fidelity": "2",
        "w_low_tv": "1",
        "w_low_tv_gt": "5",
        "lam_decomp": "1",
        "lam_light": "10",
        "lam_detail": "1",
        "lam_combine": "5",
        "lam_perceptual": "1",
        "vgg_weights": "",
    },
}


def _load_sections(config_path: str | None) -> dict[str, dict[str, str]]:
    sections = {name: dict(values) for name, values in DEFAULTS.items()}
    if config_path is None:
        return sections
    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    for name in parser.sections():
        if name not in sections:
            raise ConfigError(f"unknown config section [{name}] in {path}")
        for key, value in parser.items(name):
            if key not in sections[name]:
                raise ConfigError(f"unknown config key {name}.{key} in {path}")
            sections[name][key] = value
    return sections


def _parse_bool(value: str, where: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {value!r}")


def _parse_resize(value: str) -> tuple[int, int] | None:
    v = value.strip().lower()
    if v in ("", "none", "native"):
        return None
    try:
        h, w = v.split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise ConfigError(f"resize must look like 512x512 or none, got {value!r}") from exc


def build_run_config(sections: dict) -> tuple[DatasetSpec, TrainConfig]:
    """Validate the merged sections and construct the typed configs."""
    d, m, t, l = sections["dataset"], sections["model"], sections["train"], sections["loss"]
    if not d["input_dir"]:
        raise ConfigError("dataset.input_dir is required")
    input_dir = Path(d["input_dir"])
    if not input_dir.is_dir():
        raise ConfigError(f"input directory does not exist: {input_dir}")
    target_dir = Path(d["target_dir"]) if d["target_dir"] else None
    if target_dir is not None and not target_dir.is_dir():
        raise ConfigError(f"target directory does not exist: {target_dir}")
    augmentation = None
    if d["beta_min"] or d["beta_max"]:
        if not (d["beta_min"] and d["beta_max"]):
            raise ConfigError("beta_min and beta_max must be set together")
        augmentation = (float(d["beta_min"]), float(d["beta_max"]))
    try:
        dataset = DatasetSpec(
            task=d["task"],
            input_dir=input_dir,
            target_dir=target_dir,
            resize=_parse_resize(d["resize"]),
            augmentation=augmentation,
            subset=int(d["subset"]) if d["subset"] else None,
            subset_seed=int(d["subset_seed"]),
        )
        model_cfg = ModelConfig(
            num_curves=int(m["curves"]),
            base_channels=int(m["base_channels"]),
            use_high_pathway=_parse_bool(m["use_high_pathway"], "model.use_high_pathway"),
            color_recovery_mode=m["color_recovery"],
            share_weights=_parse_bool(m["share_weights"], "model.share_weights"),
        )
        weights = LossWeights(
            w_recon=float(l["w_recon"]),
            w_low_fidelity=float(l["w_low_fidelity"]),
            w_low_tv=float(l["w_low_tv"]),
            w_low_tv_gt=float(l["w_low_tv_gt"]),
            lam_decomp=float(l["lam_decomp"]),
            lam_light=float(l["lam_light"]),
            lam_detail=float(l["lam_detail"]),
            lam_combine=float(l["lam_combine"]),
            lam_perceptual=float(l["lam_perceptual"]),
        )
        train_cfg = TrainConfig(
            epochs=int(t["epochs"]),
            batch_size=int(t["batch_size"]),
            lr_decomposition=float(t["lr_decomposition"]),
            lr_pathways=float(t["lr_pathways"]),
            lr_decay_factor=float(t["lr_decay_factor"]),
            lr_decay_every=int(t["lr_decay_every"]),
            lr_decay_until=int(t["lr_decay_until"]),
            weight_decay=float(t["weight_decay"]),
            seed=int(t["seed"]),
            checkpoint_every=int(t["checkpoint_every"]),
            max_steps=int(t["max_steps"]) if t["max_steps"] else None,
            vgg_weights=l["vgg_weights"] or None,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    train_cfg.model = model_cfg
    train_cfg.loss_weights = weights
    return dataset, train_cfg


def echo_config(sections: dict, out_path: Path | None) -> None:
    parser = configparser.ConfigParser()
    for name, values in sections.items():
        parser[name] = values
    lines = []
    for name in sections:
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in sections[name].items())
        lines.append("")
    text = "\n".join(lines)
    print(text, end="")
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w") as fh:
            parser.write(fh)


def _apply_train_flags(sections: dict, args) -> None:
    flag_map = {
        "input_dir": ("dataset", "input_dir"),
        "target_dir": ("dataset", "target_dir"),
        "task": ("dataset", "task"),
        "resize": ("dataset", "resize"),
        "K": ("model", "curves"),
        "epochs": ("train", "epochs"),
        "batch": ("train", "batch_size"),
        "steps": ("train", "max_steps"),
        "seed": ("train", "seed"),
    }
    for attr, (section, key) in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            sections[section][key] = str(value)


def cmd_train(args) -> int:
    sections = _load_sections(args.config)
    _apply_train_flags(sections, args)
    if args.out is None:
        raise ConfigError("--out run directory is required for train")
    out_dir = Path(args.out)
    dataset, cfg = build_run_config(sections)
    cfg.device = args.device
    echo_config(sections, out_dir / "config.ini")
    model, log = train(dataset, cfg, out_dir=out_dir)
    print(f"trained {len(log.steps)} steps; run artifacts in {out_dir}")
    return 0


def _gather_inputs(input_path: Path) -> list[Path]:
    if input_path.is_file():
        return [input_path]
    if input_path.is_dir():
        files = [
            p for p in sorted(input_path.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES
        ]
        if not files:
            raise ConfigError(f"no images found in {input_path}")
        return files
    raise ConfigError(f"input path does not exist: {input_path}")


def _load_model(args) -> LANet:
    try:
        model, _ = load_checkpoint(args.checkpoint, args.device)
    except (FileNotFoundError, ValueError, RuntimeError) as exc:
        raise ConfigError(str(exc)) from exc
    model.eval()
    return model


def cmd_infer(args) -> int:
    model = _load_model(args)
    out_dir = Path(args.out or "enhanced")
    for path in _gather_inputs(Path(args.input)):
        img = load_for_inference(path)
        out = np.clip(enhance_image(model, img, args.device), 0.0, 1.0)
        save_ldr(out_dir / f"{path.stem}.png", out)
        print(f"{path} -> {out_dir / (path.stem + '.png')}")
    return 0


def cmd_eval(args) -> int:
    model = _load_model(args)
    try:
        dataset = DatasetSpec(
            task=args.task,
            input_dir=args.input_dir,
            target_dir=args.target_dir,
            resize=None,
        )
        report = evaluate(model, dataset, args.device)
    except (FileNotFoundError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out_dir = Path(args.out or ".")
    csv_path = out_dir / "metrics.csv"
    write_metric_csv(csv_path, report)
    for score in report.per_image:
        print(f"{score.name}: psnr={score.psnr:.4f} ssim={score.ssim:.4f}")
    print(f"mean: psnr={report.psnr:.4f} ssim={report.ssim:.4f}")
    print(f"per-image metrics written to {csv_path}")
    return 0


def cmd_decompose(args) -> int:
    model = _load_model(args)
    if model.decomposition is None:
        raise ConfigError("checkpoint is a one-pathway model: no decomposition network")
    img = load_ldr(args.image)
    padded, (h, w) = pad_to_multiple(img)
    x = batch_to_tensors(padded[None], args.device)
    import torch

    with torch.no_grad():
        decomp = model.decompose(x)
    low = decomp.low[0].permute(1, 2, 0).cpu().numpy()[:h, :w]
    high = decomp.high[0].permute(1, 2, 0).cpu().numpy()[:h, :w]
    out_dir = Path(args.out or ".")
    save_ldr(out_dir / "low.png", low)
    save_ldr(out_dir / "high.png", np.clip(high + 0.5, 0.0, 1.0))
    print(f"wrote {out_dir / 'low.png'} and {out_dir / 'high.png'}")
    return 0


def cmd_curves(args) -> int:
    model = _load_model(args)
    bank = model.light.bank
    sigmas = bank.sigma_values()
    exponents = bank.exponent_values()
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "curves_params.csv", "w") as fh:
        fh.write("k,sigma,n\n")
        for k, (s, n) in enumerate(zip(sigmas, exponents)):
            fh.write(f"{k},{s!r},{n!r}\n")

    intensities = np.linspace(0.0, 1.0, args.samples)
    responses = np.stack(
        [nr_apply(intensities, s, n) for s, n in zip(sigmas, exponents)], axis=1
    )
    with open(out_dir / "curves_response.csv", "w") as fh:
        fh.write("intensity," + ",".join(f"f_{k}" for k in range(len(sigmas))) + "\n")
        for i, row in zip(intensities, responses):
            fh.write(f"{i!r}," + ",".join(repr(v) for v in row) + "\n")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for k in range(len(sigmas)):
        ax.plot(intensities, responses[:, k], label=f"curve {k}")
    ax.set_xlabel("input intensity")
    ax.set_ylabel("response")
    if len(sigmas) <= 8:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(out_dir / "curves.png", dpi=120)
    plt.close(fig)
    print(f"wrote curve tables and plot to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="override the training seed")
    common.add_argument("--out", help="output/run directory")
    common.add_argument("--device", default="cpu", help="torch device (default cpu)")

    parser = argparse.ArgumentParser(prog="lanet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--input-dir", dest="input_dir")
    p.add_argument("--target-dir", dest="target_dir")
    p.add_argument("--task", choices=("LLE", "EC", "TM"))
    p.add_argument("--K", type=int, dest="K", help="number of adaptation curves")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--steps", type=int, help="stop after this many optimizer steps")
    p.add_argument("--resize", help="HxW or 'none'")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="enhance images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="image file or directory")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="score a paired test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input-dir", dest="input_dir", required=True)
    p.add_argument("--target-dir", dest="target_dir", required=True)
    p.add_argument("--task", choices=("LLE", "EC", "TM"), default="LLE")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "decompose",
        parents=[common],
        help="write low.png / high.png for one image "
        "(the signed high component is shown offset by +0.5)",
    )
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("curves", parents=[common], help="dump the adaptation curves")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", type=int, default=256)
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
