"""Optimization loop: staged learning rates, checkpointing, evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from .imaging import DatasetSpec, augment_hdr, iterate_pairs, list_pairs, load_hdr, load_ldr
from .losses import LossReport, LossWeights, VGGFeatureExtractor, total_loss
from .metrics import ImageScore, MetricReport, psnr, ssim
from .model import LANet, ModelConfig, init_model, save_checkpoint
from .model import decomposition_parameters, pathway_parameters


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 2
    lr_decomposition: float = 2e-4
    lr_pathways: float = 1e-4
    lr_decay_factor: float = 0.5
    lr_decay_every: int = 50  # decomposition-net decay cadence ...
    lr_decay_until: int = 100  # ... frozen after this many epochs
    weight_decay: float = 1e-4
    seed: int = 0
    checkpoint_every: int = 50
    max_steps: Optional[int] = None
    device: str = "cpu"
    vgg_weights: Optional[str] = None
    model: ModelConfig = field(default_factory=ModelConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        for name in ("lr_decomposition", "lr_pathways", "weight_decay"):
            if getattr(self, name) < 0 or (name.startswith("lr") and getattr(self, name) == 0):
                raise ValueError(f"{name} must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class TrainingAborted(RuntimeError):
    """Raised when the loss goes non-finite; records the offending step."""

    def __init__(self, step: int):
        super().__init__(f"non-finite loss at optimizer step {step}")
        self.step = step


@dataclass
class TrainLog:
    steps: list[dict] = field(default_factory=list)
    val: list[dict] = field(default_factory=list)

    def record_step(self, step: int, epoch: int, report: LossReport) -> None:
        self.steps.append({"step": step, "epoch": epoch, **report.as_dict()})

    def record_val(self, epoch: int, report: MetricReport) -> None:
        self.val.append({"epoch": epoch, "psnr": report.psnr, "ssim": report.ssim})

    def save_jsonl(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for rec in self.steps:
                fh.write(json.dumps({"kind": "step", **rec}) + "\n")
            for rec in self.val:
                fh.write(json.dumps({"kind": "val", **rec}) + "\n")


def decomposition_lr(cfg: TrainConfig, epoch: int) -> float:
    """Decomposition-net lr: halved every lr_decay_every epochs, then held
    once lr_decay_until epochs have passed."""
    max_decays = cfg.lr_decay_until // cfg.lr_decay_every
    n = min(epoch // cfg.lr_decay_every, max_decays)
    return cfg.lr_decomposition * cfg.lr_decay_factor**n


def make_optimizer(model: LANet, cfg: TrainConfig) -> torch.optim.Adam:
    """Adam over two groups: decomposition net and everything else."""
    groups = []
    decomp = decomposition_parameters(model)
    if decomp:
        groups.append(
            {"params": decomp, "lr": cfg.lr_decomposition, "name": "decomposition"}
        )
    pathways = pathway_parameters(model)
    if pathways:
        groups.append({"params": pathways, "lr": cfg.lr_pathways, "name": "pathways"})
    if not groups:
        raise ValueError("model has no trainable parameters")
    return torch.optim.Adam(groups, weight_decay=cfg.weight_decay)


def set_epoch_lr(optimizer: torch.optim.Optimizer, cfg: TrainConfig, epoch: int) -> None:
    for group in optimizer.param_groups:
        if group.get("name") == "decomposition":
            group["lr"] = decomposition_lr(cfg, epoch)
        else:
            group["lr"] = cfg.lr_pathways


def batch_to_tensors(inputs: np.ndarray, device: str = "cpu") -> torch.Tensor:
    """(B, H, W, C) float numpy -> (B, C, H, W) float32 tensor."""
    return torch.from_numpy(np.ascontiguousarray(inputs)).permute(0, 3, 1, 2).contiguous().to(device)


def train(
    dataset: DatasetSpec,
    cfg: TrainConfig,
    model: Optional[LANet] = None,
    val_dataset: Optional[DatasetSpec] = None,
    out_dir: Optional[str | Path] = None,
    step_hook: Optional[Callable[[int, LANet, LossReport], bool]] = None,
) -> tuple[LANet, TrainLog]:
    """Run the optimization loop; returns the trained model and its log.

    Fully seeded: data order, augmentation betas, and weight init all derive
    from cfg.seed.  A step_hook returning True stops training early (used
    for convergence-targeted runs).  Raises TrainingAborted on a non-finite
    loss.
    """
    torch.manual_seed(cfg.seed)
    if model is None:
        model = init_model(cfg.model, cfg.seed)
    model.to(cfg.device).train()
    optimizer = make_optimizer(model, cfg)
    extractor = (
        VGGFeatureExtractor(cfg.vgg_weights, cfg.device) if cfg.vgg_weights else None
    )
    log = TrainLog()
    out_dir = Path(out_dir) if out_dir is not None else None
    step = 0
    stop = False
    for epoch in range(cfg.epochs):
        set_epoch_lr(optimizer, cfg, epoch)
        epoch_seed = (cfg.seed * 1_000_003 + epoch) % (2**63)
        for batch in iterate_pairs(dataset, cfg.batch_size, shuffle=True, seed=epoch_seed):
            inputs = batch_to_tensors(batch.inputs, cfg.device)
            targets = batch_to_tensors(batch.targets, cfg.device)
            result = model(inputs)
            target_decomp = (
                model.decompose(targets) if model.decomposition is not None else None
            )
            total, report = total_loss(
                inputs, targets, result, target_decomp, cfg.loss_weights, extractor
            )
            if not bool(torch.isfinite(total)):
                raise TrainingAborted(step)
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            log.record_step(step, epoch, report)
            step += 1
            if step_hook is not None and step_hook(step, model, report):
                stop = True
            if cfg.max_steps is not None and step >= cfg.max_steps:
                stop = True
            if stop:
                break
        _check_curve_positivity(model)
        if val_dataset is not None:
            log.record_val(epoch, evaluate(model, val_dataset, cfg.device))
            model.train()
        if out_dir is not None and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(
                out_dir / f"checkpoint_ep{epoch + 1:04d}.pt", model, cfg.seed, epoch + 1
            )
        if stop:
            break
    if out_dir is not None:
        save_checkpoint(out_dir / "checkpoint_final.pt", model, cfg.seed, epoch + 1)
        log.save_jsonl(out_dir / "trainlog.jsonl")
    return model, log


def pad_to_multiple(img: np.ndarray, factor: int = 4) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad (H, W, C) so both spatial dims divide `factor`."""
    h, w = img.shape[:2]
    ph = (-h) % factor
    pw = (-w) % factor
    if ph or pw:
        img = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="reflect")
    return img, (h, w)


def enhance_image(model: LANet, img: np.ndarray, device: str = "cpu") -> np.ndarray:
    """Forward one (H, W, 3) image in [0, 1] at native size; pad/crop as needed.

    Returns the raw network output (may exceed [0, 1]); callers clamp for
    display or scoring.
    """
    padded, (h, w) = pad_to_multiple(img)
    x = batch_to_tensors(padded[None], device)
    with torch.no_grad():
        out = model(x).output
    return out[0].permute(1, 2, 0).cpu().numpy()[:h, :w]


def load_for_inference(path: str | Path) -> np.ndarray:
    """Load any supported image for inference; HDR inputs are linearly
    scaled to peak at 1 (the identity-exponent case of the augmentation)."""
    path = Path(path)
    if path.suffix.lower() == ".hdr":
        return augment_hdr(load_hdr(path), 1.0)
    return load_ldr(path)


def evaluate(model: LANet, dataset: DatasetSpec, device: str = "cpu") -> MetricReport:
    """Per-image inference at native size + PSNR/SSIM against the targets.

    Outputs are clamped to [0, 1] before scoring.
    """
    was_training = model.training
    model.eval()
    scores = []
    for name, in_path, tgt_path in list_pairs(dataset):
        img = load_for_inference(in_path)
        target = load_ldr(tgt_path)
        out = np.clip(enhance_image(model, img, device), 0.0, 1.0)
        scores.append(ImageScore(name, psnr(out, target), ssim(out, target)))
    if was_training:
        model.train()
    return MetricReport.from_scores(scores)


def _check_curve_positivity(model: LANet) -> None:
    bank = model.light.bank
    if bank.sigma_values().min() <= 0 or bank.exponent_values().min() <= 0:
        raise RuntimeError("curve parameters lost positivity")


def config_as_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
