"""Training objectives: decomposition, light, detail, combination, perceptual.

Every squared-error term is a mean over all elements, and the smoothness
term is the mean absolute forward difference over both spatial axes, so the
default weights stay meaningful across image sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import torch

from .model import DecompOutput, ForwardResult

FeatureExtractor = Callable[[torch.Tensor], torch.Tensor]


@dataclass
class LossWeights:
    # decomposition terms (input side / ground-truth side)
    w_recon: float = 100.0
    w_low_fidelity: float = 2.0
    w_low_tv: float = 1.0
    w_low_tv_gt: float = 5.0
    # combination of the five top-level terms
    lam_decomp: float = 1.0
    lam_light: float = 10.0
    lam_detail: float = 1.0
    lam_combine: float = 5.0
    lam_perceptual: float = 1.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value <= 0:
                raise ValueError(f"loss weight {name} must be positive, got {value}")


@dataclass
class LossReport:
    dc_in: float
    dc_gt: float
    light: float
    detail: float
    com: float
    perceptual: float
    total: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return ((a - b) ** 2).mean()


def total_variation(x: torch.Tensor) -> torch.Tensor:
    """Mean |forward difference| along each spatial axis, summed."""
    dh = (x[..., 1:, :] - x[..., :-1, :]).abs().mean()
    dw = (x[..., :, 1:] - x[..., :, :-1]).abs().mean()
    return dh + dw


def loss_dc_in(
    inp: torch.Tensor, low: torch.Tensor, high: torch.Tensor, w: LossWeights
) -> torch.Tensor:
    """Input-side decomposition loss: reconstruction + low fidelity + smoothness."""
    return (
        w.w_recon * mse(inp, high + low)
        + w.w_low_fidelity * mse(inp, low)
        + w.w_low_tv * total_variation(low)
    )


def loss_dc_gt(
    target: torch.Tensor, low: torch.Tensor, high: torch.Tensor, w: LossWeights
) -> torch.Tensor:
    """Ground-truth-side decomposition loss; heavier smoothness weight."""
    return (
        w.w_recon * mse(target, high + low)
        + w.w_low_fidelity * mse(target, low)
        + w.w_low_tv_gt * total_variation(low)
    )


def loss_dc(
    inp: torch.Tensor,
    in_decomp: DecompOutput,
    target: torch.Tensor,
    tgt_decomp: DecompOutput,
    w: LossWeights,
) -> torch.Tensor:
    return loss_dc_in(inp, in_decomp.low, in_decomp.high, w) + loss_dc_gt(
        target, tgt_decomp.low, tgt_decomp.high, w
    )


def loss_light(light: torch.Tensor, target_low: torch.Tensor) -> torch.Tensor:
    return mse(light, target_low)


def loss_detail(detail: torch.Tensor, target_high: torch.Tensor) -> torch.Tensor:
    return mse(detail, target_high)


def loss_com(output: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return mse(output, target)


def loss_perceptual(
    output: torch.Tensor,
    target: torch.Tensor,
    extractor: Optional[FeatureExtractor],
) -> torch.Tensor:
    """Feature-space MSE; a null (None) extractor makes this identically 0."""
    if extractor is None:
        return torch.zeros((), dtype=output.dtype, device=output.device)
    return mse(extractor(output), extractor(target))


class VGGFeatureExtractor:
    """Frozen VGG16 features up to the third conv stage, from a weights file.

    The weights file is a standard torchvision vgg16 state dict; inputs are
    normalized with ImageNet statistics before extraction.
    """

    MEAN = (0.485, 0.456, 0.406)
    STD = (0.229, 0.224, 0.225)

    def __init__(self, weights_path: str | Path, device: str = "cpu"):
        weights_path = Path(weights_path)
        if not weights_path.exists():
            raise FileNotFoundError(f"VGG16 weights file not found: {weights_path}")
        from torchvision.models import vgg16

        net = vgg16(weights=None)
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        net.load_state_dict(state)
        self.features = net.features[:16].to(device).eval()  # through relu3_3
        for p in self.features.parameters():
            p.requires_grad_(False)
        self._mean = torch.tensor(self.MEAN, device=device).view(1, 3, 1, 1)
        self._std = torch.tensor(self.STD, device=device).view(1, 3, 1, 1)

    def __call__(self, img: torch.Tensor) -> torch.Tensor:
        return self.features((img - self._mean) / self._std)


def combine_terms(
    dc_in: float,
    dc_gt: float,
    light: float,
    detail: float,
    com: float,
    perceptual: float,
    w: LossWeights,
) -> LossReport:
    """Weighted combination in plain float64; report.total is exact."""
    total = (
        w.lam_decomp * (dc_in + dc_gt)
        + w.lam_light * light
        + w.lam_detail * detail
        + w.lam_combine * com
        + w.lam_perceptual * perceptual
    )
    return LossReport(dc_in, dc_gt, light, detail, com, perceptual, total)


def total_loss(
    inp: torch.Tensor,
    target: torch.Tensor,
    result: ForwardResult,
    target_decomp: Optional[DecompOutput],
    w: LossWeights,
    extractor: Optional[FeatureExtractor] = None,
) -> tuple[torch.Tensor, LossReport]:
    """Full objective for one batch; returns (backward tensor, report).

    Two-pathway runs need `target_decomp` (the target run through the same
    decomposition network).  One-pathway runs (result.decomp is None) drop
    the decomposition and detail terms and supervise the light pathway with
    the target itself.
    """
    zero = torch.zeros((), dtype=inp.dtype, device=inp.device)
    if result.decomp is not None:
        if target_decomp is None:
            raise ValueError("two-pathway loss requires the decomposed target")
        t_dc_in = loss_dc_in(inp, result.decomp.low, result.decomp.high, w)
        t_dc_gt = loss_dc_gt(target, target_decomp.low, target_decomp.high, w)
        t_light = loss_light(result.light, target_decomp.low)
        t_detail = loss_detail(result.detail, target_decomp.high)
    else:
        t_dc_in = t_dc_gt = t_detail = zero
        t_light = loss_light(result.light, target)
    t_com = loss_com(result.output, target)
    t_pce = loss_perceptual(result.output, target, extractor)
    total = (
        w.lam_decomp * (t_dc_in + t_dc_gt)
        + w.lam_light * t_light
        + w.lam_detail * t_detail
        + w.lam_combine * t_com
        + w.lam_perceptual * t_pce
    )
    report = combine_terms(
        float(t_dc_in.detach()),
        float(t_dc_gt.detach()),
        float(t_light.detach()),
        float(t_detail.detach()),
        float(t_com.detach()),
        float(t_pce.detach()),
        w,
    )
    return total, report
