"""The light-adaptation network: decomposition, curve-bank light adaptation,
and the residual detail pathway.

All sub-networks are plain stride-1/pooled convolutions, so every operation
is differentiable end to end.  Tensors are (B, 3, H, W); H and W must be
divisible by 4 (the fusion net downsamples twice).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

NR_EPS = 1e-8  # intensity floor inside the adaptation curve
COLOR_EPS = 1e-4  # denominator floor for color recovery

CHECKPOINT_MAGIC = "LANET-CKPT-1"

COLOR_MODES = ("enhanced", "input")


@dataclass
class ModelConfig:
    num_curves: int = 16
    base_channels: int = 32
    use_high_pathway: bool = True
    color_recovery_mode: str = "enhanced"
    share_weights: bool = True

    def __post_init__(self):
        if self.num_curves < 1:
            raise ValueError("num_curves must be >= 1")
        if self.base_channels < 8:
            raise ValueError("base_channels must be >= 8")
        if self.color_recovery_mode not in COLOR_MODES:
            raise ValueError(
                f"color_recovery_mode must be one of {COLOR_MODES}, "
                f"got {self.color_recovery_mode!r}"
            )


@dataclass
class DecompOutput:
    low: torch.Tensor  # bounded [0, 1] by the sigmoid head
    high: torch.Tensor  # signed


@dataclass
class ForwardResult:
    output: torch.Tensor
    light: torch.Tensor
    detail: Optional[torch.Tensor]
    decomp: Optional[DecompOutput]


def nr_apply(img, sigma, n, eps: float = NR_EPS):
    """Adaptation curve I^n / (I^n + sigma^n), elementwise.

    Evaluated as sigmoid(n * (log(max(I, eps)) - log(sigma))), which is the
    same function but keeps gradients finite when I approaches 0.  Accepts
    tensors, arrays, or scalars; returns a tensor iff `img` is one.
    """
    as_tensor = isinstance(img, torch.Tensor)
    x = img if as_tensor else torch.as_tensor(img, dtype=torch.float64)
    s = torch.as_tensor(sigma, dtype=x.dtype, device=x.device)
    e = torch.as_tensor(n, dtype=x.dtype, device=x.device)
    if float(s.detach().min()) <= 0 or float(e.detach().min()) <= 0:
        raise ValueError("sigma and n must be strictly positive")
    if float(x.detach().min()) < 0:
        raise ValueError("intensities must be non-negative")
    out = torch.sigmoid(e * (torch.log(x.clamp(min=eps)) - torch.log(s)))
    if as_tensor:
        return out
    arr = out.numpy()
    return float(arr) if arr.ndim == 0 else arr


def color_recover(
    enh: torch.Tensor, low: torch.Tensor, mode: str = "enhanced", eps: float = COLOR_EPS
) -> torch.Tensor:
    """Rescale channels by the per-pixel luminance-mean ratio.

    mode "enhanced": out_c = M_enh * enh_c / M_low (keeps the enhanced
    image's chroma); mode "input": out_c = M_enh * low_c / M_low (keeps the
    input's chroma).  M_* are channel means; M_low is floored at eps.
    """
    if enh.shape != low.shape:
        raise ValueError(f"shape mismatch: {tuple(enh.shape)} vs {tuple(low.shape)}")
    if mode not in COLOR_MODES:
        raise ValueError(f"unknown color recovery mode {mode!r}")
    m_enh = enh.mean(dim=-3, keepdim=True)
    m_low = low.mean(dim=-3, keepdim=True).clamp(min=eps)
    base = enh if mode == "enhanced" else low
    return (m_enh * base / m_low).clamp(min=0.0)


def _softplus_scalar(x: float) -> float:
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def _softplus_preimage(target: float, max_ulps: int = 4096) -> float:
    """Raw value whose scalar softplus reproduces `target` bit-exactly."""
    raw = target + math.log(-math.expm1(-target))
    if _softplus_scalar(raw) == target:
        return raw
    lo = hi = raw
    for _ in range(max_ulps):
        lo = math.nextafter(lo, -math.inf)
        hi = math.nextafter(hi, math.inf)
        if _softplus_scalar(lo) == target:
            return lo
        if _softplus_scalar(hi) == target:
            return hi
    raise ValueError(f"no softplus preimage for {target}")


class NRCurveBank(nn.Module):
    """K learnable adaptation curves (sigma_k, n_k).

    Parameters are unconstrained float64 reals mapped through softplus, so
    positivity holds at every optimizer step.  Fresh banks start at
    sigma = 0.5 and n = linspace(0.5, 8, K) exactly.
    """

    def __init__(self, num_curves: int):
        super().__init__()
        if num_curves < 1:
            raise ValueError("num_curves must be >= 1")
        self.num_curves = num_curves
        sig = [_softplus_preimage(0.5)] * num_curves
        exps = [
            _softplus_preimage(float(v)) for v in np.linspace(0.5, 8.0, num_curves)
        ]
        self.raw_sigma = nn.Parameter(torch.tensor(sig, dtype=torch.float64))
        self.raw_exponent = nn.Parameter(torch.tensor(exps, dtype=torch.float64))

    def sigma_tensor(self) -> torch.Tensor:
        return F.softplus(self.raw_sigma)

    def exponent_tensor(self) -> torch.Tensor:
        return F.softplus(self.raw_exponent)

    def sigma_values(self) -> np.ndarray:
        """Read-out sigmas via scalar libm softplus (exact at fresh init)."""
        return np.array([_softplus_scalar(float(v)) for v in self.raw_sigma.detach()])

    def exponent_values(self) -> np.ndarray:
        return np.array(
            [_softplus_scalar(float(v)) for v in self.raw_exponent.detach()]
        )

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        """Apply all K curves to (B, 3, H, W); concatenate to (B, 3K, H, W)."""
        b, c, h, w = img.shape
        sig = self.sigma_tensor().to(img.dtype).view(1, -1, 1, 1, 1)
        exp = self.exponent_tensor().to(img.dtype).view(1, -1, 1, 1, 1)
        out = nr_apply(img.unsqueeze(1), sig, exp)
        return out.reshape(b, self.num_curves * c, h, w)


class DecompositionNet(nn.Module):
    """Five Conv+PReLU trunk layers with sigmoid (low) and linear (high) heads."""

    def __init__(self, base_channels: int = 32):
        super().__init__()
        chans = [3] + [base_channels] * 5
        self.trunk = nn.ModuleList(
            nn.Conv2d(chans[i], chans[i + 1], 3, padding=1) for i in range(5)
        )
        self.acts = nn.ModuleList(nn.PReLU() for _ in range(5))
        self.low_head = nn.Conv2d(base_channels, 3, 3, padding=1)
        self.high_head = nn.Conv2d(base_channels, 3, 3, padding=1)

    def forward(self, img: torch.Tensor) -> DecompOutput:
        _check_divisible(img)
        feat = img
        for conv, act in zip(self.trunk, self.acts):
            feat = act(conv(feat))
        return DecompOutput(
            low=torch.sigmoid(self.low_head(feat)), high=self.high_head(feat)
        )


def _conv_block(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, padding=1),
        nn.PReLU(),
        nn.Conv2d(c_out, c_out, 3, padding=1),
        nn.PReLU(),
    )


class FusionUNet(nn.Module):
    """Small 3-level U-Net: two 2x downsamples, concat skips, tconv upsampling."""

    def __init__(self, in_channels: int, channels: int = 32):
        super().__init__()
        self.enc1 = _conv_block(in_channels, channels)
        self.enc2 = _conv_block(channels, channels)
        self.bottleneck = _conv_block(channels, channels)
        self.pool = nn.MaxPool2d(2)
        self.up1 = nn.ConvTranspose2d(channels, channels, 2, stride=2)
        self.dec1 = _conv_block(2 * channels, channels)
        self.up2 = nn.ConvTranspose2d(channels, channels, 2, stride=2)
        self.dec2 = _conv_block(2 * channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        e1 = self.enc1(x)
        e2 = self.enc2(self.pool(e1))
        b = self.bottleneck(self.pool(e2))
        d1 = self.dec1(torch.cat([self.up1(b), e2], dim=1))
        return self.dec2(torch.cat([self.up2(d1), e1], dim=1))


class LightAdaptNet(nn.Module):
    """Curve bank -> channel concat -> fusion U-Net -> 1x1 conv -> sigmoid."""

    def __init__(self, num_curves: int, base_channels: int = 32):
        super().__init__()
        self.bank = NRCurveBank(num_curves)
        self.fusion = FusionUNet(3 * num_curves, base_channels)
        self.out_conv = nn.Conv2d(base_channels, 3, 1)

    def forward(self, low: torch.Tensor) -> torch.Tensor:
        _check_divisible(low)
        vals = low.detach()
        if float(vals.min()) < -1e-6 or float(vals.max()) > 1 + 1e-6:
            raise ValueError("light-adaptation input must lie in [0, 1]")
        channels = self.bank(low)
        return torch.sigmoid(self.out_conv(self.fusion(channels)))


class ResidualBlock(nn.Module):
    """Two 3x3 Conv+PReLU layers with an identity skip."""

    def __init__(
        self,
        channels: int,
        conv1: Optional[nn.Conv2d] = None,
        conv2: Optional[nn.Conv2d] = None,
    ):
        super().__init__()
        self.conv1 = conv1 if conv1 is not None else nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = conv2 if conv2 is not None else nn.Conv2d(channels, channels, 3, padding=1)
        self.act1 = nn.PReLU()
        self.act2 = nn.PReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.act2(self.conv2(self.act1(self.conv1(x))))


class DetailNet(nn.Module):
    """Stem conv, three residual blocks, and a linear head.

    When `shared_convs` (the decomposition trunk) is given, the stem and the
    first two blocks reuse those conv layers instead of owning their own.
    """

    def __init__(
        self, base_channels: int = 32, shared_convs: Optional[Sequence[nn.Conv2d]] = None
    ):
        super().__init__()
        if shared_convs is not None and len(shared_convs) != 5:
            raise ValueError("expected the 5 decomposition trunk convs to share")
        s = shared_convs
        self.stem = s[0] if s else nn.Conv2d(3, base_channels, 3, padding=1)
        self.stem_act = nn.PReLU()
        self.blocks = nn.ModuleList(
            [
                ResidualBlock(base_channels, s[1] if s else None, s[2] if s else None),
                ResidualBlock(base_channels, s[3] if s else None, s[4] if s else None),
                ResidualBlock(base_channels),
            ]
        )
        self.head = nn.Conv2d(base_channels, 3, 3, padding=1)

    def forward(self, high: torch.Tensor) -> torch.Tensor:
        feat = self.stem_act(self.stem(high))
        for block in self.blocks:
            feat = block(feat)
        return self.head(feat)


class LANet(nn.Module):
    """Full pipeline: decompose, adapt light, recover color, add detail."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        if config.use_high_pathway:
            self.decomposition = DecompositionNet(config.base_channels)
            shared = list(self.decomposition.trunk) if config.share_weights else None
            self.detail = DetailNet(config.base_channels, shared)
        else:
            self.decomposition = None
            self.detail = None
        self.light = LightAdaptNet(config.num_curves, config.base_channels)

    def decompose(self, img: torch.Tensor) -> DecompOutput:
        if self.decomposition is None:
            raise RuntimeError("one-pathway model has no decomposition network")
        return self.decomposition(img)

    def light_adapt(self, low: torch.Tensor) -> torch.Tensor:
        return self.light(low)

    def detail_enhance(self, high: torch.Tensor) -> torch.Tensor:
        if self.detail is None:
            raise RuntimeError("one-pathway model has no detail network")
        return self.detail(high)

    def forward(self, img: torch.Tensor) -> ForwardResult:
        if not self.config.use_high_pathway:
            enh = self.light_adapt(img)
            light = color_recover(enh, img, self.config.color_recovery_mode)
            return ForwardResult(output=light, light=light, detail=None, decomp=None)
        decomp = self.decompose(img)
        enh = self.light_adapt(decomp.low)
        light = color_recover(enh, decomp.low, self.config.color_recovery_mode)
        detail = self.detail_enhance(decomp.high)
        return ForwardResult(
            output=light + detail, light=light, detail=detail, decomp=decomp
        )


def init_model(config: ModelConfig, seed: int = 0) -> LANet:
    """Build a model with seeded fan-in conv init and exact curve-bank init."""
    torch.manual_seed(seed)
    return LANet(config)


def decomposition_parameters(model: LANet) -> list[nn.Parameter]:
    if model.decomposition is None:
        return []
    return list(model.decomposition.parameters())


def pathway_parameters(model: LANet) -> list[nn.Parameter]:
    """All parameters outside the decomposition net (curve bank included)."""
    decomp_ids = {id(p) for p in decomposition_parameters(model)}
    return [p for p in model.parameters() if id(p) not in decomp_ids]


def save_checkpoint(
    path: str | Path, model: LANet, seed: int = 0, epoch: int = 0
) -> None:
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "config": asdict(model.config),
        "seed": int(seed),
        "epoch": int(epoch),
        "loss_reduction": "mean",
        "params": model.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path, device: str = "cpu") -> tuple[LANet, dict]:
    """Rebuild a model from a checkpoint; returns (model, metadata)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location=device, weights_only=True)
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"not a {CHECKPOINT_MAGIC} checkpoint: {path}")
    model = LANet(ModelConfig(**payload["config"]))
    model.load_state_dict(payload["params"])
    model.to(device)
    meta = {k: payload[k] for k in ("config", "seed", "epoch", "loss_reduction")}
    return model, meta


def _check_divisible(img: torch.Tensor, factor: int = 4) -> None:
    h, w = img.shape[-2], img.shape[-1]
    if h % factor or w % factor:
        raise ValueError(f"spatial dims must be divisible by {factor}, got {h}x{w}")
