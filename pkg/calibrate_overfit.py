"""Dev-only calibration for the overfit sanity run (not part of the package)."""

import shutil
import sys
import time
from pathlib import Path

import cv2
import numpy as np
import torch

from lanet.imaging import DatasetSpec, save_ldr, list_pairs, load_ldr
from lanet.losses import LossWeights
from lanet.model import ModelConfig
from lanet.metrics import psnr
from lanet.training import TrainConfig, enhance_image, train


def smooth_image(rng, h, w):
    coarse = rng.random((h // 16, w // 16, 3)).astype(np.float32)
    img = cv2.resize(coarse, (w, h), interpolation=cv2.INTER_CUBIC)
    return np.clip(img * 0.75 + 0.15, 0.0, 1.0)


def make_pairs(root: Path, n=5, h=128, w=128, seed=42):
    rng = np.random.default_rng(seed)
    (root / "input").mkdir(parents=True, exist_ok=True)
    (root / "target").mkdir(parents=True, exist_ok=True)
    for i in range(n):
        target = smooth_image(rng, h, w)
        gain = rng.uniform(0.12, 0.3)
        noise = rng.normal(0.0, 0.015, target.shape).astype(np.float32)
        inp = np.clip(target * gain + noise, 0.0, 1.0)
        save_ldr(root / "target" / f"pair{i}.png", target)
        save_ldr(root / "input" / f"pair{i}.png", inp)


def train_pair_psnr(model, spec):
    vals = []
    for name, ip, tp in list_pairs(spec):
        img = load_ldr(ip)
        tgt = load_ldr(tp)
        out = np.clip(enhance_image(model, img), 0.0, 1.0)
        vals.append(psnr(out, tgt))
    return float(np.mean(vals))


def run_chunks(chunks, K, bc, check_every=50, label="", target=28.5):
    root = Path("/tmp/overfit_cal")
    if root.exists():
        shutil.rmtree(root)
    make_pairs(root)
    spec = DatasetSpec("LLE", root / "input", root / "target", resize=(128, 128))
    t0 = time.time()
    model = None
    done = 0
    for lr, steps in chunks:
        cfg = TrainConfig(
            epochs=(steps + 2) // 3 + 1,
            batch_size=2,
            lr_decomposition=lr,
            lr_pathways=lr,
            lr_decay_every=10**9,
            lr_decay_until=0,
            seed=7,
            max_steps=steps,
            model=ModelConfig(num_curves=K, base_channels=bc),
            loss_weights=LossWeights(),
        )

        def hook(step, mdl, report):
            if step % check_every == 0:
                p = train_pair_psnr(mdl, spec)
                print(
                    f"  [{label}] step {done + step:4d} (lr {lr})  psnr {p:6.2f}  "
                    f"loss {report.total:8.4f}  ({time.time()-t0:5.1f}s)",
                    flush=True,
                )
                return p > target
            return False

        model, log = train(spec, cfg, model=model, step_hook=hook)
        done += len(log.steps)
        p = train_pair_psnr(model, spec)
        print(f"  [{label}] chunk end: {done} steps, psnr {p:.2f}, {time.time()-t0:.1f}s", flush=True)
        if p > target:
            break
    return p, done


if __name__ == "__main__":
    torch.set_num_threads(2)
    run_chunks([(1.5e-3, 500), (4e-4, 600), (1e-4, 600)], K=4, bc=32, label="staged")
