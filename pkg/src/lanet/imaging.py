"""Image I/O, dataset layouts, and preprocessing.

Images travel through the library as float32 (H, W, 3) arrays: LDR data
normalized to [0, 1], HDR data unbounded above.  Datasets are two flat
directories (`input/`, `target/`) whose files pair up by filename stem.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import cv2
import numpy as np

from . import rgbe

TASKS = ("LLE", "EC", "TM")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".hdr")


def load_ldr(path: str | Path) -> np.ndarray:
    """Read an 8-bit PNG/JPEG as a float32 (H, W, 3) array scaled to [0, 1].

    Grayscale images are replicated to three channels; an alpha channel is
    dropped.  Raises on missing/unreadable files and non-8-bit depths.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValueError(f"unreadable image file: {path}")
    if raw.dtype != np.uint8:
        raise ValueError(f"unsupported bit depth in {path}: {raw.dtype}, expected 8-bit")
    if raw.ndim == 2:
        raw = np.repeat(raw[:, :, None], 3, axis=2)
    elif raw.shape[2] == 4:
        raw = raw[:, :, :3]
    return raw[:, :, ::-1].astype(np.float32) / np.float32(255.0)  # BGR -> RGB


def save_ldr(path: str | Path, img: np.ndarray) -> None:
    """Write a float (H, W, 3) array in [0, 1] as an 8-bit PNG/JPEG."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) array")
    data = np.clip(img, 0.0, 1.0)
    data = np.rint(data * 255.0).astype(np.uint8)[:, :, ::-1]  # RGB -> BGR
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), data):
        raise ValueError(f"failed to write image: {path}")


def load_hdr(path: str | Path) -> np.ndarray:
    """Read a Radiance RGBE .hdr file as linear float32 (H, W, 3) radiance.

    Non-finite values are rejected loudly rather than clamped.
    """
    return rgbe.read_hdr(path)


def augment_hdr(img: np.ndarray, beta: float) -> np.ndarray:
    """Compress dynamic range: (img / max(img)) ** beta, elementwise.

    The result peaks at exactly 1.0.  Requires beta > 0 and a non-zero image.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    img = np.asarray(img, dtype=np.float32)
    peak = float(img.max(initial=0.0))
    if peak <= 0.0:
        raise ValueError("cannot augment an all-zero image")
    return (img / np.float32(peak)) ** np.float32(beta)


def resize(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resample to (height, width); values stay within input bounds."""
    if height < 1 or width < 1:
        raise ValueError(f"degenerate target size: {height}x{width}")
    img = np.asarray(img, dtype=np.float32)
    if img.shape[0] == height and img.shape[1] == width:
        return img.copy()
    return cv2.resize(img, (width, height), interpolation=cv2.INTER_LINEAR)


@dataclass
class DatasetSpec:
    """Paired-image dataset description for the three tasks.

    `augmentation` is a (beta_min, beta_max) range sampled per image per
    epoch and applied to HDR inputs after any resize.  `subset` keeps a
    fixed-seed random subsample of the pair list (large-corpus training).
    """

    task: str
    input_dir: str | Path
    target_dir: Optional[str | Path] = None
    resize: Optional[tuple[int, int]] = (512, 512)
    augmentation: Optional[tuple[float, float]] = None
    subset: Optional[int] = None
    subset_seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}, expected one of {TASKS}")
        if self.target_dir is None and self.task != "TM":
            raise ValueError(f"task {self.task} requires a target_dir")
        if self.augmentation is not None:
            lo, hi = self.augmentation
            if not (0 < lo <= hi):
                raise ValueError(f"bad augmentation range: {self.augmentation}")
        if self.resize is not None and min(self.resize) < 1:
            raise ValueError(f"degenerate resize: {self.resize}")


@dataclass
class PairedSample:
    name: str
    input: np.ndarray
    target: np.ndarray


@dataclass
class PairBatch:
    names: list[str]
    inputs: np.ndarray  # (B, H, W, 3) float32
    targets: np.ndarray

    def __len__(self):
        return len(self.names)


def list_pairs(spec: DatasetSpec) -> list[tuple[str, Path, Path]]:
    """Pair files across input/target directories by filename stem."""
    if spec.target_dir is None:
        raise ValueError("paired iteration requires a target_dir")
    in_files = _index_by_stem(spec.input_dir)
    tgt_files = _index_by_stem(spec.target_dir)
    stems = sorted(set(in_files) & set(tgt_files))
    if not stems:
        raise ValueError(
            f"no paired filenames between {spec.input_dir} and {spec.target_dir}"
        )
    if spec.subset is not None and spec.subset < len(stems):
        rng = np.random.default_rng(spec.subset_seed)
        keep = rng.choice(len(stems), size=spec.subset, replace=False)
        stems = [stems[i] for i in sorted(keep)]
    return [(s, in_files[s], tgt_files[s]) for s in stems]


def load_pair(
    spec: DatasetSpec,
    name: str,
    input_path: Path,
    target_path: Path,
    rng: Optional[np.random.Generator] = None,
) -> PairedSample:
    """Load one pair, apply resize, then sample and apply HDR augmentation."""
    inp = _load_any(input_path)
    tgt = _load_any(target_path)
    if spec.resize is not None:
        h, w = spec.resize
        inp = resize(inp, h, w)
        tgt = resize(tgt, h, w)
    if spec.augmentation is not None:
        lo, hi = spec.augmentation
        beta = float(rng.uniform(lo, hi)) if rng is not None else lo
        inp = augment_hdr(inp, beta)
    if inp.shape != tgt.shape:
        raise ValueError(
            f"pair {name!r} dimension mismatch: {inp.shape} vs {tgt.shape}"
        )
    return PairedSample(name, inp, tgt)


def iterate_pairs(
    spec: DatasetSpec, batch_size: int, shuffle: bool, seed: int = 0
) -> Iterator[PairBatch]:
    """Yield one epoch of PairBatch objects; each pair appears exactly once.

    A fixed seed makes the stream bit-reproducible (ordering and sampled
    augmentation betas both come from the same generator).
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if spec.resize is None and batch_size != 1:
        raise ValueError("batch_size must be 1 when resize is disabled")
    pairs = list_pairs(spec)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs)) if shuffle else np.arange(len(pairs))
    for start in range(0, len(pairs), batch_size):
        chunk = [pairs[i] for i in order[start : start + batch_size]]
        samples = [load_pair(spec, *p, rng=rng) for p in chunk]
        yield PairBatch(
            names=[s.name for s in samples],
            inputs=np.stack([s.input for s in samples]),
            targets=np.stack([s.target for s in samples]),
        )


def _index_by_stem(directory: str | Path) -> dict[str, Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory does not exist: {directory}")
    files = {}
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() in IMAGE_SUFFIXES:
            files[p.stem] = p
    return files


def _load_any(path: Path) -> np.ndarray:
    if path.suffix.lower() == ".hdr":
        return load_hdr(path)
    return load_ldr(path)
