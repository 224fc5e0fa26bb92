"""Radiance RGBE (.hdr) reader and writer.

Pixels are stored as four bytes (r, g, b, e) sharing one exponent:
value = mantissa / 256 * 2^(e - 128), with e == 0 meaning black.
The reader accepts both flat scanlines and the new-style RLE encoding
(scanlines starting with 0x02 0x02 and a big-endian width); the writer
emits flat scanlines, which every Radiance consumer accepts.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

_FORMAT_LINE = b"FORMAT=32-bit_rle_rgbe"


def decode_rgbe(rgbe: np.ndarray) -> np.ndarray:
    """Decode uint8[..., 4] RGBE pixels to float32[..., 3] linear radiance."""
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    if rgbe.shape[-1] != 4:
        raise ValueError("RGBE data must have 4 components in the last axis")
    mantissa = rgbe[..., :3].astype(np.float32)
    exponent = rgbe[..., 3:].astype(np.int32)
    rgb = np.ldexp(mantissa, exponent - (128 + 8))
    rgb[np.broadcast_to(exponent == 0, rgb.shape)] = 0.0
    return rgb


def encode_rgbe(rgb: np.ndarray) -> np.ndarray:
    """Encode float[..., 3] radiance (>= 0, finite) to uint8[..., 4] RGBE."""
    rgb = np.asarray(rgb, dtype=np.float32)
    if rgb.shape[-1] != 3:
        raise ValueError("radiance data must have 3 channels in the last axis")
    if not np.isfinite(rgb).all() or (rgb < 0).any():
        raise ValueError("radiance values must be finite and non-negative")
    peak = rgb.max(axis=-1)
    frac, exp = np.frexp(peak)  # peak = frac * 2^exp, frac in [0.5, 1)
    scale = np.ldexp(np.float32(256.0), -exp)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    nonzero = peak >= 1e-38
    mant = np.floor(rgb * scale[..., None]).clip(0, 255)
    out[..., :3] = np.where(nonzero[..., None], mant, 0).astype(np.uint8)
    out[..., 3] = np.where(nonzero, exp + 128, 0).astype(np.uint8)
    return out


def read_hdr(path: str | Path) -> np.ndarray:
    """Read a Radiance .hdr file into a float32 (H, W, 3) array."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"HDR file not found: {path}")
    data = path.read_bytes()
    width, height, offset = _parse_header(data, path)
    rows = np.empty((height, width, 4), dtype=np.uint8)
    for y in range(height):
        offset = _read_scanline(data, offset, rows[y], path)
    rgb = decode_rgbe(rows)
    if not np.isfinite(rgb).all():
        raise ValueError(f"non-finite radiance values in {path}")
    return rgb


def write_hdr(path: str | Path, rgb: np.ndarray) -> None:
    """Write float (H, W, 3) radiance to a flat-scanline Radiance .hdr file."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) radiance array")
    h, w = rgb.shape[:2]
    header = b"#?RADIANCE\n" + _FORMAT_LINE + b"\n\n" + f"-Y {h} +X {w}\n".encode()
    Path(path).write_bytes(header + encode_rgbe(rgb).tobytes())


def _parse_header(data: bytes, path: Path) -> tuple[int, int, int]:
    end = data.find(b"\n")
    if end < 0 or not data[:2] == b"#?":
        raise ValueError(f"malformed RGBE header in {path}: missing #? signature")
    offset = end + 1
    format_seen = False
    while True:
        end = data.find(b"\n", offset)
        if end < 0:
            raise ValueError(f"malformed RGBE header in {path}: unterminated header")
        line = data[offset:end]
        offset = end + 1
        if line == b"":
            break  # blank line ends the header block
        if line.startswith(b"FORMAT="):
            if line != _FORMAT_LINE:
                raise ValueError(f"unsupported RGBE format in {path}: {line!r}")
            format_seen = True
    if not format_seen:
        raise ValueError(f"malformed RGBE header in {path}: no FORMAT line")
    end = data.find(b"\n", offset)
    if end < 0:
        raise ValueError(f"malformed RGBE header in {path}: missing resolution line")
    parts = data[offset:end].split()
    if len(parts) != 4 or parts[0] != b"-Y" or parts[2] != b"+X":
        raise ValueError(
            f"unsupported RGBE resolution line in {path}: {data[offset:end]!r}"
        )
    height, width = int(parts[1]), int(parts[3])
    if height <= 0 or width <= 0:
        raise ValueError(f"bad RGBE dimensions in {path}: {width}x{height}")
    return width, height, end + 1


def _read_scanline(data: bytes, offset: int, row: np.ndarray, path: Path) -> int:
    width = row.shape[0]
    if offset + 4 > len(data):
        raise ValueError(f"truncated RGBE scanline in {path}")
    head = data[offset : offset + 4]
    is_rle = (
        head[0] == 2
        and head[1] == 2
        and ((head[2] << 8) | head[3]) == width
        and 8 <= width <= 32767
    )
    if not is_rle:
        end = offset + width * 4
        if end > len(data):
            raise ValueError(f"truncated RGBE scanline in {path}")
        row[:] = np.frombuffer(data[offset:end], dtype=np.uint8).reshape(width, 4)
        return end
    offset += 4
    for c in range(4):
        x = 0
        while x < width:
            if offset >= len(data):
                raise ValueError(f"truncated RGBE scanline in {path}")
            count = data[offset]
            offset += 1
            if count > 128:  # run of one repeated byte
                count -= 128
                if offset >= len(data) or x + count > width:
                    raise ValueError(f"corrupt RGBE run in {path}")
                row[x : x + count, c] = data[offset]
                offset += 1
            else:  # literal bytes
                if count == 0 or x + count > width or offset + count > len(data):
                    raise ValueError(f"corrupt RGBE run in {path}")
                row[x : x + count, c] = np.frombuffer(
                    data[offset : offset + count], dtype=np.uint8
                )
                offset += count
            x += count
    return offset
