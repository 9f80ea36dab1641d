"""Image loading and saving: 8-bit PNG via Pillow, binary PPM/PGM natively.

Images come back as float32 arrays of shape (1, C, H, W) scaled to [0, 1].
PPM (P6) and PGM (P5) are written/read directly so 8-bit data round-trips
bit-exactly. 16-bit images, alpha, and JPEG are out of scope.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

BT601_LUMA = (0.299, 0.587, 0.114)

_PNM_SUFFIXES = {".ppm", ".pgm"}


def to_luma(img: np.ndarray) -> np.ndarray:
    """Collapse an RGB tensor (1, 3, H, W) to (1, 1, H, W) BT.601 luma.

    Single-channel input passes through unchanged.
    """
    img = np.asarray(img)
    if img.ndim != 4:
        raise ValueError(f"expected a (1, C, H, W) tensor, got shape {img.shape}")
    c = img.shape[1]
    if c == 1:
        return img
    if c != 3:
        raise ValueError(f"luma conversion needs 1 or 3 channels, got {c}")
    r, g, b = BT601_LUMA
    y = r * img[:, 0] + g * img[:, 1] + b * img[:, 2]
    return y[:, None]


def _from_uint8(pixels: np.ndarray) -> np.ndarray:
    # (H, W) or (H, W, C) uint8 -> (1, C, H, W) float32 in [0, 1]
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    chw = np.transpose(pixels, (2, 0, 1))
    return (chw.astype(np.float32) / 255.0)[None]


def _to_uint8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 4 or img.shape[0] != 1:
        raise ValueError(f"expected a (1, C, H, W) tensor, got shape {img.shape}")
    scaled = np.clip(np.floor(img[0] * 255.0 + 0.5), 0, 255).astype(np.uint8)
    return np.transpose(scaled, (1, 2, 0))  # (H, W, C)


def read_pnm(path) -> np.ndarray:
    """Read a binary PPM (P6) or PGM (P5) file into a uint8 (H, W, C) array."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] not in (b"P5", b"P6"):
        raise OSError(f"{path}: not a binary PGM/PPM file (bad magic {data[:2]!r})")
    channels = 3 if data[:2] == b"P6" else 1
    # header = magic + width + height + maxval, tokens separated by whitespace,
    # '#' comments run to end of line
    pos = 2
    fields = []
    while len(fields) < 3:
        m = re.compile(rb"\s*(?:#[^\n]*\n)*\s*(\d+)").match(data, pos)
        if m is None:
            raise OSError(f"{path}: malformed PNM header")
        fields.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = fields
    if maxval != 255:
        raise OSError(f"{path}: unsupported bit depth (maxval {maxval}, only 255 supported)")
    pos += 1  # single whitespace byte after maxval
    n = width * height * channels
    raw = data[pos:pos + n]
    if len(raw) != n:
        raise OSError(f"{path}: truncated pixel data ({len(raw)} of {n} bytes)")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)


def write_pnm(path, pixels: np.ndarray) -> None:
    """Write a uint8 (H, W, C) array as binary PGM (C=1) or PPM (C=3)."""
    path = Path(path)
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    h, w, c = pixels.shape
    if c not in (1, 3):
        raise ValueError(f"PNM supports 1 or 3 channels, got {c}")
    magic = b"P6" if c == 3 else b"P5"
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    path.write_bytes(header + pixels.tobytes())


def load_image(path) -> np.ndarray:
    """Load an 8-bit PNG/PPM/PGM as a (1, C, H, W) float32 tensor in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() in _PNM_SUFFIXES:
        return _from_uint8(read_pnm(path))
    try:
        with Image.open(path) as im:
            if im.mode == "P":
                im = im.convert("RGB")
            if im.mode not in ("L", "RGB"):
                raise OSError(
                    f"{path}: unsupported image mode {im.mode!r} (8-bit L or RGB only)"
                )
            pixels = np.asarray(im, dtype=np.uint8)
    except OSError:
        raise
    except Exception as exc:
        raise OSError(f"{path}: cannot read image ({exc})") from exc
    return _from_uint8(pixels)


def save_image(path, img: np.ndarray) -> None:
    """Save a (1, C, H, W) tensor in [0, 1] as PNG or binary PPM/PGM."""
    path = Path(path)
    pixels = _to_uint8(img)
    if path.suffix.lower() in _PNM_SUFFIXES:
        write_pnm(path, pixels)
        return
    if pixels.shape[2] == 1:
        Image.fromarray(pixels[:, :, 0], mode="L").save(path, format="PNG")
    elif pixels.shape[2] == 3:
        Image.fromarray(pixels, mode="RGB").save(path, format="PNG")
    else:
        raise ValueError(f"cannot save {pixels.shape[2]}-channel image")
