"""8-bit RGB image I/O: PNG via Pillow, plain-text PPM as a fallback."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image as _PilImage


def to_uint8(img):
    """Quantize a float image in [0,1] to uint8 with round-half-away."""
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(arr):
    return arr.astype(np.float64) / 255.0


def save_image(path, img):
    """Write a float (H, W, 3) image in [0,1]; format chosen by extension."""
    arr = to_uint8(np.asarray(img))
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {arr.shape}")
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ppm":
        _save_ppm(path, arr)
    elif ext == ".png":
        _PilImage.fromarray(arr, mode="RGB").save(path, format="PNG")
    else:
        raise ValueError(f"unsupported image extension {ext!r} (use .png or .ppm)")


def load_image(path):
    """Read a PNG or PPM file as float (H, W, 3) in [0,1]."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ppm":
        return from_uint8(_load_ppm(path))
    with _PilImage.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def _save_ppm(path, arr):
    h, w, _ = arr.shape
    lines = [f"P3\n{w} {h}\n255\n"]
    for row in arr.reshape(h, w * 3):
        lines.append(" ".join(str(int(v)) for v in row))
        lines.append("\n")
    with open(path, "w", encoding="ascii") as f:
        f.write("".join(lines))


def _load_ppm(path):
    with open(path, "r", encoding="ascii") as f:
        tokens = []
        for line in f:
            hash_pos = line.find("#")
            if hash_pos >= 0:
                line = line[:hash_pos]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P3":
        raise ValueError(f"{path}: not a plain-text PPM (P3) file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    vals = np.array(tokens[4:4 + w * h * 3], dtype=np.uint8)
    if vals.size != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return vals.reshape(h, w, 3)
