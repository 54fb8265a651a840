"""File I/O: PNG images (8-bit sRGB), binary depth maps, projection JSON.

All in-memory color math is linear intensity in [0,1]; conversion happens
only at the file boundary.
"""

from __future__ import annotations

import json
import struct

import numpy as np
from PIL import Image

DEPTH_MAGIC = b"SCDP"


def srgb_to_linear(u8: np.ndarray) -> np.ndarray:
    x = np.asarray(u8, dtype=np.float64) / 255.0
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb_u8(lin: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(lin, dtype=np.float64), 0.0, 1.0)
    srgb = np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1.0 / 2.4) - 0.055)
    return np.round(srgb * 255.0).astype(np.uint8)


def load_image(path) -> np.ndarray:
    """PNG -> (H,W,3) linear float64."""
    with Image.open(path) as im:
        u8 = np.asarray(im.convert("RGB"))
    return srgb_to_linear(u8)


def save_image(path, linear: np.ndarray) -> None:
    Image.fromarray(linear_to_srgb_u8(linear), mode="RGB").save(path)


def load_mask(path) -> np.ndarray:
    """PNG -> (H,W) bool (any nonzero pixel counts)."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def save_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def save_depth(path, depth: np.ndarray) -> None:
    """16-byte header (magic, u32 width, u32 height, u32 version) + f32 data."""
    d = np.asarray(depth, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC)
        fh.write(struct.pack("<III", d.shape[1], d.shape[0], 1))
        fh.write(d.tobytes())


def load_depth(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DEPTH_MAGIC:
            raise ValueError(f"{path}: bad depth magic {magic!r}")
        w, h, _version = struct.unpack("<III", fh.read(12))
        data = np.frombuffer(fh.read(w * h * 4), dtype="<f4")
    return data.reshape(h, w).astype(np.float64)


def save_projection(path, P: np.ndarray, width: int, height: int) -> None:
    doc = {"P": [float(v) for v in np.asarray(P, float).reshape(12)], "width": width, "height": height}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_projection(path) -> tuple[np.ndarray, int, int]:
    with open(path) as fh:
        doc = json.load(fh)
    return np.asarray(doc["P"], dtype=float).reshape(3, 4), int(doc["width"]), int(doc["height"])
