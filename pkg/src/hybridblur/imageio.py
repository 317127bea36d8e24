"""PFM and PNG reading/writing for buffers and final frames.

Arrays are (H, W[, C]) with row 0 at the top; PFM files store scanlines
bottom-up, as the format requires.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

__all__ = ["write_pfm", "read_pfm", "encode_srgb", "decode_srgb", "write_png", "write_mask_png",
           "read_mask_png", "write_id_png", "read_image_linear"]

GAMMA = 2.2


def write_pfm(path, data):
    """Write a 1- or 3-channel float plane (2-channel planes get a zero third channel)."""
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 3 and a.shape[2] == 2:
        a = np.concatenate([a, np.zeros(a.shape[:2] + (1,), np.float32)], axis=2)
    if a.ndim == 2:
        tag = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError(f"cannot store an array of shape {a.shape} as PFM")
    H, W = a.shape[:2]
    with open(path, "wb") as fh:
        fh.write(tag + b"\n" + f"{W} {H}\n".encode() + b"-1.0\n")
        fh.write(np.ascontiguousarray(a[::-1]).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        tag = fh.readline().strip()
        dims = fh.readline().split()
        scale = float(fh.readline().strip())
        data = fh.read()
    if tag not in (b"PF", b"Pf"):
        raise ValueError(f"{path}: not a PFM file")
    W, H = int(dims[0]), int(dims[1])
    ch = 3 if tag == b"PF" else 1
    a = np.frombuffer(data, dtype="<f4" if scale < 0 else ">f4", count=W * H * ch)
    a = a.reshape((H, W, ch) if ch == 3 else (H, W))
    return a[::-1].astype(np.float64)


def encode_srgb(linear) -> np.ndarray:
    c = np.clip(np.asarray(linear, float), 0.0, 1.0)
    return np.floor(c ** (1.0 / GAMMA) * 255.0 + 0.5).astype(np.uint8)


def decode_srgb(img8) -> np.ndarray:
    return (np.asarray(img8, float) / 255.0) ** GAMMA


def write_png(path, linear):
    """Save linear RGB as an 8-bit gamma-encoded PNG."""
    Image.fromarray(encode_srgb(linear)).save(path)


def write_mask_png(path, bits):
    b = bits.bits if hasattr(bits, "bits") else np.asarray(bits, bool)
    Image.fromarray(np.asarray(b, bool)).save(path)  # mode "1"


def read_mask_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) > 127


def write_id_png(path, ids):
    ids = np.asarray(ids)
    if ids.min(initial=0) < 0 or ids.max(initial=0) > 65535:
        raise ValueError("mesh ids must fit in 16 bits")
    Image.fromarray(ids.astype(np.uint16)).save(path)


def read_image_linear(path) -> np.ndarray:
    """Load a PFM (already linear) or an 8-bit PNG (decoded to linear RGB)."""
    if str(path).lower().endswith(".pfm"):
        a = read_pfm(path)
        return np.repeat(a[..., None], 3, axis=2) if a.ndim == 2 else a
    return decode_srgb(np.asarray(Image.open(path).convert("RGB")))
