"""Pure-numpy tap-table kernels, used when the compiled extension is absent.

Accumulation order matches ``_ckernels`` exactly: one multiply-add per tap,
taps visited in table order, starting from zero.
"""
import numpy as np


def apply_taps_rows(src, idx, w):
    h, _, c = src.shape
    out = np.zeros((h, idx.shape[0], c), dtype=np.float64)
    for k in range(idx.shape[1]):
        out += w[:, k][None, :, None] * src[:, idx[:, k], :]
    return out


def apply_taps_cols(src, idx, w):
    _, wd, c = src.shape
    out = np.zeros((idx.shape[0], wd, c), dtype=np.float64)
    for k in range(idx.shape[1]):
        out += w[:, k][:, None, None] * src[idx[:, k], :, :]
    return out


def round_clip_u8(src):
    return np.clip(np.floor(src + 0.5), 0.0, 255.0).astype(np.uint8)
