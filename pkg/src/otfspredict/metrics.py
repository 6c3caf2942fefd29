"""Channel prediction error metrics over batches of MN x MN complex matrices.

``rmse`` averages per-sample Frobenius errors scaled by ``1/MN`` (no square
root of a mean square); ``mae`` averages entrywise moduli scaled by
``1/(MN)^2``. Both follow the evaluation protocol literally.
"""

from __future__ import annotations

import numpy as np

from .otfs import DdChannelMatrix, OtfsDims


def _stack(mats, dims: OtfsDims) -> np.ndarray:
    if isinstance(mats, np.ndarray):
        arr = mats
    else:
        mats = list(mats)
        arr = np.stack([m.mat if isinstance(m, DdChannelMatrix) else np.asarray(m) for m in mats]) if mats else np.empty((0,))
    s = dims.size
    if arr.ndim != 3 or arr.shape[1:] != (s, s):
        raise ValueError(f"expected (K, {s}, {s}) matrices, got {arr.shape}")
    return arr


def _pair(preds, truths, dims):
    p, t = _stack(preds, dims), _stack(truths, dims)
    if len(p) == 0:
        raise ValueError("no samples to score")
    if p.shape != t.shape:
        raise ValueError(f"prediction/truth count mismatch: {p.shape} vs {t.shape}")
    return p - t


def compute_rmse(preds, truths, dims: OtfsDims) -> float:
    err = _pair(preds, truths, dims)
    fro = np.sqrt(np.sum(np.abs(err) ** 2, axis=(1, 2)))
    return float(np.mean(fro) / dims.size)


def compute_mae(preds, truths, dims: OtfsDims) -> float:
    err = _pair(preds, truths, dims)
    return float(np.mean(np.sum(np.abs(err), axis=(1, 2))) / dims.size ** 2)
