"""Boundary-weighted training objective over the refined map pyramid.

Pixels near a mask boundary get up to 6x weight via a 31x31 box-mean
discrepancy; each refined map contributes a weighted BCE + weighted IoU
mixture, and stages are combined with powers of two favoring the
coarsest map.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .tensor import Tensor

CLAMP = 1e-7
WEIGHT_RADIUS = 15  # 31x31 window
WEIGHT_GAIN = 5.0


def _as_map(pred: Tensor) -> Tensor:
    """Accept [H, W] or [1, H, W] predictions."""
    if pred.ndim == 3 and pred.shape[0] == 1:
        return T.reshape(pred, tuple(pred.shape)[1:])
    if pred.ndim != 2:
        raise ShapeError(f"expected a single-channel map, got {pred.shape}")
    return pred


def _box_mean(mask: np.ndarray, radius: int) -> np.ndarray:
    """Sliding box mean normalized by the in-bounds window area."""
    h, w = mask.shape
    cs = np.zeros((h + 1, w + 1))
    cs[1:, 1:] = np.cumsum(np.cumsum(mask, axis=0), axis=1)
    i0 = np.clip(np.arange(h) - radius, 0, None)
    i1 = np.minimum(np.arange(h) + radius + 1, h)
    j0 = np.clip(np.arange(w) - radius, 0, None)
    j1 = np.minimum(np.arange(w) + radius + 1, w)
    sums = cs[np.ix_(i1, j1)] - cs[np.ix_(i0, j1)] - cs[np.ix_(i1, j0)] + cs[np.ix_(i0, j0)]
    counts = (i1 - i0)[:, None] * (j1 - j0)[None, :]
    return sums / counts


def pixel_weights(mask: np.ndarray) -> np.ndarray:
    """1 + 5 * |box-mean(G) - G|; constant masks weigh 1 everywhere."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise ShapeError(f"mask must be 2-D, got {mask.shape}")
    return 1.0 + WEIGHT_GAIN * np.abs(_box_mean(mask, WEIGHT_RADIUS) - mask)


def nearest_resize(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor mask resize with half-pixel sample centers."""
    mask = np.asarray(mask, dtype=np.float64)
    h, w = mask.shape
    rows = np.clip(((np.arange(height) + 0.5) * h / height).astype(int), 0, h - 1)
    cols = np.clip(((np.arange(width) + 0.5) * w / width).astype(int), 0, w - 1)
    return mask[np.ix_(rows, cols)]


def weighted_bce(pred: Tensor, mask: np.ndarray, weights: np.ndarray) -> Tensor:
    """Weighted cross entropy, predictions clamped to [1e-7, 1 - 1e-7]."""
    pred = _as_map(pred)
    mask = np.asarray(mask, dtype=np.float64)
    if tuple(pred.shape) != mask.shape or mask.shape != weights.shape:
        raise ShapeError(f"extent mismatch: pred {pred.shape}, mask {mask.shape}, weights {weights.shape}")
    p = T.clip(pred, CLAMP, 1.0 - CLAMP)
    term = -(mask * T.log(p) + (1.0 - mask) * T.log(1.0 - p))
    return T.sum_(weights * term) / float(weights.sum())


def weighted_iou(pred: Tensor, mask: np.ndarray, weights: np.ndarray) -> Tensor:
    """1 - weighted soft intersection over union; empty union scores 0."""
    pred = _as_map(pred)
    mask = np.asarray(mask, dtype=np.float64)
    if tuple(pred.shape) != mask.shape or mask.shape != weights.shape:
        raise ShapeError(f"extent mismatch: pred {pred.shape}, mask {mask.shape}, weights {weights.shape}")
    inter = T.sum_(weights * (pred * mask))
    union = T.sum_(weights * (pred + mask - pred * mask))
    if float(union.data) == 0.0:
        return Tensor(0.0)
    return 1.0 - inter / union


def stage_loss(pred: Tensor, mask: np.ndarray, lam: float) -> Tensor:
    """lam * weighted BCE + (1 - lam) * weighted IoU at one resolution."""
    weights = pixel_weights(mask)
    return lam * weighted_bce(pred, mask, weights) + (1.0 - lam) * weighted_iou(pred, mask, weights)


def total_loss(refined, mask: np.ndarray, lam: float = 0.7) -> Tensor:
    """Sum of 2^(i-3)-weighted stage losses over three refined maps."""
    if len(refined) != 3:
        raise ContractError(f"expected three refined maps, got {len(refined)}")
    if not 0.0 <= lam <= 1.0:
        raise ContractError(f"mixture weight must lie in [0, 1], got {lam}")
    mask = np.asarray(mask, dtype=np.float64)
    total = None
    for i, pred in enumerate(refined, start=1):
        m = _as_map(pred)
        g = nearest_resize(mask, m.shape[0], m.shape[1])
        part = 2.0 ** (i - 3) * stage_loss(m, g, lam)
        total = part if total is None else total + part
    return total
