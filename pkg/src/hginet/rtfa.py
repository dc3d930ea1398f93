"""Region-aware token focusing attention.

A feature map is partitioned into a square grid of regions, each region
attends over its own tokens plus a small set of cluster tokens chosen by
density-peaks scoring over the region affinity matrix: regions that are
both locally dense and far from any denser region become cluster
centers, and their pooled key/value descriptors are appended to every
region's attention context.  This keeps attention local while still
letting every region see a global summary.

Density/distance scoring is a discrete selection step: it reads plain
float arrays and produces indices, so no gradient flows through the
scores themselves (the selected pooled descriptors stay differentiable).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .nn import FeedForward, LayerNorm, Linear, Module, multi_head_attention
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class RegionTokenSet:
    """Tokens of one feature map grouped by region.

    Attributes:
        tokens: [s^2, n, C] with n = H*W/s^2 tokens per region, c-last.
        side: region grid side s.
        height, width, channels: extents of the source map.
    """

    tokens: Tensor
    side: int
    height: int
    width: int
    channels: int


@dataclass
class ClusterStats:
    """Density-peaks scoring over one region affinity matrix."""

    affinity: np.ndarray
    rho: np.ndarray
    delta: np.ndarray
    scores: np.ndarray
    centers: list[int] = field(default_factory=list)
    knn: int = 0


def partition_regions(feature: Tensor, side: int) -> RegionTokenSet:
    """Split [C,H,W] into an s x s grid of token groups.

    Raises:
        ShapeError: if s does not divide both spatial extents.
    """
    if feature.ndim != 3:
        raise ShapeError(f"partition_regions expects [C,H,W], got {feature.shape}")
    c, h, w = feature.shape
    if side < 1 or h % side or w % side:
        raise ShapeError(f"region grid {side} must divide extents {(h, w)}")
    hr, wr = h // side, w // side
    t = T.reshape(feature, (c, side, hr, side, wr))
    t = T.transpose(t, (1, 3, 2, 4, 0))  # [s, s, hr, wr, C]
    tokens = T.reshape(t, (side * side, hr * wr, c))
    return RegionTokenSet(tokens, side, h, w, c)


def merge_regions(tokens: Tensor, regions: RegionTokenSet) -> Tensor:
    """Inverse of :func:`partition_regions` for same-shaped tokens."""
    s, h, w, c = regions.side, regions.height, regions.width, regions.channels
    if tuple(tokens.shape) != (s * s, (h // s) * (w // s), c):
        raise ShapeError(f"tokens {tokens.shape} do not match the region layout")
    hr, wr = h // s, w // s
    t = T.reshape(tokens, (s, s, hr, wr, c))
    t = T.transpose(t, (4, 0, 2, 1, 3))  # [C, s, hr, s, wr]
    return T.reshape(t, (c, h, w))


def qkv_project(tokens: Tensor, wq: Tensor, wk: Tensor, wv: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Linear query/key/value projections of region tokens."""
    return T.matmul(tokens, wq), T.matmul(tokens, wk), T.matmul(tokens, wv)


def region_affinity(queries: Tensor, keys: Tensor) -> Tensor:
    """Pooled-descriptor affinity between regions.

    Mean-pools each region's queries and keys over tokens and returns
    the [s^2, s^2] product of pooled queries with pooled keys.
    """
    if queries.ndim != 3 or keys.ndim != 3:
        raise ShapeError(f"expected [s^2, n, C] tokens, got {queries.shape}, {keys.shape}")
    qp = T.mean_(queries, axis=1)
    kp = T.mean_(keys, axis=1)
    return T.matmul(qp, T.transpose(kp))


def _pairwise_sq_dists(rows: np.ndarray) -> np.ndarray:
    diff = rows[:, None, :] - rows[None, :, :]
    return np.einsum("pqc,pqc->pq", diff, diff)


def dpc_density(affinity, knn: int) -> np.ndarray:
    """Local density of each affinity row among its knn nearest rows.

    rho_p = exp(-mean of the knn smallest squared distances to other
    rows); nearer neighbors mean higher density.  Ties in neighbor
    selection break toward the lowest index.

    Raises:
        ContractError: unless 1 <= knn <= s^2 - 1.
    """
    rows = affinity.data if isinstance(affinity, Tensor) else np.asarray(affinity, dtype=np.float64)
    n = rows.shape[0]
    if n == 1:
        return np.ones(1)
    if not 1 <= knn <= n - 1:
        raise ContractError(f"knn must lie in [1, {n - 1}], got {knn}")
    d2 = _pairwise_sq_dists(rows)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")[:, :knn]
    nearest = np.take_along_axis(d2, order, axis=1)
    return np.exp(-nearest.sum(axis=1) / knn)


def dpc_distance_indicator(affinity, rho: np.ndarray) -> np.ndarray:
    """Separation of each row from any denser row.

    delta_p is the squared distance to the nearest row of strictly
    higher effective density (density ties break toward the lower
    index); the density maximum instead takes its farthest distance.
    """
    rows = affinity.data if isinstance(affinity, Tensor) else np.asarray(affinity, dtype=np.float64)
    n = rows.shape[0]
    if n == 1:
        return np.zeros(1)
    d2 = _pairwise_sq_dists(rows)
    idx = np.arange(n)
    # higher[p, q] == True when q has strictly higher effective density
    higher = (rho[None, :] > rho[:, None]) | ((rho[None, :] == rho[:, None]) & (idx[None, :] < idx[:, None]))
    delta = np.empty(n)
    masked = np.where(higher, d2, np.inf)
    mins = masked.min(axis=1)
    has_higher = np.isfinite(mins)
    delta[has_higher] = mins[has_higher]
    if not has_higher.all():
        p = int(np.flatnonzero(~has_higher)[0])
        off = d2[p, idx != p]
        delta[p] = off.max()
    return delta


def select_centers(rho: np.ndarray, delta: np.ndarray, k: int) -> list[int]:
    """Indices of the top-k regions by rho*delta, descending.

    Score ties break toward the lower index; k is clamped to the region
    count with a logged warning.
    """
    n = rho.shape[0]
    if k < 1:
        raise ContractError(f"cluster count must be positive, got {k}")
    if k > n:
        logger.warning("cluster count %d clamped to region count %d", k, n)
        k = n
    scores = rho * delta
    order = np.lexsort((np.arange(n), -scores))
    return [int(i) for i in order[:k]]


def cluster_stats(affinity, knn: int, k: int) -> ClusterStats:
    """Full density-peaks pass: rho, delta, scores and chosen centers."""
    rows = affinity.data if isinstance(affinity, Tensor) else np.asarray(affinity, dtype=np.float64)
    rho = dpc_density(rows, knn) if rows.shape[0] > 1 else np.ones(1)
    delta = dpc_distance_indicator(rows, rho)
    scores = rho * delta
    centers = select_centers(rho, delta, k)
    return ClusterStats(rows, rho, delta, scores, centers, knn)


def focused_attention(queries: Tensor, keys: Tensor, values: Tensor, centers: list[int], heads: int) -> Tensor:
    """Per-region attention over own tokens plus shared cluster tokens.

    The cluster-token matrix holds the mean-pooled key and value
    descriptors of the selected center regions; every region's key and
    value sequences are extended with them before scaled dot-product
    multi-head attention (scale 1/sqrt(C/heads)).

    Returns tokens in region layout [s^2, n, C].
    """
    if queries.ndim != 3:
        raise ShapeError(f"expected [s^2, n, C] tokens, got {queries.shape}")
    s2 = queries.shape[0]
    if not centers:
        raise ContractError("at least one cluster center is required")
    if any(not 0 <= c < s2 for c in centers):
        raise ContractError(f"center indices {centers} out of range for {s2} regions")
    pooled_k = T.mean_(keys, axis=1)
    pooled_v = T.mean_(values, axis=1)
    idx = np.asarray(centers, dtype=np.int64)
    ck = T.repeat_leading(pooled_k[idx], s2)  # [s^2, k, C]
    cv = T.repeat_leading(pooled_v[idx], s2)
    keys_ext = T.concat([keys, ck], axis=1)
    values_ext = T.concat([values, cv], axis=1)
    return multi_head_attention(queries, keys_ext, values_ext, heads)


def auto_knn(side: int) -> int:
    """Default neighborhood: max(2, floor(s^2/4)), capped at s^2 - 1."""
    s2 = side * side
    return min(max(2, s2 // 4), max(s2 - 1, 1))


class RTFABlock(Module):
    """Transformer block whose attention is region-focused.

    Composition: partition -> qkv -> affinity -> density/distance ->
    centers -> focused attention -> inverse partition, wrapped in the
    standard pre-norm skeleton (residual attention, then a residual
    two-layer feed-forward).

    Args:
        channels: feature channels C.
        side: region grid side s (must divide the map extents).
        clusters: number of cluster centers k (clamped to s^2, logged).
        heads: attention heads (must divide C).
        knn: density neighborhood; 0 selects max(2, s^2/4).
    """

    def __init__(self, channels: int, side: int, clusters: int, heads: int, rng: np.random.Generator, knn: int = 0):
        super().__init__()
        if channels % heads:
            raise ContractError(f"heads {heads} must divide channels {channels}")
        self.side = side
        self.heads = heads
        s2 = side * side
        if clusters > s2:
            logger.warning("cluster count %d clamped to s^2 = %d", clusters, s2)
            clusters = s2
        self.clusters = clusters
        self.knn = auto_knn(side) if knn == 0 else min(max(knn, 1), max(s2 - 1, 1))
        self.ln1 = LayerNorm(channels)
        self.wq = Linear(channels, channels, rng, bias=False)
        self.wk = Linear(channels, channels, rng, bias=False)
        self.wv = Linear(channels, channels, rng, bias=False)
        self.proj = Linear(channels, channels, rng)
        self.ln2 = LayerNorm(channels)
        self.ffn = FeedForward(channels, rng)

    def __call__(self, feature: Tensor) -> Tensor:
        c, h, w = feature.shape
        regions = partition_regions(feature, self.side)
        normed = self.ln1(regions.tokens)
        q, k, v = qkv_project(normed, self.wq.weight, self.wk.weight, self.wv.weight)
        affinity = region_affinity(q, k)
        stats = cluster_stats(affinity, self.knn, self.clusters)
        attended = focused_attention(q, k, v, stats.centers, self.heads)
        x = feature + merge_regions(self.proj(attended), regions)
        tokens = T.reshape(T.transpose(x, (1, 2, 0)), (h * w, c))
        tokens = tokens + self.ffn(self.ln2(tokens))
        return T.reshape(T.transpose(tokens, (1, 0)), (c, h, w))


class GlobalAttentionBlock(Module):
    """Ablation fallback: plain global multi-head attention over pixels."""

    def __init__(self, channels: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if channels % heads:
            raise ContractError(f"heads {heads} must divide channels {channels}")
        self.heads = heads
        self.ln1 = LayerNorm(channels)
        self.wq = Linear(channels, channels, rng, bias=False)
        self.wk = Linear(channels, channels, rng, bias=False)
        self.wv = Linear(channels, channels, rng, bias=False)
        self.proj = Linear(channels, channels, rng)
        self.ln2 = LayerNorm(channels)
        self.ffn = FeedForward(channels, rng)

    def __call__(self, feature: Tensor) -> Tensor:
        c, h, w = feature.shape
        tokens = T.reshape(T.transpose(feature, (1, 2, 0)), (h * w, c))
        normed = self.ln1(tokens)
        q, k, v = qkv_project(normed, self.wq.weight, self.wk.weight, self.wv.weight)
        tokens = tokens + self.proj(multi_head_attention(q, k, v, self.heads))
        tokens = tokens + self.ffn(self.ln2(tokens))
        return T.reshape(T.transpose(tokens, (1, 0)), (c, h, w))


def region_side_for(height: int, width: int, preferred: int = 8) -> int:
    """Grid side rule: 8 when the map is at least 8x8, else the map side."""
    side = min(height, width)
    return preferred if side >= preferred else side
