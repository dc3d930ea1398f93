"""Latent-graph interaction between adjacent feature stages.

Two stage features are resized to a shared grid, projected onto a small
set of graph vertices, aligned and fused across stages, refined by a
transformer with a normalized-Laplacian positional signal, and finally
reprojected back onto each stage as a residual update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .nn import Conv2d, FeedForward, LayerNorm, Linear, Module, ModuleList, multi_head_attention
from .tensor import Tensor

LAPLACIAN_EPS = 1e-6


@dataclass
class LatentGraph:
    """Vertex features plus the projection basis that produced them."""

    nodes: Tensor  # [N, C']
    basis: Tensor  # [L, N]
    height: int
    width: int
    channels: int

    @property
    def vertices(self) -> int:
        return self.nodes.shape[0]


def flatten_grid(feature: Tensor) -> Tensor:
    """[C, H, W] -> [H*W, C] rows in row-major spatial order."""
    c, h, w = feature.shape
    return T.transpose(T.reshape(feature, (c, h * w)), (1, 0))


def unflatten_grid(rows: Tensor, height: int, width: int) -> Tensor:
    """Inverse of flatten_grid."""
    n, c = rows.shape
    if n != height * width:
        raise ContractError(f"cannot fold {n} rows into {height}x{width}")
    return T.reshape(T.transpose(rows, (1, 0)), (c, height, width))


def unify_feature(feature: Tensor, height: int, width: int, conv) -> Tensor:
    """Resize a stage map to the shared grid and map channels: -> [L, C']."""
    if height < 1 or width < 1:
        raise ContractError("unify target extents must be positive")
    return flatten_grid(conv(T.bilinear_resize(feature, height, width)))


def graph_project(rows: Tensor, phi, kappa, height: int, width: int) -> LatentGraph:
    """Project unified rows onto graph vertices: nodes = phi(rows)^T kappa(rows)."""
    basis = phi(rows)
    nodes = T.matmul(T.transpose(basis, (1, 0)), kappa(rows))
    return LatentGraph(nodes=nodes, basis=basis, height=height, width=width, channels=nodes.shape[1])


def bidirectional_align(va: Tensor, vb: Tensor, psi_ab, theta_ab, psi_ba, theta_ba):
    """Row-stochastic alignment in both directions between two vertex sets."""
    s_ab = T.softmax_rows(T.matmul(psi_ab(va), T.transpose(theta_ab(vb), (1, 0))))
    s_ba = T.softmax_rows(T.matmul(psi_ba(vb), T.transpose(theta_ba(va), (1, 0))))
    return s_ab, s_ba


def interact_nodes(va: Tensor, vb: Tensor, s_ab: Tensor, s_ba: Tensor, fuse):
    """Fuse both vertex sets and route the fusion through the alignments."""
    fused = fuse(T.concat([va, vb], axis=1))
    return T.matmul(s_ba, fused) + va, T.matmul(s_ab, fused) + vb


def normalized_laplacian(adjacency: Tensor) -> Tensor:
    """I - D^{-1/2} A D^{-1/2} for a symmetric non-negative adjacency.

    Each entry is computed as a_ij / sqrt(d_i * d_j), which keeps the
    result bitwise symmetric and exact on integer-degree hand cases.
    """
    adjacency = T._as_tensor(adjacency)
    n = adjacency.shape[0]
    if adjacency.shape != (n, n):
        raise ContractError(f"adjacency must be square, got {adjacency.shape}")
    deg = T.sum_(adjacency, axis=1)
    outer = T.matmul(T.reshape(deg, (n, 1)), T.reshape(deg, (1, n)))
    return np.eye(n) - adjacency / T.sqrt(outer)


def laplacian_pe(nodes: Tensor) -> Tensor:
    """Normalized Laplacian of the rectified vertex-affinity graph: [N, N]."""
    nodes = T._as_tensor(nodes)
    n = nodes.shape[0]
    gram = T.matmul(nodes, T.transpose(nodes, (1, 0)))
    # symmetrize before rectifying; matmul round-off need not be symmetric
    sym = (gram + T.transpose(gram, (1, 0))) * 0.5
    return normalized_laplacian(T.relu(sym) + LAPLACIAN_EPS * np.eye(n))


class TokenTransformerBlock(Module):
    """Pre-norm self-attention block over a token matrix [n, C]."""

    def __init__(self, channels: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if channels % heads:
            raise ConfigError(f"heads ({heads}) must divide channels ({channels})")
        self.heads = heads
        self.ln1 = LayerNorm(channels)
        self.wq = Linear(channels, channels, rng, bias=False)
        self.wk = Linear(channels, channels, rng, bias=False)
        self.wv = Linear(channels, channels, rng, bias=False)
        self.proj = Linear(channels, channels, rng)
        self.ln2 = LayerNorm(channels)
        self.ffn = FeedForward(channels, rng)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.ln1(x)
        x = x + self.proj(multi_head_attention(self.wq(h), self.wk(h), self.wv(h), self.heads))
        return x + self.ffn(self.ln2(x))


class GraphTransformer(Module):
    """Stack of pre-norm blocks over graph vertices, with positional input.

    The [N, N] Laplacian rows are embedded to the vertex width by a learned
    bias-free map (added directly when the widths already agree) and added
    once at the input. A zero-layer stack returns its input unchanged.
    """

    def __init__(self, channels: int, vertices: int, layers: int, heads: int, rng: np.random.Generator):
        super().__init__()
        self.layers = layers
        self.blocks = ModuleList(TokenTransformerBlock(channels, heads, rng) for _ in range(layers))
        self.pe_map = Linear(vertices, channels, rng, bias=False) if layers and vertices != channels else None

    def __call__(self, nodes: Tensor, pe: Tensor | None = None) -> Tensor:
        if not self.layers:
            return nodes
        x = nodes
        if pe is not None:
            x = x + (self.pe_map(pe) if self.pe_map is not None else pe)
        for block in self.blocks:
            x = block(x)
        return x


def reproject_combine(nodes: Tensor, graph: LatentGraph, original: Tensor, conv) -> Tensor:
    """basis @ nodes, folded to the grid, resized to the stage, residual add."""
    ell, n = graph.basis.shape
    if nodes.shape[0] != n:
        raise ContractError(f"{nodes.shape[0]} node rows against a {n}-vertex basis")
    if ell != graph.height * graph.width:
        raise ContractError(f"basis rows {ell} do not cover a {graph.height}x{graph.width} grid")
    x = unflatten_grid(T.matmul(graph.basis, nodes), graph.height, graph.width)
    x = conv(T.bilinear_resize(x, original.shape[-2], original.shape[-1]))
    return x + original


class GraphInteractionPair(Module):
    """Bidirectional latent-graph exchange between two stage features.

    Returns both stages enhanced in place of their inputs; with every
    learned transform zeroed the module is an exact identity (the
    residual paths carry the inputs through untouched).
    """

    def __init__(
        self,
        channels_a: int,
        channels_b: int,
        latent: int,
        vertices: int,
        layers: int,
        heads: int,
        rng: np.random.Generator,
    ):
        super().__init__()
        if vertices < 1:
            raise ConfigError("graph needs at least one vertex")
        self.latent = latent
        self.layers = layers
        self.unify_a = Conv2d(channels_a, latent, 1, rng)
        self.unify_b = Conv2d(channels_b, latent, 1, rng)
        self.phi_a = Linear(latent, vertices, rng)
        self.phi_b = Linear(latent, vertices, rng)
        self.kappa_a = Linear(latent, latent, rng)
        self.kappa_b = Linear(latent, latent, rng)
        self.psi_ab = Linear(latent, latent, rng)
        self.theta_ab = Linear(latent, latent, rng)
        self.psi_ba = Linear(latent, latent, rng)
        self.theta_ba = Linear(latent, latent, rng)
        self.fuse = Linear(2 * latent, latent, rng)
        self.transformer_a = GraphTransformer(latent, vertices, layers, heads, rng)
        self.transformer_b = GraphTransformer(latent, vertices, layers, heads, rng)
        self.reproject_a = Conv2d(latent, channels_a, 1, rng, bias=False)
        self.reproject_b = Conv2d(latent, channels_b, 1, rng, bias=False)

    def __call__(self, fa: Tensor, fb: Tensor):
        # the coarser stage defines the shared latent grid
        if fa.shape[-2] * fa.shape[-1] <= fb.shape[-2] * fb.shape[-1]:
            hh, ww = fa.shape[-2], fa.shape[-1]
        else:
            hh, ww = fb.shape[-2], fb.shape[-1]
        ga = graph_project(unify_feature(fa, hh, ww, self.unify_a), self.phi_a, self.kappa_a, hh, ww)
        gb = graph_project(unify_feature(fb, hh, ww, self.unify_b), self.phi_b, self.kappa_b, hh, ww)
        s_ab, s_ba = bidirectional_align(
            ga.nodes, gb.nodes, self.psi_ab, self.theta_ab, self.psi_ba, self.theta_ba
        )
        ia, ib = interact_nodes(ga.nodes, gb.nodes, s_ab, s_ba, self.fuse)
        if self.layers:
            ia = self.transformer_a(ia, laplacian_pe(ia))
            ib = self.transformer_b(ib, laplacian_pe(ib))
        out_a = reproject_combine(ia, ga, fa, self.reproject_a)
        out_b = reproject_combine(ib, gb, fb, self.reproject_b)
        return out_a, out_b
